"""End-to-end pipeline commands.

    synthdata  generate the synthetic market returns CSV
    ingest     returns CSV -> rolling correlation panel directory
    train      panel -> model bundles (vae, ae, linear2, linear3)
    encode     panel + model -> latent series, eigen features, correlations
    generate   latent series -> sampling grid -> synthetic matrix panel
    facts      stylized-fact reports for historical and synthetic panels
    var        one Monte Carlo VaR run on a correlation matrix
    surface    VaR surface over the latent grid
    bootstrap  latent bootstrap -> interpolated VaR distribution
    report     assemble SVG+CSV figures from the artifacts

Configuration is one JSON file (defaults below); `--seed`, `--out` and
`--threads` flags override it. Every command writes artifacts atomically
and records a manifest entry with input hashes, so reruns with the same
config and seed are byte-identical for CSV/JSON outputs.

Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure.
"""

import argparse
import copy
import csv
import json
import os
import sys

import numpy as np

from . import __version__, autoencoders, corrdata, creditrisk, latent_analysis
from . import sensitivity, stylized_facts
from .errors import ConfigError, DataError, NumericalError
from .util import artifact_hash, substream_seed, write_csv, write_json

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4

DEFAULT_CONFIG = {
    "seed": 7,
    "out": "corrvae-run",
    "threads": 1,
    "data": {
        "returns_csv": None,
        "kind": "returns",
        "window": 100,
        "stride": 1,
        "synthetic": {
            "n_assets": 20,
            "n_months": 305,
            "n_factors": 3,
            "start_month": "2000-01",
        },
    },
    "train": {
        "models": ["vae", "ae", "linear2", "linear3"],
        "vae": {
            "epochs": 80,
            "learning_rate": 1e-4,
            "beta": 1.0,
            "batch_size": 16,
            "hidden_sizes": [512, 250],
            "val_fraction": 0.30,
        },
        "ae": {
            "epochs": 80,
            "learning_rate": 1e-4,
            "batch_size": 16,
            "hidden_sizes": [512, 250],
            "val_fraction": 0.30,
        },
        "linear": {
            "epochs": 6000,
            "learning_rate": 0.01,
            "batch_size": None,
            "val_fraction": 0.30,
        },
    },
    "grid": {"count": 132, "margin": 0.2},
    "portfolio": {
        "sub_portfolios": [
            {"name": "core", "n_obligors": 200, "ead": 1.0, "pd": 0.02,
             "lgd": 0.6, "rho": 0.5, "factor": 0},
            {"name": "cyclical", "n_obligors": 100, "ead": 2.0, "pd": 0.05,
             "lgd": 0.7, "rho": 0.6, "factor": 5},
            {"name": "defensive", "n_obligors": 300, "ead": 0.5, "pd": 0.01,
             "lgd": 0.5, "rho": 0.4, "factor": 12},
        ]
    },
    "portfolio_path": None,
    "simulation": {"paths": 100_000, "strata": 100, "quantile": 0.999,
                   "antithetic": False},
    "bootstrap": {"block_length": 11, "horizon": 12, "resamples": 1000},
    "facts": {"bins": 50},
}


def _merge(base, override):
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path=None, seed=None, out=None, threads=None):
    config = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        try:
            with open(path, "r", encoding="utf-8") as fh:
                user = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        if not isinstance(user, dict):
            raise ConfigError("config root must be a JSON object")
        config = _merge(config, user)
    if seed is not None:
        config["seed"] = seed
    if out is not None:
        config["out"] = out
    if threads is not None:
        config["threads"] = threads
    if not isinstance(config["seed"], int) or config["seed"] < 0:
        raise ConfigError("seed must be a non-negative integer")
    return config


# ---------------------------------------------------------------------------
# manifest
# ---------------------------------------------------------------------------

def _record(config, command, inputs, outputs, seed):
    out_dir = config["out"]
    manifest_path = os.path.join(out_dir, "manifest.json")
    manifest = {"version": __version__, "commands": {}}
    if os.path.exists(manifest_path):
        with open(manifest_path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
    manifest["version"] = __version__
    manifest.setdefault("commands", {})[command] = {
        "seed": seed,
        "inputs": {os.path.relpath(p, out_dir): artifact_hash(p) for p in inputs},
        "outputs": sorted(os.path.relpath(p, out_dir) for p in outputs),
        "version": __version__,
    }
    write_json(manifest_path, manifest)


def _need(path, hint):
    if not os.path.exists(path):
        raise DataError(f"missing artifact {path}; run `corrvae {hint}` first")
    return path


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_synthdata(config):
    out_dir = config["out"]
    syn = config["data"]["synthetic"]
    market = corrdata.default_market_config(
        n_assets=int(syn["n_assets"]),
        n_months=int(syn["n_months"]),
        n_factors=int(syn["n_factors"]),
        start_month=str(syn["start_month"]),
    )
    seed = substream_seed(config["seed"], "synthdata")
    panel = corrdata.generate_synthetic_market(market, seed)
    path = os.path.join(out_dir, "returns.csv")
    rows = (
        [ts] + list(panel.values[i]) for i, ts in enumerate(panel.timestamps)
    )
    write_csv(path, ["date"] + panel.asset_ids, rows)
    _record(config, "synthdata", [], [path], seed)
    print(f"synthdata: wrote {path} ({panel.n_periods} months x {panel.n_assets} assets)")
    return [path]


def cmd_ingest(config):
    out_dir = config["out"]
    data_cfg = config["data"]
    src = data_cfg["returns_csv"] or os.path.join(out_dir, "returns.csv")
    _need(src, "synthdata")
    schema = corrdata.CsvSchema(kind=data_cfg.get("kind", "returns"))
    panel = corrdata.load_returns_csv(src, schema)
    matrices = corrdata.rolling_correlations(
        panel, int(data_cfg["window"]), int(data_cfg["stride"])
    )
    panel_dir = os.path.join(out_dir, "panel")
    corrdata.save_panel(matrices, panel_dir)
    _record(config, "ingest", [src], [panel_dir], config["seed"])
    print(f"ingest: {len(matrices)} matrices of dim {matrices.dim} -> {panel_dir}")
    return [panel_dir]


def _train_config(section, seed, n_samples):
    batch = section.get("batch_size")
    return autoencoders.TrainConfig(
        epochs=int(section["epochs"]),
        learning_rate=float(section["learning_rate"]),
        beta=float(section.get("beta", 1.0)),
        batch_size=int(batch) if batch else n_samples,
        seed=seed,
        hidden_sizes=tuple(section.get("hidden_sizes", (512, 250))),
        val_fraction=float(section["val_fraction"]),
        latent_dim=int(section.get("latent_dim", 2)),
    )


def cmd_train(config):
    out_dir = config["out"]
    panel_dir = _need(os.path.join(out_dir, "panel"), "ingest")
    panel = corrdata.load_panel(panel_dir)
    panel_hash = artifact_hash(panel_dir)
    outputs = []
    for name in config["train"]["models"]:
        seed = substream_seed(config["seed"], f"train-{name}")
        if name == "vae":
            tc = _train_config(config["train"]["vae"], seed, len(panel))
            model, report = autoencoders.train_vae(panel, tc)
        elif name == "ae":
            tc = _train_config(config["train"]["ae"], seed, len(panel))
            model, report = autoencoders.train_ae(panel, tc)
        elif name in ("linear2", "linear3"):
            section = dict(config["train"]["linear"])
            section["latent_dim"] = 2 if name == "linear2" else 3
            tc = _train_config(section, seed, len(panel))
            model, report = autoencoders.train_linear_ae(panel, tc)
        else:
            raise ConfigError(f"unknown model kind in train.models: {name!r}")
        bundle = os.path.join(out_dir, "model", name)
        autoencoders.save_model(
            model,
            bundle,
            metadata={
                "labels": panel.labels,
                "seed": seed,
                "panel_hash": panel_hash,
                "train_indices": report.train_indices,
                "val_indices": report.val_indices,
                "config": {
                    "epochs": tc.epochs,
                    "learning_rate": tc.learning_rate,
                    "beta": tc.beta,
                    "batch_size": tc.batch_size,
                    "hidden_sizes": list(tc.hidden_sizes),
                    "val_fraction": tc.val_fraction,
                    "latent_dim": tc.latent_dim,
                },
            },
        )
        autoencoders.write_report_csv(report, os.path.join(bundle, "train_report.csv"))
        outputs.append(bundle)
        final = report.final()
        print(
            f"train[{name}]: {tc.epochs} epochs, final val MSE {final.val_mse:.4f}"
            + (f", val KL {final.val_kl:.4f}" if name == "vae" else "")
        )
    _record(config, "train", [panel_dir], outputs, config["seed"])
    return outputs


def _load_model(config, name):
    bundle = _need(os.path.join(config["out"], "model", name), "train")
    return autoencoders.load_model(bundle), bundle


def cmd_encode(config, model_name="vae"):
    out_dir = config["out"]
    panel_dir = _need(os.path.join(out_dir, "panel"), "ingest")
    panel = corrdata.load_panel(panel_dir)
    (model, _meta), bundle = _load_model(config, model_name)
    latent = latent_analysis.latent_series(model, panel)
    if isinstance(model, autoencoders.VaeModel):
        sigmas = np.array(
            [autoencoders.encode(model, m).sigma for m in panel.matrices]
        )
    else:
        sigmas = np.zeros((len(panel), 2))
    feats = latent_analysis.eigen_features(panel)
    corr = latent_analysis.latent_eigen_correlation(latent, feats)
    latent_path = latent_analysis.write_latent_csv(
        latent, sigmas, os.path.join(out_dir, "latent.csv")
    )
    feats_path = latent_analysis.write_eigen_features_csv(
        feats, os.path.join(out_dir, "eigen_features.csv")
    )
    corr_path = os.path.join(out_dir, "latent_eigen_corr.json")
    write_json(corr_path, corr)
    outputs = [latent_path, feats_path, corr_path]
    _record(config, "encode", [panel_dir, bundle], outputs, config["seed"])
    print(
        f"encode[{model_name}]: {len(panel)} points, "
        f"max |corr(mu, lambda1)| = {corr['max_abs_mu_lambda1']:.3f}"
    )
    return outputs


def cmd_generate(config):
    out_dir = config["out"]
    latent_path = _need(os.path.join(out_dir, "latent.csv"), "encode")
    latent = latent_analysis.load_latent_csv(latent_path)
    (model, meta), bundle = _load_model(config, "vae")
    seed = substream_seed(config["seed"], "grid")
    grid = latent_analysis.build_grid(
        latent.points(),
        count=int(config["grid"]["count"]),
        margin=float(config["grid"]["margin"]),
        seed=seed,
    )
    grid_path = latent_analysis.write_grid_csv(grid, os.path.join(out_dir, "grid.csv"))
    synth = latent_analysis.generate_synthetic_panel(
        model, grid, labels=meta.get("labels"), threads=int(config.get("threads", 1))
    )
    synth_dir = os.path.join(out_dir, "synthetic_panel")
    corrdata.save_panel(synth, synth_dir)
    _record(config, "generate", [latent_path, bundle], [grid_path, synth_dir], seed)
    print(f"generate: {len(synth)} synthetic matrices -> {synth_dir}")
    return [grid_path, synth_dir]


def _facts_q(config, panel):
    window = int(config["data"]["window"])
    return window / panel.dim


def cmd_facts(config):
    out_dir = config["out"]
    panel_dir = _need(os.path.join(out_dir, "panel"), "ingest")
    panel = corrdata.load_panel(panel_dir)
    bins = int(config["facts"]["bins"])
    q = _facts_q(config, panel)
    outputs = []
    inputs = [panel_dir]
    reports = {"historical": stylized_facts.stylized_report(panel, q, bins=bins)}
    synth_dir = os.path.join(out_dir, "synthetic_panel")
    if os.path.exists(synth_dir):
        synth = corrdata.load_panel(synth_dir)
        reports["synthetic"] = stylized_facts.stylized_report(synth, q, bins=bins)
        inputs.append(synth_dir)
    for name, report in reports.items():
        path = os.path.join(out_dir, f"facts_{name}.json")
        write_json(path, report)
        outputs.append(path)
        print(
            f"facts[{name}]: pairwise mean {report['pairwise']['mean']:.3f}, "
            f"lambda1 above MP edge {report['frac_lambda1_above_edge']:.0%}, "
            f"Perron {report['frac_perron']:.0%}"
        )
    _record(config, "facts", inputs, outputs, config["seed"])
    return outputs


def _portfolio(config):
    if config.get("portfolio_path"):
        return creditrisk.load_portfolio(config["portfolio_path"])
    return creditrisk.PortfolioSpec.from_json_dict(config["portfolio"])


def _sim_config(config, seed):
    sim = config["simulation"]
    return creditrisk.SimConfig(
        paths=int(sim["paths"]),
        strata=int(sim["strata"]),
        seed=seed,
        quantile=float(sim["quantile"]),
        antithetic=bool(sim["antithetic"]),
    ).validate()


def cmd_var(config, matrix_path=None):
    out_dir = config["out"]
    if matrix_path is None:
        panel_dir = _need(os.path.join(out_dir, "panel"), "ingest")
        panel = corrdata.load_panel(panel_dir)
        matrix = stylized_facts.mean_matrix(panel)
        source = panel_dir
    else:
        matrix = corrdata.load_matrix_csv(matrix_path)
        source = matrix_path
    portfolio = _portfolio(config)
    seed = substream_seed(config["seed"], "credit-var")
    cfg = _sim_config(config, seed)
    dist = creditrisk.simulate_losses(portfolio, matrix, cfg)
    losses_path = creditrisk.write_loss_distribution_csv(
        dist, os.path.join(out_dir, "losses.csv")
    )
    var_path = os.path.join(out_dir, "var.json")
    report = creditrisk.write_var_report_json(
        var_path, dist, cfg, extra={"matrix_source": os.path.basename(str(source))}
    )
    _record(config, "var", [source], [losses_path, var_path], seed)
    print(
        f"var: VaR({cfg.quantile}) = {report['var']:.2f} "
        f"(s.e. {report['standard_error']:.2f}, {cfg.paths} paths)"
    )
    return [losses_path, var_path]


def cmd_surface(config):
    out_dir = config["out"]
    grid_path = _need(os.path.join(out_dir, "grid.csv"), "generate")
    grid = latent_analysis.load_grid_csv(grid_path)
    (model, meta), bundle = _load_model(config, "vae")
    portfolio = _portfolio(config)
    seed = substream_seed(config["seed"], "credit-surface")
    cfg = _sim_config(config, seed)
    evaluator = sensitivity.CreditVarEvaluator(portfolio, cfg)
    surface = sensitivity.build_var_surface(
        model, grid, evaluator,
        labels=meta.get("labels"),
        threads=int(config.get("threads", 1)),
    )
    surface_path = sensitivity.write_surface_csv(
        surface, os.path.join(out_dir, "surface.csv")
    )
    _record(config, "surface", [grid_path, bundle], [surface_path], seed)
    print(
        f"surface: {len(surface.values)} nodes, VaR in "
        f"[{surface.values.min():.2f}, {surface.values.max():.2f}], "
        f"{evaluator.invocations} Monte Carlo runs"
    )
    return [surface_path]


def cmd_bootstrap(config):
    out_dir = config["out"]
    latent_path = _need(os.path.join(out_dir, "latent.csv"), "encode")
    surface_path = _need(os.path.join(out_dir, "surface.csv"), "surface")
    latent = latent_analysis.load_latent_csv(latent_path)
    surface = sensitivity.load_surface_csv(surface_path)
    boot = config["bootstrap"]
    seed = substream_seed(config["seed"], "bootstrap")
    outputs = []
    for scheme in ("simple", "block"):
        cfg = sensitivity.BootstrapConfig(
            scheme=scheme,
            block_length=int(boot["block_length"]),
            horizon=int(boot["horizon"]),
            resamples=int(boot["resamples"]),
            seed=seed,
        )
        endpoints = sensitivity.bootstrap_latent_paths(latent, cfg)
        report = sensitivity.var_distribution(surface, endpoints)
        csv_path = os.path.join(out_dir, f"var_distribution_{scheme}.csv")
        json_path = os.path.join(out_dir, f"var_distribution_{scheme}.json")
        sensitivity.write_var_distribution(report, csv_path, json_path)
        outputs += [csv_path, json_path]
        print(
            f"bootstrap[{scheme}]: {report.samples.size} resamples, "
            f"VaR mean {report.mean:.2f}, 5-95% "
            f"[{report.quantiles['q05']:.2f}, {report.quantiles['q95']:.2f}], "
            f"{report.clamp_count} clamped"
        )
    _record(config, "bootstrap", [latent_path, surface_path], outputs, seed)
    return outputs


def cmd_report(config):
    from . import figures  # matplotlib import deferred to report time

    out_dir = config["out"]
    report_dir = os.path.join(out_dir, "report")
    os.makedirs(report_dir, exist_ok=True)
    panel_dir = _need(os.path.join(out_dir, "panel"), "ingest")
    panel = corrdata.load_panel(panel_dir)
    outputs = []
    inputs = [panel_dir]

    def emit(path):
        outputs.append(path)
        return path

    # reconstruction error histograms + curves for every trained bundle
    x = panel.flat()
    reports = {}
    bottlenecks = {}
    for name in config["train"]["models"]:
        bundle = os.path.join(out_dir, "model", name)
        if not os.path.exists(bundle):
            continue
        inputs.append(bundle)
        (model, meta) = autoencoders.load_model(bundle)
        bottlenecks[name] = np.array(
            [autoencoders.bottleneck(model, mat)[:2] for mat in panel.matrices]
        )
        train_idx = meta.get("train_indices", [])
        val_idx = meta.get("val_indices", [])
        per_matrix = np.array(
            [
                ((autoencoders.decode(model, autoencoders.bottleneck(model, mat)) -
                  mat.values) ** 2).mean()
                for mat in panel.matrices
            ]
        )
        figures.mse_histogram(
            per_matrix[train_idx], per_matrix[val_idx],
            f"{name}: per-matrix reconstruction error",
            emit(os.path.join(report_dir, f"mse_hist_{name}.svg")),
        )
        train_set = set(train_idx)
        write_csv(
            emit(os.path.join(report_dir, f"mse_per_matrix_{name}.csv")),
            ["timestamp", "per_entry_mse", "split"],
            (
                (ts, per_matrix[i], "train" if i in train_set else "val")
                for i, ts in enumerate(panel.timestamps)
            ),
        )
        # training curves from the bundle's CSV
        with open(os.path.join(bundle, "train_report.csv"), newline="") as fh:
            rows = list(csv.reader(fh))[1:]
        stats = [
            autoencoders.EpochStats(int(r[0]), float(r[1]), float(r[2]),
                                    float(r[3]), float(r[4]))
            for r in rows
        ]
        reports[name] = autoencoders.TrainReport(
            kind=name, seed=0, epochs=stats, train_indices=train_idx,
            val_indices=val_idx,
        )
    if reports:
        figures.training_curves(
            reports, emit(os.path.join(report_dir, "training_curves.svg"))
        )
    if len(bottlenecks) >= 2:
        figures.latent_comparison(
            bottlenecks, emit(os.path.join(report_dir, "latent_comparison.svg"))
        )

    # latent diagnostics
    latent_path = os.path.join(out_dir, "latent.csv")
    feats_path = os.path.join(out_dir, "eigen_features.csv")
    if os.path.exists(latent_path) and os.path.exists(feats_path):
        inputs += [latent_path, feats_path]
        latent = latent_analysis.load_latent_csv(latent_path)
        feats = latent_analysis.load_eigen_features_csv(feats_path)
        labels = latent_analysis.partition_latent(latent.points())
        figures.latent_scatter(
            latent.points(), labels, emit(os.path.join(report_dir, "latent_scatter.svg"))
        )
        figures.eigenfeature_scatter(
            feats, labels, emit(os.path.join(report_dir, "eigenfeatures_3d.svg"))
        )
        figures.latent_vs_lambda1(
            latent, feats, emit(os.path.join(report_dir, "latent_vs_lambda1.svg"))
        )
        figures.latent_timeseries(
            latent, emit(os.path.join(report_dir, "latent_timeseries.svg"))
        )
        grid_path = os.path.join(out_dir, "grid.csv")
        if os.path.exists(grid_path):
            grid = latent_analysis.load_grid_csv(grid_path)
            figures.grid_plot(
                latent.points(), grid, emit(os.path.join(report_dir, "grid.svg"))
            )

    # stylized facts figures
    bins = int(config["facts"]["bins"])
    q = _facts_q(config, panel)
    synth_dir = os.path.join(out_dir, "synthetic_panel")
    synth = corrdata.load_panel(synth_dir) if os.path.exists(synth_dir) else None
    dist_hist = stylized_facts.pairwise_distribution(panel, bins=bins)
    dist_synth = stylized_facts.pairwise_distribution(synth, bins=bins) if synth else None
    figures.pairwise_histograms(
        dist_hist, dist_synth, emit(os.path.join(report_dir, "pairwise_hist.svg"))
    )
    write_csv(
        emit(os.path.join(report_dir, "pairwise_hist.csv")),
        ["bin_left", "bin_right", "mass_historical", "mass_synthetic"],
        (
            (
                dist_hist.bin_edges[i],
                dist_hist.bin_edges[i + 1],
                dist_hist.masses[i],
                dist_synth.masses[i] if dist_synth is not None else 0.0,
            )
            for i in range(len(dist_hist.masses))
        ),
    )
    figures.mp_spectrum(
        panel, q, emit(os.path.join(report_dir, "mp_spectrum_historical.svg")),
        "Historical spectra vs Marchenko-Pastur",
    )
    if synth is not None:
        figures.mp_spectrum(
            synth, q, emit(os.path.join(report_dir, "mp_spectrum_synthetic.svg")),
            "Synthetic spectra vs Marchenko-Pastur",
        )
        grid_path = os.path.join(out_dir, "grid.csv")
        if os.path.exists(grid_path):
            grid = latent_analysis.load_grid_csv(grid_path)
            synth_feats = latent_analysis.eigen_features(synth)
            grid_labels = latent_analysis.partition_latent(grid.points)
            figures.eigenfeature_scatter(
                synth_feats, grid_labels,
                emit(os.path.join(report_dir, "eigenfeatures_3d_synthetic.svg")),
            )
    figures.perron_components(
        panel, synth, emit(os.path.join(report_dir, "perron.svg"))
    )
    for name, pnl in (("historical", panel), ("synthetic", synth)):
        if pnl is None:
            continue
        mean = stylized_facts.mean_matrix(pnl)
        merges = stylized_facts.hierarchical_dendrogram(mean)
        figures.hierarchy_plot(
            mean, merges, emit(os.path.join(report_dir, f"hierarchy_{name}.svg")),
            f"{name} mean matrix",
        )
        write_csv(
            emit(os.path.join(report_dir, f"dendrogram_{name}.csv")),
            ["cluster_a", "cluster_b", "height", "size"],
            merges,
        )
    mst_hist = stylized_facts.minimum_spanning_tree(stylized_facts.mean_matrix(panel))
    mst_synth = (
        stylized_facts.minimum_spanning_tree(stylized_facts.mean_matrix(synth))
        if synth is not None
        else None
    )
    figures.mst_degree_histograms(
        mst_hist, mst_synth, emit(os.path.join(report_dir, "mst_degrees.svg"))
    )
    write_csv(
        emit(os.path.join(report_dir, "mst_edges_historical.csv")),
        ["i", "j", "distance"],
        mst_hist.edges,
    )

    # VaR surface + bootstrap distributions
    surface_path = os.path.join(out_dir, "surface.csv")
    if os.path.exists(surface_path):
        inputs.append(surface_path)
        surface = sensitivity.load_surface_csv(surface_path)
        figures.var_surface_plot(
            surface, emit(os.path.join(report_dir, "var_surface.svg"))
        )
        dists = {}
        for scheme in ("simple", "block"):
            csv_path = os.path.join(out_dir, f"var_distribution_{scheme}.csv")
            if not os.path.exists(csv_path):
                dists[scheme] = None
                continue
            with open(csv_path, newline="") as fh:
                samples = np.array([float(r[0]) for r in list(csv.reader(fh))[1:]])
            counts, edges = np.histogram(samples, bins=30)
            dists[scheme] = sensitivity.VarDistributionReport(
                samples=samples,
                mean=float(samples.mean()),
                quantiles={
                    "q05": float(np.quantile(samples, 0.05)),
                    "q50": float(np.quantile(samples, 0.50)),
                    "q95": float(np.quantile(samples, 0.95)),
                },
                clamp_count=0,
                bin_edges=edges,
                masses=counts / max(counts.sum(), 1),
            )
        if dists.get("simple") is not None or dists.get("block") is not None:
            figures.var_distribution_plot(
                dists.get("simple"), dists.get("block"),
                emit(os.path.join(report_dir, "var_distribution.svg")),
            )
    _record(config, "report", inputs, outputs, config["seed"])
    print(f"report: {len(outputs)} artifacts -> {report_dir}")
    return outputs


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _build_parser():
    parser = argparse.ArgumentParser(
        prog="corrvae",
        description="Correlation-matrix generative modelling and credit "
                    "portfolio VaR sensitivity pipeline.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    commands = (
        "synthdata", "ingest", "train", "encode", "generate",
        "facts", "var", "surface", "bootstrap", "report", "all",
    )
    for name in commands:
        p = sub.add_parser(name, help=f"run the {name} stage" if name != "all"
                           else "run every stage in order")
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="root seed override")
        p.add_argument("--out", default=None, help="output directory override")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads for grid work")
        if name == "encode":
            p.add_argument("--model", default="vae",
                           choices=["vae", "ae", "linear2", "linear3"])
        if name == "var":
            p.add_argument("--matrix", default=None,
                           help="correlation matrix CSV (default: panel mean)")
    return parser


def _dispatch(args):
    config = load_config(args.config, args.seed, args.out, args.threads)
    os.makedirs(config["out"], exist_ok=True)
    if args.command == "synthdata":
        return cmd_synthdata(config)
    if args.command == "ingest":
        return cmd_ingest(config)
    if args.command == "train":
        return cmd_train(config)
    if args.command == "encode":
        return cmd_encode(config, model_name=args.model)
    if args.command == "generate":
        return cmd_generate(config)
    if args.command == "facts":
        return cmd_facts(config)
    if args.command == "var":
        return cmd_var(config, matrix_path=args.matrix)
    if args.command == "surface":
        return cmd_surface(config)
    if args.command == "bootstrap":
        return cmd_bootstrap(config)
    if args.command == "report":
        return cmd_report(config)
    if args.command == "all":
        if config["data"]["returns_csv"] is None:
            cmd_synthdata(config)
        cmd_ingest(config)
        cmd_train(config)
        cmd_encode(config)
        cmd_generate(config)
        cmd_facts(config)
        cmd_var(config)
        cmd_surface(config)
        cmd_bootstrap(config)
        cmd_report(config)
        return []
    raise ConfigError(f"unknown command: {args.command}")


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        _dispatch(args)
    except ConfigError as exc:
        print(f"config error [{args.command}]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        print(f"data error [{args.command}]: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical failure [{args.command}]: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
