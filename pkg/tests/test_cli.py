import json
import os

import numpy as np
import pytest

from corrvae import cli


def fast_config(tmp_path, out_name="run", **overrides):
    config = {
        "seed": 3,
        "out": str(tmp_path / out_name),
        "data": {
            "window": 40,
            "stride": 3,
            "synthetic": {"n_assets": 8, "n_months": 120},
        },
        "train": {
            "models": ["vae", "linear2"],
            "vae": {"epochs": 8, "learning_rate": 1e-3, "hidden_sizes": [32, 16]},
            "linear": {"epochs": 300, "learning_rate": 0.01},
        },
        "grid": {"count": 12, "margin": 0.2},
        "portfolio": {
            "sub_portfolios": [
                {"name": "a", "n_obligors": 60, "ead": 1.0, "pd": 0.03,
                 "lgd": 0.7, "rho": 0.5, "factor": 0},
                {"name": "b", "n_obligors": 40, "ead": 2.0, "pd": 0.05,
                 "lgd": 0.6, "rho": 0.4, "factor": 5},
            ]
        },
        "simulation": {"paths": 1500, "strata": 30},
        "bootstrap": {"block_length": 5, "horizon": 6, "resamples": 80},
    }
    config.update(overrides)
    path = tmp_path / f"{out_name}-config.json"
    path.write_text(json.dumps(config))
    return str(path), config["out"]


def run(*argv):
    return cli.main(list(argv))


class TestPipeline:
    def test_full_chain(self, tmp_path):
        cfg, out = fast_config(tmp_path)
        assert run("all", "--config", cfg) == 0
        expected = [
            "returns.csv", "panel/manifest.json", "model/vae/encoder.mlpw",
            "latent.csv", "eigen_features.csv", "latent_eigen_corr.json",
            "grid.csv", "synthetic_panel/manifest.json", "facts_historical.json",
            "facts_synthetic.json", "losses.csv", "var.json", "surface.csv",
            "var_distribution_simple.json", "var_distribution_block.csv",
            "manifest.json", "report/var_surface.svg", "report/latent_scatter.svg",
        ]
        for rel in expected:
            assert os.path.exists(os.path.join(out, rel)), rel

    def test_manifest_provenance_chain(self, tmp_path):
        cfg, out = fast_config(tmp_path, out_name="prov")
        assert run("all", "--config", cfg) == 0
        manifest = json.loads(open(os.path.join(out, "manifest.json")).read())
        commands = manifest["commands"]
        for name in ("synthdata", "ingest", "train", "encode", "generate",
                     "facts", "var", "surface", "bootstrap", "report"):
            assert name in commands
            assert "seed" in commands[name]
        # chain: ingest consumed exactly what synthdata produced
        assert "returns.csv" in commands["ingest"]["inputs"]
        assert "panel" in commands["train"]["inputs"]
        assert "surface.csv" in commands["bootstrap"]["inputs"]

    def test_train_rerun_identical_weights(self, tmp_path):
        cfg, out = fast_config(tmp_path, out_name="det")
        assert run("synthdata", "--config", cfg) == 0
        assert run("ingest", "--config", cfg) == 0
        assert run("train", "--config", cfg) == 0
        first = open(os.path.join(out, "model", "vae", "encoder.mlpw"), "rb").read()
        assert run("train", "--config", cfg) == 0
        second = open(os.path.join(out, "model", "vae", "encoder.mlpw"), "rb").read()
        assert first == second


class TestErrors:
    def test_missing_config(self, tmp_path):
        assert run("synthdata", "--config", str(tmp_path / "none.json")) == 2

    def test_invalid_json_config(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        assert run("synthdata", "--config", str(path)) == 2

    def test_unknown_model_kind(self, tmp_path):
        cfg, out = fast_config(tmp_path, out_name="badmodel")
        config = json.loads(open(cfg).read())
        config["train"]["models"] = ["vae", "gan"]
        path = tmp_path / "badmodel2.json"
        path.write_text(json.dumps(config))
        assert run("synthdata", "--config", str(path)) == 0
        assert run("ingest", "--config", str(path)) == 0
        assert run("train", "--config", str(path)) == 2

    def test_missing_upstream_artifact(self, tmp_path):
        cfg, out = fast_config(tmp_path, out_name="noseed")
        assert run("train", "--config", cfg) == 3

    def test_var_with_non_psd_matrix_exits_4(self, tmp_path):
        cfg, out = fast_config(tmp_path, out_name="badmat")
        os.makedirs(out, exist_ok=True)
        bad = tmp_path / "bad_matrix.csv"
        rows = [
            "f0,f1,f2",
            "1.0,0.9,-0.9",
            "0.9,1.0,0.9",
            "-0.9,0.9,1.0",
        ]
        bad.write_text("\n".join(rows) + "\n")
        # portfolio factors must fit the 3x3 matrix
        config = json.loads(open(cfg).read())
        config["portfolio"]["sub_portfolios"] = [
            {"name": "a", "n_obligors": 10, "ead": 1.0, "pd": 0.02,
             "lgd": 1.0, "rho": 0.4, "factor": 0}
        ]
        path = tmp_path / "badmat2.json"
        path.write_text(json.dumps(config))
        code = cli.main(["var", "--config", str(path), "--matrix", str(bad)])
        assert code == 4

    def test_seed_flag_overrides(self, tmp_path):
        cfg, out = fast_config(tmp_path, out_name="seedflag")
        assert run("synthdata", "--config", cfg, "--seed", "99") == 0
        manifest = json.loads(open(os.path.join(out, "manifest.json")).read())
        from corrvae.util import substream_seed

        assert manifest["commands"]["synthdata"]["seed"] == substream_seed(99, "synthdata")


class TestVariants:
    def test_encode_with_linear_model(self, tmp_path):
        cfg, out = fast_config(tmp_path, out_name="encvar")
        for cmd in ("synthdata", "ingest", "train"):
            assert run(cmd, "--config", cfg) == 0
        assert run("encode", "--config", cfg, "--model", "linear2") == 0
        lines = open(os.path.join(out, "latent.csv")).read().splitlines()
        assert lines[0] == "timestamp,mu1,mu2,sigma1,sigma2"
        # deterministic bottleneck: sigma columns are zero for non-VAE models
        sigmas = {line.split(",")[3] for line in lines[1:]}
        assert sigmas == {"0.0"}

    def test_price_input_ingest(self, tmp_path):
        rng = np.random.default_rng(0)
        t, m = 90, 6
        prices = 100 * np.exp(np.cumsum(rng.normal(0, 0.05, (t, m)), axis=0))
        csv_lines = [",".join(f"p{i}" for i in range(m))]
        csv_lines += [",".join(str(v) for v in row) for row in prices]
        price_path = tmp_path / "prices.csv"
        price_path.write_text("\n".join(csv_lines) + "\n")
        config = {
            "seed": 1,
            "out": str(tmp_path / "prun"),
            "data": {
                "returns_csv": str(price_path),
                "kind": "prices",
                "window": 40,
                "stride": 5,
            },
        }
        path = tmp_path / "pcfg.json"
        path.write_text(json.dumps(config))
        assert run("ingest", "--config", str(path)) == 0
        manifest = json.loads(
            open(os.path.join(config["out"], "panel", "manifest.json")).read()
        )
        # t-1 return rows -> floor((89 - 40)/5) + 1 windows
        assert len(manifest["files"]) == (t - 1 - 40) // 5 + 1


class TestConfig:
    def test_defaults_complete(self):
        config = cli.load_config()
        assert config["train"]["vae"]["epochs"] == 80
        assert config["simulation"]["quantile"] == 0.999
        assert config["bootstrap"]["block_length"] == 11
        assert config["grid"]["count"] == 132

    def test_deep_merge_preserves_siblings(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"train": {"vae": {"epochs": 5}}}))
        config = cli.load_config(str(path))
        assert config["train"]["vae"]["epochs"] == 5
        assert config["train"]["vae"]["learning_rate"] == pytest.approx(1e-4)
        assert config["train"]["ae"]["epochs"] == 80
