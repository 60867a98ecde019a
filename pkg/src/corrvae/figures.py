"""SVG report figures rendered from pipeline artifacts.

Matplotlib is configured headless with a fixed hash salt so figure
content is stable run to run (byte-exactness of SVG is not promised by
the pipeline, content is).
"""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from . import stylized_facts

plt.rcParams["svg.hashsalt"] = "corrvae"

_SAVE_KW = {"metadata": {"Date": None}, "bbox_inches": "tight"}
_SUBGROUP_CMAP = "tab10"


def _save(fig, path):
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path


def mse_histogram(train_mse, val_mse, title, path, bins=30):
    """Per-matrix reconstruction error histogram, train vs validation."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(train_mse, bins=bins, alpha=0.6, label="train", color="#4878d0")
    ax.hist(val_mse, bins=bins, alpha=0.6, label="validation", color="#ee854a")
    ax.set_xlabel("per-entry MSE")
    ax.set_ylabel("matrices")
    ax.set_title(title)
    ax.legend()
    return _save(fig, path)


def latent_scatter(points, labels, path, title="Latent space (3x3 subgroups)"):
    fig, ax = plt.subplots(figsize=(5.5, 5))
    sc = ax.scatter(points[:, 0], points[:, 1], c=labels, cmap=_SUBGROUP_CMAP, s=18)
    ax.set_xlabel("mu1")
    ax.set_ylabel("mu2")
    ax.set_title(title)
    fig.colorbar(sc, ax=ax, label="subgroup")
    return _save(fig, path)


def latent_comparison(points_by_model, path):
    """Bottleneck scatters of the trained models side by side."""
    names = list(points_by_model)
    fig, axes = plt.subplots(1, len(names), figsize=(4.2 * len(names), 4),
                             squeeze=False)
    for ax, name in zip(axes[0], names):
        pts = points_by_model[name]
        ax.scatter(pts[:, 0], pts[:, 1], s=12, color="#4878d0")
        ax.set_title(name)
        ax.set_xlabel("z1")
        ax.set_ylabel("z2")
    fig.suptitle("Latent spaces of the trained models")
    return _save(fig, path)


def eigenfeature_scatter(feats, labels, path):
    """(alpha1, alpha2, lambda1) cloud, dot size tracking lambda2."""
    fig = plt.figure(figsize=(6.5, 5.5))
    ax = fig.add_subplot(projection="3d")
    lam2 = np.asarray(feats.lambda2)
    span = lam2.max() - lam2.min()
    size = 10 + 60 * (lam2 - lam2.min()) / (span if span > 0 else 1.0)
    ax.scatter(
        feats.alpha1, feats.alpha2, feats.lambda1,
        c=labels, cmap=_SUBGROUP_CMAP, s=size,
    )
    ax.set_xlabel("alpha1")
    ax.set_ylabel("alpha2")
    ax.set_zlabel("lambda1")
    ax.set_title("Eigen features by latent subgroup (size: lambda2)")
    return _save(fig, path)


def latent_vs_lambda1(latent, feats, path):
    fig, axes = plt.subplots(1, 2, figsize=(9, 4))
    for ax, mu, name in ((axes[0], latent.mu1, "mu1"), (axes[1], latent.mu2, "mu2")):
        ax.scatter(mu, feats.lambda1, s=12, color="#4878d0")
        ax.set_xlabel(name)
        ax.set_ylabel("lambda1")
    fig.suptitle("First eigenvalue against the latent means")
    return _save(fig, path)


def latent_timeseries(latent, path):
    fig, ax = plt.subplots(figsize=(8, 4))
    t = np.arange(len(latent))
    ax.plot(t, latent.mu1, label="mu1", color="#4878d0")
    ax.plot(t, latent.mu2, label="mu2", color="#ee854a")
    step = max(len(t) // 8, 1)
    ax.set_xticks(t[::step])
    ax.set_xticklabels([latent.timestamps[i] for i in t[::step]], rotation=45, fontsize=7)
    ax.set_ylabel("latent mean")
    ax.set_title("Latent path of the historical matrices")
    ax.legend()
    return _save(fig, path)


def grid_plot(historical, grid, path):
    fig, ax = plt.subplots(figsize=(5.5, 5))
    ax.scatter(grid.points[:, 0], grid.points[:, 1], s=14, color="green",
               label="grid", alpha=0.8)
    ax.scatter(historical[:, 0], historical[:, 1], s=14, color="red",
               label="historical", alpha=0.8)
    ax.set_xlabel("mu1")
    ax.set_ylabel("mu2")
    ax.set_title("Sampling grid over the latent space")
    ax.legend()
    return _save(fig, path)


def pairwise_histograms(dist_hist, dist_synth, path):
    fig, axes = plt.subplots(1, 2, figsize=(9, 4), sharey=True)
    for ax, dist, title in (
        (axes[0], dist_hist, "historical"),
        (axes[1], dist_synth, "synthetic"),
    ):
        if dist is None:
            ax.set_visible(False)
            continue
        centers = 0.5 * (dist.bin_edges[:-1] + dist.bin_edges[1:])
        width = dist.bin_edges[1] - dist.bin_edges[0]
        ax.bar(centers, dist.masses, width=width, color="#4878d0")
        ax.axvline(0.0, color="k", lw=0.8)
        ax.set_title(f"{title} (mean {dist.mean:.2f})")
        ax.set_xlabel("pairwise correlation")
    axes[0].set_ylabel("mass")
    fig.suptitle("Pairwise correlations shifted to the positive")
    return _save(fig, path)


def mp_spectrum(panel, q, path, title):
    """Panel-averaged eigenvalue histogram against the MP bulk density."""
    lo, hi = stylized_facts.marchenko_pastur_edges(q)
    spectra = [
        stylized_facts.marchenko_pastur_check(m, q).eigenvalues for m in panel.matrices
    ]
    lam = np.concatenate(spectra)
    bulk = lam[lam <= hi]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(bulk, bins=40, range=(0.0, hi), density=True, color="#4878d0",
            alpha=0.7, label="bulk eigenvalues")
    xs = np.linspace(1e-6, hi, 300)
    ax.plot(xs, stylized_facts.marchenko_pastur_density(xs, q), color="#d65f5f",
            label="Marchenko-Pastur")
    lam1_mean = float(np.mean([s[0] for s in spectra]))
    ax.axvline(lam1_mean, color="k", ls="--", lw=1,
               label=f"mean lambda1 = {lam1_mean:.1f}")
    ax.set_xlabel("eigenvalue")
    ax.set_ylabel("density")
    ax.set_title(title)
    ax.legend(fontsize=8)
    return _save(fig, path)


def perron_components(panel_hist, panel_synth, path):
    fig, axes = plt.subplots(1, 2, figsize=(9, 4), sharey=True)
    for ax, panel, title in (
        (axes[0], panel_hist, "historical"),
        (axes[1], panel_synth, "synthetic"),
    ):
        if panel is None:
            ax.set_visible(False)
            continue
        mins = [
            stylized_facts.perron_frobenius_check(m).min_component
            for m in panel.matrices
        ]
        ax.hist(mins, bins=30, color="#4878d0")
        ax.axvline(0.0, color="k", lw=0.8)
        ax.set_title(title)
        ax.set_xlabel("min component of first eigenvector")
    axes[0].set_ylabel("matrices")
    fig.suptitle("Perron-Frobenius: sign coherence of the first eigenvector")
    return _save(fig, path)


def _dendrogram_layout(merges, m):
    """Leaf order and per-cluster (x, height) from a merge list."""
    children = {m + i: (a, b) for i, (a, b, _, _) in enumerate(merges)}
    order = []

    def visit(node):
        if node < m:
            order.append(node)
            return
        a, b = children[node]
        visit(a)
        visit(b)

    visit(m + len(merges) - 1)
    xpos = {leaf: i for i, leaf in enumerate(order)}
    height = {leaf: 0.0 for leaf in order}
    for i, (a, b, h, _) in enumerate(merges):
        xpos[m + i] = 0.5 * (xpos[a] + xpos[b])
        height[m + i] = h
    return order, xpos, height


def hierarchy_plot(matrix, merges, path, title):
    """Heatmap (dendrogram-ordered) next to the dendrogram itself."""
    m = matrix.values.shape[0]
    order, xpos, height = _dendrogram_layout(merges, m)
    fig, (ax_h, ax_d) = plt.subplots(1, 2, figsize=(10, 4.2))
    reordered = matrix.values[np.ix_(order, order)]
    im = ax_h.imshow(reordered, cmap="viridis", vmin=-1, vmax=1)
    ax_h.set_title("correlations (leaf order)")
    fig.colorbar(im, ax=ax_h, fraction=0.046)
    for i, (a, b, h, _) in enumerate(merges):
        xa, xb = xpos[a], xpos[b]
        ax_d.plot([xa, xa, xb, xb], [height[a], h, h, height[b]],
                  color="#4878d0", lw=1)
    ax_d.set_xticks(range(m))
    ax_d.set_xticklabels([matrix.labels[i] for i in order], rotation=90, fontsize=6)
    ax_d.set_ylabel("merge distance")
    ax_d.set_title("dendrogram")
    fig.suptitle(title)
    return _save(fig, path)


def mst_degree_histograms(mst_hist, mst_synth, path):
    fig, axes = plt.subplots(1, 2, figsize=(9, 4), sharey=True)
    for ax, mst, title in (
        (axes[0], mst_hist, "historical mean"),
        (axes[1], mst_synth, "synthetic mean"),
    ):
        if mst is None:
            ax.set_visible(False)
            continue
        degs = sorted(mst.degree_histogram)
        ax.bar(degs, [mst.degree_histogram[d] for d in degs], color="#4878d0")
        ax.set_xlabel("node degree")
        ax.set_title(title)
    axes[0].set_ylabel("nodes")
    fig.suptitle("MST degree distributions")
    return _save(fig, path)


def var_surface_plot(surface, path):
    fig, ax = plt.subplots(figsize=(6, 5))
    tc = ax.tricontourf(
        surface.points[:, 0], surface.points[:, 1], surface.values, levels=20,
        cmap="viridis",
    )
    ax.scatter(surface.points[:, 0], surface.points[:, 1], s=6, color="k", alpha=0.4)
    fig.colorbar(tc, ax=ax, label="VaR")
    ax.set_xlabel("mu1")
    ax.set_ylabel("mu2")
    ax.set_title("VaR surface over the latent space")
    return _save(fig, path)


def var_distribution_plot(report_simple, report_block, path):
    fig, ax = plt.subplots(figsize=(7, 4))
    for report, label, color in (
        (report_simple, "simple bootstrap", "#4878d0"),
        (report_block, "block bootstrap", "#ee854a"),
    ):
        if report is None:
            continue
        ax.hist(report.samples, bins=30, alpha=0.55, label=label, color=color)
    ax.set_xlabel("VaR")
    ax.set_ylabel("resamples")
    ax.set_title("VaR distribution over 1-year latent moves")
    ax.legend()
    return _save(fig, path)


def training_curves(reports, path):
    fig, ax = plt.subplots(figsize=(7, 4))
    for name, report in reports.items():
        ax.plot([s.epoch for s in report.epochs], [s.val_mse for s in report.epochs],
                label=f"{name} validation")
    ax.set_xlabel("epoch")
    ax.set_ylabel("MSE (per-sample sum of squares)")
    ax.set_yscale("log")
    ax.set_title("Validation reconstruction error")
    ax.legend(fontsize=8)
    return _save(fig, path)
