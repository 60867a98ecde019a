"""Interpretation of the latent space and sampling grids for generation.

The latent code of a trained model is explained through eigen features of
the underlying matrices: the top eigenvalues (correlation intensity, i.e.
diversification opportunities) and the cosine similarity of each leading
eigenvector against its across-time mean (orientation stability). The
module also builds the quasi-uniform latent grid whose decoded points
form the synthetic matrix panel.
"""

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import autoencoders, linalg
from .corrdata import MatrixPanel
from .errors import DataError, NumericalError
from .util import substream, write_csv


@dataclass
class LatentSeries:
    """Chronological latent means, one 2-D point per historical matrix."""

    timestamps: list
    mu1: np.ndarray
    mu2: np.ndarray

    def points(self):
        return np.column_stack([self.mu1, self.mu2])

    def __len__(self):
        return len(self.mu1)


@dataclass
class EigenFeatureSeries:
    timestamps: list
    lambda1: np.ndarray
    lambda2: np.ndarray
    alpha1: np.ndarray
    alpha2: np.ndarray

    def validate(self):
        if not ((self.lambda1 >= self.lambda2).all() and (self.lambda2 > 0).all()):
            raise DataError("eigenvalue series must satisfy lambda1 >= lambda2 > 0")
        for alpha in (self.alpha1, self.alpha2):
            if (np.abs(alpha) > 1.0 + 1e-12).any():
                raise DataError("cosine similarities must lie in [-1, 1]")
        return self


@dataclass
class LatentGrid:
    points: np.ndarray  # (count, 2)
    bounding_box: tuple  # (xmin, xmax, ymin, ymax)
    count: int

    def validate(self):
        if self.points.shape != (self.count, 2):
            raise DataError("grid point count does not match configured count")
        if not np.isfinite(self.points).all():
            raise DataError("grid has non-finite points")
        return self


# ---------------------------------------------------------------------------
# eigen features
# ---------------------------------------------------------------------------

def eigen_features(panel):
    """Top-two eigenvalues and eigenvector cosine similarities per matrix.

    The similarity of eigenvector i at time t is taken against the
    across-time mean of eigenvector i, with the solver's deterministic
    sign convention applied before averaging so the series is stable.
    """
    if len(panel) == 0:
        raise DataError("empty panel")
    lam1, lam2 = [], []
    vec1, vec2 = [], []
    for mat in panel.matrices:
        dec = linalg.eigh_symmetric(mat.values)
        lam1.append(dec.eigenvalues[0])
        lam2.append(dec.eigenvalues[1])
        vec1.append(dec.eigenvectors[:, 0])
        vec2.append(dec.eigenvectors[:, 1])
    alphas = []
    for vecs in (vec1, vec2):
        stacked = np.asarray(vecs)
        mean_vec = stacked.mean(axis=0)
        mean_norm = float(np.linalg.norm(mean_vec))
        if mean_norm < 1e-12:
            raise DataError("mean eigenvector has zero norm; similarity undefined")
        norms = np.linalg.norm(stacked, axis=1)
        alphas.append((stacked @ mean_vec) / (mean_norm * norms))
    return EigenFeatureSeries(
        timestamps=list(panel.timestamps),
        lambda1=np.asarray(lam1),
        lambda2=np.asarray(lam2),
        alpha1=alphas[0],
        alpha2=alphas[1],
    )


def latent_series(model, panel):
    """Encode every historical matrix to its latent mean (no sampling)."""
    points = np.array([autoencoders.bottleneck(model, m)[:2] for m in panel.matrices])
    return LatentSeries(
        timestamps=list(panel.timestamps), mu1=points[:, 0], mu2=points[:, 1]
    )


def _pearson(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    sa, sb = a.std(), b.std()
    if sa == 0.0 or sb == 0.0:
        raise DataError("constant series: correlation undefined")
    return float(((a - a.mean()) * (b - b.mean())).mean() / (sa * sb))


def latent_eigen_correlation(latent, feats):
    """Pearson correlations between latent axes and eigen features.

    Latent axis sign/rotation is not canonical across training runs, so
    magnitudes are the meaningful quantity; `max_abs_mu_lambda1` is the
    headline interpretability number.
    """
    if len(latent) != len(feats.lambda1):
        raise DataError("latent and eigen feature series lengths differ")
    mus = {"mu1": latent.mu1, "mu2": latent.mu2}
    series = {
        "lambda1": feats.lambda1,
        "lambda2": feats.lambda2,
        "alpha1": feats.alpha1,
        "alpha2": feats.alpha2,
    }
    report = {}
    for mk, mv in mus.items():
        for sk, sv in series.items():
            report[f"{mk}_{sk}"] = _pearson(mv, sv)
    report["max_abs_mu_lambda1"] = max(
        abs(report["mu1_lambda1"]), abs(report["mu2_lambda1"])
    )
    return report


# ---------------------------------------------------------------------------
# latent partition and sampling grid
# ---------------------------------------------------------------------------

def partition_latent(points, rows=3, cols=3):
    """Label each point by its cell in a rows x cols split of the bounding
    box (the conventional nine-subgroup view is 3 x 3). Points exactly on
    an interior edge go to the lower-index cell."""
    points = np.asarray(points, dtype=float)
    if points.size == 0:
        raise DataError("no points to partition")
    if rows < 1 or cols < 1:
        raise DataError("rows and cols must be >= 1")
    cells = []
    for axis, n_cells in ((0, cols), (1, rows)):
        lo, hi = points[:, axis].min(), points[:, axis].max()
        inner = lo + (hi - lo) * np.arange(1, n_cells) / n_cells
        cells.append(np.searchsorted(inner, points[:, axis], side="left"))
    labels = cells[1] * cols + cells[0]
    return labels


def build_grid(points, count=132, margin=0.2, seed=0):
    """Stratified jittered lattice over the inflated bounding box.

    ceil(sqrt(count))^2 cells, one seeded point each, truncated to
    `count`; the box is padded on every side by `margin` times the
    bounding-box diagonal. The four points nearest the box corners are
    pinned to those corners, so the historical points are inside the
    grid's convex hull by construction.
    """
    points = np.asarray(points, dtype=float)
    if count < 1:
        raise DataError(f"grid count must be >= 1, got {count}")
    if margin < 0:
        raise DataError(f"margin must be >= 0, got {margin}")
    if points.size == 0:
        raise DataError("no historical points to cover")
    x0, x1 = points[:, 0].min(), points[:, 0].max()
    y0, y1 = points[:, 1].min(), points[:, 1].max()
    diag = math.hypot(x1 - x0, y1 - y0)
    pad = margin * diag
    x0, x1, y0, y1 = x0 - pad, x1 + pad, y0 - pad, y1 + pad
    if x1 <= x0 or y1 <= y0:
        raise DataError("degenerate bounding box: historical points do not span an area")

    g = math.ceil(math.sqrt(count))
    rng = substream(seed, "latent-grid")
    jitter = rng.uniform(size=(g * g, 2))
    iy, ix = np.divmod(np.arange(g * g), g)
    cell_w, cell_h = (x1 - x0) / g, (y1 - y0) / g
    pts = np.column_stack(
        [x0 + (ix + jitter[:, 0]) * cell_w, y0 + (iy + jitter[:, 1]) * cell_h]
    )[:count]

    if count >= 4:
        corners = np.array([[x0, y0], [x1, y0], [x0, y1], [x1, y1]])
        taken = set()
        for corner in corners:
            order = np.argsort(((pts - corner) ** 2).sum(axis=1), kind="stable")
            pick = next(int(i) for i in order if int(i) not in taken)
            taken.add(pick)
            pts[pick] = corner
    grid = LatentGrid(points=pts, bounding_box=(x0, x1, y0, y1), count=count)
    return grid.validate()


# ---------------------------------------------------------------------------
# synthetic panel
# ---------------------------------------------------------------------------

def generate_synthetic_panel(model, grid, labels=None, threads=1):
    """Decode every grid point and repair the output into a valid
    correlation matrix; ordered by grid index."""

    def decode_one(idx):
        try:
            raw = autoencoders.decode(model, grid.points[idx])
            mat = linalg.repair_to_correlation(raw, labels=labels)
            mat.validate()
            return mat
        except (DataError, NumericalError) as exc:
            raise NumericalError(f"grid point {idx}: {exc}") from None

    indices = range(len(grid.points))
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            matrices = list(pool.map(decode_one, indices))
    else:
        matrices = [decode_one(i) for i in indices]
    return MatrixPanel(
        matrices=matrices,
        window=0,
        stride=0,
        timestamps=[f"grid_{i:04d}" for i in indices],
    )


# ---------------------------------------------------------------------------
# CSV artifacts
# ---------------------------------------------------------------------------

def write_latent_csv(latent, sigmas, path):
    """Latent series with per-matrix posterior scales (zeros for non-VAE)."""
    rows = zip(latent.timestamps, latent.mu1, latent.mu2, sigmas[:, 0], sigmas[:, 1])
    write_csv(path, ["timestamp", "mu1", "mu2", "sigma1", "sigma2"], rows)
    return path


def load_latent_csv(path):
    if not os.path.exists(path):
        raise DataError(f"latent series file not found: {path}")
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:3] != ["timestamp", "mu1", "mu2"]:
            raise DataError(f"unexpected latent series header: {header}")
        stamps, mu1, mu2 = [], [], []
        for row in reader:
            stamps.append(row[0])
            mu1.append(float(row[1]))
            mu2.append(float(row[2]))
    return LatentSeries(timestamps=stamps, mu1=np.asarray(mu1), mu2=np.asarray(mu2))


def write_eigen_features_csv(feats, path):
    rows = zip(feats.timestamps, feats.lambda1, feats.lambda2, feats.alpha1, feats.alpha2)
    write_csv(path, ["timestamp", "lambda1", "lambda2", "alpha1", "alpha2"], rows)
    return path


def load_eigen_features_csv(path):
    if not os.path.exists(path):
        raise DataError(f"eigen features file not found: {path}")
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        cols = list(zip(*[row for row in reader]))
    return EigenFeatureSeries(
        timestamps=list(cols[0]),
        lambda1=np.array([float(v) for v in cols[1]]),
        lambda2=np.array([float(v) for v in cols[2]]),
        alpha1=np.array([float(v) for v in cols[3]]),
        alpha2=np.array([float(v) for v in cols[4]]),
    )


def write_grid_csv(grid, path):
    write_csv(path, ["z1", "z2"], zip(grid.points[:, 0], grid.points[:, 1]))
    return path


def load_grid_csv(path):
    if not os.path.exists(path):
        raise DataError(f"grid file not found: {path}")
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["z1", "z2"]:
            raise DataError(f"unexpected grid header: {header}")
        pts = np.array([[float(c) for c in row] for row in reader])
    box = (pts[:, 0].min(), pts[:, 0].max(), pts[:, 1].min(), pts[:, 1].max())
    grid = LatentGrid(points=pts, bounding_box=box, count=pts.shape[0])
    return grid.validate()
