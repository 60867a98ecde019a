"""VaR surface over the latent space and bootstrapped latent dynamics.

Every grid point is decoded, repaired, and priced once by the Monte Carlo
engine; after that the surface answers any latent query by barycentric
interpolation on its Delaunay triangulation, which is exact at the nodes
and bounded by the local nodal extremes. Bootstrapping the first
differences of the historical latent path then yields a distribution of
horizon endpoints whose interpolated VaR quantifies the sensitivity to
correlation movements with zero further credit simulations.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, Delaunay, QhullError

from . import autoencoders, creditrisk, linalg
from .errors import DataError, NumericalError
from .util import substream, write_csv, write_json


@dataclass
class VarSurface:
    points: np.ndarray          # (n, 2) latent grid
    values: np.ndarray          # (n,) VaR, currency units
    method: str = "delaunay-linear"
    _tri: Delaunay = field(default=None, repr=False, compare=False)
    _hull: np.ndarray = field(default=None, repr=False, compare=False)

    def validate(self):
        if self.points.ndim != 2 or self.points.shape[1] != 2:
            raise DataError("surface points must be (n, 2)")
        if self.values.shape != (self.points.shape[0],):
            raise DataError("one VaR value per grid point required")
        if not (np.isfinite(self.points).all() and np.isfinite(self.values).all()):
            raise DataError("surface has non-finite entries")
        return self

    def triangulation(self):
        if self._tri is None:
            try:
                self._tri = Delaunay(self.points)
            except QhullError as exc:
                raise NumericalError(
                    f"surface points do not span an area, cannot triangulate: {exc}"
                ) from None
        return self._tri

    def hull_vertices(self):
        """Convex hull corners in counterclockwise order."""
        if self._hull is None:
            try:
                hull = ConvexHull(self.points)
            except QhullError as exc:
                raise NumericalError(f"surface hull is degenerate: {exc}") from None
            self._hull = self.points[hull.vertices]
        return self._hull


class CreditVarEvaluator:
    """Matrix -> VaR via the Monte Carlo engine, counting invocations.

    The invocation counter is how the pipeline proves that bootstrap
    queries are served purely by interpolation.
    """

    def __init__(self, portfolio, cfg, method="binomial"):
        self.portfolio = portfolio
        self.cfg = cfg
        self.method = method
        self.invocations = 0

    def __call__(self, matrix):
        self.invocations += 1
        dist = creditrisk.simulate_losses(
            self.portfolio, matrix, self.cfg, method=self.method
        )
        return creditrisk.var_quantile(dist, self.cfg.quantile)


def build_var_surface(model, grid, evaluator, labels=None, threads=1):
    """Decode -> repair -> simulate -> VaR for every grid point.

    Evaluation across points is order-independent; results are attached
    in grid order.
    """

    def price_one(idx):
        try:
            raw = autoencoders.decode(model, grid.points[idx])
            mat = linalg.repair_to_correlation(raw, labels=labels)
            return float(evaluator(mat))
        except (DataError, NumericalError) as exc:
            raise NumericalError(f"grid point {idx}: {exc}") from None

    indices = range(len(grid.points))
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            values = list(pool.map(price_one, indices))
    else:
        values = [price_one(i) for i in indices]
    surface = VarSurface(points=grid.points.copy(), values=np.asarray(values))
    return surface.validate()


# ---------------------------------------------------------------------------
# interpolation
# ---------------------------------------------------------------------------

def _barycentric_value(surface, z):
    """Piecewise-linear value at z, or None when z is outside the hull."""
    tri = surface.triangulation()
    simplex = int(tri.find_simplex(z))
    if simplex < 0:
        # exact-node fallback: hull vertices can fail point location by
        # a rounding hair even though they are grid nodes
        d2 = ((surface.points - z) ** 2).sum(axis=1)
        nearest = int(d2.argmin())
        scale = max(float(np.abs(surface.points).max()), 1.0)
        if math.sqrt(d2[nearest]) <= 1e-9 * scale:
            return float(surface.values[nearest])
        return None
    t = tri.transform[simplex]
    bary2 = t[:2] @ (np.asarray(z, dtype=float) - t[2])
    bary = np.append(bary2, 1.0 - bary2.sum())
    verts = tri.simplices[simplex]
    return float(bary @ surface.values[verts])


def _clamp_to_hull(surface, z):
    """Nearest point on the convex hull boundary."""
    hull = surface.hull_vertices()
    z = np.asarray(z, dtype=float)
    best = None
    n = hull.shape[0]
    for i in range(n):
        a, b = hull[i], hull[(i + 1) % n]
        ab = b - a
        denom = float(ab @ ab)
        t = 0.0 if denom == 0.0 else float(np.clip((z - a) @ ab / denom, 0.0, 1.0))
        p = a + t * ab
        d = float(((z - p) ** 2).sum())
        if best is None or d < best[0]:
            best = (d, p)
    return best[1]


def _value_with_inward_nudge(surface, p):
    """Evaluate at p, nudging toward the grid centroid if point location
    fails on the hull boundary."""
    value = _barycentric_value(surface, p)
    if value is not None:
        return value
    centroid = surface.points.mean(axis=0)
    for step in (1e-9, 1e-6, 1e-3):
        q = p + (centroid - p) * step
        value = _barycentric_value(surface, q)
        if value is not None:
            return value
    raise NumericalError(f"interpolation failed near point {p.tolist()}")


def interpolate_var(surface, z, allow_extrapolation=False):
    """VaR at latent point z; exact at grid nodes.

    Outside the grid's convex hull this raises unless
    `allow_extrapolation` is set, in which case the query is clamped to
    the nearest hull boundary point.
    """
    z = np.asarray(z, dtype=float)
    if z.shape != (2,) or not np.isfinite(z).all():
        raise DataError(f"latent query must be a finite 2-vector, got {z}")
    value = _barycentric_value(surface, z)
    if value is not None:
        return value
    if not allow_extrapolation:
        raise NumericalError(
            f"latent point {z.tolist()} lies outside the surface hull; "
            "pass allow_extrapolation=True to clamp to the boundary"
        )
    return _value_with_inward_nudge(surface, _clamp_to_hull(surface, z))


# ---------------------------------------------------------------------------
# bootstrap of the latent path
# ---------------------------------------------------------------------------

@dataclass
class BootstrapConfig:
    scheme: str = "block"       # "simple" or "block"
    block_length: int = 11
    horizon: int = 12           # monthly steps; 12 = 1-year horizon
    resamples: int = 1000
    seed: int = 0

    def validate(self):
        if self.scheme not in ("simple", "block"):
            raise DataError(f"unknown bootstrap scheme: {self.scheme!r}")
        if self.block_length < 1:
            raise DataError("block length must be >= 1")
        if self.horizon < 1:
            raise DataError("horizon must be >= 1")
        if self.resamples < 1:
            raise DataError("resamples must be >= 1")
        return self


def bootstrap_latent_paths(series, cfg):
    """Resample first differences of (mu1, mu2) jointly; returns horizon
    endpoints, one 2-vector per resample.

    The simple scheme is the block engine with block length 1 (identical
    code path); blocks are circular so every difference is drawn with
    equal probability.
    """
    cfg.validate()
    points = series.points()
    length = cfg.block_length if cfg.scheme == "block" else 1
    if len(points) < length + 1:
        raise DataError(
            f"series of {len(points)} points too short for block length {length}"
        )
    diffs = np.diff(points, axis=0)
    n_diff = diffs.shape[0]
    rng = substream(cfg.seed, "bootstrap")
    n_blocks = math.ceil(cfg.horizon / length)
    starts = rng.integers(0, n_diff, size=(cfg.resamples, n_blocks))
    offsets = np.arange(length)
    idx = (starts[:, :, None] + offsets[None, None, :]) % n_diff
    idx = idx.reshape(cfg.resamples, -1)[:, : cfg.horizon]
    sums = diffs[idx].sum(axis=1)
    return points[-1] + sums


# ---------------------------------------------------------------------------
# VaR distribution
# ---------------------------------------------------------------------------

@dataclass
class VarDistributionReport:
    samples: np.ndarray
    mean: float
    quantiles: dict  # "q05", "q50", "q95"
    clamp_count: int
    bin_edges: np.ndarray
    masses: np.ndarray


def var_distribution(surface, endpoints, bins=40):
    """Interpolated VaR per bootstrap endpoint.

    Endpoints outside the hull are clamped to the boundary and counted;
    if every endpoint falls outside, the surface does not cover the
    bootstrapped dynamics and an error is raised instead.
    """
    endpoints = np.asarray(endpoints, dtype=float)
    if endpoints.size == 0:
        raise DataError("no bootstrap endpoints")
    values = np.empty(endpoints.shape[0])
    clamped = 0
    for i, z in enumerate(endpoints):
        inside = _barycentric_value(surface, z)
        if inside is None:
            clamped += 1
            inside = _value_with_inward_nudge(surface, _clamp_to_hull(surface, z))
        values[i] = inside
    if clamped == endpoints.shape[0]:
        raise NumericalError(
            "all bootstrap endpoints lie outside the surface hull; "
            "rebuild the grid with a larger margin"
        )
    counts, edges = np.histogram(values, bins=bins)
    masses = counts / counts.sum()
    return VarDistributionReport(
        samples=values,
        mean=float(values.mean()),
        quantiles={
            "q05": float(np.quantile(values, 0.05)),
            "q50": float(np.quantile(values, 0.50)),
            "q95": float(np.quantile(values, 0.95)),
        },
        clamp_count=clamped,
        bin_edges=edges,
        masses=masses,
    )


# ---------------------------------------------------------------------------
# artifacts
# ---------------------------------------------------------------------------

def write_surface_csv(surface, path):
    rows = zip(surface.points[:, 0], surface.points[:, 1], surface.values)
    write_csv(path, ["z1", "z2", "var"], rows)
    return path


def load_surface_csv(path):
    import csv
    import os

    if not os.path.exists(path):
        raise DataError(f"surface file not found: {path}")
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["z1", "z2", "var"]:
            raise DataError(f"unexpected surface header: {header}")
        rows = [[float(c) for c in row] for row in reader]
    arr = np.asarray(rows)
    surface = VarSurface(points=arr[:, :2], values=arr[:, 2])
    return surface.validate()


def write_var_distribution(report, csv_path, json_path):
    write_csv(csv_path, ["var"], ((v,) for v in report.samples))
    write_json(
        json_path,
        {
            "mean": report.mean,
            "q05": report.quantiles["q05"],
            "q50": report.quantiles["q50"],
            "q95": report.quantiles["q95"],
            "clamp_count": report.clamp_count,
            "n_samples": int(report.samples.size),
        },
    )
