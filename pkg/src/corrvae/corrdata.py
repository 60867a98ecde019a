"""Return panels, rolling correlation matrices, synthetic market data.

The central object is `CorrelationMatrix`: a symmetric, unit-diagonal,
positive-semidefinite matrix of asset correlations estimated on monthly
log-returns. `rolling_correlations` turns a `ReturnPanel` into the
`MatrixPanel` of overlapping-window matrices that everything downstream
(training, latent analysis, VaR) consumes.

Real desk data is proprietary, so `generate_synthetic_market` provides a
regime-switching linear factor model whose rolling correlations show the
same gross features: a dominant first eigenvalue well above the random
bulk, and regime clusters that a 2-D latent space can separate.
"""

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .util import write_csv, write_json

SYMMETRY_TOL = 1e-12
PSD_TOL = 1e-8


def _default_labels(m):
    return [f"A{i:02d}" for i in range(m)]


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass
class ReturnPanel:
    """T x M panel of monthly log-returns, columns aligned with asset_ids."""

    asset_ids: list
    timestamps: list
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.validate()

    @property
    def n_periods(self):
        return self.values.shape[0]

    @property
    def n_assets(self):
        return self.values.shape[1]

    def validate(self):
        t, m = self.values.shape
        if m < 2:
            raise DataError(f"panel needs at least 2 assets, got {m}")
        if len(self.asset_ids) != m:
            raise DataError("asset_ids length does not match value columns")
        if len(self.timestamps) != t:
            raise DataError("timestamps length does not match value rows")
        if len(set(self.asset_ids)) != m:
            raise DataError("duplicate asset id in panel")
        if not np.isfinite(self.values).all():
            raise DataError("panel contains missing or non-finite values")
        return self


@dataclass
class CorrelationMatrix:
    """Symmetric unit-diagonal PSD matrix of asset correlations."""

    labels: list
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.labels is None:
            self.labels = _default_labels(self.values.shape[0])

    @property
    def dim(self):
        return self.values.shape[0]

    def validate(self):
        s = self.values
        if s.ndim != 2 or s.shape[0] != s.shape[1]:
            raise DataError(f"correlation matrix must be square, got {s.shape}")
        if len(self.labels) != s.shape[0]:
            raise DataError("label count does not match matrix dimension")
        if not np.isfinite(s).all():
            raise DataError("correlation matrix has non-finite entries")
        asym = float(np.abs(s - s.T).max())
        if asym > SYMMETRY_TOL:
            raise DataError(f"matrix asymmetric: max|S - S^T| = {asym:.3e}")
        if not (np.diag(s) == 1.0).all():
            raise DataError("diagonal entries must equal 1 exactly")
        if float(np.abs(s).max()) > 1.0:
            raise DataError("off-diagonal entries outside [-1, 1]")
        # PSD check via LAPACK, independent of the in-repo Jacobi solver.
        lam_min = float(np.linalg.eigvalsh(s).min())
        if lam_min < -PSD_TOL:
            raise DataError(f"matrix not PSD: min eigenvalue {lam_min:.3e}")
        return self

    def flat(self):
        return self.values.reshape(-1)


@dataclass
class MatrixPanel:
    """Chronological collection of correlation matrices from rolling windows."""

    matrices: list
    window: int
    stride: int
    timestamps: list = field(default_factory=list)

    def __post_init__(self):
        if not self.timestamps:
            self.timestamps = [f"t{i:04d}" for i in range(len(self.matrices))]

    def __len__(self):
        return len(self.matrices)

    @property
    def labels(self):
        return self.matrices[0].labels if self.matrices else []

    @property
    def dim(self):
        return self.matrices[0].dim if self.matrices else 0

    def validate(self):
        if len(self.timestamps) != len(self.matrices):
            raise DataError("panel timestamps do not match matrix count")
        if not self.matrices:
            return self
        labels = self.matrices[0].labels
        for i, mat in enumerate(self.matrices):
            if mat.labels != labels:
                raise DataError(f"matrix {i} labels differ from panel labels")
            mat.validate()
        return self

    def stack(self):
        """All matrices as one (n, M, M) array."""
        return np.stack([m.values for m in self.matrices])

    def flat(self):
        """All matrices flattened to one (n, M*M) array (autoencoder input)."""
        return np.stack([m.flat() for m in self.matrices])


@dataclass
class CsvSchema:
    """Column spec for return CSVs.

    `date_column` names an optional leading timestamp column; `kind` is
    "returns" for pre-computed log-returns or "prices" to derive
    log(P_t / P_{t-1}) from price levels.
    """

    date_column: str = "date"
    kind: str = "returns"


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def load_returns_csv(path, schema=None):
    """Parse a returns (or prices) CSV into a ReturnPanel.

    Header row names the assets; rows are chronological months. Parsing is
    locale-independent (dot decimal separator only).
    """
    schema = schema or CsvSchema()
    if not os.path.exists(path):
        raise DataError(f"returns file not found: {path}")
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"empty returns file: {path}") from None
        rows = list(reader)
    header = [h.strip() for h in header]
    has_dates = bool(
        schema.date_column
        and header
        and header[0].lower() == schema.date_column.lower()
    )
    asset_ids = header[1:] if has_dates else header
    if len(set(asset_ids)) != len(asset_ids):
        dupes = sorted({a for a in asset_ids if asset_ids.count(a) > 1})
        raise DataError(f"duplicate asset id(s): {', '.join(dupes)}")
    if len(asset_ids) < 2:
        raise DataError("returns file must contain at least 2 asset columns")

    n_cols = len(header)
    timestamps = []
    values = np.empty((len(rows), len(asset_ids)), dtype=float)
    for i, row in enumerate(rows):
        if len(row) != n_cols:
            raise DataError(f"ragged row {i}: expected {n_cols} cells, got {len(row)}")
        if has_dates:
            timestamps.append(row[0].strip())
            cells = row[1:]
        else:
            timestamps.append(f"t{i:04d}")
            cells = row
        for j, cell in enumerate(cells):
            cell = cell.strip()
            if cell == "":
                raise DataError(f"missing value at ({i}, {j})")
            try:
                values[i, j] = float(cell)
            except ValueError:
                raise DataError(f"non-numeric value at ({i}, {j}): {cell!r}") from None

    if schema.kind == "prices":
        if (values <= 0).any():
            raise DataError("price input must be strictly positive")
        values = np.log(values[1:] / values[:-1])
        timestamps = timestamps[1:]
    elif schema.kind != "returns":
        raise DataError(f"unknown csv kind: {schema.kind!r}")
    return ReturnPanel(asset_ids=asset_ids, timestamps=timestamps, values=values)


def pearson_correlation(window, labels=None):
    """Sample Pearson correlation matrix of a T' x M return window."""
    x = np.asarray(window, dtype=float)
    if x.ndim != 2:
        raise DataError(f"window must be 2-D, got shape {x.shape}")
    t, m = x.shape
    if t < 3:
        raise DataError(f"window needs at least 3 rows, got {t}")
    labels = list(labels) if labels is not None else _default_labels(m)
    xc = x - x.mean(axis=0)
    ss = np.sqrt((xc * xc).sum(axis=0))
    zero = np.nonzero(ss == 0.0)[0]
    if zero.size:
        raise DataError(f"zero-variance column: {labels[zero[0]]}")
    r = (xc.T @ xc) / np.outer(ss, ss)
    r = np.clip(0.5 * (r + r.T), -1.0, 1.0)
    np.fill_diagonal(r, 1.0)
    return CorrelationMatrix(labels=labels, values=r)


def rolling_correlations(panel, window, stride=1):
    """Correlation matrices over overlapping rolling windows.

    Produces floor((T - window)/stride) + 1 matrices, each stamped with
    the date of its window's last month.
    """
    if stride < 1:
        raise DataError(f"stride must be >= 1, got {stride}")
    t = panel.n_periods
    if window > t:
        raise DataError(f"window {window} exceeds panel length {t}")
    matrices = []
    stamps = []
    for start in range(0, t - window + 1, stride):
        sub = panel.values[start : start + window]
        matrices.append(pearson_correlation(sub, labels=panel.asset_ids))
        stamps.append(panel.timestamps[start + window - 1])
    return MatrixPanel(matrices=matrices, window=window, stride=stride, timestamps=stamps)


# ---------------------------------------------------------------------------
# synthetic market generator
# ---------------------------------------------------------------------------

@dataclass
class RegimeSpec:
    """One regime of the factor model: active from month `start` onwards."""

    start: int
    loadings: np.ndarray  # (n_assets, n_factors), row norms <= 1

    def __post_init__(self):
        self.loadings = np.asarray(self.loadings, dtype=float)


@dataclass
class MarketConfig:
    n_assets: int
    n_months: int
    n_factors: int
    regimes: list
    start_month: str = "2000-01"

    def validate(self):
        if self.n_assets <= 0 or self.n_months <= 0:
            raise DataError("n_assets and n_months must be positive")
        if self.n_factors <= 0:
            raise DataError("n_factors must be positive")
        if not self.regimes:
            raise DataError("at least one regime required")
        if self.regimes[0].start != 0:
            raise DataError("first regime must start at month 0")
        prev = -1
        for reg in self.regimes:
            if reg.start <= prev:
                raise DataError("regime starts must be strictly increasing")
            if reg.start >= self.n_months:
                raise DataError("regime start beyond panel length")
            if reg.loadings.shape != (self.n_assets, self.n_factors):
                raise DataError(
                    f"regime loadings shape {reg.loadings.shape} does not match "
                    f"({self.n_assets}, {self.n_factors})"
                )
            if np.abs(reg.loadings).max() > 1.0:
                raise DataError("factor loadings must lie in [-1, 1]")
            if (np.linalg.norm(reg.loadings, axis=1) > 1.0 + 1e-12).any():
                raise DataError("factor loading rows must have norm <= 1")
            prev = reg.start
        return self


def month_sequence(start, count):
    """Monthly 'YYYY-MM' strings beginning at `start`."""
    year, month = (int(p) for p in start.split("-"))
    out = []
    for _ in range(count):
        out.append(f"{year:04d}-{month:02d}")
        month += 1
        if month > 12:
            month = 1
            year += 1
    return out


def generate_synthetic_market(config, seed):
    """Regime-switching linear factor model returns, deterministic per seed.

    Each month t in regime with loadings L (rows l_i, norm <= 1):

        r_ti = l_i . f_t + sqrt(1 - |l_i|^2) * e_ti,   f, e ~ N(0, 1) iid

    so the population correlation is corr(i, j) = l_i . l_j and the sample
    correlation matrices inherit a dominant market eigenvalue whenever the
    loadings share a common component.
    """
    config.validate()
    rng = np.random.default_rng(seed)
    t, m, k = config.n_months, config.n_assets, config.n_factors
    factors = rng.standard_normal((t, k))
    idio = rng.standard_normal((t, m))

    starts = [reg.start for reg in config.regimes]
    bounds = starts[1:] + [t]
    values = np.empty((t, m))
    for reg, end in zip(config.regimes, bounds):
        load = reg.loadings
        idio_scale = np.sqrt(np.clip(1.0 - (load * load).sum(axis=1), 0.0, 1.0))
        rows = slice(reg.start, end)
        values[rows] = factors[rows] @ load.T + idio[rows] * idio_scale

    return ReturnPanel(
        asset_ids=_default_labels(m),
        timestamps=month_sequence(config.start_month, t),
        values=values,
    )


def default_market_config(n_assets=20, n_months=305, n_factors=3, start_month="2000-01"):
    """Three-regime desk-scale default: correlation level shifts plus an
    eigenvector rotation in the last regime, so the latent space has
    visible clusters to interpret."""
    if n_factors < 2:
        raise DataError("default config needs at least 2 factors")
    market = [0.75, 0.45, 0.65]
    block = [0.35, 0.30, 0.45]
    n_blocks = n_factors - 1
    thirds = [0, n_months // 3, (2 * n_months) // 3]
    regimes = []
    for r in range(3):
        load = np.zeros((n_assets, n_factors))
        load[:, 0] = market[r]
        for i in range(n_assets):
            b = i * n_blocks // n_assets
            load[i, 1 + (b + r) % n_blocks] = block[r]
        regimes.append(RegimeSpec(start=thirds[r], loadings=load))
    return MarketConfig(
        n_assets=n_assets,
        n_months=n_months,
        n_factors=n_factors,
        regimes=regimes,
        start_month=start_month,
    )


# ---------------------------------------------------------------------------
# panel persistence: one CSV per date + JSON manifest
# ---------------------------------------------------------------------------

def save_panel(panel, out_dir):
    """Persist a MatrixPanel as per-date CSV matrices plus a manifest."""
    panel.validate()
    os.makedirs(out_dir, exist_ok=True)
    files = []
    for i, (mat, ts) in enumerate(zip(panel.matrices, panel.timestamps)):
        name = f"{i:04d}_{ts}.csv"
        write_csv(os.path.join(out_dir, name), mat.labels, mat.values)
        files.append(name)
    write_json(
        os.path.join(out_dir, "manifest.json"),
        {
            "labels": panel.labels,
            "window": panel.window,
            "stride": panel.stride,
            "timestamps": list(panel.timestamps),
            "files": files,
        },
    )
    return out_dir


def load_matrix_csv(path):
    """Single matrix CSV (header = labels); validation left to the caller."""
    if not os.path.exists(path):
        raise DataError(f"matrix file not found: {path}")
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            labels = next(reader)
        except StopIteration:
            raise DataError(f"empty matrix file: {path}") from None
        try:
            rows = [[float(c) for c in row] for row in reader]
        except ValueError as exc:
            raise DataError(f"non-numeric matrix entry in {path}: {exc}") from None
    values = np.asarray(rows, dtype=float)
    if values.shape != (len(labels), len(labels)):
        raise DataError(
            f"matrix shape {values.shape} does not match {len(labels)} labels"
        )
    return CorrelationMatrix(labels=[l.strip() for l in labels], values=values)


def load_panel(panel_dir):
    manifest_path = os.path.join(panel_dir, "manifest.json")
    if not os.path.exists(manifest_path):
        raise DataError(f"panel manifest not found: {manifest_path}")
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    labels = manifest["labels"]
    matrices = []
    for name in manifest["files"]:
        path = os.path.join(panel_dir, name)
        if not os.path.exists(path):
            raise DataError(f"panel matrix file missing: {path}")
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = [[float(c) for c in row] for row in reader]
        if header != labels:
            raise DataError(f"matrix file {name} labels differ from manifest")
        mat = CorrelationMatrix(labels=labels, values=np.array(rows))
        mat.validate()
        matrices.append(mat)
    panel = MatrixPanel(
        matrices=matrices,
        window=int(manifest["window"]),
        stride=int(manifest["stride"]),
        timestamps=list(manifest["timestamps"]),
    )
    return panel.validate()
