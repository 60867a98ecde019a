"""Multi-factor Vasicek credit-portfolio Monte Carlo engine.

The standardized value of counterparty i driven by systematic factor j is

    V_i = rho_i Y_j + sqrt(1 - rho_i^2) eps_i,    Y = alpha Z

with Z uncorrelated standard normals obtained through the spectral root
of the factor correlation matrix. A counterparty defaults when
V_i < PhiInv(PD_i); the portfolio loss aggregates EAD * LGD over
defaults. Sub-portfolios are homogeneous, so conditionally on Y the
default count is Binomial(n, PhiInv-threshold probability), which is the
fast path; a per-obligor mode exists for validation.

Simulation runs in path blocks with per-block seeded substreams: results
are bit-reproducible for a fixed (seed, block size) and independent of
aggregation order (losses are sorted at the end). The first uncorrelated
coordinate (the principal factor) is stratified into equal-probability
strata, cycling one draw per stratum.
"""

import json
import math
import zlib
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .corrdata import CorrelationMatrix
from .errors import DataError, NumericalError
from .linalg import spectral_root
from .util import write_csv, write_json

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

DEFAULT_BLOCK_SIZE = 65536


# ---------------------------------------------------------------------------
# standard normal CDF / inverse CDF
# ---------------------------------------------------------------------------

def normal_cdf(x):
    """Phi(x) via the complementary error function (double precision)."""
    x = np.asarray(x, dtype=float)
    out = 0.5 * erfc(-x / _SQRT2)
    return float(out) if out.ndim == 0 else out


def normal_pdf(x):
    x = np.asarray(x, dtype=float)
    out = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return float(out) if out.ndim == 0 else out


# Acklam's rational approximation: central region and tails, then one
# Newton step against the erfc-based CDF. Raw accuracy ~1.15e-9; the
# refinement drives |Phi(PhiInv(p)) - p| below 1e-12 across (0, 1).
_ACKLAM_A = (
    -3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
    1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00,
)
_ACKLAM_B = (
    -5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
    6.680131188771972e01, -1.328068155288572e01,
)
_ACKLAM_C = (
    -7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
    -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00,
)
_ACKLAM_D = (
    7.784695709041462e-03, 3.224671290700398e-01,
    2.445134137142996e00, 3.754408661907416e00,
)
_P_LOW = 0.02425


def _acklam(p):
    """Raw rational approximation on (0, 0.5]; callers handle symmetry."""
    x = np.empty_like(p)
    tail = p < _P_LOW
    if tail.any():
        q = np.sqrt(-2.0 * np.log(p[tail]))
        c = _ACKLAM_C
        d = _ACKLAM_D
        num = ((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]
        den = (((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0
        x[tail] = num / den
    mid = ~tail
    if mid.any():
        q = p[mid] - 0.5
        r = q * q
        a = _ACKLAM_A
        b = _ACKLAM_B
        num = ((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]
        den = ((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0
        x[mid] = num * q / den
    return x


def normal_inv_cdf(p):
    """PhiInv(p) for p in (0, 1), bit-stable across platforms."""
    arr = np.asarray(p, dtype=float)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    if ((arr <= 0.0) | (arr >= 1.0)).any() or not np.isfinite(arr).all():
        bad = arr[(~np.isfinite(arr)) | (arr <= 0.0) | (arr >= 1.0)][0]
        raise ValueError(f"normal_inv_cdf domain is (0, 1), got {bad}")
    upper = arr > 0.5
    work = np.where(upper, 1.0 - arr, arr)
    x = _acklam(work)
    # one Newton refinement against the accurate CDF
    x -= (0.5 * erfc(-x / _SQRT2) - work) / (_INV_SQRT_2PI * np.exp(-0.5 * x * x))
    x = np.where(upper, -x, x)
    return float(x[0]) if scalar else x


# ---------------------------------------------------------------------------
# portfolio and simulation config
# ---------------------------------------------------------------------------

@dataclass
class SubPortfolio:
    """Homogeneous bucket: n_obligors identical counterparties."""

    name: str
    n_obligors: int
    ead: float  # exposure at default per obligor, currency units
    pd: float
    lgd: float
    rho: float
    factor: int  # 0-based systematic factor index

    def validate(self):
        if self.n_obligors < 1:
            raise DataError(f"{self.name}: n_obligors must be >= 1")
        if self.ead < 0:
            raise DataError(f"{self.name}: EAD must be >= 0")
        if not 0.0 <= self.pd < 1.0:
            raise DataError(f"{self.name}: PD must lie in [0, 1)")
        if not 0.0 <= self.lgd <= 1.0:
            raise DataError(f"{self.name}: LGD must lie in [0, 1]")
        if not abs(self.rho) < 1.0:
            raise DataError(f"{self.name}: loading rho must satisfy |rho| < 1")
        if self.factor < 0:
            raise DataError(f"{self.name}: factor index must be >= 0")
        return self


@dataclass
class PortfolioSpec:
    sub_portfolios: list

    def validate(self, n_factors=None):
        if not self.sub_portfolios:
            raise DataError("portfolio has no sub-portfolios")
        for sub in self.sub_portfolios:
            sub.validate()
            if n_factors is not None and sub.factor >= n_factors:
                raise DataError(
                    f"{sub.name}: factor index {sub.factor} out of range "
                    f"for {n_factors} factors"
                )
        if self.total_ead() <= 0:
            raise DataError("total portfolio EAD must be positive")
        return self

    def total_ead(self):
        return sum(s.n_obligors * s.ead for s in self.sub_portfolios)

    def max_loss(self):
        return sum(s.n_obligors * s.ead * s.lgd for s in self.sub_portfolios)

    def to_json_dict(self):
        return {
            "sub_portfolios": [
                {
                    "name": s.name,
                    "n_obligors": s.n_obligors,
                    "ead": s.ead,
                    "pd": s.pd,
                    "lgd": s.lgd,
                    "rho": s.rho,
                    "factor": s.factor,
                }
                for s in self.sub_portfolios
            ]
        }

    @classmethod
    def from_json_dict(cls, obj):
        try:
            subs = [
                SubPortfolio(
                    name=str(e["name"]),
                    n_obligors=int(e["n_obligors"]),
                    ead=float(e["ead"]),
                    pd=float(e["pd"]),
                    lgd=float(e["lgd"]),
                    rho=float(e["rho"]),
                    factor=int(e["factor"]),
                )
                for e in obj["sub_portfolios"]
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed portfolio spec: {exc}") from None
        return cls(sub_portfolios=subs).validate()


def load_portfolio(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read portfolio file: {exc}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"portfolio file is not valid JSON: {exc}") from None
    return PortfolioSpec.from_json_dict(obj)


@dataclass
class SimConfig:
    paths: int = 100_000
    strata: int = 100
    seed: int = 0
    quantile: float = 0.999
    antithetic: bool = False

    def validate(self):
        if self.strata < 1:
            raise DataError("strata must be >= 1")
        if self.paths < self.strata:
            raise DataError("paths must be >= strata")
        if not 0.0 < self.quantile < 1.0:
            raise DataError("quantile must lie in (0, 1)")
        if self.antithetic and self.paths % 2:
            raise DataError("antithetic sampling needs an even path count")
        return self


@dataclass
class LossDistribution:
    """Sorted losses with path weights summing to one."""

    losses: np.ndarray
    weights: np.ndarray

    @classmethod
    def from_samples(cls, samples):
        samples = np.sort(np.asarray(samples, dtype=float))
        n = samples.size
        if n == 0:
            raise DataError("empty loss sample")
        return cls(losses=samples, weights=np.full(n, 1.0 / n))

    def validate(self, max_loss=None):
        if self.losses.size == 0:
            raise DataError("empty loss distribution")
        if abs(float(self.weights.sum()) - 1.0) > 1e-9:
            raise DataError("path weights must sum to 1")
        if (np.diff(self.losses) < 0).any():
            raise DataError("losses must be sorted ascending")
        if (self.losses < 0).any():
            raise DataError("losses must be non-negative")
        if max_loss is not None and (self.losses > max_loss + 1e-9).any():
            raise DataError("loss exceeds maximum portfolio loss")
        return self

    def mean(self):
        return float(self.losses @ self.weights)


# ---------------------------------------------------------------------------
# stratified sampling
# ---------------------------------------------------------------------------

def _block_rng(seed, label, block):
    key = zlib.crc32(label.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([int(seed), key, int(block)]))


def stratified_normals(cfg, dimension, block_size=DEFAULT_BLOCK_SIZE):
    """Stream of (start_index, Z block) with the first coordinate stratified.

    Global draw t falls in stratum t mod strata and receives the inverse
    CDF of a uniform jitter within that stratum's probability band; the
    remaining coordinates are iid standard normal. With `antithetic`, the
    stream draws paths/2 vectors and interleaves each with its negation.
    All paths carry equal weight.
    """
    cfg.validate()
    strata = cfg.strata
    n_draws = cfg.paths // 2 if cfg.antithetic else cfg.paths
    start = 0
    block = 0
    while start < n_draws:
        size = min(block_size, n_draws - start)
        rng = _block_rng(cfg.seed, "factors", block)
        z = rng.standard_normal((size, dimension))
        s = (start + np.arange(size)) % strata
        u = (s + rng.uniform(size=size)) / strata
        z[:, 0] = normal_inv_cdf(u)
        if cfg.antithetic:
            out = np.empty((2 * size, dimension))
            out[0::2] = z
            out[1::2] = -z
            yield 2 * start, out
        else:
            yield start, z
        start += size
        block += 1


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------

def simulate_losses(portfolio, s, cfg, method="binomial", block_size=DEFAULT_BLOCK_SIZE):
    """Simulate the aggregate loss distribution under factor correlations `s`.

    `method` is "binomial" (conditional-binomial shortcut per homogeneous
    sub-portfolio) or "per_obligor" (explicit idiosyncratic draws; slow,
    for validation).
    """
    if method not in ("binomial", "per_obligor"):
        raise DataError(f"unknown simulation method: {method!r}")
    values = s.values if isinstance(s, CorrelationMatrix) else np.asarray(s, dtype=float)
    if isinstance(s, CorrelationMatrix):
        try:
            s.validate()
        except DataError as exc:
            raise NumericalError(
                f"invalid factor correlation matrix ({exc}); "
                "apply repair_to_correlation first"
            ) from None
    cfg.validate()
    k = values.shape[0]
    portfolio.validate(n_factors=k)
    if method == "per_obligor":
        # keep the paths x obligors scratch matrix around 32 MB
        widest = max(sub.n_obligors for sub in portfolio.sub_portfolios)
        block_size = max(1, min(block_size, 4_194_304 // widest))
    alpha = spectral_root(values).alpha  # NumericalError with repair hint if non-PSD

    subs = portfolio.sub_portfolios
    thresholds = np.array(
        [normal_inv_cdf(sub.pd) if sub.pd > 0 else -np.inf for sub in subs]
    )
    denoms = np.array([math.sqrt(1.0 - sub.rho**2) for sub in subs])

    blocks = []
    for start, z in stratified_normals(cfg, k, block_size=block_size):
        y = z @ alpha.T
        loss = np.zeros(z.shape[0])
        rng = _block_rng(cfg.seed, "defaults", len(blocks))
        for i, sub in enumerate(subs):
            if sub.pd <= 0.0:
                continue
            cond = np.clip(
                normal_cdf((thresholds[i] - sub.rho * y[:, sub.factor]) / denoms[i]),
                0.0,
                1.0,
            )
            if method == "binomial":
                defaults = rng.binomial(sub.n_obligors, cond)
            else:
                eps = rng.standard_normal((z.shape[0], sub.n_obligors))
                v = sub.rho * y[:, [sub.factor]] + denoms[i] * eps
                defaults = (v < thresholds[i]).sum(axis=1)
            loss += defaults * (sub.ead * sub.lgd)
        blocks.append(loss)
    dist = LossDistribution.from_samples(np.concatenate(blocks))
    return dist.validate(max_loss=portfolio.max_loss())


def var_quantile(dist, q):
    """Left-continuous weighted empirical quantile: inf{x : F(x) >= q}."""
    if dist.losses.size == 0:
        raise DataError("empty loss distribution")
    if not 0.0 <= q <= 1.0:
        raise DataError(f"quantile must lie in [0, 1], got {q}")
    cum = np.cumsum(dist.weights)
    idx = int(np.searchsorted(cum, q, side="left"))
    return float(dist.losses[min(idx, dist.losses.size - 1)])


def var_standard_error(dist, q):
    """Order-statistic estimate of the VaR Monte Carlo standard error.

    Half-width of the +-3 sigma rank band divided by 3; conservative when
    the first factor is stratified.
    """
    n = dist.losses.size
    if n < 2:
        return 0.0
    rank = int(np.searchsorted(np.cumsum(dist.weights), q, side="left"))
    delta = int(math.ceil(3.0 * math.sqrt(n * q * (1.0 - q))))
    lo = dist.losses[max(rank - delta, 0)]
    hi = dist.losses[min(rank + delta, n - 1)]
    return float((hi - lo) / 6.0)


def vasicek_closed_form(pd, rho, q, lgd=1.0, total_ead=1.0):
    """Asymptotic single-factor VaR:

        VaR = EAD * LGD * Phi((PhiInv(pd) + rho * PhiInv(q)) / sqrt(1 - rho^2))

    under the loading convention V = rho Y + sqrt(1 - rho^2) eps.
    """
    if not 0.0 < pd < 1.0:
        raise DataError(f"PD must lie in (0, 1), got {pd}")
    if not abs(rho) < 1.0:
        raise DataError(f"|rho| must be < 1, got {rho}")
    if not 0.0 < q < 1.0:
        raise DataError(f"quantile must lie in (0, 1), got {q}")
    x = (normal_inv_cdf(pd) + rho * normal_inv_cdf(q)) / math.sqrt(1.0 - rho * rho)
    return float(total_ead * lgd * normal_cdf(x))


# ---------------------------------------------------------------------------
# artifacts
# ---------------------------------------------------------------------------

def write_loss_distribution_csv(dist, path):
    write_csv(path, ["loss", "weight"], zip(dist.losses, dist.weights))
    return path


def write_var_report_json(path, dist, cfg, extra=None):
    var = var_quantile(dist, cfg.quantile)
    report = {
        "var": var,
        "quantile": cfg.quantile,
        "standard_error": var_standard_error(dist, cfg.quantile),
        "expected_loss": dist.mean(),
        "paths": cfg.paths,
        "strata": cfg.strata,
        "seed": cfg.seed,
        "antithetic": cfg.antithetic,
    }
    report.update(extra or {})
    write_json(path, report)
    return report
