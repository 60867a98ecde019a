"""Symmetric eigendecomposition and correlation-matrix repair.

`eigh_symmetric` is a cyclic Jacobi solver: every off-diagonal pair is
visited once per sweep (round-robin ordering, so the disjoint rotations
of one round are applied together), with a threshold skip for entries
already negligible. Matrices here are desk-scale (M <= 44), where Jacobi
is accurate, simple, and dependency-free.

`repair_to_correlation` projects arbitrary square matrices onto valid
correlation matrices by alternating projection (symmetrize, clip entries,
clip eigenvalues at zero, rescale to unit diagonal). Decoder outputs are
near-valid, so a handful of iterations suffices.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .corrdata import CorrelationMatrix
from .errors import DataError, NumericalError

JACOBI_MAX_SWEEPS = 100
JACOBI_REL_TOL = 1e-12
REPAIR_MAX_ITER = 50
REPAIR_TOL = 1e-10


@dataclass
class EigenDecomposition:
    """Eigenvalues sorted descending; eigenvectors as orthonormal columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


@dataclass
class FactorRoot:
    """Loadings alpha of uncorrelated drivers with alpha @ alpha.T = Sigma."""

    alpha: np.ndarray


@lru_cache(maxsize=None)
def _round_robin(n):
    """Round-robin pairings covering every (i, j) pair once in n-1 rounds.

    Each round is a set of disjoint index pairs, so its rotations commute
    and can be applied in one batch.
    """
    players = list(range(n)) + ([n] if n % 2 else [])  # n = dummy slot
    half = len(players) // 2
    rounds = []
    order = players[:]
    for _ in range(len(players) - 1):
        pairs = []
        for i in range(half):
            a, b = order[i], order[-1 - i]
            if a != n and b != n:
                pairs.append((min(a, b), max(a, b)))
        rounds.append(
            (
                np.array([p for p, _ in pairs], dtype=int),
                np.array([q for _, q in pairs], dtype=int),
            )
        )
        order = [order[0], order[-1]] + order[1:-1]
    return tuple(rounds)


def _off_diagonal_norm(a):
    # sum the off-diagonal entries directly: subtracting the diagonal mass
    # from the total cancels catastrophically near convergence
    off = a.copy()
    np.fill_diagonal(off, 0.0)
    return float(np.linalg.norm(off))


def _fix_signs(vectors):
    """Largest-magnitude component of each eigenvector made positive.

    Keeps cosine-similarity time series stable across nearby matrices.
    """
    peaks = np.abs(vectors).argmax(axis=0)
    flip = vectors[peaks, np.arange(vectors.shape[1])] < 0
    vectors[:, flip] *= -1.0
    return vectors


def eigh_symmetric(a, max_sweeps=JACOBI_MAX_SWEEPS, rel_tol=JACOBI_REL_TOL):
    """Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Sweeps stop once the off-diagonal Frobenius norm falls below
    rel_tol * ||A||_F; rotations whose pivot is already below that level
    are skipped within a sweep.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DataError(f"matrix must be square, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise DataError("matrix has non-finite entries")
    asym = float(np.abs(a - a.T).max())
    if asym > 1e-10:
        raise DataError(f"matrix not symmetric: max|A - A^T| = {asym:.3e}")
    n = a.shape[0]
    if n == 1:
        return EigenDecomposition(a.diagonal().copy(), np.ones((1, 1)))

    work = 0.5 * (a + a.T)
    vecs = np.eye(n)
    norm_a = float(np.linalg.norm(work))
    if norm_a == 0.0:
        return EigenDecomposition(np.zeros(n), np.eye(n))
    tol = rel_tol * norm_a
    skip = tol / (n * n)

    converged = False
    for _ in range(max_sweeps):
        if _off_diagonal_norm(work) <= tol:
            converged = True
            break
        for p, q in _round_robin(n):
            apq = work[p, q]
            active = np.abs(apq) > skip
            if not active.any():
                continue
            p, q, apq = p[active], q[active], apq[active]
            tau = (work[q, q] - work[p, p]) / (2.0 * apq)
            # smaller-magnitude root of t^2 + 2 tau t - 1 = 0; denom >= 1
            t = np.where(tau >= 0.0, 1.0, -1.0) / (np.abs(tau) + np.sqrt(tau * tau + 1.0))
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            # columns: A <- A J, rows: A <- J^T A, then the same J on vecs
            col_p, col_q = work[:, p].copy(), work[:, q].copy()
            work[:, p] = c * col_p - s * col_q
            work[:, q] = s * col_p + c * col_q
            row_p, row_q = work[p, :].copy(), work[q, :].copy()
            work[p, :] = c[:, None] * row_p - s[:, None] * row_q
            work[q, :] = s[:, None] * row_p + c[:, None] * row_q
            work[p, q] = 0.0
            work[q, p] = 0.0
            vec_p, vec_q = vecs[:, p].copy(), vecs[:, q].copy()
            vecs[:, p] = c * vec_p - s * vec_q
            vecs[:, q] = s * vec_p + c * vec_q
    else:
        converged = _off_diagonal_norm(work) <= tol
    if not converged:
        raise NumericalError(
            f"Jacobi did not converge in {max_sweeps} sweeps: "
            f"off-diagonal norm {_off_diagonal_norm(work):.3e} (tol {tol:.3e})"
        )

    values = work.diagonal().copy()
    order = np.argsort(-values, kind="stable")
    values = values[order]
    vecs = _fix_signs(vecs[:, order])
    return EigenDecomposition(values, vecs)


def spectral_root(s):
    """Spectral factorization alpha = Q sqrt(Lambda) with alpha alpha^T = S.

    Expresses the correlated systematic factors as a linear combination of
    uncorrelated standard normals, which is what the Monte Carlo engine
    simulates.
    """
    values = s.values if isinstance(s, CorrelationMatrix) else np.asarray(s, dtype=float)
    dec = eigh_symmetric(values)
    lam_min = float(dec.eigenvalues.min())
    if lam_min < -1e-6:
        raise NumericalError(
            f"matrix materially non-PSD (min eigenvalue {lam_min:.3e}); "
            "repair_to_correlation first"
        )
    alpha = dec.eigenvectors * np.sqrt(np.clip(dec.eigenvalues, 0.0, None))
    return FactorRoot(alpha=alpha)


def _is_valid_correlation(b):
    if float(np.abs(b - b.T).max()) > 1e-13:
        return False
    if not (np.diag(b) == 1.0).all():
        return False
    if float(np.abs(b).max()) > 1.0:
        return False
    return float(np.linalg.eigvalsh(b).min()) >= 0.0


def repair_to_correlation(a, labels=None, max_iter=REPAIR_MAX_ITER, tol=REPAIR_TOL):
    """Project an arbitrary square matrix onto a valid correlation matrix.

    Alternating projection: symmetrize, clip entries to [-1, 1] with unit
    diagonal, clip eigenvalues at zero, rescale to unit diagonal. Every
    exit point ends on the PSD-project + rescale pair, so the output is
    valid even when the change tolerance is not yet met. Already-valid
    input is returned unchanged (fixed point).
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DataError(f"matrix must be square, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise DataError("cannot repair matrix with non-finite entries")

    b = 0.5 * (a + a.T)
    if _is_valid_correlation(b) and np.array_equal(b, a):
        return CorrelationMatrix(labels=labels, values=a.copy())

    for _ in range(max_iter):
        prev = b
        b = np.clip(b, -1.0, 1.0)
        np.fill_diagonal(b, 1.0)
        dec = eigh_symmetric(b)
        lam = dec.eigenvalues
        if float(lam.min()) < 0.0:
            q = dec.eigenvectors
            b = (q * np.clip(lam, 0.0, None)) @ q.T
            b = 0.5 * (b + b.T)
        d = np.sqrt(np.maximum(b.diagonal(), 1e-12))
        b = b / np.outer(d, d)
        b = np.clip(0.5 * (b + b.T), -1.0, 1.0)
        np.fill_diagonal(b, 1.0)
        if float(np.abs(b - prev).max()) < tol:
            break
    return CorrelationMatrix(labels=labels, values=b)
