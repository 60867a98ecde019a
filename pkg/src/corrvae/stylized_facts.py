"""Stylized facts of financial correlation matrices.

Five checks, applied to historical and synthetic panels alike:

  1. pairwise correlations shifted towards positive values
  2. eigenvalue bulk compatible with Marchenko-Pastur, plus a dominant
     first eigenvalue above the upper edge
  3. Perron-Frobenius: first eigenvector one-signed with a simple top
     eigenvalue
  4. hierarchical structure (agglomerative dendrogram on the correlation
     distance)
  5. minimum spanning tree with few hubs and many degree-1 leaves

All graph work uses the correlation distance d(i, j) = sqrt(2 (1 - rho)).
"""

from dataclasses import dataclass

import numpy as np

from . import linalg
from .corrdata import CorrelationMatrix, MatrixPanel
from .errors import DataError


def correlation_distance(values):
    """d(i, j) = sqrt(2 (1 - rho_ij)), zero iff rho = 1, max 2 at rho = -1."""
    return np.sqrt(np.clip(2.0 * (1.0 - np.asarray(values, dtype=float)), 0.0, 4.0))


def _matrix_values(s):
    return s.values if isinstance(s, CorrelationMatrix) else np.asarray(s, dtype=float)


def _upper_triangle(values):
    m = values.shape[0]
    iu = np.triu_indices(m, k=1)
    return values[iu]


# ---------------------------------------------------------------------------
# 1. pairwise correlation distribution
# ---------------------------------------------------------------------------

@dataclass
class PairwiseDistribution:
    bin_edges: np.ndarray
    masses: np.ndarray
    mean: float
    median: float
    skewness: float
    frac_positive: float
    n_values: int


def pairwise_distribution(panel, bins=50):
    """Pooled upper-triangle off-diagonal correlations across the panel."""
    if isinstance(panel, (CorrelationMatrix, np.ndarray)):
        matrices = [panel]
    else:
        matrices = panel.matrices if isinstance(panel, MatrixPanel) else list(panel)
    if not matrices:
        raise DataError("empty panel")
    pooled = np.concatenate([_upper_triangle(_matrix_values(m)) for m in matrices])
    counts, edges = np.histogram(pooled, bins=bins, range=(-1.0, 1.0))
    masses = counts / counts.sum()
    centered = pooled - pooled.mean()
    m2 = float((centered**2).mean())
    skew = float((centered**3).mean() / m2**1.5) if m2 > 0 else 0.0
    return PairwiseDistribution(
        bin_edges=edges,
        masses=masses,
        mean=float(pooled.mean()),
        median=float(np.median(pooled)),
        skewness=skew,
        frac_positive=float((pooled > 0).mean()),
        n_values=int(pooled.size),
    )


# ---------------------------------------------------------------------------
# 2. Marchenko-Pastur spectrum
# ---------------------------------------------------------------------------

@dataclass
class MarchenkoPasturReport:
    q: float
    lower_edge: float
    upper_edge: float
    eigenvalues: np.ndarray
    lambda1: float
    n_above_upper: int
    bulk_edges: np.ndarray
    bulk_masses: np.ndarray
    mp_density: np.ndarray  # MP pdf at bulk bin centers (unit variance)


def marchenko_pastur_edges(q):
    if q <= 1.0:
        raise DataError(f"aspect ratio q = T/M must exceed 1, got {q}")
    root = 1.0 / np.sqrt(q)
    return (1.0 - root) ** 2, (1.0 + root) ** 2


def marchenko_pastur_density(lam, q):
    """Limit density of sample-correlation eigenvalues of iid data."""
    lo, hi = marchenko_pastur_edges(q)
    lam = np.asarray(lam, dtype=float)
    inside = (lam > lo) & (lam < hi)
    out = np.zeros_like(lam)
    li = lam[inside]
    out[inside] = q * np.sqrt((hi - li) * (li - lo)) / (2.0 * np.pi * li)
    return out


def marchenko_pastur_check(s, q, bins=30):
    """Spectrum versus the Marchenko-Pastur bulk for one matrix.

    `q` is the window-length to dimension ratio of the estimator that
    produced the matrix (e.g. 100/44 for 100-month windows of 44 assets).
    """
    lo, hi = marchenko_pastur_edges(q)
    values = _matrix_values(s)
    dec = linalg.eigh_symmetric(values)
    lam = dec.eigenvalues
    bulk = lam[lam <= hi]
    counts, edges = np.histogram(bulk, bins=bins, range=(0.0, hi))
    masses = counts / counts.sum() if counts.sum() else counts.astype(float)
    centers = 0.5 * (edges[:-1] + edges[1:])
    return MarchenkoPasturReport(
        q=float(q),
        lower_edge=lo,
        upper_edge=hi,
        eigenvalues=lam,
        lambda1=float(lam[0]),
        n_above_upper=int((lam > hi).sum()),
        bulk_edges=edges,
        bulk_masses=masses,
        mp_density=marchenko_pastur_density(centers, q),
    )


# ---------------------------------------------------------------------------
# 3. Perron-Frobenius
# ---------------------------------------------------------------------------

@dataclass
class PerronReport:
    holds: bool
    min_component: float
    multiplicity_gap: float


def perron_frobenius_check(s):
    """First eigenvector one-signed and top eigenvalue simple.

    The solver's sign convention makes the largest-magnitude component
    positive, so coherence means every component is positive.
    """
    dec = linalg.eigh_symmetric(_matrix_values(s))
    v1 = dec.eigenvectors[:, 0]
    gap = float(dec.eigenvalues[0] - dec.eigenvalues[1])
    min_component = float(v1.min())
    return PerronReport(
        holds=bool(min_component > 0.0 and gap > 1e-8),
        min_component=min_component,
        multiplicity_gap=gap,
    )


# ---------------------------------------------------------------------------
# 4. hierarchical dendrogram
# ---------------------------------------------------------------------------

def hierarchical_dendrogram(s, linkage="average"):
    """Agglomerative clustering on the correlation distance.

    Returns M-1 merges as (cluster_a, cluster_b, height, size) with
    original items 0..M-1 and merged cluster k getting id M+k. Ties break
    on the smallest (a, b) pair, so the tree is deterministic.
    """
    if linkage not in ("single", "average"):
        raise DataError(f"unknown linkage: {linkage!r}")
    values = _matrix_values(s)
    m = values.shape[0]
    dist = correlation_distance(values).astype(float)
    np.fill_diagonal(dist, np.inf)

    cluster_ids = list(range(m))
    sizes = {i: 1 for i in range(m)}
    merges = []
    work = dist.copy()
    active = list(range(m))  # positions into `work`
    pos_id = {p: p for p in range(m)}

    for step in range(m - 1):
        best = None
        for ai in range(len(active)):
            for bi in range(ai + 1, len(active)):
                pa, pb = active[ai], active[bi]
                d = work[pa, pb]
                ida, idb = pos_id[pa], pos_id[pb]
                key = (d, min(ida, idb), max(ida, idb))
                if best is None or key < best[0]:
                    best = (key, pa, pb)
        (d, ida, idb), pa, pb = best
        new_id = m + step
        size = sizes[ida] + sizes[idb]
        merges.append((ida, idb, float(d), size))
        # Lance-Williams update of distances to the merged cluster
        for pc in active:
            if pc in (pa, pb):
                continue
            if linkage == "single":
                nd = min(work[pa, pc], work[pb, pc])
            else:
                nd = (
                    sizes[ida] * work[pa, pc] + sizes[idb] * work[pb, pc]
                ) / size
            work[pa, pc] = nd
            work[pc, pa] = nd
        sizes[new_id] = size
        pos_id[pa] = new_id
        active.remove(pb)
    return merges


# ---------------------------------------------------------------------------
# 5. minimum spanning tree
# ---------------------------------------------------------------------------

@dataclass
class MstReport:
    edges: list  # (i, j, weight), i < j
    degrees: np.ndarray
    degree_histogram: dict  # degree -> node count


def minimum_spanning_tree(s):
    """Kruskal MST on the complete correlation-distance graph.

    Edge ties break lexicographically on (i, j), so equal-weight graphs
    (e.g. the identity matrix) produce a deterministic tree.
    """
    values = _matrix_values(s)
    m = values.shape[0]
    dist = correlation_distance(values)
    edges = sorted(
        ((float(dist[i, j]), i, j) for i in range(m) for j in range(i + 1, m))
    )
    parent = list(range(m))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    chosen = []
    degrees = np.zeros(m, dtype=int)
    for w, i, j in edges:
        ri, rj = find(i), find(j)
        if ri == rj:
            continue
        parent[ri] = rj
        chosen.append((i, j, w))
        degrees[i] += 1
        degrees[j] += 1
        if len(chosen) == m - 1:
            break
    hist = {}
    for d in degrees:
        hist[int(d)] = hist.get(int(d), 0) + 1
    return MstReport(edges=chosen, degrees=degrees, degree_histogram=hist)


# ---------------------------------------------------------------------------
# panel-level report
# ---------------------------------------------------------------------------

def mean_matrix(panel):
    """Entrywise mean of a panel: itself a valid correlation matrix."""
    if len(panel) == 0:
        raise DataError("empty panel")
    mean = panel.stack().mean(axis=0)
    mean = 0.5 * (mean + mean.T)
    np.fill_diagonal(mean, 1.0)
    return CorrelationMatrix(labels=list(panel.labels), values=mean)


def stylized_report(panel, q, bins=50):
    """All five checks for one panel, JSON-serializable.

    Spectrum and Perron checks run per matrix; the dendrogram and MST are
    computed on the panel-mean matrix.
    """
    pairwise = pairwise_distribution(panel, bins=bins)
    per_matrix = []
    n_perron = 0
    n_lambda1_above = 0
    for ts, mat in zip(panel.timestamps, panel.matrices):
        mp = marchenko_pastur_check(mat, q)
        perron = perron_frobenius_check(mat)
        n_perron += int(perron.holds)
        n_lambda1_above += int(mp.lambda1 > mp.upper_edge)
        per_matrix.append(
            {
                "timestamp": ts,
                "lambda1": mp.lambda1,
                "n_above_upper": mp.n_above_upper,
                "perron_holds": perron.holds,
                "perron_min_component": perron.min_component,
                "multiplicity_gap": perron.multiplicity_gap,
            }
        )
    mean = mean_matrix(panel)
    mst = minimum_spanning_tree(mean)
    merges = hierarchical_dendrogram(mean)
    lo, hi = marchenko_pastur_edges(q)
    n = len(panel)
    return {
        "n_matrices": n,
        "q": float(q),
        "mp_lower_edge": lo,
        "mp_upper_edge": hi,
        "pairwise": {
            "mean": pairwise.mean,
            "median": pairwise.median,
            "skewness": pairwise.skewness,
            "frac_positive": pairwise.frac_positive,
            "bin_edges": pairwise.bin_edges.tolist(),
            "masses": pairwise.masses.tolist(),
        },
        "frac_perron": n_perron / n,
        "frac_lambda1_above_edge": n_lambda1_above / n,
        "per_matrix": per_matrix,
        "mean_matrix_mst": {
            "edges": [[i, j, w] for i, j, w in mst.edges],
            "degree_histogram": {str(k): v for k, v in sorted(mst.degree_histogram.items())},
            "max_degree": int(mst.degrees.max()),
            "frac_degree_one": float((mst.degrees == 1).mean()),
        },
        "mean_matrix_dendrogram": [[a, b, h, s] for a, b, h, s in merges],
    }
