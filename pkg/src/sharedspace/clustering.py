"""Grouping pedestrians by their individually calibrated parameters.

Two pipelines: PCA followed by k-means, and forward selection of columns
driven by the silhouette of k-means clusterings.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

log = logging.getLogger(__name__)

PCA_KMEANS = "PCA_KMEANS"
FS_KMEANS = "FS_KMEANS"


class ClusteringError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureMatrix:
    values: np.ndarray
    columns: tuple
    rows: tuple = ()

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[1] != len(self.columns):
            raise ClusteringError("matrix shape does not match the column names")
        if not np.all(np.isfinite(v)):
            raise ClusteringError("matrix has missing or non-finite entries")
        object.__setattr__(self, "values", v)

    def standardized(self):
        return standardize(self.values)


@dataclass
class ClusteringResult:
    assignments: np.ndarray
    centroids: np.ndarray
    k: int
    silhouette: Optional[float] = None
    method: str = "KMEANS"
    inertia: float = 0.0
    columns: tuple = ()
    flagged: bool = False
    inertia_trace: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "k": self.k,
            "assignments": [int(a) for a in self.assignments],
            "silhouette": self.silhouette,
            "inertia": self.inertia,
            "columns": list(self.columns),
            "flagged": self.flagged,
        }


def _matrix(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.size == 0:
        raise ClusteringError("empty matrix")
    return x


def standardize(x):
    """Z-score each column. Constant columns map to zeros (std recorded as 0)."""
    x = _matrix(x)
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    safe = np.where(std > 0, std, 1.0)
    return (x - mean) / safe, mean, std


# --------------------------------------------------------------------------
# k-means


def _canonical(labels: np.ndarray, centroids: np.ndarray):
    """Relabel clusters in order of first appearance."""
    order = []
    for lab in labels:
        if lab not in order:
            order.append(int(lab))
    rest = [c for c in range(len(centroids)) if c not in order]
    perm = order + rest
    remap = {old: new for new, old in enumerate(perm)}
    return np.array([remap[int(l)] for l in labels]), centroids[perm]


def _sq_dists(x, c):
    return ((x[:, None, :] - c[None, :, :]) ** 2).sum(axis=2)


def _plus_plus(x, k, rng):
    n = len(x)
    centers = [x[rng.integers(n)]]
    for _ in range(1, k):
        d2 = _sq_dists(x, np.array(centers)).min(axis=1)
        total = d2.sum()
        if total <= 0:
            centers.append(x[rng.integers(n)])
            continue
        centers.append(x[rng.choice(n, p=d2 / total)])
    return np.array(centers, dtype=float)


def _lloyd(x, centers, max_iter):
    trace = []
    labels = None
    for _ in range(max_iter):
        d2 = _sq_dists(x, centers)
        new = d2.argmin(axis=1)
        trace.append(float(d2[np.arange(len(x)), new].sum()))
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for c in range(len(centers)):
            members = x[labels == c]
            if len(members):
                centers[c] = members.mean(axis=0)
            else:
                # empty cluster: move it to the point farthest from its centre
                far = d2[np.arange(len(x)), labels].argmax()
                centers[c] = x[far]
    d2 = _sq_dists(x, centers)
    labels = d2.argmin(axis=1)
    inertia = float(d2[np.arange(len(x)), labels].sum())
    if not trace or trace[-1] != inertia:
        trace.append(inertia)
    return labels, centers, inertia, trace


def kmeans(matrix, k: int, seed: int = 0, n_init: int = 10, max_iter: int = 300) -> ClusteringResult:
    """k-means++ seeding and Lloyd iterations; the best of ``n_init`` restarts."""
    x = _matrix(matrix)
    n = len(x)
    if not 1 <= k <= n:
        raise ClusteringError(f"k must lie in [1, {n}]")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(1, n_init)):
        labels, centers, inertia, trace = _lloyd(x, _plus_plus(x, k, rng), max_iter)
        if best is None or inertia < best[2] - 1e-12:
            best = (labels, centers.copy(), inertia, trace)
    labels, centers = _canonical(best[0], best[1])
    sil = None
    if len(np.unique(labels)) >= 2:
        sil = silhouette(x, labels)
    return ClusteringResult(labels, centers, k, sil, "KMEANS", best[2], inertia_trace=best[3])


def wcss_curve(matrix, k_range: Sequence[int], seed: int = 0) -> dict:
    return {k: kmeans(matrix, k, seed).inertia for k in k_range}


def elbow_select_k(matrix, k_range: Sequence[int] = range(1, 9), seed: int = 0):
    """Return ``(k, flagged)`` with ``k`` at the largest second difference of WCSS.

    The curve counts as having no elbow (flag set, smallest ``k`` returned)
    when the largest second difference is under a fifth of ``WCSS(k_min)``.
    """
    x = _matrix(matrix)
    ks = sorted(int(k) for k in k_range if 1 <= k <= len(x))
    if not ks:
        raise ClusteringError("empty k range")
    w = wcss_curve(x, ks, seed)
    if len(ks) < 3 or w[ks[0]] <= 0:
        return ks[0], True
    best_k, best_d2 = ks[0], -math.inf
    for a, b, c in zip(ks, ks[1:], ks[2:]):
        d2 = w[a] - 2 * w[b] + w[c]
        if d2 > best_d2 + 1e-12:
            best_k, best_d2 = b, d2
    if best_d2 < 0.2 * w[ks[0]]:
        return ks[0], True
    return best_k, False


# --------------------------------------------------------------------------
# PCA


@dataclass
class PcaResult:
    scores: np.ndarray
    components: np.ndarray  # (m, d), orthonormal rows
    explained_variance: np.ndarray  # all eigenvalues, descending
    ratio: np.ndarray
    mean: np.ndarray

    @property
    def n_components(self) -> int:
        return len(self.components)


def pca_reduce(matrix, variance_threshold: float = 0.9) -> PcaResult:
    x = _matrix(matrix)
    if len(x) < 2:
        raise ClusteringError("PCA needs at least 2 rows")
    if not 0 < variance_threshold <= 1:
        raise ClusteringError("variance threshold must lie in (0, 1]")
    mean = x.mean(axis=0)
    xc = x - mean
    _, s, vt = np.linalg.svd(xc, full_matrices=False)
    eig = s**2 / (len(x) - 1)
    total = eig.sum()
    if total <= 1e-300:
        raise ClusteringError("zero-variance matrix")
    ratio = eig / total
    nondegenerate = int((eig > total * 1e-12).sum())
    cum = np.cumsum(ratio)
    m = int(np.searchsorted(cum, variance_threshold - 1e-12) + 1)
    m = min(m, nondegenerate)
    comps = vt[:m]
    return PcaResult(xc @ comps.T, comps, eig, ratio, mean)


# --------------------------------------------------------------------------
# silhouette and forward selection


def silhouette(matrix, assignments) -> float:
    """Mean silhouette; points alone in their cluster score 0."""
    x = _matrix(matrix)
    labels = np.asarray(assignments)
    uniq = np.unique(labels)
    if len(uniq) < 2:
        raise ClusteringError("silhouette needs at least 2 clusters")
    d = np.sqrt(np.maximum(_sq_dists(x, x), 0.0))
    scores = np.zeros(len(x))
    for i in range(len(x)):
        own = labels == labels[i]
        n_own = own.sum()
        if n_own <= 1:
            continue
        a = d[i, own].sum() / (n_own - 1)
        b = min(d[i, labels == c].mean() for c in uniq if c != labels[i])
        m = max(a, b)
        scores[i] = 0.0 if m == 0 else (b - a) / m
    return float(scores.mean())


@dataclass
class ForwardSelection:
    selected: tuple  # column indices in the order they were added
    columns: tuple
    result: ClusteringResult
    scores: list
    flagged: bool = False


def _score(x, k, seed):
    res = kmeans(x, k, seed)
    if len(np.unique(res.assignments)) < 2:
        return -1.0, res
    return silhouette(x, res.assignments), res


def forward_select_kmeans(matrix, k: int, c_s: float = 0.5, seed: int = 0, columns: Sequence[str] = ()) -> ForwardSelection:
    """Greedy forward selection of columns by k-means silhouette.

    Each round adds the column whose inclusion gives the highest silhouette
    (ties go to the lower column index). Stops once the score reaches
    ``c_s`` or every column is in; a round that cannot improve on the
    current score ends the search with the best subset so far, flagged.
    """
    x = _matrix(matrix)
    if k < 2:
        raise ClusteringError("forward selection needs k >= 2")
    if not -1 <= c_s <= 1:
        raise ClusteringError("c_s must lie in [-1, 1]")
    names = tuple(columns) or tuple(f"c{i}" for i in range(x.shape[1]))
    selected: list = []
    remaining = list(range(x.shape[1]))
    current, result, trace = -math.inf, None, []
    flagged = False
    while current < c_s and remaining:
        best = None
        for c in remaining:
            s, res = _score(x[:, selected + [c]], k, seed)
            if best is None or s > best[0] + 1e-12:
                best = (s, c, res)
        if selected and best[0] <= current:
            flagged = True
            break
        current, result = best[0], best[2]
        selected.append(best[1])
        remaining.remove(best[1])
        trace.append(current)
    if current < c_s:
        flagged = True
    result.method = FS_KMEANS
    result.columns = tuple(names[i] for i in selected)
    result.flagged = flagged
    return ForwardSelection(tuple(selected), result.columns, result, trace, flagged)


def pca_kmeans(matrix, k: Optional[int] = None, variance_threshold: float = 0.9, seed: int = 0,
               k_range: Sequence[int] = range(1, 9)) -> ClusteringResult:
    """Standardize, project on the leading components and cluster."""
    z, _, _ = standardize(matrix)
    pca = pca_reduce(z, variance_threshold)
    flagged = False
    if k is None:
        k, flagged = elbow_select_k(pca.scores, k_range, seed)
    res = kmeans(pca.scores, k, seed)
    res.method = PCA_KMEANS
    res.columns = tuple(f"pc{i + 1}" for i in range(pca.n_components))
    res.flagged = flagged
    return res


def fs_kmeans(matrix, k: Optional[int] = None, c_s: float = 0.5, seed: int = 0, columns: Sequence[str] = (),
              k_range: Sequence[int] = range(1, 9)):
    """Standardize, pick columns by forward selection, then cluster them.

    Without an explicit ``k`` the elbow on all standardized columns sets it
    for the selection, and the elbow on the selected subset sets the final one.
    """
    z, _, _ = standardize(matrix)
    flagged = False
    k_sel = k
    if k_sel is None:
        k_sel, flagged = elbow_select_k(z, k_range, seed)
        k_sel = max(k_sel, 2)
    fs = forward_select_kmeans(z, k_sel, c_s, seed, columns)
    sub = z[:, list(fs.selected)]
    if k is None:
        k_fin, f2 = elbow_select_k(sub, k_range, seed)
        flagged = flagged or f2
    else:
        k_fin = k
    res = kmeans(sub, k_fin, seed)
    res.method = FS_KMEANS
    res.columns = fs.columns
    res.flagged = flagged or fs.flagged
    return fs, res
