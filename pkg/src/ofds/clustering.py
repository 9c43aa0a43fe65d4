"""Deterministic k-means over object-feature sets and the adaptive
cluster-count search used by the selection engine.

Determinism contract: identical (points, k, seed) produce an identical
assignment and bit-identical centroids. Initialization is seeded
k-means++; point-to-centroid ties resolve to the lower cluster index;
candidate ties elsewhere resolve to the lower point index. Clusters
emptied by a Lloyd step are repaired by reseeding them with the point
farthest from its current centroid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ofds.errors import InfeasibleError

DEFAULT_MAX_ITERS = 100
DEFAULT_REL_TOL = 1e-6
CLUSTER_GROWTH_FACTOR = 1.05


@dataclass(frozen=True)
class Clustering:
    """A k-way partition of one class's object features.

    ``annotated_flags`` marks points that live on already-selected images;
    a cluster containing none of them is "free" and may contribute a
    representative. ``wcss_trace`` records the objective after every Lloyd
    update step (non-increasing).
    """

    k: int
    assignment: np.ndarray  # (n,) cluster index per point
    centroids: np.ndarray  # (k, d)
    wcss: float
    annotated_flags: np.ndarray  # (n,) bool
    wcss_trace: tuple[float, ...] = ()

    @property
    def n_points(self) -> int:
        return len(self.assignment)

    def members(self, cluster: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == cluster)

    def free_clusters(self) -> list[int]:
        """Clusters containing no point from an already-selected image."""
        out = []
        for j in range(self.k):
            mask = self.assignment == j
            if mask.any() and not self.annotated_flags[mask].any():
                out.append(j)
        return out


def wcss(points: np.ndarray, assignment: np.ndarray, centroids: np.ndarray) -> float:
    """Within-cluster sum of squares: sum of squared distances to assigned centroids."""
    diffs = points - centroids[assignment]
    return float(np.einsum("ij,ij->", diffs, diffs))


def _sq_dists(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # |p - c|^2 expanded for an (n, k) table without an (n, k, d) temporary;
    # clamp tiny negatives from cancellation.
    p2 = np.einsum("ij,ij->i", points, points)[:, None]
    c2 = np.einsum("ij,ij->i", centroids, centroids)[None, :]
    d2 = p2 + c2 - 2.0 * points @ centroids.T
    np.maximum(d2, 0.0, out=d2)
    return d2


def _kmeanspp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    chosen = np.empty(k, dtype=np.intp)
    chosen[0] = int(rng.integers(n))
    d2 = np.einsum("ij,ij->i", points - points[chosen[0]], points - points[chosen[0]])
    taken = np.zeros(n, dtype=bool)
    taken[chosen[0]] = True
    for j in range(1, k):
        total = float(d2.sum())
        if total <= 0.0:
            # All remaining mass sits on chosen points (exact duplicates):
            # fall back to the lowest untaken index.
            idx = int(np.flatnonzero(~taken)[0])
        else:
            idx = int(rng.choice(n, p=d2 / total))
        chosen[j] = idx
        taken[idx] = True
        cand = np.einsum("ij,ij->i", points - points[idx], points - points[idx])
        np.minimum(d2, cand, out=d2)
    return points[chosen].astype(np.float64, copy=True)


def kmeans(
    points: np.ndarray,
    k: int,
    seed: int = 0,
    max_iters: int = DEFAULT_MAX_ITERS,
    rel_tol: float = DEFAULT_REL_TOL,
    annotated_flags: np.ndarray | None = None,
) -> Clustering:
    """Lloyd's algorithm from a seeded k-means++ start.

    Stops when the relative WCSS improvement drops below ``rel_tol`` or
    after ``max_iters`` updates. The returned centroids are exact means of
    the final assignment.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2:
        raise ValueError("points must be a 2-D matrix")
    n = pts.shape[0]
    if k <= 0:
        raise ValueError("k must be positive")
    if k > n:
        raise ValueError(f"k={k} exceeds point count {n}")
    flags = (
        np.zeros(n, dtype=bool)
        if annotated_flags is None
        else np.asarray(annotated_flags, dtype=bool)
    )
    if flags.shape != (n,):
        raise ValueError("annotated_flags must have one entry per point")

    rng = np.random.default_rng(seed)
    centroids = _kmeanspp_init(pts, k, rng)
    assignment = np.zeros(n, dtype=np.intp)
    trace: list[float] = []
    prev = None
    for _ in range(max_iters):
        d2 = _sq_dists(pts, centroids)
        assignment = np.argmin(d2, axis=1)  # ties fall to the lower cluster index
        _repair_empty_clusters(pts, centroids, assignment, k)
        for j in range(k):
            mask = assignment == j
            centroids[j] = pts[mask].mean(axis=0)
        cur = wcss(pts, assignment, centroids)
        trace.append(cur)
        if prev is not None:
            improvement = (prev - cur) / prev if prev > 0 else 0.0
            if improvement < rel_tol:
                break
        prev = cur
    return Clustering(
        k=k,
        assignment=assignment,
        centroids=centroids,
        wcss=trace[-1],
        annotated_flags=flags,
        wcss_trace=tuple(trace),
    )


def _repair_empty_clusters(
    points: np.ndarray, centroids: np.ndarray, assignment: np.ndarray, k: int
) -> None:
    """Reseed each empty cluster with the point farthest from its centroid.

    Candidates come only from clusters that keep at least one other point;
    ties fall to the lower point index. Mutates assignment and centroids.
    """
    sizes = np.bincount(assignment, minlength=k)
    empties = np.flatnonzero(sizes == 0)
    if len(empties) == 0:
        return
    d = np.sqrt(np.einsum("ij,ij->i", points - centroids[assignment], points - centroids[assignment]))
    for j in empties:
        eligible = sizes[assignment] >= 2
        cand = np.flatnonzero(eligible)
        far = cand[np.argmax(d[cand])]
        sizes[assignment[far]] -= 1
        assignment[far] = j
        sizes[j] = 1
        centroids[j] = points[far]
        d[far] = 0.0


def nearest_to_centroid(points: np.ndarray, indices: np.ndarray, centroid: np.ndarray) -> int:
    """Index (from ``indices``) of the point closest to the centroid.

    Ties resolve to the lowest index value.
    """
    if len(indices) == 0:
        raise ValueError("cluster is empty")
    pts = np.asarray(points, dtype=np.float64)
    diffs = pts - np.asarray(centroid, dtype=np.float64)
    d = np.einsum("ij,ij->i", diffs, diffs)
    order = np.lexsort((np.asarray(indices), d))
    return int(np.asarray(indices)[order[0]])


@dataclass(frozen=True)
class ClusterBudgetRequest:
    points: np.ndarray
    needed_free_clusters: int
    annotated_flags: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "points", np.asarray(self.points, dtype=np.float64))
        object.__setattr__(self, "annotated_flags", np.asarray(self.annotated_flags, dtype=bool))
        if self.needed_free_clusters < 1:
            raise ValueError("needed_free_clusters must be >= 1")
        if self.points.shape[0] == 0:
            raise ValueError("points must be non-empty")


def adaptive_cluster_search(request: ClusterBudgetRequest, seed: int = 0) -> Clustering:
    """Grow k until enough clusters are free of already-annotated points.

    Starts at k = needed_free_clusters and multiplies k by 1.05 (rounded up,
    at least +1, capped at the point count) until the clustering has the
    required number of free clusters. The same seed is reused for every
    attempt.
    """
    needed = request.needed_free_clusters
    n = request.points.shape[0]
    free_points = int(np.count_nonzero(~request.annotated_flags))
    if free_points < needed:
        raise InfeasibleError(
            f"need {needed} annotation-free clusters but only {free_points} "
            "annotation-free points are available"
        )
    k = min(needed, n)
    while True:
        clustering = kmeans(request.points, k, seed=seed, annotated_flags=request.annotated_flags)
        if len(clustering.free_clusters()) >= needed:
            return clustering
        if k >= n:
            raise InfeasibleError(
                f"no clustering with {needed} annotation-free clusters exists at k={k}"
            )
        k = min(max(math.ceil(k * CLUSTER_GROWTH_FACTOR), k + 1), n)
