"""Deterministic k-means and the adaptive cluster-count search."""

from __future__ import annotations

from itertools import product

import numpy as np
import pytest

from ofds.clustering import (
    ClusterBudgetRequest,
    adaptive_cluster_search,
    kmeans,
    nearest_to_centroid,
    wcss,
)
from ofds.errors import InfeasibleError


def brute_force_optimal_wcss(points: np.ndarray, k: int) -> float:
    """Minimum WCSS over every assignment of points into exactly k parts."""
    n = len(points)
    best = np.inf
    for labels in product(range(k), repeat=n):
        if len(set(labels)) != k:
            continue
        labels = np.array(labels)
        total = 0.0
        for j in range(k):
            members = points[labels == j]
            mu = members.mean(axis=0)
            total += float(((members - mu) ** 2).sum())
        best = min(best, total)
    return best


class TestKmeans:
    def test_k_equals_n(self):
        pts = np.array([[0.0, 0.0], [1.0, 0.0], [5.0, 5.0]])
        c = kmeans(pts, k=3, seed=0)
        assert c.wcss == 0.0
        assert sorted(c.assignment.tolist()) == [0, 1, 2]
        for i in range(3):
            assert np.allclose(c.centroids[c.assignment[i]], pts[i])

    def test_k_one_is_global_mean(self):
        pts = np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 2.0], [2.0, 2.0]])
        c = kmeans(pts, k=1, seed=0)
        assert np.allclose(c.centroids[0], [1.0, 1.0])
        assert c.wcss == pytest.approx(((pts - 1.0) ** 2).sum())

    def test_two_blob_fixture_matches_brute_force(self):
        pts = np.array([[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]])
        optimal = brute_force_optimal_wcss(pts, 2)
        assert optimal == pytest.approx(1.0)
        for seed in range(10):
            c = kmeans(pts, k=2, seed=seed)
            assert c.wcss == pytest.approx(optimal, abs=1e-9)
            assert c.assignment[0] == c.assignment[1]
            assert c.assignment[2] == c.assignment[3]

    def test_invalid_k(self):
        pts = np.zeros((3, 2))
        with pytest.raises(ValueError):
            kmeans(pts, k=0)
        with pytest.raises(ValueError):
            kmeans(pts, k=4)

    def test_determinism_bit_identical(self):
        rng = np.random.default_rng(5)
        pts = rng.normal(size=(40, 6))
        a = kmeans(pts, k=5, seed=3)
        b = kmeans(pts, k=5, seed=3)
        assert np.array_equal(a.assignment, b.assignment)
        assert a.centroids.tobytes() == b.centroids.tobytes()
        assert a.wcss == b.wcss

    def test_wcss_trace_monotone(self):
        rng = np.random.default_rng(11)
        for trial in range(20):
            pts = rng.normal(size=(int(rng.integers(6, 40)), 4))
            c = kmeans(pts, k=int(rng.integers(2, 6)), seed=trial)
            trace = np.array(c.wcss_trace)
            assert (np.diff(trace) <= 1e-9).all()

    def test_centroids_are_member_means(self):
        rng = np.random.default_rng(2)
        pts = rng.normal(size=(30, 3))
        c = kmeans(pts, k=4, seed=0)
        for j in range(4):
            members = pts[c.assignment == j]
            assert len(members) > 0
            assert np.abs(c.centroids[j] - members.mean(axis=0)).max() < 1e-9

    def test_identical_points_share_cluster(self):
        pts = np.array([[1.0, 1.0], [1.0, 1.0], [5.0, 5.0], [1.0, 1.0]])
        c = kmeans(pts, k=2, seed=0)
        assert c.assignment[0] == c.assignment[1] == c.assignment[3]

    def test_all_identical_k2_terminates(self):
        pts = np.ones((4, 2))
        c = kmeans(pts, k=2, seed=0)
        assert c.wcss == 0.0
        assert np.bincount(c.assignment, minlength=2).min() >= 1


class TestWcss:
    def test_identical_points(self):
        pts = np.ones((5, 3))
        assignment = np.zeros(5, dtype=np.intp)
        assert wcss(pts, assignment, np.ones((1, 3))) == 0.0

    def test_single_point_distance_squared(self):
        pts = np.array([[3.0, 4.0]])
        assert wcss(pts, np.zeros(1, dtype=np.intp), np.zeros((1, 2))) == pytest.approx(25.0)

    def test_two_blob_fixture_value(self):
        pts = np.array([[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]])
        assignment = np.array([0, 0, 1, 1], dtype=np.intp)
        centroids = np.array([[0.0, 0.5], [10.0, 0.5]])
        assert wcss(pts, assignment, centroids) == pytest.approx(1.0)


class TestNearestToCentroid:
    def test_singleton(self):
        assert nearest_to_centroid(np.array([[1.0, 2.0]]), np.array([7]), np.zeros(2)) == 7

    def test_tie_breaks_to_lowest_index(self):
        pts = np.array([[0.0], [0.5]])
        centroid = np.array([0.25])
        assert nearest_to_centroid(pts, np.array([12, 4]), centroid) == 4

    def test_argmin_distance(self):
        pts = np.array([[2.0], [1.0], [3.0]])
        assert nearest_to_centroid(pts, np.array([0, 1, 2]), np.array([0.0])) == 1


class TestAdaptiveSearch:
    def test_no_annotated_first_attempt(self):
        rng = np.random.default_rng(0)
        pts = rng.normal(size=(12, 3))
        req = ClusterBudgetRequest(pts, 3, np.zeros(12, dtype=bool))
        c = adaptive_cluster_search(req, seed=0)
        assert c.k == 3
        assert len(c.free_clusters()) == 3

    def test_all_annotated_infeasible(self):
        with pytest.raises(InfeasibleError):
            adaptive_cluster_search(
                ClusterBudgetRequest(np.zeros((4, 2)), 1, np.ones(4, dtype=bool))
            )

    def test_annotated_blob_forces_growth(self):
        # 5 annotated points co-located in one tight blob plus 5 well
        # separated free points. Needing 2 free clusters from k=2 fails
        # (one cluster is the blob), so the search must grow k.
        blob = np.full((5, 2), 100.0) + np.linspace(0, 0.01, 10).reshape(5, 2)
        free = np.array([[0.0, 0.0], [10.0, 0.0], [20.0, 0.0], [30.0, 0.0], [40.0, 0.0]])
        pts = np.vstack([blob, free])
        flags = np.array([True] * 5 + [False] * 5)
        req = ClusterBudgetRequest(pts, 2, flags)
        c = adaptive_cluster_search(req, seed=0)
        assert len(c.free_clusters()) >= 2
        assert c.k <= 10
        for j in c.free_clusters():
            assert not flags[c.members(j)].any()
        # re-running with k fixed at the returned value reproduces the result
        again = kmeans(pts, c.k, seed=0, annotated_flags=flags)
        assert np.array_equal(again.assignment, c.assignment)

    def test_k_never_exceeds_point_count(self):
        pts = np.vstack([np.zeros((6, 2)), np.ones((2, 2))])
        flags = np.array([True] * 6 + [False] * 2)
        c = adaptive_cluster_search(ClusterBudgetRequest(pts, 2, flags), seed=0)
        assert c.k <= 8
        assert len(c.free_clusters()) >= 2

    def test_growth_rule_strictly_increases(self):
        # ceil(k * 1.05) stalls below 20 without the +1 guarantee
        import math

        for k in range(1, 25):
            grown = min(max(math.ceil(k * 1.05), k + 1), 1000)
            assert grown >= k + 1
