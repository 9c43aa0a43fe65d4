"""Balance score, subset statistics, and duplicate diagnostics."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ofds.engine import BudgetSpec, select, select as ofds_select
from ofds.baselines import select_random
from ofds.errors import DatasetError
from ofds.metrics import balance_report, balance_score, duplicate_pairs, subset_stats
from ofds.synth import inject_duplicates

from conftest import box, make_dataset


def brute_force_balance(counts):
    """Average of min/max over explicitly enumerated unordered pairs."""
    if len(counts) == 1:
        return 1.0
    ratios = []
    for i in range(len(counts)):
        for j in range(len(counts)):
            if i >= j:
                continue
            a, b = counts[i], counts[j]
            if a == 0 and b == 0:
                ratios.append(1.0)
            elif min(a, b) == 0:
                ratios.append(0.0)
            else:
                ratios.append(min(a, b) / max(a, b))
    return sum(ratios) / len(ratios)


class TestBalanceScore:
    def test_even_classes(self):
        assert balance_score([5, 5, 5]) == 1.0

    def test_hand_computed(self):
        assert balance_score([1, 2, 4]) == pytest.approx((0.5 + 0.25 + 0.5) / 3, abs=1e-12)

    def test_single_class_convention(self):
        assert balance_score([7]) == 1.0

    def test_zero_pair_conventions(self):
        assert balance_score([0, 0]) == 1.0
        assert balance_score([0, 5]) == 0.0

    def test_matches_brute_force_random_vectors(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            m = int(rng.integers(1, 21))
            counts = rng.integers(0, 50, size=m).tolist()
            assert balance_score(counts) == pytest.approx(
                brute_force_balance(counts), abs=1e-12
            )

    @given(counts=st.lists(st.integers(min_value=0, max_value=100), min_size=2, max_size=12))
    @settings(max_examples=80, deadline=None)
    def test_permutation_invariant(self, counts):
        rng = np.random.default_rng(1)
        shuffled = list(counts)
        rng.shuffle(shuffled)
        assert balance_score(counts) == pytest.approx(balance_score(shuffled), abs=1e-12)

    @given(
        counts=st.lists(st.integers(min_value=0, max_value=50), min_size=2, max_size=8),
        scale=st.integers(min_value=1, max_value=9),
    )
    @settings(max_examples=80, deadline=None)
    def test_scale_invariant(self, counts, scale):
        scaled = [c * scale for c in counts]
        assert balance_score(counts) == pytest.approx(balance_score(scaled), abs=1e-12)

    def test_bounds(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            counts = rng.integers(0, 100, size=int(rng.integers(1, 15))).tolist()
            assert 0.0 <= balance_score(counts) <= 1.0


class TestSubsetStats:
    def test_empty_selection(self, small_synth):
        m = select_random(small_synth, BudgetSpec(units=10_000), seed=0)
        empty = m.__class__(
            method=m.method, seed=0, budget=m.budget, selected=(),
            realized_units=0, per_class_objects={}, unit_mode="proposals",
        )
        stats = subset_stats(empty, small_synth)
        assert stats.image_count == 0
        assert stats.realized_fraction == 0.0
        assert not any(stats.per_class_covered.values())

    def test_full_dataset_fraction_one(self, small_synth):
        m = select_random(small_synth, BudgetSpec(units=10_000), seed=0)
        stats = subset_stats(m, small_synth)
        assert stats.realized_fraction == 1.0
        assert stats.all_covered

    def test_fraction_arithmetic(self):
        ds = make_dataset(
            [(f"i{k}", 0, 1.0, box()) for k in range(10)],
            np.zeros((10, 2), dtype=np.float32),
            class_names=("a",),
        )
        m = select_random(ds, BudgetSpec(units=3), seed=0)
        stats = subset_stats(m, ds)
        assert stats.total_units == 10
        assert stats.realized_fraction == pytest.approx(stats.realized_units / 10)

    def test_dangling_image_rejected(self, small_synth):
        m = select_random(small_synth, BudgetSpec(units=3), seed=0)
        bad = m.__class__(
            method=m.method, seed=0, budget=m.budget,
            selected=(m.selected[0].__class__(image_id="ghost", step=0),),
            realized_units=1, per_class_objects={}, unit_mode="proposals",
        )
        with pytest.raises(DatasetError):
            subset_stats(bad, small_synth)


def duplicated_fixture():
    """Four images; i2/i3 byte-identical copies of i0/i1."""
    feats = np.array([[0.0, 0.0], [8.0, 8.0], [0.0, 0.0], [8.0, 8.0]], dtype=np.float32)
    return make_dataset(
        [("i0", 0, 1.0, box()), ("i1", 0, 1.0, box()),
         ("i2", 0, 1.0, box()), ("i3", 0, 1.0, box())],
        feats,
        class_names=("a",),
    )


class TestDuplicatePairs:
    def test_identical_pair_detected(self):
        ds = duplicated_fixture()
        m = select_random(ds, BudgetSpec(units=4), seed=0)  # selects everything
        assert duplicate_pairs(m, ds, epsilon=0.0) == 2

    def test_well_separated_features(self):
        ds = make_dataset(
            [("i0", 0, 1.0, box()), ("i1", 0, 1.0, box())],
            np.array([[0.0, 0.0], [9.0, 9.0]], dtype=np.float32),
            class_names=("a",),
        )
        m = select_random(ds, BudgetSpec(units=2), seed=0)
        assert duplicate_pairs(m, ds, epsilon=0.5) == 0

    def test_different_classes_not_counted(self):
        ds = make_dataset(
            [("i0", 0, 1.0, box()), ("i1", 1, 1.0, box())],
            np.zeros((2, 2), dtype=np.float32),
            class_names=("a", "b"),
        )
        m = select_random(ds, BudgetSpec(units=2), seed=0)
        assert duplicate_pairs(m, ds, epsilon=0.0) == 0

    def test_clustering_selection_avoids_duplicates_where_random_hits_them(self):
        ds = duplicated_fixture()
        clustered = ofds_select(ds, BudgetSpec(units=2, avg_units=1.0), seed=0)
        assert duplicate_pairs(clustered, ds, epsilon=0.0) == 0
        # a random draw that picks both copies shows the pair
        hits = 0
        for seed in range(10):
            m = select_random(ds, BudgetSpec(units=2), seed=seed)
            hits += duplicate_pairs(m, ds, epsilon=0.0)
        assert hits >= 1


class TestBalanceReport:
    def test_uses_ground_truth_when_present(self, small_synth):
        m = select(small_synth, BudgetSpec(units=15, avg_units=2.0), seed=0)
        report = balance_report(m, small_synth)
        assert set(report.counts) == set(range(len(small_synth.classes)))
        assert 0.0 <= report.score <= 1.0

    def test_duplicate_injection_visible_to_metric(self, small_synth):
        bigger = inject_duplicates(small_synth, 0.2, seed=0)
        m = select_random(bigger, BudgetSpec(units=10_000), seed=0)
        injected = bigger.n_images - small_synth.n_images
        assert duplicate_pairs(m, bigger, epsilon=0.0) >= injected
