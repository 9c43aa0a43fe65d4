"""Threshold calibration: IoU, matching, sweeps, operating points."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ofds.calibration import (
    MatchedProposal,
    iou,
    match_proposals,
    sweep_thresholds,
    threshold_for_f1,
    threshold_for_fpr,
)
from ofds.data import GroundTruthObject, ObjectProposal

from conftest import box


def proposal(image_id, class_id, confidence, bbox):
    return ObjectProposal(image_id, class_id, confidence, bbox, 0)


def gt(image_id, class_id, bbox):
    return GroundTruthObject(image_id, class_id, bbox)


def brute_force_counts(matched, total_gt, threshold):
    """Recount the kept set directly; the oracle for sweep_thresholds."""
    kept = [m for m in matched if m.confidence >= threshold]
    tp = sum(m.is_true_positive for m in kept)
    fp = len(kept) - tp
    return tp, fp, total_gt - tp


class TestIou:
    def test_identical_boxes(self):
        assert iou((0, 0, 2, 2), (0, 0, 2, 2)) == 1.0

    def test_disjoint_boxes(self):
        assert iou((0, 0, 2, 2), (10, 10, 2, 2)) == 0.0

    def test_partial_overlap_value(self):
        # intersection 1x1 = 1, union 4 + 4 - 1 = 7
        assert iou((0, 0, 2, 2), (1, 1, 2, 2)) == pytest.approx(1 / 7, abs=1e-12)

    def test_zero_union(self):
        assert iou((0, 0, 0, 0), (0, 0, 0, 0)) == 0.0


class TestMatchProposals:
    def test_exact_match_is_tp(self):
        out = match_proposals(
            [proposal("i1", 0, 0.9, box())], [gt("i1", 0, box())], 0.5
        )
        assert out[0].is_true_positive

    def test_one_to_one_higher_confidence_wins(self):
        out = match_proposals(
            [proposal("i1", 0, 0.5, box()), proposal("i1", 0, 0.9, box())],
            [gt("i1", 0, box())],
            0.5,
        )
        assert [m.is_true_positive for m in out] == [False, True]

    def test_class_aware(self):
        out = match_proposals(
            [proposal("i1", 1, 0.9, box())], [gt("i1", 0, box())], 0.5
        )
        assert not out[0].is_true_positive

    def test_image_aware(self):
        out = match_proposals(
            [proposal("i2", 0, 0.9, box())], [gt("i1", 0, box())], 0.5
        )
        assert not out[0].is_true_positive

    def test_below_iou_threshold_unmatched(self):
        out = match_proposals(
            [proposal("i1", 0, 0.9, (0, 0, 2, 2))], [gt("i1", 0, (1, 1, 2, 2))], 0.5
        )
        assert not out[0].is_true_positive

    def test_claims_highest_iou_gt(self):
        out = match_proposals(
            [proposal("i1", 0, 0.9, (0, 0, 10, 10))],
            [gt("i1", 0, (2, 2, 10, 10)), gt("i1", 0, (0, 0, 10, 11))],
            0.5,
        )
        assert out[0].is_true_positive


class TestSweep:
    def test_hand_enumerated_counts(self):
        matched = [MatchedProposal(0.9, True), MatchedProposal(0.8, False)]
        curve = sweep_thresholds(matched, total_gt=1)
        # Semantics: counts at t cover proposals with confidence >= t.
        assert brute_force_counts(matched, 1, 0.85) == (1, 0, 0)
        assert brute_force_counts(matched, 1, 0.5) == (1, 1, 0)
        i9 = list(curve.thresholds).index(0.9)
        i8 = list(curve.thresholds).index(0.8)
        assert (curve.tp[i9], curve.fp[i9]) == (1, 0)
        assert (curve.tp[i8], curve.fp[i8]) == (1, 1)

    def test_empty_matched_list(self):
        curve = sweep_thresholds([], total_gt=0)
        assert curve.tp.sum() == 0 and curve.fp.sum() == 0
        assert (curve.f1 == 0).all()

    def test_all_tps_fpr_zero(self):
        curve = sweep_thresholds(
            [MatchedProposal(0.2, True), MatchedProposal(0.7, True)], total_gt=2
        )
        assert (curve.fpr == 0).all()

    def test_exhaustiveness_at_zero(self):
        matched = [MatchedProposal(0.9, True), MatchedProposal(0.4, False),
                   MatchedProposal(0.6, True)]
        curve = sweep_thresholds(matched, total_gt=5)
        assert curve.tp[0] + curve.fn[0] == 5

    def test_curve_matches_brute_force(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            n = int(rng.integers(1, 13))
            matched = [
                MatchedProposal(float(rng.choice([0.1, 0.3, 0.5, 0.5, 0.8, 1.0])), bool(rng.integers(2)))
                for _ in range(n)
            ]
            total_gt = sum(m.is_true_positive for m in matched) + int(rng.integers(0, 4))
            curve = sweep_thresholds(matched, total_gt)
            for i, t in enumerate(curve.thresholds):
                assert (curve.tp[i], curve.fp[i], curve.fn[i]) == brute_force_counts(
                    matched, total_gt, t
                )

    @given(
        confs=st.lists(
            st.sampled_from([0.0, 0.2, 0.4, 0.6, 0.8, 1.0]), min_size=1, max_size=15
        ),
        flags=st.data(),
    )
    @settings(max_examples=60, deadline=None)
    def test_monotonicity_property(self, confs, flags):
        matched = [
            MatchedProposal(c, flags.draw(st.booleans(), label=f"tp{i}"))
            for i, c in enumerate(confs)
        ]
        total_gt = sum(m.is_true_positive for m in matched)
        curve = sweep_thresholds(matched, total_gt)
        tp_fp = curve.tp + curve.fp
        assert (np.diff(tp_fp) <= 0).all()
        assert (np.diff(curve.tp) <= 0).all()
        assert (np.diff(curve.recall) <= 1e-12).all()


class TestThresholdForFpr:
    def test_two_point_curve(self):
        # FPR(0.5) = 2/4 > 0.05... build counts giving FPR(0.6)=0.04, FPR(0.5)=0.08
        matched = [MatchedProposal(0.6, True)] * 24 + [MatchedProposal(0.6, False)] * 1 \
            + [MatchedProposal(0.5, True)] * 22 + [MatchedProposal(0.5, False)] * 3
        curve = sweep_thresholds(matched, total_gt=46)
        # at 0.6: fp=1, tp=24 -> 0.04; at 0.5: fp=4, tp=46 -> 0.08
        choice = threshold_for_fpr(curve, 0.05)
        assert choice.satisfied
        assert choice.threshold == 0.6
        assert choice.fpr == pytest.approx(0.04)

    def test_all_tp_returns_smallest(self):
        curve = sweep_thresholds(
            [MatchedProposal(0.3, True), MatchedProposal(0.9, True)], total_gt=2
        )
        choice = threshold_for_fpr(curve, 0.05)
        assert choice.satisfied and choice.threshold == 0.0

    def test_all_fp_unsatisfiable(self):
        curve = sweep_thresholds(
            [MatchedProposal(0.3, False), MatchedProposal(0.9, False)], total_gt=0
        )
        choice = threshold_for_fpr(curve, 0.05)
        assert not choice.satisfied
        assert choice.threshold == 1.0


class TestThresholdForF1:
    def test_hand_computed_example(self):
        matched = [MatchedProposal(0.9, True), MatchedProposal(0.8, False),
                   MatchedProposal(0.7, True)]
        curve = sweep_thresholds(matched, total_gt=2)
        choice = threshold_for_f1(curve)
        # F1 above 0.8: 2*(1*0.5)/1.5 = 2/3; at 0.7: 2*(2/3*1)/(5/3) = 0.8
        assert choice.threshold == 0.7
        assert choice.f1 == pytest.approx(0.8)

    def test_perfect_detector(self):
        matched = [MatchedProposal(0.4, True), MatchedProposal(0.6, True)]
        curve = sweep_thresholds(matched, total_gt=2)
        choice = threshold_for_f1(curve)
        assert choice.f1 == pytest.approx(1.0)
        # ties break to the larger threshold within the F1=1 region
        assert choice.threshold == 0.4

    def test_degenerate_curve_returns_one(self):
        curve = sweep_thresholds([], total_gt=0)
        choice = threshold_for_f1(curve)
        assert choice.threshold == 1.0
        assert choice.f1 == 0.0
