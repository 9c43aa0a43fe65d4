"""Confidence-threshold calibration against a reference dataset.

Two operating points are supported: the threshold where at most 5% of the
emitted proposals are wrong (high-precision object proposals) and the
threshold maximizing F1 (balanced autolabeling). Proposals are matched to
ground truth greedily by descending confidence, per image and class, at a
configurable IoU cutoff.

The false-positive rate here is FP / (TP + FP) over the proposals kept at a
threshold: detection tasks have no true negatives, so the rate is defined
per emitted proposal.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ofds.data import Bbox, GroundTruthObject, ObjectProposal

DEFAULT_IOU_THRESHOLD = 0.5
DEFAULT_FPR_TARGET = 0.05


def iou(box_a: Bbox, box_b: Bbox) -> float:
    """Intersection-over-union of two (x, y, w, h) boxes; 0 when the union is empty."""
    ax, ay, aw, ah = box_a
    bx, by, bw, bh = box_b
    ix = max(ax, bx)
    iy = max(ay, by)
    ix2 = min(ax + aw, bx + bw)
    iy2 = min(ay + ah, by + bh)
    inter = max(0.0, ix2 - ix) * max(0.0, iy2 - iy)
    union = aw * ah + bw * bh - inter
    if union <= 0.0:
        return 0.0
    return inter / union


@dataclass(frozen=True)
class MatchedProposal:
    confidence: float
    is_true_positive: bool


def match_proposals(
    proposals: Sequence[ObjectProposal],
    ground_truth: Sequence[GroundTruthObject],
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
) -> list[MatchedProposal]:
    """Greedy one-to-one matching per image and class.

    Proposals claim ground truth in order of descending confidence (ties by
    ingestion order); each claims the unmatched same-class box with the
    highest IoU at or above the cutoff. Unclaimed proposals are false
    positives. Output preserves proposal ingestion order.
    """
    if not 0.0 < iou_threshold <= 1.0:
        raise ValueError("iou_threshold must be in (0, 1]")
    gt_by_key: dict[tuple[str, int], list[GroundTruthObject]] = {}
    for g in ground_truth:
        gt_by_key.setdefault((g.image_id, g.class_id), []).append(g)

    results: list[bool] = [False] * len(proposals)
    by_key: dict[tuple[str, int], list[int]] = {}
    for i, p in enumerate(proposals):
        by_key.setdefault((p.image_id, p.class_id), []).append(i)

    for key, idxs in by_key.items():
        gts = gt_by_key.get(key, [])
        claimed = [False] * len(gts)
        for i in sorted(idxs, key=lambda j: (-proposals[j].confidence, j)):
            best_j = -1
            best_iou = 0.0
            for j, g in enumerate(gts):
                if claimed[j]:
                    continue
                v = iou(proposals[i].bbox, g.bbox)
                if v >= iou_threshold and v > best_iou:
                    best_iou = v
                    best_j = j
            if best_j >= 0:
                claimed[best_j] = True
                results[i] = True
    return [MatchedProposal(p.confidence, tp) for p, tp in zip(proposals, results)]


@dataclass(frozen=True)
class CalibrationCurve:
    """Detection counts swept over candidate confidence thresholds.

    At threshold t the counts cover proposals with confidence >= t.
    Thresholds are sorted ascending and always include 0 and 1.
    """

    thresholds: np.ndarray
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    total_gt: int

    def __len__(self) -> int:
        return len(self.thresholds)

    @property
    def fpr(self) -> np.ndarray:
        emitted = self.tp + self.fp
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(emitted > 0, self.fp / np.maximum(emitted, 1), 0.0)
        return out

    @property
    def precision(self) -> np.ndarray:
        emitted = self.tp + self.fp
        return np.where(emitted > 0, self.tp / np.maximum(emitted, 1), 0.0)

    @property
    def recall(self) -> np.ndarray:
        if self.total_gt == 0:
            return np.zeros_like(self.thresholds)
        return self.tp / self.total_gt

    @property
    def f1(self) -> np.ndarray:
        p, r = self.precision, self.recall
        denom = p + r
        return np.where(denom > 0, 2 * p * r / np.where(denom > 0, denom, 1), 0.0)

    def to_records(self) -> list[dict]:
        fpr, prec, rec, f1 = self.fpr, self.precision, self.recall, self.f1
        return [
            {
                "threshold": float(self.thresholds[i]),
                "tp": int(self.tp[i]),
                "fp": int(self.fp[i]),
                "fn": int(self.fn[i]),
                "fpr": float(fpr[i]),
                "precision": float(prec[i]),
                "recall": float(rec[i]),
                "f1": float(f1[i]),
            }
            for i in range(len(self.thresholds))
        ]


def sweep_thresholds(matched: Sequence[MatchedProposal], total_gt: int) -> CalibrationCurve:
    """Tabulate TP/FP/FN over all distinct confidences plus 0 and 1."""
    n_tp_all = sum(m.is_true_positive for m in matched)
    if total_gt < n_tp_all:
        raise ValueError(f"total_gt={total_gt} is below the matched TP count {n_tp_all}")
    thresholds = np.unique(
        np.concatenate([[0.0, 1.0], np.array([m.confidence for m in matched], dtype=np.float64)])
    )
    conf = np.array([m.confidence for m in matched], dtype=np.float64)
    is_tp = np.array([m.is_true_positive for m in matched], dtype=bool)
    tp = np.empty(len(thresholds), dtype=np.int64)
    fp = np.empty(len(thresholds), dtype=np.int64)
    for i, t in enumerate(thresholds):
        kept = conf >= t
        tp[i] = int(np.count_nonzero(kept & is_tp))
        fp[i] = int(np.count_nonzero(kept & ~is_tp))
    fn = total_gt - tp
    return CalibrationCurve(thresholds=thresholds, tp=tp, fp=fp, fn=fn, total_gt=total_gt)


@dataclass(frozen=True)
class ThresholdChoice:
    threshold: float
    satisfied: bool
    fpr: float
    precision: float
    recall: float
    f1: float


def _choice(curve: CalibrationCurve, i: int, satisfied: bool) -> ThresholdChoice:
    return ThresholdChoice(
        threshold=float(curve.thresholds[i]),
        satisfied=satisfied,
        fpr=float(curve.fpr[i]),
        precision=float(curve.precision[i]),
        recall=float(curve.recall[i]),
        f1=float(curve.f1[i]),
    )


def threshold_for_fpr(curve: CalibrationCurve, target_fpr: float = DEFAULT_FPR_TARGET) -> ThresholdChoice:
    """Smallest threshold whose per-proposal FPR is within the target.

    Smaller thresholds keep more proposals, so this maximizes recall subject
    to the precision constraint. Thresholds that emit no proposals are not
    valid operating points. When no threshold satisfies the target the
    largest threshold is returned with ``satisfied=False``.
    """
    emitted = curve.tp + curve.fp
    fpr = curve.fpr
    for i in range(len(curve)):
        if emitted[i] > 0 and fpr[i] <= target_fpr:
            return _choice(curve, i, True)
    return _choice(curve, len(curve) - 1, False)


def threshold_for_f1(curve: CalibrationCurve) -> ThresholdChoice:
    """Threshold maximizing F1; ties resolve to the larger threshold."""
    f1 = curve.f1
    best = 0
    for i in range(len(curve)):
        if f1[i] >= f1[best]:
            best = i
    return _choice(curve, best, True)
