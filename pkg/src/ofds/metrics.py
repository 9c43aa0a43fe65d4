"""Selection quality metrics: class balance, subset statistics, duplicates."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ofds.data import ProposalDataset, UnitMode
from ofds.engine import SelectionManifest, per_class_object_counts, unit_costs_by_image
from ofds.errors import DatasetError


def balance_score(counts: Sequence[int]) -> float:
    """Mean over class pairs of the smaller/larger object-count ratio.

    1.0 means perfectly even classes. Pairs where both counts are zero
    contribute 1; pairs with exactly one zero contribute 0. A single class
    scores 1.0 by convention.
    """
    if len(counts) == 0:
        raise ValueError("at least one class required")
    if len(counts) == 1:
        return 1.0
    vals = [int(c) for c in counts]
    total = 0.0
    pairs = 0
    for i in range(len(vals)):
        for j in range(i + 1, len(vals)):
            a, b = vals[i], vals[j]
            if a == 0 and b == 0:
                total += 1.0
            elif a == 0 or b == 0:
                total += 0.0
            else:
                total += min(a, b) / max(a, b)
            pairs += 1
    return total / pairs


@dataclass(frozen=True)
class BalanceReport:
    counts: dict[int, int]
    score: float

    def to_dict(self) -> dict:
        return {
            "per_class_objects": {str(c): n for c, n in sorted(self.counts.items())},
            "balance_score": self.score,
        }


def balance_report(selection: SelectionManifest, dataset: ProposalDataset) -> BalanceReport:
    """Balance of the selected subset, from ground truth when present."""
    mode: UnitMode = "ground_truth" if dataset.ground_truth else "proposals"
    counts = per_class_object_counts(dataset, selection.image_ids, mode)
    return BalanceReport(counts=counts, score=balance_score([counts[c] for c in sorted(counts)]))


@dataclass(frozen=True)
class SubsetStats:
    image_count: int
    realized_units: int
    total_units: int
    realized_fraction: float
    per_class_objects: dict[int, int]
    per_class_covered: dict[int, bool]

    @property
    def all_covered(self) -> bool:
        return all(self.per_class_covered.values())

    def to_dict(self) -> dict:
        return {
            "image_count": self.image_count,
            "realized_units": self.realized_units,
            "total_units": self.total_units,
            "realized_fraction": self.realized_fraction,
            "per_class_objects": {str(c): n for c, n in sorted(self.per_class_objects.items())},
            "per_class_covered": {str(c): v for c, v in sorted(self.per_class_covered.items())},
            "all_covered": self.all_covered,
        }


def subset_stats(selection: SelectionManifest, dataset: ProposalDataset) -> SubsetStats:
    """Size and coverage bookkeeping for a selection, in its unit mode."""
    known = {im.image_id for im in dataset.images}
    for image_id in selection.image_ids:
        if image_id not in known:
            raise DatasetError(f"selection references unknown image_id '{image_id}'")
    mode = selection.unit_mode
    costs = unit_costs_by_image(dataset, mode)
    realized = sum(costs[i] for i in selection.image_ids)
    total = sum(costs.values())
    counts = per_class_object_counts(dataset, selection.image_ids, mode)
    covered = {c: counts[c] > 0 for c in counts}
    return SubsetStats(
        image_count=len(selection.image_ids),
        realized_units=realized,
        total_units=total,
        realized_fraction=realized / total if total else 0.0,
        per_class_objects=counts,
        per_class_covered=covered,
    )


def duplicate_pairs(
    selection: SelectionManifest, dataset: ProposalDataset, epsilon: float = 0.0
) -> int:
    """Selected image pairs sharing a same-class object within epsilon.

    Counts unordered pairs of selected images where some object on one image
    has a feature within Euclidean ``epsilon`` of a same-class object on the
    other.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    by_image: dict[str, list[tuple[int, np.ndarray]]] = {}
    selected = set(selection.image_ids)
    for p in dataset.proposals:
        if p.image_id in selected:
            by_image.setdefault(p.image_id, []).append(
                (p.class_id, dataset.features[p.feature_index])
            )
    ids = [i for i in selection.image_ids if i in by_image]
    count = 0
    for a in range(len(ids)):
        for b in range(a + 1, len(ids)):
            if _images_share_near_object(by_image[ids[a]], by_image[ids[b]], epsilon):
                count += 1
    return count


def _images_share_near_object(
    objs_a: list[tuple[int, np.ndarray]],
    objs_b: list[tuple[int, np.ndarray]],
    epsilon: float,
) -> bool:
    for class_a, feat_a in objs_a:
        for class_b, feat_b in objs_b:
            if class_a != class_b:
                continue
            if float(np.linalg.norm(feat_a.astype(np.float64) - feat_b.astype(np.float64))) <= epsilon:
                return True
    return False
