"""Object-focused selection: class ordering, per-class quotas, adaptive
clustering, representative picking, and annotation-unit accounting.

Classes are processed rarest first. For each class the remaining budget is
split evenly over the classes still to come, converted from units to an
image count via the per-image unit estimate, and realized by clustering
the class's object features into that many annotation-free clusters. One
object per free cluster is selected (the one nearest its cluster mean) and
its image is added to the selection; every target-class object on a
selected image is assumed to be labeled, which is what the image costs.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from ofds.clustering import ClusterBudgetRequest, adaptive_cluster_search, nearest_to_centroid
from ofds.data import ProposalDataset, UnitMode, class_counts
from ofds.errors import DatasetError, InfeasibleError

log = logging.getLogger("ofds.engine")

METHOD_NAME = "ofds"


@dataclass(frozen=True)
class BudgetSpec:
    """Annotation budget in units plus the average-units-per-image estimate."""

    units: int
    avg_units: float = 1.0
    class_count: Optional[int] = None

    def __post_init__(self) -> None:
        if self.units < 1:
            raise ValueError("budget units must be >= 1")
        if not self.avg_units > 0:
            raise ValueError("avg_units must be positive")


@dataclass(frozen=True)
class SelectionEntry:
    image_id: str
    step: int
    class_id: Optional[int] = None
    cluster: Optional[int] = None
    distance: Optional[float] = None
    proposal_index: Optional[int] = None

    def to_dict(self) -> dict:
        return {
            "image_id": self.image_id,
            "class_id": self.class_id,
            "cluster": self.cluster,
            "distance": self.distance,
            "step": self.step,
            "proposal_index": self.proposal_index,
        }

    @staticmethod
    def from_dict(d: dict) -> "SelectionEntry":
        return SelectionEntry(
            image_id=d["image_id"],
            step=d["step"],
            class_id=d.get("class_id"),
            cluster=d.get("cluster"),
            distance=d.get("distance"),
            proposal_index=d.get("proposal_index"),
        )


@dataclass
class SelectionState:
    """Growing selection with unit accounting and per-image provenance."""

    entries: list[SelectionEntry] = field(default_factory=list)
    spent_units: int = 0
    _ids: set[str] = field(default_factory=set)

    def __contains__(self, image_id: str) -> bool:
        return image_id in self._ids

    def add(self, entry: SelectionEntry, cost: int) -> None:
        if entry.image_id in self._ids:
            raise ValueError(f"image '{entry.image_id}' already selected")
        self.entries.append(entry)
        self._ids.add(entry.image_id)
        self.spent_units += cost


@dataclass(frozen=True)
class SelectionManifest:
    """Lossless record of one selection run."""

    method: str
    seed: int
    budget: BudgetSpec
    selected: tuple[SelectionEntry, ...]
    realized_units: int
    per_class_objects: dict[int, int]
    unit_mode: UnitMode = "proposals"

    @property
    def image_ids(self) -> list[str]:
        return [e.image_id for e in self.selected]

    def to_dict(self) -> dict:
        budget: dict = {"units": self.budget.units, "avg_units": self.budget.avg_units}
        if self.budget.class_count is not None:
            budget["class_count"] = self.budget.class_count
        return {
            "method": self.method,
            "seed": self.seed,
            "budget": budget,
            "selected": [e.to_dict() for e in self.selected],
            "realized_units": self.realized_units,
            "per_class_objects": {str(c): n for c, n in sorted(self.per_class_objects.items())},
            "unit_mode": self.unit_mode,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @staticmethod
    def from_dict(d: dict) -> "SelectionManifest":
        b = d["budget"]
        return SelectionManifest(
            method=d["method"],
            seed=d["seed"],
            budget=BudgetSpec(
                units=b["units"], avg_units=b["avg_units"], class_count=b.get("class_count")
            ),
            selected=tuple(SelectionEntry.from_dict(e) for e in d["selected"]),
            realized_units=d["realized_units"],
            per_class_objects={int(c): n for c, n in d["per_class_objects"].items()},
            unit_mode=d.get("unit_mode", "proposals"),
        )

    @staticmethod
    def from_json(text: str) -> "SelectionManifest":
        return SelectionManifest.from_dict(json.loads(text))


def class_processing_order(dataset: ProposalDataset) -> list[int]:
    """Class ids sorted by ascending proposal count, ties by ascending id.

    Classes without proposals sort first; the selector skips them with a
    warning since they cannot be covered.
    """
    counts = class_counts(dataset)
    return sorted(range(len(counts)), key=lambda c: (int(counts[c]), c))


def per_class_quota(
    budget_units: int, spent_units: int, remaining_classes: int, avg_units: float
) -> int:
    """Number of images to select for the current class.

    Splits the leftover budget evenly over the remaining classes and divides
    by the expected units per image, rounding down. A zero quota is raised
    to one image while at least one image's expected cost remains, so rare
    classes are not starved by rounding.
    """
    if remaining_classes < 1:
        raise ValueError("remaining_classes must be >= 1")
    left = budget_units - spent_units
    if left <= 0:
        return 0
    # Exact floor of left / (remaining * avg_units) at the given float value.
    quota = int(Fraction(left) / (Fraction(remaining_classes) * Fraction(avg_units)))
    if quota == 0 and left >= avg_units:
        return 1
    return quota


def unit_cost(dataset: ProposalDataset, image_id: str, mode: UnitMode = "proposals") -> int:
    """Annotation units charged for exhaustively labeling one image.

    Counts target-class objects on the image: surviving proposals, or ground
    truth in benchmark mode. An image with nothing to count still costs one
    unit.
    """
    dataset.image(image_id)  # existence check
    if mode == "proposals":
        n = sum(1 for p in dataset.proposals if p.image_id == image_id)
    elif mode == "ground_truth":
        if not dataset.ground_truth:
            raise DatasetError("ground_truth unit mode requires ground truth data")
        n = sum(1 for g in dataset.ground_truth if g.image_id == image_id)
    else:
        raise ValueError(f"unknown unit mode '{mode}'")
    return max(n, 1)


def unit_costs_by_image(dataset: ProposalDataset, mode: UnitMode = "proposals") -> dict[str, int]:
    """Vectorized ``unit_cost`` for every image."""
    counts: dict[str, int] = {im.image_id: 0 for im in dataset.images}
    if mode == "proposals":
        for p in dataset.proposals:
            counts[p.image_id] += 1
    elif mode == "ground_truth":
        if not dataset.ground_truth:
            raise DatasetError("ground_truth unit mode requires ground truth data")
        for g in dataset.ground_truth:
            counts[g.image_id] += 1
    else:
        raise ValueError(f"unknown unit mode '{mode}'")
    return {i: max(n, 1) for i, n in counts.items()}


def total_units(dataset: ProposalDataset, mode: UnitMode = "proposals") -> int:
    return sum(unit_costs_by_image(dataset, mode).values())


def estimate_avg_units(dataset: ProposalDataset, mode: UnitMode = "proposals") -> float:
    """Average objects per image over images that have at least one."""
    costs = unit_costs_by_image(dataset, mode)
    if mode == "proposals":
        nonempty = {p.image_id for p in dataset.proposals}
    else:
        nonempty = {g.image_id for g in dataset.ground_truth}
    if not nonempty:
        raise DatasetError("cannot estimate avg units: no objects in dataset")
    return sum(costs[i] for i in nonempty) / len(nonempty)


def per_class_object_counts(
    dataset: ProposalDataset, image_ids: list[str], mode: UnitMode = "proposals"
) -> dict[int, int]:
    selected = set(image_ids)
    counts = {c: 0 for c in range(len(dataset.classes))}
    if mode == "ground_truth":
        for g in dataset.ground_truth:
            if g.image_id in selected:
                counts[g.class_id] += 1
    else:
        for p in dataset.proposals:
            if p.image_id in selected:
                counts[p.class_id] += 1
    return counts


def select(
    dataset: ProposalDataset,
    budget: BudgetSpec,
    seed: int = 0,
    unit_mode: UnitMode = "proposals",
) -> SelectionManifest:
    """Run the full object-focused selection loop.

    The dataset is expected to be pre-filtered by confidence and box area.
    Deterministic for fixed inputs and seed. Never revisits a class; stops
    adding within a class once the budget is spent.
    """
    if dataset.n_images == 0:
        raise DatasetError("cannot select from an empty dataset")
    order = class_processing_order(dataset)
    m = len(order)
    costs = unit_costs_by_image(dataset, unit_mode)
    by_class: dict[int, list[int]] = {c: [] for c in range(m)}
    for i, p in enumerate(dataset.proposals):
        by_class[p.class_id].append(i)

    state = SelectionState()
    step = 0
    for pos, class_id in enumerate(order, start=1):
        if state.spent_units >= budget.units:
            break
        idxs = by_class[class_id]
        if not idxs:
            log.warning(
                "class %d (%s) has no proposals and cannot be covered",
                class_id,
                dataset.classes.name_of(class_id),
            )
            continue
        quota = per_class_quota(budget.units, state.spent_units, m - pos + 1, budget.avg_units)
        if quota == 0:
            continue
        flags = np.array([dataset.proposals[i].image_id in state for i in idxs], dtype=bool)
        free_points = int(np.count_nonzero(~flags))
        if free_points == 0:
            log.info("class %d fully covered by earlier selections", class_id)
            continue
        if quota > free_points:
            log.info(
                "class %d: quota %d shrunk to %d annotation-free objects",
                class_id,
                quota,
                free_points,
            )
            quota = free_points
        rows = np.array([dataset.proposals[i].feature_index for i in idxs], dtype=np.intp)
        points = dataset.features[rows].astype(np.float64)
        clustering = adaptive_cluster_search(
            ClusterBudgetRequest(points, quota, flags), seed=seed
        )
        seen_features: set[bytes] = set()
        local_indices = np.arange(len(idxs))
        for cluster_idx in clustering.free_clusters():
            members = clustering.members(cluster_idx)
            pick_local = nearest_to_centroid(
                points[members], local_indices[members], clustering.centroids[cluster_idx]
            )
            proposal = dataset.proposals[idxs[pick_local]]
            key = dataset.features[proposal.feature_index].tobytes()
            if key in seen_features:
                # Exact-duplicate representative from a split twin; its
                # content is already covered this pass.
                continue
            seen_features.add(key)
            if proposal.image_id in state:
                continue
            dist = float(
                np.linalg.norm(points[pick_local] - clustering.centroids[cluster_idx])
            )
            state.add(
                SelectionEntry(
                    image_id=proposal.image_id,
                    step=step,
                    class_id=class_id,
                    cluster=int(cluster_idx),
                    distance=dist,
                    proposal_index=int(idxs[pick_local]),
                ),
                costs[proposal.image_id],
            )
            step += 1
            if state.spent_units >= budget.units:
                break

    if not state.entries:
        log.warning("budget %d produced an empty selection", budget.units)
    image_ids = [e.image_id for e in state.entries]
    return SelectionManifest(
        method=METHOD_NAME,
        seed=seed,
        budget=budget,
        selected=tuple(state.entries),
        realized_units=state.spent_units,
        per_class_objects=per_class_object_counts(dataset, image_ids, unit_mode),
        unit_mode=unit_mode,
    )
