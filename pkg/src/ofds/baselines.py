"""Single-pass selection baselines over image-level signals.

All baselines share the engine's unit accounting: an image costs its count
of surviving target-class objects (at least one unit) and selection stops
once the budget is spent. Every method is deterministic for a fixed
(dataset, budget, seed).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from ofds.clustering import kmeans
from ofds.data import ProposalDataset, UnitMode
from ofds.engine import (
    BudgetSpec,
    SelectionEntry,
    SelectionManifest,
    SelectionState,
    per_class_object_counts,
    unit_costs_by_image,
)
from ofds.errors import DatasetError

DEFAULT_KCENTERS_BATCH = 512


@dataclass(frozen=True)
class SimilarityTable:
    """Per-class image similarity scores, e.g. text-to-image retrieval scores."""

    scores: dict[int, dict[str, float]]  # class_id -> image_id -> score

    def validate(self, dataset: ProposalDataset) -> None:
        image_ids = {im.image_id for im in dataset.images}
        for class_id in range(len(dataset.classes)):
            if class_id not in self.scores:
                raise DatasetError(f"similarity table missing class {class_id}")
            per_class = self.scores[class_id]
            missing = image_ids - per_class.keys()
            if missing:
                raise DatasetError(
                    f"similarity table missing {len(missing)} image scores for class {class_id}"
                )
            unknown = per_class.keys() - image_ids
            if unknown:
                raise DatasetError(
                    f"similarity table references unknown image '{sorted(unknown)[0]}'"
                )

    @staticmethod
    def load(path: Union[str, Path]) -> "SimilarityTable":
        scores: dict[int, dict[str, float]] = {}
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    rec = json.loads(line)
                    class_id = int(rec["class_id"])
                    image_id = str(rec["image_id"])
                    score = float(rec["score"])
                except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                    raise DatasetError(f"similarity table line {lineno}: malformed record") from None
                per_class = scores.setdefault(class_id, {})
                if image_id in per_class:
                    raise DatasetError(
                        f"similarity table line {lineno}: duplicate score for "
                        f"class {class_id}, image '{image_id}'"
                    )
                per_class[image_id] = score
        return SimilarityTable(scores)

    def save(self, path: Union[str, Path], dataset: ProposalDataset) -> None:
        # Class-major, image ingestion order: byte-stable output.
        from ofds.io import atomic_write_text

        lines = []
        for class_id in range(len(dataset.classes)):
            per_class = self.scores[class_id]
            for im in dataset.images:
                lines.append(
                    json.dumps(
                        {"class_id": class_id, "image_id": im.image_id, "score": per_class[im.image_id]},
                        separators=(",", ":"),
                    )
                )
        atomic_write_text(path, "\n".join(lines) + "\n" if lines else "")


def _image_feature_matrix(dataset: ProposalDataset) -> np.ndarray:
    missing = [im.image_id for im in dataset.images if im.image_feature is None]
    if missing:
        raise DatasetError(
            f"{len(missing)} images lack image_features (first: '{missing[0]}')"
        )
    return np.stack([im.image_feature for im in dataset.images]).astype(np.float64)


def _finish(
    dataset: ProposalDataset,
    method: str,
    seed: int,
    budget: BudgetSpec,
    state: SelectionState,
    unit_mode: UnitMode,
) -> SelectionManifest:
    image_ids = [e.image_id for e in state.entries]
    return SelectionManifest(
        method=method,
        seed=seed,
        budget=budget,
        selected=tuple(state.entries),
        realized_units=state.spent_units,
        per_class_objects=per_class_object_counts(dataset, image_ids, unit_mode),
        unit_mode=unit_mode,
    )


def select_random(
    dataset: ProposalDataset,
    budget: BudgetSpec,
    seed: int = 0,
    unit_mode: UnitMode = "proposals",
) -> SelectionManifest:
    """Uniformly shuffled images taken until the budget is spent."""
    costs = unit_costs_by_image(dataset, unit_mode)
    rng = np.random.default_rng(seed)
    order = rng.permutation(dataset.n_images)
    state = SelectionState()
    for step, idx in enumerate(order):
        if state.spent_units >= budget.units:
            break
        image_id = dataset.images[int(idx)].image_id
        state.add(SelectionEntry(image_id=image_id, step=step), costs[image_id])
    return _finish(dataset, "random", seed, budget, state, unit_mode)


def select_kcenters(
    dataset: ProposalDataset,
    budget: BudgetSpec,
    seed: int = 0,
    batch_size: int = DEFAULT_KCENTERS_BATCH,
    unit_mode: UnitMode = "proposals",
    start_index: int | None = None,
) -> SelectionManifest:
    """Batched greedy k-centers over image features.

    Starts from a seeded random image (or ``start_index``) and repeatedly
    adds the candidate farthest from the selected set, scanning a sliding
    batch of candidates cycled in ingestion order. With ``batch_size`` at
    least the image count this is exact greedy k-centers. Ties fall to the
    lower ingestion index.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    feats = _image_feature_matrix(dataset)
    n = dataset.n_images
    costs = unit_costs_by_image(dataset, unit_mode)
    rng = np.random.default_rng(seed)
    first = int(rng.integers(n)) if start_index is None else int(start_index)

    selected = np.zeros(n, dtype=bool)
    min_dist = np.full(n, np.inf)
    state = SelectionState()
    cursor = 0

    def take(idx: int, step: int, dist: float | None) -> None:
        selected[idx] = True
        diffs = feats - feats[idx]
        np.minimum(min_dist, np.sqrt(np.einsum("ij,ij->i", diffs, diffs)), out=min_dist)
        image_id = dataset.images[idx].image_id
        state.add(SelectionEntry(image_id=image_id, step=step, distance=dist), costs[image_id])

    take(first, 0, None)
    step = 1
    while state.spent_units < budget.units and not selected.all():
        batch: list[int] = []
        scanned = 0
        while len(batch) < batch_size and scanned < n:
            j = (cursor + scanned) % n
            scanned += 1
            if not selected[j]:
                batch.append(j)
        cursor = (cursor + scanned) % n
        cand = np.array(batch, dtype=np.intp)
        d = min_dist[cand]
        best = np.max(d)
        # Lowest global index among the batch maxima.
        pick = int(np.min(cand[d == best]))
        take(pick, step, float(best))
        step += 1
    return _finish(dataset, "kcenters", seed, budget, state, unit_mode)


def select_prototypes(
    dataset: ProposalDataset,
    budget: BudgetSpec,
    seed: int = 0,
    unit_mode: UnitMode = "proposals",
) -> SelectionManifest:
    """Cluster image features with k = class count and take images nearest
    the centers, round-robin across clusters, until the budget is spent."""
    feats = _image_feature_matrix(dataset)
    m = len(dataset.classes)
    if m > dataset.n_images:
        raise DatasetError(f"{m} classes exceed the {dataset.n_images} available images")
    costs = unit_costs_by_image(dataset, unit_mode)
    clustering = kmeans(feats, m, seed=seed)
    diffs = feats - clustering.centroids[clustering.assignment]
    dist = np.sqrt(np.einsum("ij,ij->i", diffs, diffs))

    ranked: list[list[int]] = []
    for j in range(m):
        members = np.flatnonzero(clustering.assignment == j)
        ranked.append(sorted(members.tolist(), key=lambda i: (dist[i], i)))

    state = SelectionState()
    step = 0
    rank = 0
    while state.spent_units < budget.units:
        advanced = False
        for j in range(m):
            if rank >= len(ranked[j]):
                continue
            advanced = True
            idx = ranked[j][rank]
            image_id = dataset.images[idx].image_id
            state.add(
                SelectionEntry(
                    image_id=image_id, step=step, cluster=j, distance=float(dist[idx])
                ),
                costs[image_id],
            )
            step += 1
            if state.spent_units >= budget.units:
                break
        if not advanced:
            break
        rank += 1
    return _finish(dataset, "prototypes", seed, budget, state, unit_mode)


def select_retrieval(
    dataset: ProposalDataset,
    similarity: SimilarityTable,
    budget: BudgetSpec,
    unit_mode: UnitMode = "proposals",
) -> SelectionManifest:
    """Top-similarity images per class with the budget split evenly.

    Classes are processed in alphabetical name order; each receives an even
    share of the still-unspent budget, so budget a class cannot use rolls
    into the remaining classes. Budget is charged in annotation units.
    """
    similarity.validate(dataset)
    costs = unit_costs_by_image(dataset, unit_mode)
    ingestion = {im.image_id: i for i, im in enumerate(dataset.images)}
    name_order = sorted(range(len(dataset.classes)), key=lambda c: dataset.classes.name_of(c))

    state = SelectionState()
    step = 0
    for pos, class_id in enumerate(name_order):
        remaining_classes = len(name_order) - pos
        share = (budget.units - state.spent_units) / remaining_classes
        if share <= 0:
            break
        per_class = similarity.scores[class_id]
        order = sorted(per_class.items(), key=lambda kv: (-kv[1], ingestion[kv[0]]))
        class_spent = 0
        for image_id, score in order:
            if class_spent >= share or state.spent_units >= budget.units:
                break
            if image_id in state:
                continue
            state.add(
                SelectionEntry(
                    image_id=image_id, step=step, class_id=class_id, distance=float(score)
                ),
                costs[image_id],
            )
            class_spent += costs[image_id]
            step += 1
    return _finish(dataset, "retrieval", 0, budget, state, unit_mode)
