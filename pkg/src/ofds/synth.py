"""Synthetic proposal datasets with controllable class structure.

Features per class are drawn from a mixture of Gaussian modes, objects are
packed onto images with configurable co-occurrence between classes, and
rare-class settings are produced by pruning whole images. Ground truth
mirrors the proposals and confidences are fixed at 1.0, so confidence
filtering is a no-op unless a test injects noise itself.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from ofds.baselines import SimilarityTable
from ofds.data import (
    ClassTable,
    GroundTruthObject,
    ImageRecord,
    ObjectProposal,
    ProposalDataset,
)
from ofds.errors import DatasetError

DEFAULT_IMAGE_SIZE = (640, 480)


@dataclass(frozen=True)
class ClassSpec:
    name: str
    objects: int
    modes: int = 1
    spread: float = 0.5
    mode_scale: float = 10.0
    means: Optional[tuple[tuple[float, ...], ...]] = None

    def __post_init__(self) -> None:
        if self.objects < 0:
            raise DatasetError(f"class '{self.name}': negative object count")
        if self.modes < 1:
            raise DatasetError(f"class '{self.name}': needs at least one mode")


@dataclass(frozen=True)
class SynthSpec:
    classes: tuple[ClassSpec, ...]
    feature_dim: int = 16
    seed: int = 0
    objects_per_image: tuple[int, int] = (1, 4)
    cooccurrence: Optional[tuple[tuple[float, ...], ...]] = None
    duplicate_fraction: float = 0.0
    imbalance_factors: Optional[tuple[float, ...]] = None
    image_size: tuple[int, int] = DEFAULT_IMAGE_SIZE
    image_feature_noise: float = 0.1

    def __post_init__(self) -> None:
        if not self.classes:
            raise DatasetError("at least one class required")
        if not 0.0 <= self.duplicate_fraction < 1.0:
            raise DatasetError("duplicate_fraction must be in [0, 1)")
        lo, hi = self.objects_per_image
        if lo < 1 or hi < lo:
            raise DatasetError("objects_per_image must be a range with 1 <= lo <= hi")
        total = sum(c.objects for c in self.classes)
        if total == 0 and self.duplicate_fraction > 0:
            raise DatasetError("cannot duplicate images of a dataset with zero objects")
        m = len(self.classes)
        if self.cooccurrence is not None:
            if len(self.cooccurrence) != m or any(len(r) != m for r in self.cooccurrence):
                raise DatasetError("cooccurrence must be an MxM matrix")
            if any(not 0.0 <= v <= 1.0 for row in self.cooccurrence for v in row):
                raise DatasetError("cooccurrence entries must be probabilities")
        if self.imbalance_factors is not None:
            if len(self.imbalance_factors) != m:
                raise DatasetError("imbalance_factors must have one entry per class")
            if any(not 0.0 < f <= 1.0 for f in self.imbalance_factors):
                raise DatasetError("imbalance_factors must be in (0, 1]")

    @staticmethod
    def from_dict(d: dict) -> "SynthSpec":
        classes = tuple(
            ClassSpec(
                name=c["name"],
                objects=c["objects"],
                modes=c.get("modes", 1),
                spread=c.get("spread", 0.5),
                mode_scale=c.get("mode_scale", 10.0),
                means=tuple(tuple(m) for m in c["means"]) if c.get("means") else None,
            )
            for c in d["classes"]
        )
        return SynthSpec(
            classes=classes,
            feature_dim=d.get("feature_dim", 16),
            seed=d.get("seed", 0),
            objects_per_image=tuple(d.get("objects_per_image", (1, 4))),
            cooccurrence=tuple(tuple(r) for r in d["cooccurrence"]) if d.get("cooccurrence") else None,
            duplicate_fraction=d.get("duplicate_fraction", 0.0),
            imbalance_factors=tuple(d["imbalance_factors"]) if d.get("imbalance_factors") else None,
            image_size=tuple(d.get("image_size", DEFAULT_IMAGE_SIZE)),
            image_feature_noise=d.get("image_feature_noise", 0.1),
        )

    @staticmethod
    def from_json_file(path: Union[str, Path]) -> "SynthSpec":
        with open(path, "r", encoding="utf-8") as fh:
            return SynthSpec.from_dict(json.load(fh))


def generate(spec: SynthSpec) -> ProposalDataset:
    """Deterministic dataset for a spec, imbalance and duplicates included."""
    dataset = _generate_base(spec)
    if spec.imbalance_factors is not None:
        dataset = apply_imbalance(dataset, spec.imbalance_factors)
    if spec.duplicate_fraction > 0.0:
        dataset = inject_duplicates(dataset, spec.duplicate_fraction, spec.seed)
    return dataset


def _generate_base(spec: SynthSpec) -> ProposalDataset:
    rng = np.random.default_rng(spec.seed)
    m = len(spec.classes)
    dim = spec.feature_dim
    width, height = spec.image_size

    mode_means: list[np.ndarray] = []
    for c in spec.classes:
        if c.means is not None:
            means = np.asarray(c.means, dtype=np.float64)
            if means.shape != (c.modes, dim):
                raise DatasetError(f"class '{c.name}': means must be modes x feature_dim")
        else:
            means = rng.normal(0.0, 1.0, size=(c.modes, dim)) * c.mode_scale
        mode_means.append(means)

    remaining = np.array([c.objects for c in spec.classes], dtype=np.int64)
    cooc = (
        np.asarray(spec.cooccurrence, dtype=np.float64)
        if spec.cooccurrence is not None
        else np.zeros((m, m))
    )

    images: list[ImageRecord] = []
    proposals: list[ObjectProposal] = []
    features: list[np.ndarray] = []
    lo, hi = spec.objects_per_image

    while remaining.sum() > 0:
        image_id = f"img_{len(images):05d}"
        primary = int(rng.choice(m, p=remaining / remaining.sum()))
        n_objects = int(rng.integers(lo, hi + 1))
        placed = 0
        image_feats: list[np.ndarray] = []
        for slot in range(n_objects):
            if remaining.sum() == 0:
                break
            if slot == 0:
                class_id = primary
            else:
                weights = np.where(np.arange(m) == primary, 1.0, cooc[primary])
                weights = weights * (remaining > 0)
                if weights.sum() <= 0:
                    weights = remaining.astype(np.float64)
                class_id = int(rng.choice(m, p=weights / weights.sum()))
            if remaining[class_id] == 0:
                continue
            remaining[class_id] -= 1
            c = spec.classes[class_id]
            mode = int(rng.integers(c.modes))
            feat = mode_means[class_id][mode] + rng.normal(0.0, c.spread, size=dim)
            # Boxes stay comfortably above the default tiny-box filter.
            bw = float(rng.uniform(0.05, 0.4) * width)
            bh = float(rng.uniform(0.05, 0.4) * height)
            bx = float(rng.uniform(0, width - bw))
            by = float(rng.uniform(0, height - bh))
            proposals.append(
                ObjectProposal(
                    image_id=image_id,
                    class_id=class_id,
                    confidence=1.0,
                    bbox=(bx, by, bw, bh),
                    feature_index=len(features),
                )
            )
            features.append(feat.astype(np.float32))
            image_feats.append(feat)
            placed += 1
        if placed == 0:
            continue
        img_feat = np.mean(image_feats, axis=0) + rng.normal(
            0.0, spec.image_feature_noise, size=dim
        )
        images.append(
            ImageRecord(
                image_id=image_id,
                width=width,
                height=height,
                image_feature=img_feat.astype(np.float32),
            )
        )

    feats = (
        np.stack(features).astype(np.float32) if features else np.zeros((0, dim), dtype=np.float32)
    )
    ground_truth = tuple(
        GroundTruthObject(image_id=p.image_id, class_id=p.class_id, bbox=p.bbox)
        for p in proposals
    )
    return ProposalDataset(
        images=tuple(images),
        classes=ClassTable(tuple(c.name for c in spec.classes)),
        proposals=tuple(proposals),
        features=feats,
        ground_truth=ground_truth,
        feature_dim=dim,
    )


def apply_imbalance(dataset: ProposalDataset, factors: Sequence[float]) -> ProposalDataset:
    """Prune whole images until each class keeps at most factor x original objects.

    Greedy and fully deterministic: while some class is over target, remove
    the image that takes the most excess objects away while costing the
    fewest objects of classes already at or under target; ties fall to the
    lowest ingestion index.
    """
    m = len(dataset.classes)
    if len(factors) != m:
        raise ValueError("factors must have one entry per class")
    if any(not 0.0 < f <= 1.0 for f in factors):
        raise ValueError("factors must be in (0, 1]")
    counts = np.zeros(m, dtype=np.int64)
    per_image: dict[str, np.ndarray] = {im.image_id: np.zeros(m, dtype=np.int64) for im in dataset.images}
    for p in dataset.proposals:
        counts[p.class_id] += 1
        per_image[p.image_id][p.class_id] += 1
    targets = np.array(
        [math.floor(f * c) for f, c in zip(factors, counts)], dtype=np.int64
    )

    removed: set[str] = set()
    order = {im.image_id: i for i, im in enumerate(dataset.images)}
    while True:
        over = counts - targets
        if (over <= 0).all():
            break
        best_id = None
        best_key = None
        for image_id, vec in per_image.items():
            if image_id in removed:
                continue
            helps = int(np.minimum(vec, np.maximum(over, 0)).sum())
            if helps == 0:
                continue
            collateral = int((vec - np.minimum(vec, np.maximum(over, 0))).sum())
            key = (collateral, -helps, order[image_id])
            if best_key is None or key < best_key:
                best_key = key
                best_id = image_id
        if best_id is None:
            break
        removed.add(best_id)
        counts -= per_image[best_id]
    return dataset.remove_images(removed)


def inject_duplicates(dataset: ProposalDataset, fraction: float, seed: int = 0) -> ProposalDataset:
    """Append exact copies of randomly chosen images.

    round(fraction * image count) images get duplicated under new ids with
    byte-identical features, boxes, and ground truth.
    """
    if not 0.0 <= fraction < 1.0:
        raise ValueError("fraction must be in [0, 1)")
    n_copies = round(fraction * dataset.n_images)
    if n_copies == 0:
        return dataset
    rng = np.random.default_rng(seed)
    chosen = rng.choice(dataset.n_images, size=n_copies, replace=False)

    images = list(dataset.images)
    proposals = list(dataset.proposals)
    ground_truth = list(dataset.ground_truth)
    feature_rows = [dataset.features]
    next_row = dataset.features.shape[0]
    by_image: dict[str, list[ObjectProposal]] = {}
    for p in dataset.proposals:
        by_image.setdefault(p.image_id, []).append(p)
    gt_by_image: dict[str, list[GroundTruthObject]] = {}
    for g in dataset.ground_truth:
        gt_by_image.setdefault(g.image_id, []).append(g)

    for k, idx in enumerate(chosen):
        src = dataset.images[int(idx)]
        new_id = f"{src.image_id}_dup{k}"
        images.append(
            ImageRecord(
                image_id=new_id,
                width=src.width,
                height=src.height,
                image_feature=None if src.image_feature is None else src.image_feature.copy(),
            )
        )
        for p in by_image.get(src.image_id, []):
            feature_rows.append(dataset.features[p.feature_index : p.feature_index + 1])
            proposals.append(
                ObjectProposal(
                    image_id=new_id,
                    class_id=p.class_id,
                    confidence=p.confidence,
                    bbox=p.bbox,
                    feature_index=next_row,
                )
            )
            next_row += 1
        for g in gt_by_image.get(src.image_id, []):
            ground_truth.append(
                GroundTruthObject(image_id=new_id, class_id=g.class_id, bbox=g.bbox)
            )

    return ProposalDataset(
        images=tuple(images),
        classes=dataset.classes,
        proposals=tuple(proposals),
        features=np.concatenate(feature_rows, axis=0),
        ground_truth=tuple(ground_truth),
        feature_dim=dataset.feature_dim,
    )


def similarity_from_features(dataset: ProposalDataset) -> SimilarityTable:
    """Similarity table for retrieval baselines on synthetic data.

    Scores each (class, image) as the negative Euclidean distance between
    the image embedding and the mean object feature of the class.
    """
    m = len(dataset.classes)
    sums = np.zeros((m, dataset.feature_dim), dtype=np.float64)
    counts = np.zeros(m, dtype=np.int64)
    for p in dataset.proposals:
        sums[p.class_id] += dataset.features[p.feature_index]
        counts[p.class_id] += 1
    centroids = np.where(counts[:, None] > 0, sums / np.maximum(counts, 1)[:, None], 0.0)
    scores: dict[int, dict[str, float]] = {c: {} for c in range(m)}
    for im in dataset.images:
        if im.image_feature is None:
            raise DatasetError(f"image '{im.image_id}' lacks an image_feature")
        vec = im.image_feature.astype(np.float64)
        for c in range(m):
            scores[c][im.image_id] = -float(np.linalg.norm(vec - centroids[c]))
    return SimilarityTable(scores)
