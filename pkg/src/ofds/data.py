"""Canonical in-memory data model for proposal datasets.

A dataset bundles images, a class table, object proposals with dense
feature vectors, and optional ground-truth objects. Datasets are
immutable after construction; every operation returns a new dataset.
Proposal order is ingestion order and defines all index-based
tie-breaking downstream.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Literal, Optional, Sequence

import numpy as np

from ofds.errors import DatasetError

DEFAULT_FEATURE_DIM = 256
DEFAULT_MIN_BOX_AREA_FRACTION = 0.0005

Bbox = tuple[float, float, float, float]


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    width: int
    height: int
    # Image-level embedding, used only by image-feature baselines. May have
    # a different dimension than the object features.
    image_feature: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise DatasetError(
                f"image '{self.image_id}': width and height must be positive"
            )
        if self.image_feature is not None:
            vec = np.asarray(self.image_feature, dtype=np.float32)
            if vec.ndim != 1:
                raise DatasetError(f"image '{self.image_id}': image_feature must be a vector")
            object.__setattr__(self, "image_feature", vec)


@dataclass(frozen=True)
class ObjectProposal:
    image_id: str
    class_id: int
    confidence: float
    bbox: Bbox
    feature_index: int

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise DatasetError(
                f"proposal on '{self.image_id}': confidence {self.confidence} outside [0, 1]"
            )
        if self.bbox[2] < 0 or self.bbox[3] < 0:
            raise DatasetError(
                f"proposal on '{self.image_id}': negative bbox width/height"
            )


@dataclass(frozen=True)
class GroundTruthObject:
    image_id: str
    class_id: int
    bbox: Bbox


@dataclass(frozen=True)
class ClassTable:
    """Ordered (class_id, class_name) table; ids contiguous from 0."""

    names: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(set(self.names)) != len(self.names):
            raise DatasetError("class names must be unique")

    def __len__(self) -> int:
        return len(self.names)

    def name_of(self, class_id: int) -> str:
        return self.names[class_id]

    def id_of(self, name: str) -> int:
        return self.names.index(name)

    @staticmethod
    def from_pairs(pairs: Sequence[tuple[int, str]]) -> "ClassTable":
        ids = sorted(i for i, _ in pairs)
        if ids != list(range(len(pairs))):
            raise DatasetError("class ids must be contiguous from 0")
        by_id = dict(pairs)
        return ClassTable(tuple(by_id[i] for i in range(len(pairs))))


@dataclass(frozen=True, eq=False)
class ProposalDataset:
    images: tuple[ImageRecord, ...]
    classes: ClassTable
    proposals: tuple[ObjectProposal, ...]
    features: np.ndarray  # float32, shape (len(proposals), dim)
    ground_truth: tuple[GroundTruthObject, ...] = ()
    feature_dim: int = field(default=DEFAULT_FEATURE_DIM)

    def __post_init__(self) -> None:
        feats = np.asarray(self.features, dtype=np.float32)
        if feats.ndim == 1 and feats.size == 0:
            feats = feats.reshape(0, self.feature_dim)
        if feats.ndim != 2:
            raise DatasetError("features must be a 2-D matrix (proposals x dim)")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "feature_dim", int(feats.shape[1]))
        self._validate()

    def _validate(self) -> None:
        ids = [im.image_id for im in self.images]
        if len(set(ids)) != len(ids):
            raise DatasetError("duplicate image_id in dataset")
        if self.features.shape[0] != len(self.proposals):
            raise DatasetError(
                f"feature count mismatch: {len(self.proposals)} proposals, "
                f"{self.features.shape[0]} feature rows"
            )
        image_ids = set(ids)
        n_classes = len(self.classes)
        seen_rows: set[int] = set()
        for p in self.proposals:
            if p.image_id not in image_ids:
                raise DatasetError(f"proposal references unknown image_id '{p.image_id}'")
            if not 0 <= p.class_id < n_classes:
                raise DatasetError(f"proposal references unknown class_id {p.class_id}")
            if not 0 <= p.feature_index < self.features.shape[0]:
                raise DatasetError(f"feature_index {p.feature_index} out of range")
            if p.feature_index in seen_rows:
                raise DatasetError(f"duplicate feature_index {p.feature_index}")
            seen_rows.add(p.feature_index)
        for g in self.ground_truth:
            if g.image_id not in image_ids:
                raise DatasetError(f"ground truth references unknown image_id '{g.image_id}'")
            if not 0 <= g.class_id < n_classes:
                raise DatasetError(f"ground truth references unknown class_id {g.class_id}")
        img_dims = {
            im.image_feature.shape[0] for im in self.images if im.image_feature is not None
        }
        if len(img_dims) > 1:
            raise DatasetError(f"inconsistent image_feature dimensions: {sorted(img_dims)}")

    # Field-for-field equality (numpy arrays compared by value).
    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ProposalDataset):
            return NotImplemented
        if self.classes != other.classes or self.proposals != other.proposals:
            return False
        if self.ground_truth != other.ground_truth:
            return False
        if len(self.images) != len(other.images):
            return False
        for a, b in zip(self.images, other.images):
            if (a.image_id, a.width, a.height) != (b.image_id, b.width, b.height):
                return False
            if (a.image_feature is None) != (b.image_feature is None):
                return False
            if a.image_feature is not None and not np.array_equal(a.image_feature, b.image_feature):
                return False
        return self.features.shape == other.features.shape and np.array_equal(
            self.features, other.features
        )

    @property
    def n_images(self) -> int:
        return len(self.images)

    @property
    def n_proposals(self) -> int:
        return len(self.proposals)

    def image(self, image_id: str) -> ImageRecord:
        try:
            return self._image_index()[image_id]
        except KeyError:
            raise DatasetError(f"unknown image_id '{image_id}'") from None

    def _image_index(self) -> dict[str, ImageRecord]:
        cached = self.__dict__.get("_images_by_id")
        if cached is None:
            cached = {im.image_id: im for im in self.images}
            self.__dict__["_images_by_id"] = cached
        return cached

    def feature_of(self, proposal: ObjectProposal) -> np.ndarray:
        return self.features[proposal.feature_index]

    def keep_proposals(self, keep: Sequence[bool]) -> "ProposalDataset":
        """New dataset with the masked proposal subsequence.

        The feature matrix is compacted to the kept rows; kept proposals are
        re-pointed at rows 0..m-1 in their ingestion order.
        """
        kept = [p for p, k in zip(self.proposals, keep) if k]
        rows = np.array([p.feature_index for p in kept], dtype=np.intp)
        feats = self.features[rows] if len(kept) else self.features[:0]
        new_props = tuple(replace(p, feature_index=i) for i, p in enumerate(kept))
        return ProposalDataset(
            images=self.images,
            classes=self.classes,
            proposals=new_props,
            features=feats,
            ground_truth=self.ground_truth,
            feature_dim=self.feature_dim,
        )

    def remove_images(self, image_ids: set[str]) -> "ProposalDataset":
        """Drop whole images along with their proposals and ground truth."""
        images = tuple(im for im in self.images if im.image_id not in image_ids)
        gt = tuple(g for g in self.ground_truth if g.image_id not in image_ids)
        keep = [p.image_id not in image_ids for p in self.proposals]
        kept = [p for p, k in zip(self.proposals, keep) if k]
        rows = np.array([p.feature_index for p in kept], dtype=np.intp)
        feats = self.features[rows] if len(kept) else self.features[:0]
        new_props = tuple(replace(p, feature_index=i) for i, p in enumerate(kept))
        return ProposalDataset(
            images=images,
            classes=self.classes,
            proposals=new_props,
            features=feats,
            ground_truth=gt,
            feature_dim=self.feature_dim,
        )


def filter_small_boxes(
    dataset: ProposalDataset,
    min_area_fraction: float = DEFAULT_MIN_BOX_AREA_FRACTION,
    *,
    keep_small: bool = False,
) -> ProposalDataset:
    """Drop noisy proposals by relative box area.

    By default removes proposals whose box area is strictly below
    ``min_area_fraction`` of the image area; a fraction exactly equal to the
    threshold is retained. With ``keep_small=True`` the rule inverts and only
    boxes strictly below the threshold survive. Images are retained even when
    all their proposals are removed.
    """
    if not 0.0 <= min_area_fraction < 1.0:
        raise ValueError("min_area_fraction must be in [0, 1)")
    by_id = {im.image_id: im for im in dataset.images}

    def fraction(p: ObjectProposal) -> float:
        im = by_id[p.image_id]
        return (p.bbox[2] * p.bbox[3]) / (im.width * im.height)

    if keep_small:
        keep = [fraction(p) < min_area_fraction for p in dataset.proposals]
    else:
        keep = [fraction(p) >= min_area_fraction for p in dataset.proposals]
    return dataset.keep_proposals(keep)


def filter_by_confidence(dataset: ProposalDataset, threshold: float) -> ProposalDataset:
    """Keep proposals with confidence at or above the threshold."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must be in [0, 1]")
    return dataset.keep_proposals([p.confidence >= threshold for p in dataset.proposals])


def class_counts(dataset: ProposalDataset) -> np.ndarray:
    """Per-class proposal counts, length M, summing to the proposal total."""
    counts = np.zeros(len(dataset.classes), dtype=np.int64)
    for p in dataset.proposals:
        counts[p.class_id] += 1
    return counts


UnitMode = Literal["proposals", "ground_truth"]
