"""Shared dataset builders for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from ofds.data import (
    ClassTable,
    GroundTruthObject,
    ImageRecord,
    ObjectProposal,
    ProposalDataset,
)
from ofds.synth import ClassSpec, SynthSpec, generate


def make_dataset(
    proposals: list[tuple[str, int, float, tuple[float, float, float, float]]],
    features: np.ndarray,
    class_names: tuple[str, ...] = ("a", "b", "c"),
    image_size: tuple[int, int] = (100, 100),
    image_features: dict[str, np.ndarray] | None = None,
    ground_truth: list[tuple[str, int, tuple[float, float, float, float]]] | None = None,
    extra_images: tuple[str, ...] = (),
) -> ProposalDataset:
    """Build a dataset from (image_id, class_id, confidence, bbox) tuples.

    Images are created in first-mention order; feature row i belongs to
    proposal i.
    """
    seen: list[str] = []
    for image_id, *_ in proposals:
        if image_id not in seen:
            seen.append(image_id)
    for image_id, _, _ in ground_truth or []:
        if image_id not in seen:
            seen.append(image_id)
    for image_id in extra_images:
        if image_id not in seen:
            seen.append(image_id)
    image_features = image_features or {}
    images = tuple(
        ImageRecord(
            image_id=i,
            width=image_size[0],
            height=image_size[1],
            image_feature=image_features.get(i),
        )
        for i in seen
    )
    props = tuple(
        ObjectProposal(image_id=i, class_id=c, confidence=conf, bbox=bbox, feature_index=k)
        for k, (i, c, conf, bbox) in enumerate(proposals)
    )
    gts = tuple(
        GroundTruthObject(image_id=i, class_id=c, bbox=bbox) for i, c, bbox in (ground_truth or [])
    )
    feats = np.asarray(features, dtype=np.float32)
    if feats.ndim == 1:
        feats = feats.reshape(len(props), -1)
    return ProposalDataset(
        images=images,
        classes=ClassTable(class_names),
        proposals=props,
        features=feats,
        ground_truth=gts,
    )


def box(x: float = 10, y: float = 10, w: float = 30, h: float = 30):
    return (x, y, w, h)


@pytest.fixture
def small_synth() -> ProposalDataset:
    spec = SynthSpec(
        classes=tuple(ClassSpec(name=f"c{i}", objects=30, modes=2) for i in range(3)),
        feature_dim=8,
        seed=7,
        objects_per_image=(1, 4),
    )
    return generate(spec)
