"""Bit-exact file formats: JSON-Lines manifest and binary feature blob.

Manifest line kinds::

    {"type":"class","id":0,"name":"car"}
    {"type":"image","id":"img_0","width":640,"height":480,"image_feature":[...]?}
    {"type":"proposal","image_id":"img_0","class_id":0,"confidence":0.9,
     "bbox":[x,y,w,h],"feature_index":0}
    {"type":"gt","image_id":"img_0","class_id":0,"bbox":[x,y,w,h]}

Feature blob layout (little-endian): magic ``OFDSFEAT`` (8 bytes),
version u32 = 1, count u64, dim u32, then count*dim float32 values
row-major; row i holds the vector for feature_index i.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path
from typing import Union

import numpy as np

from ofds.data import (
    ClassTable,
    GroundTruthObject,
    ImageRecord,
    ObjectProposal,
    ProposalDataset,
)
from ofds.errors import DatasetError

BLOB_MAGIC = b"OFDSFEAT"
BLOB_VERSION = 1
_HEADER = struct.Struct("<8sIQI")

PathLike = Union[str, Path]


def read_feature_blob(path: PathLike) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise DatasetError("feature blob: truncated header")
    magic, version, count, dim = _HEADER.unpack_from(raw)
    if magic != BLOB_MAGIC:
        raise DatasetError("feature blob: bad magic")
    if version != BLOB_VERSION:
        raise DatasetError(f"feature blob: unsupported version {version}")
    expected = _HEADER.size + count * dim * 4
    if len(raw) != expected:
        raise DatasetError(
            f"feature blob: payload size {len(raw) - _HEADER.size} does not match "
            f"header count={count} dim={dim}"
        )
    data = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size)
    return data.reshape(count, dim).copy()


def write_feature_blob(path: PathLike, features: np.ndarray) -> None:
    feats = np.ascontiguousarray(features, dtype="<f4")
    if feats.ndim != 2:
        raise ValueError("features must be 2-D")
    header = _HEADER.pack(BLOB_MAGIC, BLOB_VERSION, feats.shape[0], feats.shape[1])
    _atomic_write_bytes(Path(path), header + feats.tobytes())


def load_dataset(manifest_path: PathLike, features_path: PathLike) -> ProposalDataset:
    """Parse and validate a manifest + feature blob into a dataset.

    Line order in the manifest is ingestion order for each record kind.
    """
    features = read_feature_blob(features_path)
    class_pairs: list[tuple[int, str]] = []
    images: list[ImageRecord] = []
    proposals: list[ObjectProposal] = []
    ground_truth: list[GroundTruthObject] = []

    with open(manifest_path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"manifest line {lineno}: invalid JSON ({exc.msg})") from None
            try:
                kind = rec["type"]
                if kind == "class":
                    class_pairs.append((int(rec["id"]), str(rec["name"])))
                elif kind == "image":
                    feat = rec.get("image_feature")
                    images.append(
                        ImageRecord(
                            image_id=str(rec["id"]),
                            width=int(rec["width"]),
                            height=int(rec["height"]),
                            image_feature=None if feat is None else np.asarray(feat, dtype=np.float32),
                        )
                    )
                elif kind == "proposal":
                    proposals.append(
                        ObjectProposal(
                            image_id=str(rec["image_id"]),
                            class_id=int(rec["class_id"]),
                            confidence=float(rec["confidence"]),
                            bbox=tuple(float(v) for v in rec["bbox"]),
                            feature_index=int(rec["feature_index"]),
                        )
                    )
                elif kind == "gt":
                    ground_truth.append(
                        GroundTruthObject(
                            image_id=str(rec["image_id"]),
                            class_id=int(rec["class_id"]),
                            bbox=tuple(float(v) for v in rec["bbox"]),
                        )
                    )
                else:
                    raise DatasetError(f"manifest line {lineno}: unknown type '{kind}'")
            except KeyError as exc:
                raise DatasetError(f"manifest line {lineno}: missing field {exc}") from None
            except (TypeError, ValueError) as exc:
                if isinstance(exc, DatasetError):
                    raise
                raise DatasetError(f"manifest line {lineno}: {exc}") from None

    if features.shape[0] != len(proposals):
        raise DatasetError(
            f"feature count mismatch: manifest has {len(proposals)} proposals, "
            f"blob has {features.shape[0]} rows"
        )
    classes = ClassTable.from_pairs(class_pairs)
    return ProposalDataset(
        images=tuple(images),
        classes=classes,
        proposals=tuple(proposals),
        features=features,
        ground_truth=tuple(ground_truth),
        feature_dim=features.shape[1],
    )


def write_dataset(dataset: ProposalDataset, manifest_path: PathLike, features_path: PathLike) -> None:
    """Serialize a dataset; ``load_dataset`` round-trips it field-for-field."""
    lines: list[str] = []
    for class_id, name in enumerate(dataset.classes.names):
        lines.append(_dumps({"type": "class", "id": class_id, "name": name}))
    for im in dataset.images:
        rec: dict = {"type": "image", "id": im.image_id, "width": im.width, "height": im.height}
        if im.image_feature is not None:
            rec["image_feature"] = [float(v) for v in im.image_feature]
        lines.append(_dumps(rec))
    for p in dataset.proposals:
        lines.append(
            _dumps(
                {
                    "type": "proposal",
                    "image_id": p.image_id,
                    "class_id": p.class_id,
                    "confidence": p.confidence,
                    "bbox": list(p.bbox),
                    "feature_index": p.feature_index,
                }
            )
        )
    for g in dataset.ground_truth:
        lines.append(
            _dumps({"type": "gt", "image_id": g.image_id, "class_id": g.class_id, "bbox": list(g.bbox)})
        )
    _atomic_write_bytes(Path(manifest_path), ("\n".join(lines) + "\n" if lines else "").encode("utf-8"))
    write_feature_blob(features_path, dataset.features)


def _dumps(obj: dict) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def _atomic_write_bytes(path: Path, payload: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: PathLike, text: str) -> None:
    _atomic_write_bytes(Path(path), text.encode("utf-8"))
