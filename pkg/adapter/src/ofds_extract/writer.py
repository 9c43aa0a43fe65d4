"""Writers for the ofds wire formats, implemented from the format spec.

Manifest: UTF-8 JSON Lines with class / image / proposal / gt records.
Feature blob: magic ``OFDSFEAT``, version u32=1, count u64, dim u32
(little-endian), then count*dim float32 row-major; row i belongs to
feature_index i and the count must equal the number of proposal lines.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path
from typing import Iterable, Optional, Sequence

BLOB_MAGIC = b"OFDSFEAT"
BLOB_VERSION = 1
_HEADER = struct.Struct("<8sIQI")


def _atomic_write(path: Path, payload: bytes) -> None:
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


def _dumps(record: dict) -> str:
    return json.dumps(record, ensure_ascii=False, separators=(",", ":"))


def write_manifest(
    path: Path,
    classes: Sequence[str],
    images: Sequence[dict],
    proposals: Sequence[dict],
    ground_truth: Sequence[dict] = (),
) -> None:
    """Emit manifest lines: classes, then images, proposals, gt in order.

    ``images`` entries: {id, width, height, image_feature?}; ``proposals``:
    {image_id, class_id, confidence, bbox, feature_index}; ``ground_truth``:
    {image_id, class_id, bbox}.
    """
    lines = []
    for class_id, name in enumerate(classes):
        lines.append(_dumps({"type": "class", "id": class_id, "name": name}))
    for image in images:
        record = {
            "type": "image",
            "id": image["id"],
            "width": image["width"],
            "height": image["height"],
        }
        if image.get("image_feature") is not None:
            record["image_feature"] = [float(v) for v in image["image_feature"]]
        lines.append(_dumps(record))
    for proposal in proposals:
        lines.append(
            _dumps(
                {
                    "type": "proposal",
                    "image_id": proposal["image_id"],
                    "class_id": proposal["class_id"],
                    "confidence": proposal["confidence"],
                    "bbox": [float(v) for v in proposal["bbox"]],
                    "feature_index": proposal["feature_index"],
                }
            )
        )
    for gt in ground_truth:
        lines.append(
            _dumps(
                {
                    "type": "gt",
                    "image_id": gt["image_id"],
                    "class_id": gt["class_id"],
                    "bbox": [float(v) for v in gt["bbox"]],
                }
            )
        )
    _atomic_write(Path(path), ("\n".join(lines) + "\n" if lines else "").encode("utf-8"))


def write_feature_blob(path: Path, rows: Sequence[Sequence[float]], dim: Optional[int] = None) -> None:
    """Pack float32 rows behind the blob header.

    ``dim`` must be given when there are no rows (the header still carries
    a dimension).
    """
    count = len(rows)
    if count:
        dims = {len(r) for r in rows}
        if len(dims) != 1:
            raise ValueError(f"inconsistent feature dimensions: {sorted(dims)}")
        row_dim = dims.pop()
        if dim is not None and dim != row_dim:
            raise ValueError(f"feature dimension {row_dim} does not match requested {dim}")
        dim = row_dim
    elif dim is None:
        raise ValueError("dim required for an empty blob")
    payload = bytearray(_HEADER.pack(BLOB_MAGIC, BLOB_VERSION, count, dim))
    for row in rows:
        payload += struct.pack(f"<{dim}f", *row)
    _atomic_write(Path(path), bytes(payload))


def write_similarity_table(path: Path, records: Iterable[dict]) -> None:
    """JSON Lines of {class_id, image_id, score}, in the given order."""
    lines = [
        _dumps({"class_id": r["class_id"], "image_id": r["image_id"], "score": r["score"]})
        for r in records
    ]
    _atomic_write(Path(path), ("\n".join(lines) + "\n" if lines else "").encode("utf-8"))
