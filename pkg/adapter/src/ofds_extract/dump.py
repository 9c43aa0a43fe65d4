"""COCO-style detection dump parsing for convert mode.

Expected dump shape (a single JSON object)::

    {
      "images":      [{"id": 1, "file_name": "a.jpg", "width": 640, "height": 480}],
      "categories":  [{"id": 7, "name": "car"}],
      "annotations": [{"image_id": 1, "category_id": 7, "bbox": [x, y, w, h],
                       "score": 0.93, "feature": [..per-object vector..]}],
      "ground_truth":     [{"image_id": 1, "category_id": 7, "bbox": [x, y, w, h]}],
      "image_embeddings": {"1": [..image-level vector..]},
      "similarities":     [{"category_id": 7, "image_id": 1, "score": 0.7}]
    }

The last three keys are optional. Category and image ids may be any
integers; they are remapped to contiguous class ids and string image ids
(the file name, falling back to the stringified id).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from ofds_extract.errors import AdapterError


@dataclass
class ParsedDump:
    class_names: list[str]
    images: list[dict]           # {id, width, height, image_feature?}
    proposals: list[dict]        # {image_id, class_id, confidence, bbox, feature_index}
    features: list[list[float]]  # one row per proposal
    ground_truth: list[dict] = field(default_factory=list)
    similarities: list[dict] = field(default_factory=list)
    feature_dim: Optional[int] = None


def parse_dump(path: Path, class_names: Optional[Sequence[str]] = None,
               feature_dim: Optional[int] = None) -> ParsedDump:
    """Validate and normalize a dump into wire-format records.

    Proposals are ordered by (image file name, annotation input index);
    class order follows ``class_names`` when given, else ascending
    category id.
    """
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise AdapterError(f"dump '{path}': invalid JSON ({exc.msg})") from None
    if not isinstance(raw, dict):
        raise AdapterError(f"dump '{path}': expected a JSON object")

    categories = raw.get("categories", [])
    if not categories:
        raise AdapterError("dump has no categories")
    name_by_cat = {}
    for cat in categories:
        try:
            name_by_cat[int(cat["id"])] = str(cat["name"])
        except (KeyError, TypeError, ValueError):
            raise AdapterError(f"malformed category entry: {cat!r}") from None

    if class_names is not None:
        missing = [n for n in class_names if n not in name_by_cat.values()]
        if missing:
            raise AdapterError(f"class names not present in dump: {missing}")
        ordered_names = list(class_names)
    else:
        ordered_names = [name_by_cat[c] for c in sorted(name_by_cat)]
    class_id_by_cat = {
        cat: ordered_names.index(name)
        for cat, name in name_by_cat.items()
        if name in ordered_names
    }

    embeddings = raw.get("image_embeddings", {}) or {}
    images = []
    key_by_raw_id = {}
    for image in raw.get("images", []):
        try:
            raw_id = image["id"]
            key = str(image.get("file_name") or raw_id)
            width = int(image["width"])
            height = int(image["height"])
        except (KeyError, TypeError, ValueError):
            raise AdapterError(f"malformed image entry: {image!r}") from None
        if raw_id in key_by_raw_id or key in {i["id"] for i in images}:
            raise AdapterError(f"duplicate image id or file name: {key}")
        key_by_raw_id[raw_id] = key
        images.append(
            {
                "id": key,
                "width": width,
                "height": height,
                "image_feature": embeddings.get(str(raw_id)),
            }
        )
    images.sort(key=lambda im: im["id"])

    annotations = []
    for index, ann in enumerate(raw.get("annotations", [])):
        try:
            raw_image = ann["image_id"]
            cat = int(ann["category_id"])
            bbox = [float(v) for v in ann["bbox"]]
            score = float(ann["score"])
            feature = [float(v) for v in ann["feature"]]
        except (KeyError, TypeError, ValueError):
            raise AdapterError(f"annotation {index}: missing or malformed fields") from None
        if raw_image not in key_by_raw_id:
            raise AdapterError(f"annotation {index}: unknown image_id {raw_image!r}")
        if cat not in class_id_by_cat:
            if class_names is not None and cat in name_by_cat:
                continue  # detection for a category outside the requested classes
            raise AdapterError(f"annotation {index}: unknown category_id {cat}")
        if len(bbox) != 4:
            raise AdapterError(f"annotation {index}: bbox must have 4 values")
        if not 0.0 <= score <= 1.0:
            raise AdapterError(f"annotation {index}: score {score} outside [0, 1]")
        annotations.append((key_by_raw_id[raw_image], index, cat, bbox, score, feature))
    annotations.sort(key=lambda a: (a[0], a[1]))

    proposals = []
    features = []
    dim = feature_dim
    for key, index, cat, bbox, score, feature in annotations:
        if dim is None:
            dim = len(feature)
        elif len(feature) != dim:
            raise AdapterError(
                f"annotation {index}: feature dimension {len(feature)} != {dim}"
            )
        proposals.append(
            {
                "image_id": key,
                "class_id": class_id_by_cat[cat],
                "confidence": score,
                "bbox": bbox,
                "feature_index": len(features),
            }
        )
        features.append(feature)

    ground_truth = []
    for index, gt in enumerate(raw.get("ground_truth", []) or []):
        try:
            raw_image = gt["image_id"]
            cat = int(gt["category_id"])
            bbox = [float(v) for v in gt["bbox"]]
        except (KeyError, TypeError, ValueError):
            raise AdapterError(f"ground_truth {index}: malformed entry") from None
        if cat not in class_id_by_cat and class_names is not None and cat in name_by_cat:
            continue
        if raw_image not in key_by_raw_id or cat not in class_id_by_cat:
            raise AdapterError(f"ground_truth {index}: unknown image or category")
        ground_truth.append(
            {"image_id": key_by_raw_id[raw_image], "class_id": class_id_by_cat[cat], "bbox": bbox}
        )

    similarities = []
    for index, sim in enumerate(raw.get("similarities", []) or []):
        try:
            raw_image = sim["image_id"]
            cat = int(sim["category_id"])
            score = float(sim["score"])
        except (KeyError, TypeError, ValueError):
            raise AdapterError(f"similarities {index}: malformed entry") from None
        if cat not in class_id_by_cat and class_names is not None and cat in name_by_cat:
            continue
        if raw_image not in key_by_raw_id or cat not in class_id_by_cat:
            raise AdapterError(f"similarities {index}: unknown image or category")
        similarities.append(
            {
                "class_id": class_id_by_cat[cat],
                "image_id": key_by_raw_id[raw_image],
                "score": score,
            }
        )

    return ParsedDump(
        class_names=ordered_names,
        images=images,
        proposals=proposals,
        features=features,
        ground_truth=ground_truth,
        similarities=similarities,
        feature_dim=dim,
    )
