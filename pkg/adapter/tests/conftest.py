"""Fixture dumps for convert-mode tests.

Dumps deliberately arrive messy: unsorted images, non-contiguous category
ids, interleaved annotations. The adapter must normalize all of it.
"""

from __future__ import annotations

import json
import shutil
import subprocess

import pytest

OFDS_BIN = shutil.which("ofds")


def ofds(*args: str) -> subprocess.CompletedProcess:
    assert OFDS_BIN, "the ofds CLI must be installed for adapter tests"
    return subprocess.run([OFDS_BIN, *args], capture_output=True, text=True)


def dump_full() -> dict:
    """Two classes, four images, everything populated."""
    return {
        "images": [
            {"id": 2, "file_name": "b.jpg", "width": 640, "height": 480},
            {"id": 1, "file_name": "a.jpg", "width": 640, "height": 480},
            {"id": 4, "file_name": "d.jpg", "width": 320, "height": 240},
            {"id": 3, "file_name": "c.jpg", "width": 640, "height": 480},
        ],
        "categories": [
            {"id": 7, "name": "car"},
            {"id": 3, "name": "bus"},
        ],
        "annotations": [
            {"image_id": 2, "category_id": 7, "bbox": [5, 5, 100, 80], "score": 0.9,
             "feature": [1.0, 0.0, 0.0, 0.5]},
            {"image_id": 1, "category_id": 3, "bbox": [10, 10, 200, 150], "score": 0.8,
             "feature": [0.0, 1.0, 0.0, 0.25]},
            {"image_id": 4, "category_id": 7, "bbox": [0, 0, 50, 40], "score": 0.7,
             "feature": [1.0, 0.25, 0.0, 0.5]},
            {"image_id": 1, "category_id": 7, "bbox": [30, 40, 120, 90], "score": 0.95,
             "feature": [0.9, 0.1, 0.0, 0.4]},
            {"image_id": 3, "category_id": 3, "bbox": [15, 20, 300, 200], "score": 0.6,
             "feature": [0.1, 0.9, 0.1, 0.3]},
            {"image_id": 2, "category_id": 3, "bbox": [400, 100, 150, 150], "score": 0.85,
             "feature": [0.0, 0.8, 0.2, 0.2]},
        ],
        "ground_truth": [
            {"image_id": 1, "category_id": 7, "bbox": [32, 41, 118, 88]},
            {"image_id": 2, "category_id": 3, "bbox": [398, 99, 152, 148]},
        ],
        "image_embeddings": {
            "1": [0.5, 0.5, 0.1],
            "2": [0.4, 0.6, 0.2],
            "3": [0.1, 0.9, 0.3],
            "4": [0.9, 0.2, 0.4],
        },
        "similarities": [
            {"category_id": cat, "image_id": img, "score": round(0.1 * img + (0.05 if cat == 7 else 0.0), 3)}
            for cat in (3, 7)
            for img in (1, 2, 3, 4)
        ],
    }


def dump_empty() -> dict:
    """Valid dump with zero detections on every image."""
    return {
        "images": [{"id": 1, "file_name": "only.jpg", "width": 100, "height": 100}],
        "categories": [{"id": 1, "name": "thing"}],
        "annotations": [],
    }


def dump_large() -> dict:
    """Deterministic three-class dump, big enough for a real selection."""
    import random

    rng = random.Random(13)
    images = [
        {"id": k, "file_name": f"img_{k:03d}.jpg", "width": 640, "height": 480}
        for k in range(30)
    ]
    categories = [{"id": 10, "name": "cat"}, {"id": 20, "name": "dog"}, {"id": 30, "name": "cow"}]
    annotations = []
    for k in range(30):
        for _ in range(rng.randint(1, 4)):
            cat = rng.choice([10, 20, 30])
            base = {10: [1.0, 0.0, 0.0], 20: [0.0, 1.0, 0.0], 30: [0.0, 0.0, 1.0]}[cat]
            feature = [v * 10 + rng.gauss(0, 0.3) for v in base] + [rng.gauss(0, 0.3)]
            annotations.append(
                {
                    "image_id": k,
                    "category_id": cat,
                    "bbox": [rng.uniform(0, 300), rng.uniform(0, 200), 120, 100],
                    "score": round(rng.uniform(0.5, 1.0), 4),
                    "feature": [round(v, 6) for v in feature],
                }
            )
    return {"images": images, "categories": categories, "annotations": annotations}


@pytest.fixture
def dumps(tmp_path):
    paths = {}
    for name, payload in [
        ("full", dump_full()),
        ("empty", dump_empty()),
        ("large", dump_large()),
    ]:
        path = tmp_path / f"{name}.json"
        path.write_text(json.dumps(payload), encoding="utf-8")
        paths[name] = path
    return paths
