"""Extraction jobs: run a registered detector plugin or convert a dump,
then emit wire-format files the selection engine can load directly."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

from ofds_extract.dump import ParsedDump, parse_dump
from ofds_extract.errors import AdapterError
from ofds_extract.writer import write_feature_blob, write_manifest, write_similarity_table

DEFAULT_FEATURE_DIM = 256

# A model plugin takes the job and returns a ParsedDump-shaped payload.
# Real detector integrations register here; tests and CI use convert mode.
ModelFn = Callable[["ExtractionJob"], ParsedDump]
_MODELS: dict[str, ModelFn] = {}


def register_model(name: str, fn: ModelFn) -> None:
    _MODELS[name] = fn


@dataclass(frozen=True)
class ExtractionJob:
    output_dir: Path
    image_dir: Optional[Path] = None
    dump_path: Optional[Path] = None
    model: Optional[str] = None
    class_names: Optional[tuple[str, ...]] = None
    feature_dim: Optional[int] = None
    batch_size: int = 16

    def __post_init__(self) -> None:
        object.__setattr__(self, "output_dir", Path(self.output_dir))
        if self.dump_path is not None:
            object.__setattr__(self, "dump_path", Path(self.dump_path))
        if self.image_dir is not None:
            object.__setattr__(self, "image_dir", Path(self.image_dir))
        if (self.dump_path is None) == (self.model is None):
            raise AdapterError("exactly one of dump_path (convert) or model is required")
        if self.model is not None and self.image_dir is None:
            raise AdapterError("model mode requires an image directory")
        if self.model is not None and not self.class_names:
            raise AdapterError("model mode requires class names (the prompt source)")


def _produce(job: ExtractionJob) -> ParsedDump:
    if job.dump_path is not None:
        return parse_dump(job.dump_path, job.class_names, job.feature_dim)
    fn = _MODELS.get(job.model)
    if fn is None:
        known = ", ".join(sorted(_MODELS)) or "none registered"
        raise AdapterError(f"unknown model '{job.model}' (available: {known})")
    return fn(job)


def extract(job: ExtractionJob) -> tuple[Path, Path]:
    """Write manifest + feature blob for the job; returns their paths."""
    parsed = _produce(job)
    dim = parsed.feature_dim if parsed.feature_dim is not None else (
        job.feature_dim if job.feature_dim is not None else DEFAULT_FEATURE_DIM
    )
    manifest_path = job.output_dir / "manifest.jsonl"
    features_path = job.output_dir / "features.bin"
    write_manifest(
        manifest_path,
        parsed.class_names,
        parsed.images,
        parsed.proposals,
        parsed.ground_truth,
    )
    write_feature_blob(features_path, parsed.features, dim=dim)
    return manifest_path, features_path


def similarity_table(job: ExtractionJob) -> Path:
    """Write the per-(class, image) score table; class-major, image order.

    Convert mode requires the dump to carry a complete ``similarities``
    section; model plugins may compute scores instead.
    """
    parsed = _produce(job)
    n_classes = len(parsed.class_names)
    by_pair = {}
    for record in parsed.similarities:
        by_pair[(record["class_id"], record["image_id"])] = record["score"]
    missing = [
        (class_id, image["id"])
        for class_id in range(n_classes)
        for image in parsed.images
        if (class_id, image["id"]) not in by_pair
    ]
    if missing:
        raise AdapterError(
            f"similarity scores missing for {len(missing)} (class, image) pairs, "
            f"first: {missing[0]}"
        )
    records = [
        {"class_id": class_id, "image_id": image["id"], "score": by_pair[(class_id, image["id"])]}
        for class_id in range(n_classes)
        for image in parsed.images
    ]
    path = job.output_dir / "similarity.jsonl"
    write_similarity_table(path, records)
    return path
