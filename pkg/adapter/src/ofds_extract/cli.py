"""ofds-extract: produce ofds wire files from detector dumps or a model.

Exit codes: 0 success, 1 usage error, 2 conversion/validation error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional

from ofds_extract.errors import AdapterError
from ofds_extract.extract import ExtractionJob, extract, similarity_table


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        print(f"usage error: {message}", file=sys.stderr)
        sys.exit(1)


def build_parser() -> _Parser:
    parser = _Parser(prog="ofds-extract", description=__doc__)
    parser.add_argument("--images", help="image directory (model mode)")
    parser.add_argument("--classes", help="text file with one class name per line")
    parser.add_argument("--out", required=True, help="output directory")
    mode = parser.add_mutually_exclusive_group(required=True)
    mode.add_argument("--model", help="registered detector plugin id")
    mode.add_argument("--convert", help="COCO-style detection dump to convert")
    parser.add_argument("--feature-dim", type=int, default=None)
    parser.add_argument(
        "--with-similarity",
        action="store_true",
        help="also emit similarity.jsonl (dump must carry scores)",
    )
    return parser


def read_class_names(path: Optional[str]) -> Optional[tuple[str, ...]]:
    if path is None:
        return None
    names = [
        line.strip()
        for line in Path(path).read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    if not names:
        raise AdapterError(f"class file '{path}' is empty")
    return tuple(names)


def run(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        job = ExtractionJob(
            output_dir=Path(args.out),
            image_dir=Path(args.images) if args.images else None,
            dump_path=Path(args.convert) if args.convert else None,
            model=args.model,
            class_names=read_class_names(args.classes),
            feature_dim=args.feature_dim,
        )
        manifest_path, features_path = extract(job)
        print(f"wrote {manifest_path} and {features_path}")
        if args.with_similarity:
            print(f"wrote {similarity_table(job)}")
        return 0
    except AdapterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
