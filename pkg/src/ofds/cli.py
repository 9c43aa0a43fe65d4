"""Command-line interface: validate, calibrate, select, balance, stats,
synth, compare.

Exit codes: 0 success, 1 usage error, 2 data/validation error,
3 infeasible request. Output files are written atomically. Set OFDS_LOG
to DEBUG/INFO/WARNING to control verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional

from ofds import io as ofds_io
from ofds.baselines import SimilarityTable
from ofds.calibration import (
    DEFAULT_FPR_TARGET,
    DEFAULT_IOU_THRESHOLD,
    match_proposals,
    sweep_thresholds,
    threshold_for_f1,
    threshold_for_fpr,
)
from ofds.data import (
    DEFAULT_MIN_BOX_AREA_FRACTION,
    ProposalDataset,
    filter_by_confidence,
    filter_small_boxes,
)
from ofds.engine import BudgetSpec, SelectionManifest, estimate_avg_units, total_units
from ofds.errors import DatasetError, InfeasibleError
from ofds.metrics import balance_report, subset_stats
from ofds.report import METHODS, compare, run_selection, write_report
from ofds.synth import SynthSpec, generate, similarity_from_features

log = logging.getLogger("ofds")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INFEASIBLE = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on usage errors; the contract here is 1.
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="ofds", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="command")

    def add_dataset_args(p: argparse.ArgumentParser) -> None:
        p.add_argument("--proposals", required=True, help="manifest JSON-Lines path")
        p.add_argument("--features", required=True, help="feature blob path")

    def add_filter_args(p: argparse.ArgumentParser) -> None:
        p.add_argument(
            "--confidence-threshold",
            type=float,
            default=0.0,
            help="drop proposals below this confidence (default 0)",
        )
        p.add_argument(
            "--min-box-area",
            type=float,
            default=DEFAULT_MIN_BOX_AREA_FRACTION,
            help="drop boxes smaller than this fraction of image area (default 0.0005)",
        )
        p.add_argument(
            "--keep-small-boxes",
            action="store_true",
            help="invert the box filter: keep only boxes below --min-box-area",
        )

    def add_budget_args(p: argparse.ArgumentParser) -> None:
        p.add_argument("--budget", type=int, help="budget in annotation units")
        p.add_argument(
            "--budget-frac", type=float, help="budget as a fraction of total dataset units"
        )
        p.add_argument("--avg-units", type=float, help="expected annotation units per image")
        p.add_argument(
            "--estimate-avg-units",
            action="store_true",
            help="estimate avg units from the surviving proposals",
        )
        p.add_argument(
            "--unit-mode",
            choices=["proposals", "ground_truth"],
            default="proposals",
            help="how image costs are counted (default proposals)",
        )

    p_validate = sub.add_parser("validate", help="load and validate a dataset")
    add_dataset_args(p_validate)

    p_cal = sub.add_parser("calibrate", help="pick a confidence threshold from ground truth")
    add_dataset_args(p_cal)
    p_cal.add_argument("--mode", choices=["fpr", "f1"], required=True)
    p_cal.add_argument("--target", type=float, default=DEFAULT_FPR_TARGET, help="FPR target")
    p_cal.add_argument("--iou", type=float, default=DEFAULT_IOU_THRESHOLD, help="matching IoU")
    p_cal.add_argument("--out", help="write the JSON report here (default stdout)")

    p_sel = sub.add_parser("select", help="select images under an annotation budget")
    add_dataset_args(p_sel)
    add_filter_args(p_sel)
    add_budget_args(p_sel)
    p_sel.add_argument("--method", choices=list(METHODS), required=True)
    p_sel.add_argument("--seed", type=int, default=0)
    p_sel.add_argument("--similarity", help="similarity table JSON-Lines (retrieval)")
    p_sel.add_argument("--kcenters-batch", type=int, default=512)
    p_sel.add_argument("--out", required=True, help="selection manifest output path")

    p_bal = sub.add_parser("balance", help="class balance score of a selection")
    add_dataset_args(p_bal)
    p_bal.add_argument("--selection", required=True)
    p_bal.add_argument("--out", help="write the JSON report here (default stdout)")

    p_stats = sub.add_parser("stats", help="subset statistics of a selection")
    add_dataset_args(p_stats)
    p_stats.add_argument("--selection", required=True)
    p_stats.add_argument("--out", help="write the JSON report here (default stdout)")

    p_synth = sub.add_parser("synth", help="generate a synthetic dataset")
    p_synth.add_argument("--spec", required=True, help="synthesis spec JSON path")
    p_synth.add_argument("--out", required=True, help="output directory")

    p_cmp = sub.add_parser("compare", help="method x budget x seed comparison grid")
    add_dataset_args(p_cmp)
    add_filter_args(p_cmp)
    p_cmp.add_argument("--methods", default="ofds,random", help="comma-separated method list")
    p_cmp.add_argument("--budget-fracs", default="0.05", help="comma-separated budget fractions")
    p_cmp.add_argument("--seeds", default="0", help="comma-separated seeds")
    p_cmp.add_argument("--avg-units", type=float)
    p_cmp.add_argument(
        "--unit-mode", choices=["proposals", "ground_truth"], default="proposals"
    )
    p_cmp.add_argument("--similarity", help="similarity table (needed for retrieval)")
    p_cmp.add_argument("--no-figures", action="store_true", help="skip the PNG figures")
    p_cmp.add_argument("--out", required=True, help="CSV output path")

    return parser


def _load_filtered(args: argparse.Namespace) -> ProposalDataset:
    dataset = ofds_io.load_dataset(args.proposals, args.features)
    if getattr(args, "min_box_area", 0.0) > 0.0 or getattr(args, "keep_small_boxes", False):
        dataset = filter_small_boxes(
            dataset, args.min_box_area, keep_small=args.keep_small_boxes
        )
    if getattr(args, "confidence_threshold", 0.0) > 0.0:
        dataset = filter_by_confidence(dataset, args.confidence_threshold)
    return dataset


def _resolve_budget(args: argparse.Namespace, dataset: ProposalDataset) -> BudgetSpec:
    if (args.budget is None) == (args.budget_frac is None):
        raise UsageError("exactly one of --budget / --budget-frac is required")
    if args.budget is not None:
        units = args.budget
    else:
        if not 0.0 < args.budget_frac <= 1.0:
            raise UsageError("--budget-frac must be in (0, 1]")
        units = max(1, int(args.budget_frac * total_units(dataset, args.unit_mode)))
    if args.method == "ofds":
        if args.avg_units is None and not args.estimate_avg_units:
            raise UsageError("ofds needs --avg-units or --estimate-avg-units")
    if args.avg_units is not None:
        avg = args.avg_units
    elif args.estimate_avg_units:
        avg = estimate_avg_units(dataset, args.unit_mode)
        log.info("estimated avg units per image: %.3f", avg)
    else:
        avg = 1.0
    return BudgetSpec(units=units, avg_units=avg, class_count=len(dataset.classes))


def _emit_json(payload: dict, out: Optional[str]) -> None:
    text = json.dumps(payload, indent=2) + "\n"
    if out:
        ofds_io.atomic_write_text(out, text)
    else:
        sys.stdout.write(text)


def _cmd_validate(args: argparse.Namespace) -> int:
    dataset = ofds_io.load_dataset(args.proposals, args.features)
    print(
        f"ok: {dataset.n_images} images, {len(dataset.classes)} classes, "
        f"{dataset.n_proposals} proposals, {len(dataset.ground_truth)} ground-truth objects, "
        f"feature dim {dataset.feature_dim}"
    )
    return EXIT_OK


def _cmd_calibrate(args: argparse.Namespace) -> int:
    dataset = ofds_io.load_dataset(args.proposals, args.features)
    if not dataset.ground_truth:
        raise DatasetError("calibration requires ground-truth records in the manifest")
    matched = match_proposals(dataset.proposals, dataset.ground_truth, args.iou)
    curve = sweep_thresholds(matched, len(dataset.ground_truth))
    if args.mode == "fpr":
        choice = threshold_for_fpr(curve, args.target)
    else:
        choice = threshold_for_f1(curve)
    payload = {
        "mode": args.mode,
        "threshold": choice.threshold,
        "fpr": choice.fpr,
        "precision": choice.precision,
        "recall": choice.recall,
        "f1": choice.f1,
        "satisfied": choice.satisfied,
        "curve": curve.to_records(),
    }
    _emit_json(payload, args.out)
    if not choice.satisfied:
        print(
            f"infeasible: no threshold reaches FPR <= {args.target}",
            file=sys.stderr,
        )
        return EXIT_INFEASIBLE
    return EXIT_OK


def _cmd_select(args: argparse.Namespace) -> int:
    dataset = _load_filtered(args)
    budget = _resolve_budget(args, dataset)
    similarity = None
    if args.method == "retrieval":
        if not args.similarity:
            raise UsageError("retrieval requires --similarity")
        similarity = SimilarityTable.load(args.similarity)
    manifest = run_selection(
        dataset,
        args.method,
        budget,
        seed=args.seed,
        unit_mode=args.unit_mode,
        similarity=similarity,
        kcenters_batch=args.kcenters_batch,
    )
    ofds_io.atomic_write_text(args.out, manifest.to_json() + "\n")
    print(
        f"selected {len(manifest.selected)} images, {manifest.realized_units} units "
        f"(budget {budget.units})"
    )
    return EXIT_OK


def _load_selection(path: str) -> SelectionManifest:
    try:
        return SelectionManifest.from_json(Path(path).read_text(encoding="utf-8"))
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DatasetError(f"selection manifest '{path}': {exc}") from None


def _cmd_balance(args: argparse.Namespace) -> int:
    dataset = ofds_io.load_dataset(args.proposals, args.features)
    report = balance_report(_load_selection(args.selection), dataset)
    _emit_json(report.to_dict(), args.out)
    return EXIT_OK


def _cmd_stats(args: argparse.Namespace) -> int:
    dataset = ofds_io.load_dataset(args.proposals, args.features)
    stats = subset_stats(_load_selection(args.selection), dataset)
    _emit_json(stats.to_dict(), args.out)
    return EXIT_OK


def _cmd_synth(args: argparse.Namespace) -> int:
    try:
        spec = SynthSpec.from_json_file(args.spec)
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DatasetError(f"synth spec '{args.spec}': {exc}") from None
    dataset = generate(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ofds_io.write_dataset(dataset, out / "manifest.jsonl", out / "features.bin")
    similarity_from_features(dataset).save(out / "similarity.jsonl", dataset)
    print(
        f"wrote {dataset.n_images} images / {dataset.n_proposals} proposals to {out}"
    )
    return EXIT_OK


def _cmd_compare(args: argparse.Namespace) -> int:
    dataset = _load_filtered(args)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise UsageError(f"unknown methods: {', '.join(unknown)}")
    fractions = [float(v) for v in args.budget_fracs.split(",") if v.strip()]
    seeds = [int(v) for v in args.seeds.split(",") if v.strip()]
    if not methods or not fractions or not seeds:
        raise UsageError("methods, budget fractions, and seeds must be non-empty")
    similarity = SimilarityTable.load(args.similarity) if args.similarity else None
    if "retrieval" in methods and similarity is None:
        raise UsageError("retrieval requires --similarity")
    rows = compare(
        dataset,
        methods,
        fractions,
        seeds,
        avg_units=args.avg_units,
        unit_mode=args.unit_mode,
        similarity=similarity,
    )
    written = write_report(rows, args.out, figures=not args.no_figures)
    print(f"wrote {len(rows)} rows to {written[0]}" + (
        f" (+{len(written) - 1} figures)" if len(written) > 1 else ""
    ))
    return EXIT_OK


_COMMANDS = {
    "validate": _cmd_validate,
    "calibrate": _cmd_calibrate,
    "select": _cmd_select,
    "balance": _cmd_balance,
    "stats": _cmd_stats,
    "synth": _cmd_synth,
    "compare": _cmd_compare,
}


def run(argv: Optional[list[str]] = None) -> int:
    logging.basicConfig(
        level=os.environ.get("OFDS_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DatasetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
