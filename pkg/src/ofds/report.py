"""Method comparison grids: CSV reports with figures rendered alongside."""

from __future__ import annotations

import csv
import io as _io
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from ofds.baselines import (
    SimilarityTable,
    select_kcenters,
    select_prototypes,
    select_random,
    select_retrieval,
)
from ofds.data import ProposalDataset, UnitMode
from ofds.engine import BudgetSpec, SelectionManifest, estimate_avg_units, select, total_units
from ofds.errors import DatasetError
from ofds.io import atomic_write_text
from ofds.metrics import balance_report, subset_stats

log = logging.getLogger("ofds.report")

METHODS = ("ofds", "random", "kcenters", "prototypes", "retrieval")

CSV_COLUMNS = (
    "method",
    "budget_units",
    "budget_fraction",
    "seed",
    "image_count",
    "realized_units",
    "realized_fraction",
    "balance_score",
    "covered_classes",
    "class_count",
    "all_covered",
)


def run_selection(
    dataset: ProposalDataset,
    method: str,
    budget: BudgetSpec,
    seed: int = 0,
    unit_mode: UnitMode = "proposals",
    similarity: Optional[SimilarityTable] = None,
    kcenters_batch: int = 512,
) -> SelectionManifest:
    """Dispatch one selection run by method name."""
    if method == "ofds":
        return select(dataset, budget, seed=seed, unit_mode=unit_mode)
    if method == "random":
        return select_random(dataset, budget, seed=seed, unit_mode=unit_mode)
    if method == "kcenters":
        return select_kcenters(dataset, budget, seed=seed, batch_size=kcenters_batch, unit_mode=unit_mode)
    if method == "prototypes":
        return select_prototypes(dataset, budget, seed=seed, unit_mode=unit_mode)
    if method == "retrieval":
        if similarity is None:
            raise DatasetError("retrieval requires a similarity table")
        return select_retrieval(dataset, similarity, budget, unit_mode=unit_mode)
    raise ValueError(f"unknown method '{method}'")


@dataclass(frozen=True)
class CompareRow:
    method: str
    budget_units: int
    budget_fraction: float
    seed: int
    image_count: int
    realized_units: int
    realized_fraction: float
    balance_score: float
    covered_classes: int
    class_count: int
    all_covered: bool

    def as_csv(self) -> list:
        return [
            self.method,
            self.budget_units,
            f"{self.budget_fraction:.6f}",
            self.seed,
            self.image_count,
            self.realized_units,
            f"{self.realized_fraction:.6f}",
            f"{self.balance_score:.6f}",
            self.covered_classes,
            self.class_count,
            int(self.all_covered),
        ]


def compare(
    dataset: ProposalDataset,
    methods: Sequence[str],
    budget_fractions: Sequence[float],
    seeds: Sequence[int],
    avg_units: Optional[float] = None,
    unit_mode: UnitMode = "proposals",
    similarity: Optional[SimilarityTable] = None,
) -> list[CompareRow]:
    """Grid of method x budget x seed, rows sorted by (method, budget, seed)."""
    total = total_units(dataset, unit_mode)
    n_o = avg_units if avg_units is not None else estimate_avg_units(dataset, unit_mode)
    rows: list[CompareRow] = []
    for method in sorted(methods):
        for frac in sorted(budget_fractions):
            units = max(1, int(frac * total))
            budget = BudgetSpec(units=units, avg_units=n_o, class_count=len(dataset.classes))
            for seed in sorted(seeds):
                manifest = run_selection(
                    dataset, method, budget, seed=seed, unit_mode=unit_mode, similarity=similarity
                )
                stats = subset_stats(manifest, dataset)
                balance = balance_report(manifest, dataset)
                rows.append(
                    CompareRow(
                        method=method,
                        budget_units=units,
                        budget_fraction=frac,
                        seed=seed,
                        image_count=stats.image_count,
                        realized_units=stats.realized_units,
                        realized_fraction=stats.realized_fraction,
                        balance_score=balance.score,
                        covered_classes=sum(stats.per_class_covered.values()),
                        class_count=len(dataset.classes),
                        all_covered=stats.all_covered,
                    )
                )
    return rows


def rows_to_csv(rows: Sequence[CompareRow]) -> str:
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow(row.as_csv())
    return buf.getvalue()


def write_report(rows: Sequence[CompareRow], out_csv: Union[str, Path], figures: bool = True) -> list[Path]:
    """Write the CSV and, by default, companion figures next to it."""
    out_csv = Path(out_csv)
    atomic_write_text(out_csv, rows_to_csv(rows))
    written = [out_csv]
    if figures and rows:
        written.extend(render_figures(rows, out_csv))
    return written


def render_figures(rows: Sequence[CompareRow], out_csv: Path) -> list[Path]:
    """Balance and realized-budget curves per method, as PNGs beside the CSV."""
    methods = sorted({r.method for r in rows})
    fractions = sorted({r.budget_fraction for r in rows})

    def mean_series(metric) -> dict[str, list[float]]:
        out = {}
        for method in methods:
            series = []
            for frac in fractions:
                vals = [metric(r) for r in rows if r.method == method and r.budget_fraction == frac]
                series.append(sum(vals) / len(vals) if vals else float("nan"))
            out[method] = series
        return out

    paths = []
    specs = [
        ("balance", "Class balance score", mean_series(lambda r: r.balance_score)),
        ("realized", "Realized budget fraction", mean_series(lambda r: r.realized_fraction)),
    ]
    for suffix, ylabel, series in specs:
        fig, ax = plt.subplots(figsize=(6, 4))
        for method in methods:
            ax.plot([f * 100 for f in fractions], series[method], marker="o", label=method)
        if suffix == "realized":
            ax.plot(
                [f * 100 for f in fractions],
                fractions,
                linestyle="--",
                color="gray",
                label="target",
            )
        ax.set_xlabel("Budget (% of annotation units)")
        ax.set_ylabel(ylabel)
        ax.legend()
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        path = out_csv.with_name(f"{out_csv.stem}_{suffix}.png")
        fig.savefig(path, dpi=120)
        plt.close(fig)
        paths.append(path)
        log.info("wrote figure %s", path)
    return paths
