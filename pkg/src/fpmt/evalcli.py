"""Ablation grid runner and report emission.

Runs the full pipeline per (variant, labels-per-class, seed) cell, collects
CR/DR/F1 rows, and aggregates means (and stds) over seeds into a table with
variants as rows and label budgets as columns, each cell rendered as
"CR/DR/F1". Cell failures are recorded without aborting the rest of the
grid. Variants: ``mt``, ``pmt``, ``fpmt``, plus ``supervised`` (stages 1-2
only) as the no-semi-supervision baseline.

Non-GAN variants cannot exceed the real per-class row budget, so their
unlabeled count is clamped to what the base dataset can actually supply;
the GAN variant gets the full requested budget via synthetic balancing.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .data import DEFAULT_DELTA, Dataset, generate_synthetic, load_csv
from .errors import ConfigError, ParseError
from .metrics import MetricRow
from .pipeline import PipelineConfig, feasible_unlabeled_per_class, run_fpmt

GRID_VARIANTS = ("mt", "pmt", "fpmt", "supervised")


@dataclass
class AblationGrid:
    variants: list[str] = field(default_factory=lambda: ["mt", "pmt", "fpmt"])
    label_counts: list[int] = field(default_factory=lambda: [50, 100, 1500])
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    # data source: a CSV path, or the synthetic generator (fresh per seed)
    data_csv: str | None = None
    n_normal: int = 6000
    n_incident: int = 1200
    delta: float = DEFAULT_DELTA
    base_config: PipelineConfig = field(default_factory=PipelineConfig)

    def __post_init__(self):
        if not (self.variants and self.label_counts and self.seeds):
            raise ConfigError("grid must name at least one variant, label count, seed")
        unknown = [v for v in self.variants if v not in GRID_VARIANTS]
        if unknown:
            raise ConfigError(f"unknown variants {unknown}; choose from {GRID_VARIANTS}")


@dataclass
class AblationResult:
    rows: list[MetricRow]
    failures: list[tuple[str, int, int, str]]  # (variant, labels, seed, error)

    def aggregate(self) -> dict[tuple[str, int], dict[str, float]]:
        """Mean and std over seeds per (variant, labels_per_class) cell."""
        cells: dict[tuple[str, int], list[MetricRow]] = {}
        for row in self.rows:
            cells.setdefault((row.variant, row.labels_per_class), []).append(row)
        out = {}
        for key, rows in sorted(cells.items()):
            out[key] = {
                "n_seeds": len(rows),
                "cr_mean": float(np.mean([r.cr for r in rows])),
                "dr_mean": float(np.mean([r.dr for r in rows])),
                "f1_mean": float(np.mean([r.f1 for r in rows])),
                "cr_std": float(np.std([r.cr for r in rows])),
                "dr_std": float(np.std([r.dr for r in rows])),
                "f1_std": float(np.std([r.f1 for r in rows])),
            }
        return out


def _cell_config(grid: AblationGrid, variant: str, labels: int, seed: int,
                 dataset: Dataset) -> PipelineConfig:
    cfg = replace(grid.base_config, labeled_per_class=labels, seed=seed)
    if variant == "supervised":
        cfg = replace(cfg, variant=None, gan_enabled=False, stage3_epochs=0)
    else:
        cfg = replace(cfg, variant=variant)
    if not cfg.gan_enabled:
        cap = feasible_unlabeled_per_class(dataset, labels, cfg.test_per_class)
        cfg = replace(cfg, unlabeled_per_class=min(cfg.unlabeled_per_class, cap))
    return cfg


def _cell_dataset(grid: AblationGrid, seed: int) -> Dataset:
    if grid.data_csv is not None:
        return load_csv(grid.data_csv)
    return generate_synthetic(grid.n_normal, grid.n_incident,
                              seed=10_000 + seed, delta=grid.delta)


def run_ablation(grid: AblationGrid, progress=None) -> AblationResult:
    """Execute every grid cell; failures are recorded, not raised."""
    rows, failures = [], []
    for variant in grid.variants:
        for labels in grid.label_counts:
            for seed in grid.seeds:
                dataset = _cell_dataset(grid, seed)
                config = _cell_config(grid, variant, labels, seed, dataset)
                try:
                    result = run_fpmt(dataset, config)
                    m = result.report.final_metrics
                    rows.append(MetricRow(variant=variant, labels_per_class=labels,
                                          seed=seed, cr=m.cr, dr=m.dr, f1=m.f1))
                except Exception as exc:  # cell isolation by design
                    failures.append((variant, labels, seed, f"{type(exc).__name__}: {exc}"))
                if progress is not None:
                    progress(variant, labels, seed)
    return AblationResult(rows=rows, failures=failures)


# ---------------------------------------------------------------------------
# Report emission
# ---------------------------------------------------------------------------

EMPTY_CELL = "—"  # em dash for cells with no completed seeds


def save_rows_csv(rows: list[MetricRow], path) -> None:
    lines = ["variant,labels_per_class,seed,CR,DR,F1"]
    for r in rows:
        lines.append(f"{r.variant},{r.labels_per_class},{r.seed},"
                     f"{r.cr:.17g},{r.dr:.17g},{r.f1:.17g}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def emit_report(result: AblationResult, path, format: str = "csv") -> None:
    """Aggregate table, CSV (round-trippable) or markdown (CR/DR/F1 cells)."""
    if format not in ("csv", "markdown"):
        raise ConfigError(f"format must be csv|markdown, got {format!r}")
    agg = result.aggregate()
    if not agg:
        raise ConfigError("nothing to report: no completed cells")
    variants = sorted({v for v, _ in agg}, key=lambda v: GRID_VARIANTS.index(v)
                      if v in GRID_VARIANTS else len(GRID_VARIANTS))
    label_counts = sorted({k for _, k in agg})

    if format == "csv":
        lines = ["variant,labels_per_class,n_seeds,CR_mean,DR_mean,F1_mean,"
                 "CR_std,DR_std,F1_std"]
        for v in variants:
            for k in label_counts:
                cell = agg.get((v, k))
                if cell is None:
                    continue
                lines.append(
                    f"{v},{k},{cell['n_seeds']},"
                    f"{cell['cr_mean']:.17g},{cell['dr_mean']:.17g},"
                    f"{cell['f1_mean']:.17g},{cell['cr_std']:.17g},"
                    f"{cell['dr_std']:.17g},{cell['f1_std']:.17g}")
    else:
        header = "| Model | " + " | ".join(str(k) for k in label_counts) + " |"
        rule = "|---" * (len(label_counts) + 1) + "|"
        lines = [header, rule]
        for v in variants:
            cells = []
            for k in label_counts:
                cell = agg.get((v, k))
                if cell is None:
                    cells.append(EMPTY_CELL)
                else:
                    cells.append(f"{cell['cr_mean']:.1f}/{cell['dr_mean']:.1f}/"
                                 f"{cell['f1_mean']:.1f}")
            lines.append(f"| {v.upper()} | " + " | ".join(cells) + " |")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def parse_aggregate_csv(path) -> dict[tuple[str, int], dict[str, float]]:
    """Inverse of the CSV branch of :func:`emit_report`."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    expected = ("variant,labels_per_class,n_seeds,CR_mean,DR_mean,F1_mean,"
                "CR_std,DR_std,F1_std")
    if not lines or lines[0] != expected:
        raise ParseError("line 1: malformed aggregate header")
    out = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != 9:
            raise ParseError(f"line {lineno}: expected 9 cells")
        key = (cells[0], int(cells[1]))
        out[key] = {"n_seeds": int(cells[2]),
                    "cr_mean": float(cells[3]), "dr_mean": float(cells[4]),
                    "f1_mean": float(cells[5]), "cr_std": float(cells[6]),
                    "dr_std": float(cells[7]), "f1_std": float(cells[8])}
    return out


def sign_test_p_value(wins: int, losses: int) -> float:
    """One-sided binomial sign test: P(>= wins | p=0.5, n=wins+losses)."""
    from math import comb
    n = wins + losses
    if n == 0:
        return 1.0
    return sum(comb(n, k) for k in range(wins, n + 1)) / 2.0 ** n
