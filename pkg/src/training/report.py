"""Aggregate finished runs into summary tables and figures.

A run directory holds one sub-directory per run, each written by the
experiment job (``summary.json``, ``metrics.csv``, optional
``norm_trace.csv``), plus optional sweep tables. The report is written to
``<run root>/report`` unless another directory is given.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import pandas as pd
import seaborn as sns

from src.training.metrics import METRICS_FILE, SUMMARY_FILE, load_summary
from src.training.trainer import NORM_TRACE_FILE
from src.utils.io_utils import save_table, write_json

logger = logging.getLogger(__name__)

MASK_SWEEP_FILE = "sweep_mask_ratio.csv"
DEPTH_SWEEP_FILE = "sweep_decoder_depth.csv"


@dataclass
class Report:
    """
    Aggregated results.

    Attributes:
        runs: One row per finished run (method, ratio, seed, accuracy, path).
        accuracy_matrix: Method x labeled-ratio table of median best accuracy.
        per_class: Per-class accuracy of every run's selected checkpoint.
        norm_traces: Concatenated L2-norm traces tagged by method.
        sweeps: Sweep tables keyed by their path relative to the run root.
        warnings: Problems found while collecting (missing or partial runs).
    """

    runs: pd.DataFrame
    accuracy_matrix: pd.DataFrame
    per_class: pd.DataFrame
    norm_traces: pd.DataFrame
    sweeps: dict[str, pd.DataFrame] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    @property
    def partial(self) -> bool:
        return bool(self.warnings)


def _run_dirs(root: Path) -> list[Path]:
    return sorted(
        p for p in root.iterdir()
        if p.is_dir() and p.name != "report"
        and ((p / SUMMARY_FILE).exists() or (p / METRICS_FILE).exists())
    )  # fmt: skip


def collect_runs(root: str | Path) -> Report:
    """
    Read every run under ``root``.

    Runs without a summary (interrupted before their first epoch finished)
    are skipped with a warning.

    Raises:
        FileNotFoundError: If ``root`` does not exist.
    """
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"Run directory not found: {root}")
    warnings: list[str] = []
    rows, per_class_rows, traces = [], [], []
    for run_dir in _run_dirs(root):
        if not (run_dir / SUMMARY_FILE).exists():
            warnings.append(f"{run_dir.name}: metrics without {SUMMARY_FILE}; run skipped")
            continue
        summary = load_summary(run_dir)
        if summary.get("best_accuracy") is None:
            warnings.append(f"{run_dir.name}: no evaluated checkpoint; run skipped")
            continue
        if summary.get("labeled_ratio") is None:
            warnings.append(f"{run_dir.name}: no labeled_ratio; left out of the accuracy matrix")
        rows.append(
            {
                "run": run_dir.name,
                "method": summary["method"],
                "labeled_ratio": summary.get("labeled_ratio"),
                "seed": summary.get("seed"),
                "best_accuracy": summary["best_accuracy"],
                "checkpoint": summary.get("checkpoint"),
            }
        )
        for k, value in enumerate(summary.get("best_per_class") or []):
            per_class_rows.append(
                {"run": run_dir.name, "method": summary["method"], "class_id": k, "accuracy": value}
            )
        trace_path = run_dir / NORM_TRACE_FILE
        if trace_path.exists():
            trace = pd.read_csv(trace_path)
            trace.insert(0, "method", summary["method"])
            trace.insert(0, "run", run_dir.name)
            traces.append(trace)

    if not rows:
        warnings.append(f"no finished runs under {root}")
    runs = pd.DataFrame(
        rows, columns=["run", "method", "labeled_ratio", "seed", "best_accuracy", "checkpoint"]
    )
    matrix = (
        runs.pivot_table(
            index="method", columns="labeled_ratio", values="best_accuracy", aggfunc="median"
        )
        if len(runs)
        else pd.DataFrame()
    )
    sweeps = {
        path.relative_to(root).as_posix(): pd.read_csv(path)
        for name in (MASK_SWEEP_FILE, DEPTH_SWEEP_FILE)
        for path in sorted(root.rglob(name))
    }
    return Report(
        runs=runs,
        accuracy_matrix=matrix,
        per_class=pd.DataFrame(per_class_rows, columns=["run", "method", "class_id", "accuracy"]),
        norm_traces=pd.concat(traces, ignore_index=True) if traces else pd.DataFrame(),
        sweeps=sweeps,
        warnings=warnings,
    )


def plot_mask_ratio(table: pd.DataFrame, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(table["mask_ratio"] * 100, table["accuracy"], marker="o")
    ax.set_xlabel("masking ratio (%)")
    ax.set_ylabel("accuracy (%)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_norm_traces(traces: pd.DataFrame, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    sns.lineplot(data=traces, x="step", y="r_norm", hue="method", ax=ax)
    ax.set_yscale("log")
    ax.set_ylabel("mean L2 norm of r")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_per_class(per_class: pd.DataFrame, path: Path) -> None:
    table = per_class.pivot_table(index="method", columns="class_id", values="accuracy")
    fig, ax = plt.subplots(figsize=(1 + 0.6 * table.shape[1], 1 + 0.5 * table.shape[0]))
    sns.heatmap(table, annot=True, fmt=".0f", cmap="viridis", vmin=0, vmax=100, ax=ax)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def build_report(
    root: str | Path, output_dir: str | Path | None = None, format: str = "csv"
) -> Report:
    """
    Collect runs and write the report tables, figures and ``report.json``.

    Args:
        root: Directory holding one sub-directory per run.
        output_dir: Destination; defaults to ``<root>/report``.
        format: Table format, "csv" or "parquet".

    Returns:
        The collected report. ``report.partial`` is True when anything was
        missing; the warnings are logged and stored in ``report.json``.
    """
    report = collect_runs(root)
    out = Path(output_dir) if output_dir is not None else Path(root) / "report"
    out.mkdir(parents=True, exist_ok=True)
    for message in report.warnings:
        logger.warning("Partial report: %s", message)

    save_table(report.runs, out / "runs", format=format)
    # parquet needs string column names; the ratio columns are floats
    matrix = report.accuracy_matrix.rename(columns=str).reset_index()
    save_table(matrix, out / "accuracy_matrix", format=format)
    save_table(report.per_class, out / "per_class", format=format)
    if len(report.norm_traces):
        save_table(report.norm_traces, out / "norm_traces", format=format)
        plot_norm_traces(report.norm_traces, out / "norm_traces.png")
    if len(report.per_class):
        plot_per_class(report.per_class, out / "per_class_accuracy.png")
    for name, table in report.sweeps.items():
        relative = Path(name)
        if relative.name == MASK_SWEEP_FILE:
            suffix = "".join(f"_{part}" for part in relative.parent.parts)
            plot_mask_ratio(table, out / f"mask_ratio{suffix}.png")

    write_json(
        out / "report.json",
        {
            "runs": len(report.runs),
            "partial": report.partial,
            "warnings": report.warnings,
            "accuracy_matrix": {
                str(method): {str(ratio): value for ratio, value in row.items()}
                for method, row in report.accuracy_matrix.iterrows()
            },
        },
    )
    return report
