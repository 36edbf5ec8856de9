"""Accuracy metrics and the per-run metrics record.

A ``MetricsRecord`` collects one row per epoch and one row per optimizer
step. Epoch and step rows are appended to ``metrics.csv`` / ``steps.csv`` as
training proceeds; ``summary.json`` holds the per-run results.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from src.utils.io_utils import append_rows, read_json, write_json

logger = logging.getLogger(__name__)

METRICS_FILE = "metrics.csv"
STEPS_FILE = "steps.csv"
SUMMARY_FILE = "summary.json"


@dataclass
class EvaluationResult:
    """
    Accuracy of a model on a labeled dataset, in percent.

    ``per_class[k]`` is the accuracy over test items of class k; classes
    absent from the dataset report 0.0.
    """

    accuracy: float
    per_class: list[float]
    predictions: list[int]
    labels: list[int]
    video_ids: list[str] = field(default_factory=list)

    @property
    def num_items(self) -> int:
        return len(self.labels)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {"video_id": self.video_ids, "label": self.labels, "prediction": self.predictions}
        )


def accuracy_from_predictions(
    predictions: Sequence[int],
    labels: Sequence[int],
    num_classes: int,
    video_ids: Sequence[str] | None = None,
) -> EvaluationResult:
    """
    Overall and per-class accuracy in percent.

    Raises:
        ValueError: If there are no items or the sequences differ in length.
    """
    if len(labels) == 0:
        raise ValueError("cannot evaluate on an empty test set")
    if len(predictions) != len(labels):
        raise ValueError(f"{len(predictions)} predictions for {len(labels)} labels")
    preds = np.asarray(predictions, dtype=np.int64)
    truth = np.asarray(labels, dtype=np.int64)
    correct = preds == truth
    per_class = []
    for k in range(num_classes):
        members = truth == k
        per_class.append(float(100.0 * correct[members].mean()) if members.any() else 0.0)
    return EvaluationResult(
        accuracy=float(100.0 * correct.mean()),
        per_class=per_class,
        predictions=preds.tolist(),
        labels=truth.tolist(),
        video_ids=list(video_ids) if video_ids is not None else [],
    )


@dataclass
class EpochMetrics:
    """
    One epoch of one stage.

    Attributes:
        stage: 1 (supervised) or 2 (semi-supervised).
        epoch: Zero-based epoch within the stage.
        method: Active method ("supervised-only" in stage 1).
        lr: Learning rate of the epoch.
        losses: Mean of every logged loss column over the epoch's steps.
        train_accuracy: Accuracy on the labeled batches seen.
        val_accuracy: Validation accuracy, None without a validation set.
        test_accuracy: Test accuracy, None without a test set.
        per_class: Per-class test (else validation) accuracy.
        g_norm: Mean L2 norm of the segment tokens seen.
        r_norm: Mean L2 norm of the reconstructions, None when the decoder is idle.
    """

    stage: int
    epoch: int
    method: str
    lr: float
    losses: dict[str, float]
    train_accuracy: float
    val_accuracy: float | None = None
    test_accuracy: float | None = None
    per_class: list[float] = field(default_factory=list)
    g_norm: float | None = None
    r_norm: float | None = None

    def to_row(self) -> dict[str, Any]:
        row = {k: v for k, v in asdict(self).items() if k not in ("losses", "per_class")}
        row.update({f"loss_{k}": v for k, v in self.losses.items()})
        row.update({f"class_{k}": v for k, v in enumerate(self.per_class)})
        return row


@dataclass
class MetricsRecord:
    """
    Everything a run measured.

    Attributes:
        method: Stage-2 method of the run.
        labeled_ratio: Labeled share of the training set.
        seed: Base seed.
        num_classes: Size of the label space.
        epochs: Epoch rows of every stage, in order.
        steps: Step rows (total loss, every term and its weight).
        phase_markers: Stage-2 epochs where the unsupervised objective changed.
        best_stage: Stage of the selected checkpoint.
        best_epoch: Epoch of the selected checkpoint.
        best_val_accuracy: Validation accuracy of the selected checkpoint.
        best_test_accuracy: Test accuracy of the selected checkpoint.
        best_per_class: Per-class accuracy of the selected checkpoint.
        checkpoint: Identifier (file name or state hash) of the selected checkpoint.
    """

    method: str
    labeled_ratio: float | None = None
    seed: int = 0
    num_classes: int = 0
    epochs: list[EpochMetrics] = field(default_factory=list)
    steps: list[dict[str, Any]] = field(default_factory=list)
    phase_markers: list[dict[str, Any]] = field(default_factory=list)
    best_stage: int | None = None
    best_epoch: int | None = None
    best_val_accuracy: float | None = None
    best_test_accuracy: float | None = None
    best_per_class: list[float] = field(default_factory=list)
    checkpoint: str | None = None
    _flushed_epochs: int = 0
    _flushed_steps: int = 0

    @property
    def best_accuracy(self) -> float | None:
        """Test accuracy of the selected checkpoint, else its validation accuracy."""
        if self.best_test_accuracy is not None:
            return self.best_test_accuracy
        return self.best_val_accuracy

    def add_epoch(self, metrics: EpochMetrics) -> None:
        for name, value in (("train", metrics.train_accuracy), ("val", metrics.val_accuracy)):
            if value is not None and not 0 <= value <= 100:
                raise ValueError(f"{name} accuracy {value} outside [0, 100]")
        if self.num_classes and metrics.per_class and len(metrics.per_class) != self.num_classes:
            raise ValueError(
                f"per-class vector has {len(metrics.per_class)} entries, "
                f"expected {self.num_classes}"
            )
        self.epochs.append(metrics)

    def add_step(self, row: dict[str, Any]) -> None:
        self.steps.append(row)

    def mark_phase(self, epoch: int, before: str, after: str) -> None:
        self.phase_markers.append({"stage": 2, "epoch": epoch, "from": before, "to": after})

    def stage_mean(self, column: str, stage: int) -> float:
        values = [
            getattr(e, column)
            for e in self.epochs
            if e.stage == stage and getattr(e, column) is not None
        ]
        return float(np.mean(values)) if values else math.nan

    def loss_trace(self, stage: int | None = None) -> list[float]:
        return [s["total"] for s in self.steps if stage is None or s["stage"] == stage]

    def epochs_frame(self) -> pd.DataFrame:
        return pd.DataFrame([e.to_row() for e in self.epochs])

    def steps_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.steps)

    def summary(self) -> dict[str, Any]:
        return {
            "method": self.method,
            "labeled_ratio": self.labeled_ratio,
            "seed": self.seed,
            "num_classes": self.num_classes,
            "best_accuracy": self.best_accuracy,
            "best_stage": self.best_stage,
            "best_epoch": self.best_epoch,
            "best_val_accuracy": self.best_val_accuracy,
            "best_test_accuracy": self.best_test_accuracy,
            "best_per_class": self.best_per_class,
            "checkpoint": self.checkpoint,
            "phase_markers": self.phase_markers,
            "epochs": len(self.epochs),
            "steps": len(self.steps),
        }

    def flush(self, run_dir: str | Path) -> None:
        """Append unwritten epoch and step rows and rewrite the summary."""
        run_dir = Path(run_dir)
        rows = [e.to_row() for e in self.epochs[self._flushed_epochs :]]
        append_rows(rows, run_dir / METRICS_FILE)
        append_rows(self.steps[self._flushed_steps :], run_dir / STEPS_FILE)
        self._flushed_epochs = len(self.epochs)
        self._flushed_steps = len(self.steps)
        write_json(run_dir / SUMMARY_FILE, self.summary())


def load_summary(run_dir: str | Path) -> dict[str, Any]:
    """
    Read the summary of a finished run.

    Raises:
        FileNotFoundError: If the run has no summary.
    """
    return read_json(Path(run_dir) / SUMMARY_FILE)
