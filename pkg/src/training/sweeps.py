"""Ablation sweeps over the autoencoder's masking ratio and decoder depth.

Stage 1 runs once (or is supplied as a checkpoint); every swept value then
trains Stage 2 with the ``maple`` method from those same parameters and the
same seeds, so rows differ only in the swept value.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import replace
from pathlib import Path

import pandas as pd

from src.models.checkpoint import Checkpoint
from src.models.config import BackboneConfig, MapleConfig
from src.training.config import TrainConfig
from src.training.trainer import ExperimentData, make_model, train_semisupervised, train_supervised
from src.utils.io_utils import save_table

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = ["value", "accuracy", "val_accuracy", "test_accuracy", "seed", "stage1_checkpoint"]


def _stage1(
    data: ExperimentData, backbone: BackboneConfig, cfg: TrainConfig
) -> Checkpoint:
    model = make_model(backbone, cfg)
    checkpoint, _ = train_supervised(
        data.labeled, model, cfg, validation=data.validation, test=data.test
    )
    return checkpoint


def _run_sweep(
    name: str,
    values: Sequence[float | int],
    data: ExperimentData,
    backbone: BackboneConfig,
    cfg: TrainConfig,
    maple: MapleConfig,
    stage1: Checkpoint | None,
    output_path: str | Path | None,
) -> pd.DataFrame:
    if not values:
        raise ValueError(f"{name} sweep needs at least one value")
    stage1 = stage1 or _stage1(data, backbone, cfg)
    rows = []
    for value in values:
        run_cfg, run_maple = cfg, maple
        if name == "mask_ratio":
            run_cfg = replace(cfg, mask_ratio=float(value))
        else:
            run_maple = replace(maple, decoder_blocks=int(value))
        model = stage1.build_model()
        _, record = train_semisupervised(
            data.labeled,
            data.unlabeled,
            model,
            "maple",
            run_cfg,
            maple_cfg=run_maple,
            validation=data.validation,
            test=data.test,
        )
        logger.info("%s=%s -> accuracy %s", name, value, record.best_accuracy)
        rows.append(
            {
                "value": value,
                "accuracy": record.best_accuracy,
                "val_accuracy": record.best_val_accuracy,
                "test_accuracy": record.best_test_accuracy,
                "seed": cfg.seed,
                "stage1_checkpoint": stage1.state_hash,
            }
        )
    table = pd.DataFrame(rows, columns=SWEEP_COLUMNS).rename(columns={"value": name})
    if output_path is not None:
        save_table(table, output_path, format="csv")
    return table


def sweep_mask_ratio(
    data: ExperimentData,
    ratios: Sequence[float],
    cfg: TrainConfig,
    backbone: BackboneConfig,
    maple: MapleConfig | None = None,
    stage1: Checkpoint | None = None,
    output_path: str | Path | None = None,
) -> pd.DataFrame:
    """
    Stage-2 accuracy for each masking ratio.

    Args:
        data: Labeled, unlabeled, validation and test datasets.
        ratios: Masking ratios, each in [0, 1).
        cfg: Shared hyperparameters and seeds.
        backbone: Backbone configuration for Stage 1.
        maple: Decoder configuration.
        stage1: Pre-trained Stage-1 checkpoint; trained here when None.
        output_path: CSV destination for the table.

    Returns:
        One row per ratio: mask_ratio, accuracy, val/test accuracy, seed and
        the Stage-1 checkpoint hash.

    Raises:
        ValueError: If a ratio is outside [0, 1) or masks every token.
    """
    for ratio in ratios:
        if not 0 <= ratio < 1:
            raise ValueError(f"mask ratio must be in [0, 1), got {ratio}")
    return _run_sweep(
        "mask_ratio", ratios, data, backbone, cfg, maple or MapleConfig(), stage1, output_path
    )


def sweep_decoder_depth(
    data: ExperimentData,
    depths: Sequence[int],
    cfg: TrainConfig,
    backbone: BackboneConfig,
    maple: MapleConfig | None = None,
    stage1: Checkpoint | None = None,
    output_path: str | Path | None = None,
) -> pd.DataFrame:
    """Stage-2 accuracy for each temporal-decoder depth (same layout as ``sweep_mask_ratio``)."""
    for depth in depths:
        if depth < 1:
            raise ValueError(f"decoder depth must be >= 1, got {depth}")
    return _run_sweep(
        "decoder_blocks", depths, data, backbone, cfg, maple or MapleConfig(), stage1, output_path
    )
