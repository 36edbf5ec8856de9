"""Per-epoch learning-rate schedule.

Linear warm-up from ``warmup_start_lr`` to ``base_lr`` over the first
``warmup_epochs`` epochs, ``base_lr`` in the middle and ``final_lr`` for the
last ``final_epochs`` epochs. Each training stage restarts the schedule.
"""

from __future__ import annotations

from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from src.training.config import TrainConfig


def lr_at(epoch: int, cfg: TrainConfig, total_epochs: int | None = None) -> float:
    """
    Learning rate for a zero-based epoch.

    Args:
        epoch: Epoch index within the stage.
        cfg: Schedule parameters.
        total_epochs: Stage length; defaults to ``cfg.stage1_epochs``.

    Raises:
        ValueError: If ``epoch`` is outside [0, total_epochs) or the stage is
            shorter than warm-up plus the final phase.

    Example:
        >>> cfg = TrainConfig()
        >>> lr_at(0, cfg), lr_at(20, cfg), lr_at(39, cfg)
        (1e-06, 0.01, 0.001)
    """
    total = cfg.stage1_epochs if total_epochs is None else total_epochs
    if not 0 <= epoch < total:
        raise ValueError(f"epoch {epoch} outside [0, {total})")
    if cfg.warmup_epochs + cfg.final_epochs > total:
        raise ValueError(
            f"warmup_epochs + final_epochs = {cfg.warmup_epochs + cfg.final_epochs} "
            f"exceeds the {total}-epoch stage"
        )
    if epoch >= total - cfg.final_epochs:
        return cfg.final_lr
    if epoch < cfg.warmup_epochs:
        step = (cfg.base_lr - cfg.warmup_start_lr) / cfg.warmup_epochs
        return cfg.warmup_start_lr + step * epoch
    return cfg.base_lr
