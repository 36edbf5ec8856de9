"""Two-stage semi-supervised training, evaluation and feature export.

Stage 1 trains the backbone on the labeled subset with cross-entropy.
Stage 2 restarts the learning-rate schedule and adds the weighted
unsupervised terms of the chosen method on unlabeled mini-batches; every
iteration draws one labeled and (when any unsupervised weight is nonzero)
one unlabeled batch, and an epoch is one pass over the unlabeled loader.

Each stage keeps the checkpoint with the best validation accuracy (the last
epoch when there is no validation set) and loads it back at the end.
"""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
import torch
import torch.nn.functional as F
from torch import nn
from tqdm import tqdm

from src.data.loader import DatasetLoader, VideoBatch, VideoDataset, make_loader
from src.data.split import SemiSplit, carve_validation
from src.models.checkpoint import Checkpoint
from src.models.config import BackboneConfig, MapleConfig
from src.models.destformer import DestFormer
from src.models.maple import (
    NormTrace,
    TemporalDecoder,
    decode_full,
    encode_visible,
    l2_norm_trace,
    maple_forward,
    maple_loss,
    mse_ablation_loss,
    sample_mask,
)
from src.semisup.losses import (
    TERMS,
    combined_unsup_loss,
    entmin_loss,
    method_terms,
    pseudo_label_loss,
    vat_loss,
    vat_perturbation,
)
from src.semisup.pseudo_labels import generate_hard_pseudo_labels, save_pseudo_labels
from src.training.config import TrainConfig
from src.training.metrics import (
    EpochMetrics,
    EvaluationResult,
    MetricsRecord,
    accuracy_from_predictions,
)
from src.training.schedule import lr_at
from src.utils.io_utils import save_table
from src.utils.torch_utils import cycle, make_generator, model_dtype

logger = logging.getLogger(__name__)

LrFn = Callable[[int, int], float]

TORCH_DTYPES = {"float32": torch.float32, "float64": torch.float64}
NORM_TRACE_FILE = "norm_trace.csv"
PSEUDO_LABEL_FILE = "pseudo_labels.csv"
COMBO_METHOD = "vat+entmin+maple"


@dataclass
class ExperimentData:
    """Datasets of one run; validation and test may be absent."""

    labeled: VideoDataset
    unlabeled: VideoDataset
    validation: VideoDataset | None = None
    test: VideoDataset | None = None

    @classmethod
    def from_split(
        cls,
        loader: DatasetLoader,
        split: SemiSplit,
        validation_fraction: float = 0.0,
        seed: int = 0,
    ) -> ExperimentData:
        train_ids, val_ids = carve_validation(split.labeled_ids, validation_fraction, seed)
        test = loader.test_dataset()
        return cls(
            labeled=loader.dataset(train_ids, labeled=True),
            unlabeled=loader.dataset(split.unlabeled_ids, labeled=False),
            validation=loader.dataset(val_ids, labeled=True) if val_ids else None,
            test=test if len(test) else None,
        )


def build_optimizer(params: Iterable[nn.Parameter], cfg: TrainConfig) -> torch.optim.Optimizer:
    if cfg.optimizer == "sgd":
        return torch.optim.SGD(
            params, lr=cfg.base_lr, momentum=cfg.momentum, weight_decay=cfg.weight_decay
        )
    if cfg.optimizer == "adamw":
        return torch.optim.AdamW(params, lr=cfg.base_lr, weight_decay=cfg.weight_decay)
    raise ValueError(f"Unknown optimizer: {cfg.optimizer}")


def make_model(backbone: BackboneConfig, cfg: TrainConfig) -> DestFormer:
    """Backbone initialized from ``cfg.seed`` in the configured dtype."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(cfg.seed)
        model = DestFormer(backbone)
    return model.to(TORCH_DTYPES[cfg.dtype])


def make_decoder(model: DestFormer, cfg: MapleConfig, seed: int = 0) -> TemporalDecoder:
    """Temporal decoder initialized from ``seed`` without touching the global RNG."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        decoder = TemporalDecoder.for_backbone(model, cfg)
    return decoder.to(model_dtype(model))


@torch.no_grad()
def evaluate(
    model: DestFormer | Checkpoint, dataset: VideoDataset, batch_size: int = 32
) -> EvaluationResult:
    """
    Accuracy of the backbone on a labeled dataset.

    Only the backbone runs; no decoder is built and the model's parameters
    and train/eval mode are left as they were.

    Raises:
        ValueError: If the dataset is empty or unlabeled.
    """
    if isinstance(model, Checkpoint):
        model = model.build_model()
    if len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty test set")
    if not dataset.labeled:
        raise ValueError("evaluation needs a labeled dataset")
    was_training = model.training
    model.eval()
    dtype = model_dtype(model)
    predictions: list[int] = []
    labels: list[int] = []
    ids: list[str] = []
    try:
        for batch in make_loader(dataset, batch_size, shuffle=False):
            batch = batch.to(dtype)
            logits = model(batch.points, batch.grouping).logits
            predictions.extend(torch.argmax(logits, dim=-1).tolist())
            labels.extend(batch.labels.tolist())  # type: ignore[union-attr]
            ids.extend(batch.video_ids)
    finally:
        model.train(was_training)
    return accuracy_from_predictions(predictions, labels, model.cfg.num_classes, ids)


@torch.no_grad()
def export_features(
    model: DestFormer,
    datasets: Sequence[VideoDataset],
    path: str | Path | None = None,
    format: str = "csv",
    batch_size: int = 32,
) -> pd.DataFrame:
    """
    Global feature v of every video, one row each.

    Columns: video_id, labeled, class_id (empty for unlabeled videos),
    v_0 .. v_{D-1}. Written with ``save_table`` when ``path`` is given.
    """
    was_training = model.training
    model.eval()
    dtype = model_dtype(model)
    rows: list[dict[str, Any]] = []
    try:
        for dataset in datasets:
            for batch in make_loader(dataset, batch_size, shuffle=False):
                batch = batch.to(dtype)
                feature = model(batch.points, batch.grouping).feature
                classes = batch.labels.tolist() if batch.labels is not None else [None] * len(batch)
                for video_id, label, vector in zip(batch.video_ids, classes, feature.tolist()):
                    row: dict[str, Any] = {
                        "video_id": video_id,
                        "labeled": dataset.labeled,
                        "class_id": label,
                    }
                    row.update({f"v_{i}": x for i, x in enumerate(vector)})
                    rows.append(row)
    finally:
        model.train(was_training)
    frame = pd.DataFrame(rows)
    if path is not None:
        save_table(frame, path, format=format)
    return frame


class _EpochLog:
    """Running sums of one epoch's losses, accuracy and norms."""

    def __init__(self) -> None:
        self.losses: dict[str, list[float]] = defaultdict(list)
        self.correct = 0
        self.seen = 0
        self.g_norms: list[float] = []
        self.r_norms: list[float] = []

    def add_predictions(self, logits: torch.Tensor, labels: torch.Tensor) -> None:
        self.correct += int((torch.argmax(logits, dim=-1) == labels).sum())
        self.seen += int(labels.numel())

    def mean_losses(self) -> dict[str, float]:
        keys = ["total", "supervised", *TERMS]
        return {
            k: float(np.mean(self.losses[k])) if self.losses.get(k) else math.nan for k in keys
        }

    @property
    def accuracy(self) -> float:
        return 100.0 * self.correct / self.seen if self.seen else 0.0


class Trainer:
    """
    Runs training stages on one backbone and, for the autoencoder methods,
    its temporal decoder.

    Attributes:
        model: Backbone being trained.
        cfg: Optimization hyperparameters.
        record: Metrics record receiving every epoch and step.
        decoder: Temporal decoder, None unless a stage needs it.
        validation: Labeled videos used for checkpoint selection.
        test: Labeled videos evaluated every epoch; never used for selection.
        output_dir: When set, metrics, norm traces and pseudo labels are
            written there as training proceeds.
        norm_trace: L2 norms of g and r for every autoencoder step.
    """

    def __init__(
        self,
        model: DestFormer,
        cfg: TrainConfig,
        record: MetricsRecord,
        decoder: TemporalDecoder | None = None,
        validation: VideoDataset | None = None,
        test: VideoDataset | None = None,
        lr_fn: LrFn | None = None,
        output_dir: str | Path | None = None,
    ):
        self.model = model
        self.cfg = cfg
        self.record = record
        self.decoder = decoder
        self.validation = validation if validation is not None and len(validation) else None
        self.test = test if test is not None and len(test) else None
        self.lr_fn: LrFn = lr_fn or (lambda epoch, total: lr_at(epoch, cfg, total))
        self.output_dir = Path(output_dir) if output_dir is not None else None
        self.dtype = model_dtype(model)
        self.noise_generator = make_generator(cfg.seed + 2)
        self.norm_trace = NormTrace()
        self._best: Checkpoint | None = None
        self._best_score = -math.inf
        self._stale_epochs = 0
        self._stage = 1
        self._step = 0

    # -- stages ---------------------------------------------------------------

    def run_supervised(self, labeled: VideoDataset, epochs: int) -> Checkpoint:
        """Stage 1: cross-entropy on D_l for ``epochs`` epochs."""
        if len(labeled) == 0:
            raise ValueError("labeled dataset is empty")
        self._begin_stage(1)
        loader = make_loader(labeled, self.cfg.labeled_batch_size, shuffle=True, seed=self.cfg.seed)
        optimizer = build_optimizer(self.model.parameters(), self.cfg)
        for epoch in tqdm(range(epochs), desc="stage 1", disable=not self.cfg.show_progress):
            lr = self._set_lr(optimizer, epoch, epochs)
            log = _EpochLog()
            for batch in loader:
                batch = batch.to(self.dtype)
                out = self.model(batch.points, batch.grouping)
                loss = F.cross_entropy(out.logits, batch.labels)
                self._apply(optimizer, loss)
                log.add_predictions(out.logits.detach(), batch.labels)  # type: ignore[arg-type]
                log.g_norms.append(l2_norm_trace(out.tokens))
                self._log_step(log, epoch, "supervised-only", lr, loss, loss, {}, {})
            if self._end_epoch(epoch, "supervised-only", lr, log):
                break
        return self._finish_stage()

    def run_semisupervised(
        self,
        labeled: VideoDataset,
        unlabeled: VideoDataset,
        phases: Sequence[tuple[str, int]],
    ) -> Checkpoint:
        """
        Stage 2: labeled cross-entropy plus the unsupervised terms of each phase.

        Args:
            labeled: D_l.
            unlabeled: D_u; its items carry no labels.
            phases: (method, epochs) pairs run back to back under one
                learning-rate schedule spanning their total length.
        """
        if len(labeled) == 0:
            raise ValueError("labeled dataset is empty")
        if len(unlabeled) == 0:
            raise ValueError("unlabeled dataset is empty")
        for method, _ in phases:
            method_terms(method)
        uses_decoder = any("maple" in method_terms(m) for m, _ in phases)
        if uses_decoder and self.decoder is None:
            raise ValueError("autoencoder methods need a temporal decoder")

        self._begin_stage(2)
        params = list(self.model.parameters())
        if uses_decoder and self.decoder is not None:
            params += list(self.decoder.parameters())
        optimizer = build_optimizer(params, self.cfg)
        labeled_batches = cycle(
            make_loader(labeled, self.cfg.labeled_batch_size, shuffle=True, seed=self.cfg.seed)
        )
        unlabeled_loader = make_loader(
            unlabeled, self.cfg.b_u, shuffle=True, seed=self.cfg.seed + 1
        )
        total_epochs = sum(budget for _, budget in phases)

        epoch = 0
        previous: str | None = None
        stopped = False
        for method, budget in phases:
            if budget == 0 or stopped:
                continue
            if previous is not None:
                self.record.mark_phase(epoch, previous, method)
                logger.info("Stage 2 switches from %s to %s at epoch %d", previous, method, epoch)
            previous = method
            for _ in tqdm(range(budget), desc=method, disable=not self.cfg.show_progress):
                lr = self._set_lr(optimizer, epoch, total_epochs)
                log = self._semisupervised_epoch(
                    optimizer, labeled_batches, unlabeled_loader, unlabeled, method, epoch, lr
                )
                stopped = self._end_epoch(epoch, method, lr, log)
                epoch += 1
                if stopped:
                    break
        return self._finish_stage()

    def _semisupervised_epoch(
        self,
        optimizer: torch.optim.Optimizer,
        labeled_batches: Iterable[VideoBatch],
        unlabeled_loader: torch.utils.data.DataLoader,
        unlabeled: VideoDataset,
        method: str,
        epoch: int,
        lr: float,
    ) -> _EpochLog:
        weights = self.cfg.weights.restricted_to(method_terms(method))
        pseudo_targets = self._refresh_pseudo_labels(unlabeled) if weights.pseudo > 0 else {}
        unlabeled_batches = iter(unlabeled_loader) if weights.active() else None
        labeled_iter = iter(labeled_batches)
        log = _EpochLog()
        for _ in range(len(unlabeled_loader)):
            batch = next(labeled_iter).to(self.dtype)
            out = self.model(batch.points, batch.grouping)
            supervised = F.cross_entropy(out.logits, batch.labels)
            terms = {}
            if unlabeled_batches is not None:
                unlabeled_batch = next(unlabeled_batches).to(self.dtype)
                terms = self._unsupervised_terms(method, unlabeled_batch, pseudo_targets, log)
            unsupervised, components = combined_unsup_loss(terms, weights)
            total = supervised + unsupervised
            self._apply(optimizer, total)
            log.add_predictions(out.logits.detach(), batch.labels)  # type: ignore[arg-type]
            if weights.maple == 0:
                log.g_norms.append(l2_norm_trace(out.tokens))
            self._log_step(log, epoch, method, lr, total, supervised, components, weights.to_dict())
        return log

    def _unsupervised_terms(
        self,
        method: str,
        batch: VideoBatch,
        pseudo_targets: dict[str, int],
        log: _EpochLog,
    ) -> dict[str, Callable[[], torch.Tensor]]:
        """Lazily evaluated terms sharing one forward pass over the unlabeled batch."""
        cache: dict[str, Any] = {}

        def forward() -> Any:
            if "out" not in cache:
                cache["out"] = self.model(batch.points, batch.grouping)
            return cache["out"]

        features = batch.points[..., 3:]

        def logits_of(coords: torch.Tensor) -> torch.Tensor:
            return self.model(torch.cat([coords, features], dim=-1), batch.grouping).logits

        def pseudo() -> torch.Tensor:
            keep = [i for i, v in enumerate(batch.video_ids) if v in pseudo_targets]
            index = torch.tensor(keep, dtype=torch.long)
            targets = torch.tensor(
                [pseudo_targets[batch.video_ids[i]] for i in keep], dtype=torch.long
            )
            return pseudo_label_loss(forward().logits[index], targets)

        def vat() -> torch.Tensor:
            coords = batch.points[..., :3]
            delta = vat_perturbation(logits_of, coords, self.cfg.vat, self.noise_generator)
            return vat_loss(logits_of, coords, delta, clean_logits=forward().logits)

        def entmin() -> torch.Tensor:
            return entmin_loss(forward().distribution.probs)

        def maple() -> torch.Tensor:
            return self._autoencoder_term(method, forward().tokens, log)

        return {"pseudo": pseudo, "vat": vat, "entmin": entmin, "maple": maple}

    def _autoencoder_term(self, method: str, tokens: torch.Tensor, log: _EpochLog) -> torch.Tensor:
        assert self.decoder is not None
        batch, num_tokens = tokens.shape[:2]
        masks = [
            sample_mask(num_tokens, self.cfg.mask_ratio, self._mask_seed(i)) for i in range(batch)
        ]
        if method in ("maple-mse-detached", "maple-mse-attached"):
            z_visible = encode_visible(self.model, tokens, masks)
            reconstruction = decode_full(self.decoder, z_visible, masks)
            loss = mse_ablation_loss(
                tokens, reconstruction, detach_target=method == "maple-mse-detached"
            )
        else:
            out = maple_forward(self.model, self.decoder, tokens, masks)
            reconstruction = out.reconstruction
            loss = maple_loss(out.target.probs, out.prediction.probs)
        self.norm_trace.append(self._step, tokens, reconstruction, float(loss.detach()))
        log.g_norms.append(l2_norm_trace(tokens))
        log.r_norms.append(l2_norm_trace(reconstruction))
        return loss

    def _mask_seed(self, item: int) -> int:
        sequence = np.random.SeedSequence([self.cfg.seed, self._stage, self._step, item])
        return int(sequence.generate_state(1)[0])

    def _refresh_pseudo_labels(self, unlabeled: VideoDataset) -> dict[str, int]:
        labels = generate_hard_pseudo_labels(
            self.model, unlabeled, self.cfg.b_u, threshold=self.cfg.pseudo_label_threshold
        )
        if self.output_dir is not None:
            source = Checkpoint.capture(self.model).state_hash
            save_pseudo_labels(labels, self.output_dir / PSEUDO_LABEL_FILE, source)
        return {p.video_id: p.class_id for p in labels}

    # -- bookkeeping ----------------------------------------------------------

    def _begin_stage(self, stage: int) -> None:
        self._stage = stage
        self._step = 0
        self._best = None
        self._best_score = -math.inf
        self._stale_epochs = 0

    def _set_lr(self, optimizer: torch.optim.Optimizer, epoch: int, total: int) -> float:
        lr = float(self.lr_fn(epoch, total))
        for group in optimizer.param_groups:
            group["lr"] = lr
        return lr

    def _apply(self, optimizer: torch.optim.Optimizer, loss: torch.Tensor) -> None:
        if not bool(torch.isfinite(loss)):
            raise FloatingPointError(
                f"non-finite loss {float(loss)} at stage {self._stage} step {self._step}"
            )
        optimizer.zero_grad(set_to_none=True)
        loss.backward()
        optimizer.step()

    def _log_step(
        self,
        log: _EpochLog,
        epoch: int,
        method: str,
        lr: float,
        total: torch.Tensor,
        supervised: torch.Tensor,
        components: dict[str, float],
        weights: dict[str, float],
    ) -> None:
        row: dict[str, Any] = {
            "stage": self._stage,
            "epoch": epoch,
            "step": self._step,
            "method": method,
            "lr": lr,
            "total": float(total.detach()),
            "supervised": float(supervised.detach()),
        }
        for term in TERMS:
            row[term] = components.get(term, math.nan)
            row[f"weight_{term}"] = weights.get(term, 0.0)
        self.record.add_step(row)
        log.losses["total"].append(row["total"])
        log.losses["supervised"].append(row["supervised"])
        for term, value in components.items():
            log.losses[term].append(value)
        self._step += 1

    def _end_epoch(self, epoch: int, method: str, lr: float, log: _EpochLog) -> bool:
        """Evaluate, record and select; returns True when early stopping triggers."""
        val = evaluate(self.model, self.validation) if self.validation is not None else None
        test = evaluate(self.model, self.test) if self.test is not None else None
        shown = test or val
        metrics = EpochMetrics(
            stage=self._stage,
            epoch=epoch,
            method=method,
            lr=lr,
            losses=log.mean_losses(),
            train_accuracy=log.accuracy,
            val_accuracy=val.accuracy if val else None,
            test_accuracy=test.accuracy if test else None,
            per_class=shown.per_class if shown else [],
            g_norm=float(np.mean(log.g_norms)) if log.g_norms else None,
            r_norm=float(np.mean(log.r_norms)) if log.r_norms else None,
        )
        self.record.add_epoch(metrics)
        logger.info(
            "stage %d epoch %d %s lr=%.2e loss=%.4f train=%.1f val=%s test=%s",
            self._stage,
            epoch,
            method,
            lr,
            metrics.losses["total"],
            metrics.train_accuracy,
            f"{val.accuracy:.1f}" if val else "-",
            f"{test.accuracy:.1f}" if test else "-",
        )

        score = val.accuracy if val else math.inf
        if score > self._best_score or val is None:
            self._best_score = score
            self._stale_epochs = 0
            self._best = Checkpoint.capture(
                self.model,
                self.decoder,
                metadata={"stage": self._stage, "epoch": epoch, "method": method},
            )
            self.record.best_stage = self._stage
            self.record.best_epoch = epoch
            self.record.best_val_accuracy = val.accuracy if val else None
            self.record.best_test_accuracy = test.accuracy if test else None
            self.record.best_per_class = shown.per_class if shown else []
            self.record.checkpoint = self._best.state_hash
        else:
            self._stale_epochs += 1

        if self.output_dir is not None:
            self.record.flush(self.output_dir)
            self.norm_trace.flush(self.output_dir / NORM_TRACE_FILE)
        patience = self.cfg.early_stop_patience
        if patience is not None and val is not None and self._stale_epochs >= patience:
            logger.info("Early stop after %d epochs without improvement", patience)
            return True
        return False

    def _finish_stage(self) -> Checkpoint:
        if self._best is None:
            logger.warning("Stage %d ran no epochs; keeping current parameters", self._stage)
            return Checkpoint.capture(self.model, self.decoder, metadata={"stage": self._stage})
        self._best.restore(self.model, self.decoder)
        return self._best


def _new_record(method: str, model: DestFormer, cfg: TrainConfig) -> MetricsRecord:
    return MetricsRecord(method=method, seed=cfg.seed, num_classes=model.cfg.num_classes)


def train_supervised(
    labeled: VideoDataset,
    model: DestFormer,
    cfg: TrainConfig,
    validation: VideoDataset | None = None,
    test: VideoDataset | None = None,
    record: MetricsRecord | None = None,
    lr_fn: LrFn | None = None,
    output_dir: str | Path | None = None,
) -> tuple[Checkpoint, MetricsRecord]:
    """
    Stage 1: supervised pre-training on D_l.

    Args:
        labeled: D_l; must be nonempty.
        model: Backbone, updated in place and left at its best checkpoint.
        cfg: Hyperparameters; ``stage1_epochs`` sets the budget.
        validation: Checkpoint-selection set; without it the last epoch wins.
        test: Evaluated every epoch for reporting only.
        record: Record to extend; a new one is created when None.
        lr_fn: (epoch, stage_epochs) -> learning rate; defaults to ``lr_at``.
        output_dir: Directory for metrics files.

    Returns:
        (best checkpoint, metrics record).

    Raises:
        ValueError: If ``labeled`` is empty.
        FloatingPointError: If a loss becomes non-finite.
    """
    record = record or _new_record("supervised-only", model, cfg)
    trainer = Trainer(
        model, cfg, record, validation=validation, test=test, lr_fn=lr_fn, output_dir=output_dir
    )
    return trainer.run_supervised(labeled, cfg.stage1_epochs), record


def train_semisupervised(
    labeled: VideoDataset,
    unlabeled: VideoDataset,
    model: DestFormer,
    method: str,
    cfg: TrainConfig,
    decoder: TemporalDecoder | None = None,
    maple_cfg: MapleConfig | None = None,
    validation: VideoDataset | None = None,
    test: VideoDataset | None = None,
    record: MetricsRecord | None = None,
    lr_fn: LrFn | None = None,
    output_dir: str | Path | None = None,
) -> tuple[Checkpoint, MetricsRecord]:
    """
    Stage 2: L = L_l + sum of weighted unsupervised terms of ``method``.

    The model should hold Stage-1 parameters. Autoencoder methods build a
    temporal decoder from ``maple_cfg`` when none is passed.
    ``"vat+entmin+maple"`` is routed to ``train_staged_combo``.

    Raises:
        ValueError: For an unknown method or an empty D_l / D_u.
    """
    terms = method_terms(method)
    if method == COMBO_METHOD:
        return train_staged_combo(
            labeled, unlabeled, model, cfg, decoder=decoder, maple_cfg=maple_cfg,
            validation=validation, test=test, record=record, lr_fn=lr_fn, output_dir=output_dir,
        )  # fmt: skip
    if "maple" in terms and decoder is None:
        decoder = make_decoder(model, maple_cfg or MapleConfig(), cfg.seed)
    record = record or _new_record(method, model, cfg)
    record.method = method
    trainer = Trainer(
        model, cfg, record, decoder=decoder, validation=validation, test=test,
        lr_fn=lr_fn, output_dir=output_dir,
    )  # fmt: skip
    return trainer.run_semisupervised(labeled, unlabeled, [(method, cfg.stage2_epochs)]), record


def train_staged_combo(
    labeled: VideoDataset,
    unlabeled: VideoDataset,
    model: DestFormer,
    cfg: TrainConfig,
    phase_a_epochs: int | None = None,
    phase_b_epochs: int | None = None,
    decoder: TemporalDecoder | None = None,
    maple_cfg: MapleConfig | None = None,
    validation: VideoDataset | None = None,
    test: VideoDataset | None = None,
    record: MetricsRecord | None = None,
    lr_fn: LrFn | None = None,
    output_dir: str | Path | None = None,
) -> tuple[Checkpoint, MetricsRecord]:
    """
    Stage 2 in two phases: VAT+EntMin first, then the autoencoder term alone.

    Args:
        phase_a_epochs: VAT+EntMin epochs; defaults to ``cfg.combo_phase_a_epochs``.
        phase_b_epochs: Autoencoder epochs; defaults to the rest of ``cfg.stage2_epochs``.

    The learning-rate schedule spans both phases. When both phases are
    nonempty the record gets exactly one phase marker at their boundary.
    """
    phase_a = cfg.combo_phase_a_epochs if phase_a_epochs is None else phase_a_epochs
    phase_b = cfg.stage2_epochs - phase_a if phase_b_epochs is None else phase_b_epochs
    if phase_a < 0 or phase_b < 0:
        raise ValueError(f"phase budgets must be >= 0, got ({phase_a}, {phase_b})")
    if decoder is None:
        decoder = make_decoder(model, maple_cfg or MapleConfig(), cfg.seed)
    record = record or _new_record(COMBO_METHOD, model, cfg)
    record.method = COMBO_METHOD
    trainer = Trainer(
        model, cfg, record, decoder=decoder, validation=validation, test=test,
        lr_fn=lr_fn, output_dir=output_dir,
    )  # fmt: skip
    phases = [("vat+entmin", phase_a), ("maple", phase_b)]
    return trainer.run_semisupervised(labeled, unlabeled, phases), record
