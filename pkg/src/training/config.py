"""Training configuration and the run manifest that ties a run together.

``TrainConfig`` carries optimization hyperparameters; ``RunManifest`` is the
versioned JSON document naming the dataset, split, model configs, method and
output directory of one run. CLI flags override manifest fields.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from src.data.video import CLIP_POLICIES
from src.models.config import BackboneConfig, MapleConfig
from src.semisup.losses import METHODS, UnsupLossWeights, VatConfig
from src.utils.io_utils import read_json, write_json

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
OPTIMIZERS = ("sgd", "adamw")
DTYPES = ("float32", "float64")
REPORT_FORMATS = ("csv", "parquet")


@dataclass(frozen=True)
class TrainConfig:
    """
    Optimization hyperparameters shared by both training stages.

    Attributes:
        base_lr: Learning rate between warm-up and the final phase.
        warmup_start_lr: Learning rate at epoch 0.
        warmup_epochs: Length of the linear warm-up.
        final_epochs: Length of the low-rate final phase.
        final_lr: Learning rate of the final phase.
        stage1_epochs: Supervised pre-training epochs.
        stage2_epochs: Semi-supervised epochs.
        combo_phase_a_epochs: VAT+EntMin epochs before the staged combo
            switches to the autoencoder term.
        labeled_batch_size: b_l.
        unlabeled_batch_size: b_u; None means b_l.
        mask_ratio: Fraction of segment tokens discarded per unlabeled video.
        optimizer: "sgd" (momentum) or "adamw".
        momentum: SGD momentum.
        weight_decay: L2 penalty applied by the optimizer.
        validation_fraction: Share of D_l held out for checkpoint selection.
        early_stop_patience: Stop a stage after this many epochs without a
            validation improvement; None trains the full budget.
        pseudo_label_threshold: Minimum confidence of a kept pseudo label.
        clip_frames: Frames every video is resampled to.
        clip_policy: Temporal clip policy.
        seed: Base seed for loaders, masks and perturbations.
        dtype: Floating type of parameters and inputs.
        show_progress: Draw tqdm progress bars.
        weights: Unsupervised loss weights.
        vat: Virtual adversarial perturbation parameters.
    """

    base_lr: float = 0.01
    warmup_start_lr: float = 1e-6
    warmup_epochs: int = 10
    final_epochs: int = 5
    final_lr: float = 0.001
    stage1_epochs: int = 40
    stage2_epochs: int = 40
    combo_phase_a_epochs: int = 12
    labeled_batch_size: int = 14
    unlabeled_batch_size: int | None = None
    mask_ratio: float = 0.75
    optimizer: str = "sgd"
    momentum: float = 0.9
    weight_decay: float = 1e-4
    validation_fraction: float = 0.1
    early_stop_patience: int | None = None
    pseudo_label_threshold: float | None = None
    clip_frames: int = 16
    clip_policy: str = "uniform-stride"
    seed: int = 0
    dtype: str = "float32"
    show_progress: bool = False
    weights: UnsupLossWeights = field(default_factory=UnsupLossWeights)
    vat: VatConfig = field(default_factory=VatConfig)

    def __post_init__(self) -> None:
        for name in ("base_lr", "warmup_start_lr", "final_lr"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        for name in ("warmup_epochs", "final_epochs", "stage1_epochs", "stage2_epochs"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")
        for stage, total in (("stage1", self.stage1_epochs), ("stage2", self.stage2_epochs)):
            if total and self.warmup_epochs + self.final_epochs > total:
                raise ValueError(
                    f"warmup_epochs + final_epochs exceeds {stage}_epochs ({total})"
                )
        if not 0 <= self.combo_phase_a_epochs <= self.stage2_epochs:
            raise ValueError(
                f"combo_phase_a_epochs must be in [0, {self.stage2_epochs}], "
                f"got {self.combo_phase_a_epochs}"
            )
        if self.labeled_batch_size < 1:
            raise ValueError(f"labeled_batch_size must be >= 1, got {self.labeled_batch_size}")
        if self.unlabeled_batch_size is not None and (
            self.unlabeled_batch_size < self.labeled_batch_size
        ):
            raise ValueError(
                f"unlabeled_batch_size ({self.unlabeled_batch_size}) must be >= "
                f"labeled_batch_size ({self.labeled_batch_size})"
            )
        if not 0 <= self.mask_ratio < 1:
            raise ValueError(f"mask_ratio must be in [0, 1), got {self.mask_ratio}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"Unknown optimizer: {self.optimizer}. Supported: {OPTIMIZERS}")
        if self.dtype not in DTYPES:
            raise ValueError(f"Unknown dtype: {self.dtype}. Supported: {DTYPES}")
        if self.clip_policy not in CLIP_POLICIES:
            raise ValueError(f"Unknown clip policy: {self.clip_policy}")
        if not 0 <= self.validation_fraction < 1:
            raise ValueError(
                f"validation_fraction must be in [0, 1), got {self.validation_fraction}"
            )
        if self.early_stop_patience is not None and self.early_stop_patience < 1:
            raise ValueError("early_stop_patience must be >= 1")
        if self.clip_frames < 1:
            raise ValueError(f"clip_frames must be >= 1, got {self.clip_frames}")

    @property
    def b_u(self) -> int:
        return self.unlabeled_batch_size or self.labeled_batch_size

    @classmethod
    def msr_scale(cls, **overrides: Any) -> TrainConfig:
        """MSR-Action3D-sized runs: 40 pre-training epochs, batch 14, alpha_maple 0.5."""
        base = cls(
            stage1_epochs=40,
            stage2_epochs=40,
            labeled_batch_size=14,
            clip_frames=24,
            weights=UnsupLossWeights(maple=0.5),
        )
        return replace(base, **overrides)

    @classmethod
    def ntu_scale(cls, **overrides: Any) -> TrainConfig:
        """NTU-sized runs: 20 pre-training epochs, batch 32, alpha_maple 0.2."""
        base = cls(
            stage1_epochs=20,
            stage2_epochs=20,
            labeled_batch_size=32,
            clip_frames=24,
            weights=UnsupLossWeights(maple=0.2),
        )
        return replace(base, **overrides)

    @classmethod
    def toy(cls, **overrides: Any) -> TrainConfig:
        """Desk-scale runs on the synthetic dataset."""
        base = cls(
            warmup_epochs=2,
            final_epochs=2,
            stage1_epochs=15,
            stage2_epochs=15,
            combo_phase_a_epochs=5,
            labeled_batch_size=4,
            unlabeled_batch_size=16,
            base_lr=0.01,
            weight_decay=1e-4,
            validation_fraction=0.0,
            clip_frames=16,
            vat=VatConfig(eps=0.1),
        )
        return replace(base, **overrides)

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data.pop("weights")
        data.pop("vat")
        return data

    @classmethod
    def from_dict(
        cls,
        data: dict[str, Any],
        weights: UnsupLossWeights | None = None,
        vat: VatConfig | None = None,
    ) -> TrainConfig:
        known = {f.name for f in fields(cls)} - {"weights", "vat"}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"Unknown TrainConfig keys: {sorted(unknown)}")
        return cls(**data, weights=weights or UnsupLossWeights(), vat=vat or VatConfig())


@dataclass(frozen=True)
class RunManifest:
    """
    Everything needed to reproduce one run.

    Attributes:
        dataset: Path of the dataset manifest JSON.
        output_dir: Directory receiving checkpoints, metrics and reports.
        method: Stage-2 method name.
        split: Path of a split JSON; None derives the split from
            ``labeled_ratio`` and ``train.seed``.
        labeled_ratio: Labeled share when no split file is given.
        backbone: Backbone hyperparameters.
        maple: Temporal decoder hyperparameters.
        train: Optimization hyperparameters (with loss weights and VAT settings).
        report_formats: Table formats written next to the CSV metrics.
    """

    dataset: str
    output_dir: str
    method: str = "maple"
    split: str | None = None
    labeled_ratio: float = 0.1
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    maple: MapleConfig = field(default_factory=MapleConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    report_formats: tuple[str, ...] = ("csv",)

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"Unknown method: {self.method}. Supported methods: {METHODS}")
        if not 0 < self.labeled_ratio <= 1:
            raise ValueError(f"labeled_ratio must be in (0, 1], got {self.labeled_ratio}")
        bad = set(self.report_formats) - set(REPORT_FORMATS)
        if bad:
            raise ValueError(f"Unsupported format: {sorted(bad)}. Supported: {REPORT_FORMATS}")

    def check_paths(self) -> None:
        """
        Raises:
            FileNotFoundError: If the dataset manifest or split file is missing.
        """
        for path in (self.dataset, self.split):
            if path is not None and not Path(path).exists():
                raise FileNotFoundError(f"File not found: {path}")

    def with_overrides(self, **overrides: Any) -> RunManifest:
        """Copy with top-level fields replaced; ``seed`` and ``mask_ratio`` reach ``train``."""
        train_keys = {k: overrides.pop(k) for k in ("seed", "mask_ratio") if k in overrides}
        overrides = {k: v for k, v in overrides.items() if v is not None}
        train_keys = {k: v for k, v in train_keys.items() if v is not None}
        manifest = replace(self, **overrides)
        if train_keys:
            manifest = replace(manifest, train=replace(manifest.train, **train_keys))
        return manifest

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "dataset": self.dataset,
            "split": self.split,
            "labeled_ratio": self.labeled_ratio,
            "method": self.method,
            "output_dir": self.output_dir,
            "report_formats": list(self.report_formats),
            "backbone": self.backbone.to_dict(),
            "maple": self.maple.to_dict(),
            "train": self.train.to_dict(),
            "vat": self.train.vat.to_dict(),
            "weights": self.train.weights.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> RunManifest:
        data = dict(data)
        version = data.pop("schema_version", None)
        if version != SCHEMA_VERSION:
            raise ValueError(f"Unsupported run manifest schema_version: {version}")
        known = {
            "dataset", "split", "labeled_ratio", "method", "output_dir", "report_formats",
            "backbone", "maple", "train", "vat", "weights",
        }  # fmt: skip
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"Unknown run manifest keys: {sorted(unknown)}")
        if "dataset" not in data or "output_dir" not in data:
            raise ValueError("run manifest needs 'dataset' and 'output_dir'")
        weights = UnsupLossWeights(**_checked(UnsupLossWeights, data.get("weights", {})))
        vat = VatConfig(**_checked(VatConfig, data.get("vat", {})))
        return cls(
            dataset=data["dataset"],
            output_dir=data["output_dir"],
            method=data.get("method", "maple"),
            split=data.get("split"),
            labeled_ratio=float(data.get("labeled_ratio", 0.1)),
            backbone=BackboneConfig.from_dict(data.get("backbone", {})),
            maple=MapleConfig.from_dict(data.get("maple", {})),
            train=TrainConfig.from_dict(data.get("train", {}), weights=weights, vat=vat),
            report_formats=tuple(data.get("report_formats", ("csv",))),
        )


def _checked(cls: Any, data: dict[str, Any]) -> dict[str, Any]:
    unknown = set(data) - {f.name for f in fields(cls)}
    if unknown:
        raise ValueError(f"Unknown {cls.__name__} keys: {sorted(unknown)}")
    return data


def save_run_manifest(manifest: RunManifest, path: str | Path) -> None:
    write_json(path, manifest.to_dict())


def load_run_manifest(path: str | Path) -> RunManifest:
    """
    Read a run manifest JSON.

    Raises:
        FileNotFoundError: If the file does not exist.
        ValueError: On schema version mismatch, unknown keys or invalid values.
    """
    manifest = RunManifest.from_dict(read_json(path))
    logger.debug("Loaded run manifest %s (method %s)", path, manifest.method)
    return manifest
