#!/usr/bin/env python
"""
Experiment runner for semi-supervised point cloud video action recognition.

One run reads a run manifest (dataset, split, model and training configs,
method, output directory), pre-trains the DestFormer backbone on the labeled
subset and then trains Stage 2 with the chosen unsupervised objective. All
artifacts land in the run's output directory:

- run.json: the effective run manifest
- split.json: labeled / unlabeled video ids
- stage1.pt, final.pt: best checkpoints of each stage
- metrics.csv, steps.csv, summary.json: per-epoch and per-step metrics
- norm_trace.csv: token norms of the autoencoder steps

Example:
    Run the manifest as written:
        $ python -m src --config runs/maple.json

    Override the method and seed:
        $ python -m src --config runs/maple.json --method vat+entmin --seed 3
"""

import argparse
import logging
import sys
from pathlib import Path

from src.data.loader import DatasetLoader, load_manifest
from src.data.split import SemiSplit, load_split, save_split, split_dataset
from src.models.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from src.models.destformer import DestFormer
from src.semisup.losses import METHODS
from src.training.config import RunManifest, load_run_manifest, save_run_manifest
from src.training.metrics import MetricsRecord
from src.training.trainer import (
    ExperimentData,
    export_features,
    make_model,
    train_semisupervised,
    train_supervised,
)
from src.utils.logging_utils import configure_logging
from src.utils.torch_utils import count_parameters

logger = logging.getLogger(__name__)


class ExperimentJob:
    """
    Orchestrates data preparation and both training stages of one run.

    Attributes:
        manifest: Effective run manifest (after CLI overrides).
        output_dir: Directory receiving every artifact of the run.
        dataset: Dataset manifest the run reads.
        loader: Clips and groups videos, caching them per video id.
        record: Metrics of both stages.
        _data: Cached datasets of the run.
    """

    def __init__(self, manifest: RunManifest):
        """
        Args:
            manifest: Run manifest; its dataset and split files must exist.

        Raises:
            FileNotFoundError: If the dataset manifest or split file is missing.
        """
        manifest.check_paths()
        self.manifest = manifest
        self.output_dir = Path(manifest.output_dir)
        self.dataset = load_manifest(manifest.dataset)
        self.loader = DatasetLoader(
            self.dataset,
            manifest.backbone.grouping,
            clip_frames=manifest.train.clip_frames,
            clip_policy=manifest.train.clip_policy,
            seed=manifest.train.seed,
        )
        self.record = MetricsRecord(
            method=manifest.method,
            seed=manifest.train.seed,
            num_classes=manifest.backbone.num_classes,
        )
        self._data: ExperimentData | None = None
        if self.dataset.num_classes != manifest.backbone.num_classes:
            raise ValueError(
                f"dataset has {self.dataset.num_classes} classes, "
                f"backbone is configured for {manifest.backbone.num_classes}"
            )

    def get_split(self) -> SemiSplit:
        if self.manifest.split is not None:
            return load_split(self.manifest.split)
        seed = self.manifest.train.seed
        return split_dataset(self.dataset, self.manifest.labeled_ratio, seed=seed)

    def get_data(self) -> ExperimentData:
        """Load, clip and group every video of the run once."""
        if self._data is None:
            print("\n" + "=" * 60)
            print("PREPARING DATA")
            print("=" * 60)
            split = self.get_split()
            save_split(split, self.output_dir / "split.json")
            self.record.labeled_ratio = split.labeled_ratio
            self._data = ExperimentData.from_split(
                self.loader,
                split,
                validation_fraction=self.manifest.train.validation_fraction,
                seed=self.manifest.train.seed,
            )
            data = self._data
            print(f"Labeled videos:    {len(data.labeled):,}")
            print(f"Unlabeled videos:  {len(data.unlabeled):,}")
            print(f"Validation videos: {len(data.validation) if data.validation else 0:,}")
            print(f"Test videos:       {len(data.test) if data.test else 0:,}")
        return self._data

    def run_stage1(self, model: DestFormer) -> Checkpoint:
        print("\n" + "=" * 60)
        print("STAGE 1: SUPERVISED PRE-TRAINING")
        print("=" * 60)
        data = self.get_data()
        checkpoint, _ = train_supervised(
            data.labeled,
            model,
            self.manifest.train,
            validation=data.validation,
            test=data.test,
            record=self.record,
            output_dir=self.output_dir,
        )
        save_checkpoint(checkpoint, self.output_dir / "stage1.pt")
        print(f"\nStage-1 accuracy: {_fmt(self.record.best_accuracy)}")
        return checkpoint

    def run_stage2(self, model: DestFormer) -> Checkpoint:
        print("\n" + "=" * 60)
        print(f"STAGE 2: {self.manifest.method.upper()}")
        print("=" * 60)
        data = self.get_data()
        checkpoint, _ = train_semisupervised(
            data.labeled,
            data.unlabeled,
            model,
            self.manifest.method,
            self.manifest.train,
            maple_cfg=self.manifest.maple,
            validation=data.validation,
            test=data.test,
            record=self.record,
            output_dir=self.output_dir,
        )
        print(f"\nStage-2 accuracy: {_fmt(self.record.best_accuracy)}")
        return checkpoint

    def run(
        self, stage1_checkpoint: str | Path | None = None, export: bool = False
    ) -> MetricsRecord:
        """
        Run the whole experiment.

        Args:
            stage1_checkpoint: Reuse this Stage-1 checkpoint instead of
                pre-training; its config must match the manifest's backbone.
            export: Also write the global feature of every video.

        Returns:
            The metrics record of the run.
        """
        self.output_dir.mkdir(parents=True, exist_ok=True)
        save_run_manifest(self.manifest, self.output_dir / "run.json")

        if stage1_checkpoint is not None:
            checkpoint = load_checkpoint(stage1_checkpoint)
            if checkpoint.backbone_config != self.manifest.backbone:
                raise ValueError(f"{stage1_checkpoint} was trained with another backbone config")
            model = make_model(self.manifest.backbone, self.manifest.train)
            checkpoint.restore(model)
            logger.info("Reusing Stage-1 checkpoint %s", stage1_checkpoint)
        else:
            model = make_model(self.manifest.backbone, self.manifest.train)
            logger.info("DestFormer with %d parameters", count_parameters(model))
            checkpoint = self.run_stage1(model)

        if self.manifest.method != "supervised-only":
            checkpoint = self.run_stage2(model)
        save_checkpoint(checkpoint, self.output_dir / "final.pt")
        self.record.flush(self.output_dir)

        if export:
            data = self.get_data()
            datasets = [d for d in (data.labeled, data.unlabeled, data.test) if d is not None]
            export_features(model, datasets, self.output_dir / "features", format="csv")
            print(f"✓ Features saved to {self.output_dir / 'features.csv'}")

        print("\n" + "=" * 60)
        print("RUN COMPLETED")
        print("=" * 60)
        print(f"Method:          {self.manifest.method}")
        print(f"Labeled ratio:   {self.record.labeled_ratio}")
        print(f"Best accuracy:   {_fmt(self.record.best_accuracy)}")
        print(f"Results saved to {self.output_dir}")
        return self.record


def _fmt(accuracy: float | None) -> str:
    return "n/a (no validation or test set)" if accuracy is None else f"{accuracy:.2f}%"


def main() -> None:
    """
    Command-line entry point of the experiment runner.

    Reads the run manifest, applies overrides, checks that the input files
    exist and runs the experiment.
    """
    parser = argparse.ArgumentParser(
        description="Semi-supervised point cloud video experiment runner",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Run a manifest
  python -m src --config runs/maple.json

  # Compare a baseline on the same split and seed
  python -m src --config runs/maple.json --method vat+entmin -o runs/vat_entmin
        """,
    )
    parser.add_argument("-c", "--config", required=True, help="Path to the run manifest JSON")
    parser.add_argument("--method", choices=METHODS, help="Override the Stage-2 method")
    parser.add_argument("--seed", type=int, help="Override the base seed")
    parser.add_argument("--mask-ratio", type=float, help="Override the masking ratio")
    parser.add_argument("-o", "--output-dir", help="Override the output directory")
    parser.add_argument("--stage1", help="Reuse a Stage-1 checkpoint")
    parser.add_argument("--export-features", action="store_true", help="Write global features")
    parser.add_argument("--log-level", default="INFO", help="Logging level (default: INFO)")
    args = parser.parse_args()

    configure_logging(args.log_level)
    if not Path(args.config).exists():
        print(f"Error: Run manifest not found: {args.config}", file=sys.stderr)
        sys.exit(1)

    try:
        manifest = load_run_manifest(args.config).with_overrides(
            method=args.method,
            output_dir=args.output_dir,
            seed=args.seed,
            mask_ratio=args.mask_ratio,
        )
        ExperimentJob(manifest).run(stage1_checkpoint=args.stage1, export=args.export_features)
    except (FileNotFoundError, ValueError) as e:
        print(f"Error: {e}", file=sys.stderr)
        sys.exit(1)


if __name__ == "__main__":
    main()
