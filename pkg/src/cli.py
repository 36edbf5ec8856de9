import sys
from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path

import click

from src.data.loader import DatasetLoader, load_manifest
from src.data.split import save_split, split_dataset
from src.data.synthetic import write_synthetic_dataset
from src.data.video import CLIP_POLICIES
from src.experiment_job import ExperimentJob
from src.models.checkpoint import load_checkpoint
from src.semisup.losses import METHODS
from src.training.config import load_run_manifest
from src.training.report import build_report
from src.training.sweeps import sweep_decoder_depth, sweep_mask_ratio
from src.training.trainer import evaluate, export_features
from src.utils.io_utils import save_table
from src.utils.logging_utils import configure_logging


def _require(path: str, what: str) -> None:
    if not Path(path).exists():
        click.echo(f"Error: {what} not found: {path}", err=True)
        sys.exit(1)


@contextmanager
def _errors_to_exit() -> Iterator[None]:
    try:
        yield
    except (FileNotFoundError, ValueError) as e:
        click.echo(f"Error: {e}", err=True)
        sys.exit(1)


def _parse_list(text: str, kind: type) -> list:
    try:
        return [kind(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        message = f"expected a comma-separated list of {kind.__name__}: {text}"
        raise click.BadParameter(message) from e


@click.group()
@click.option("--log-level", default="INFO", help="Logging level (DEBUG, INFO, WARNING, ...)")
@click.pass_context
def cli(ctx, log_level):
    """Semi-supervised point cloud video action recognition (DestFormer + MAPLE)"""
    ctx.ensure_object(dict)
    configure_logging(log_level)
    ctx.obj["log_level"] = log_level


@cli.command("gen-data")
@click.option("--output", "-o", default="data/synthetic", help="Dataset directory")
@click.option("--classes", default=4, show_default=True, help="Number of action classes")
@click.option("--train-per-class", default=50, show_default=True)
@click.option("--test-per-class", default=20, show_default=True)
@click.option("--frames", default=16, show_default=True, help="Frames per video")
@click.option("--points", default=64, show_default=True, help="Points per frame")
@click.option("--noise", default=0.01, show_default=True, help="Per-point jitter")
@click.option("--seed", default=0, show_default=True)
def gen_data(output, classes, train_per_class, test_per_class, frames, points, noise, seed):
    """Write a synthetic point cloud video dataset and its manifest"""
    click.echo(f"Generating {classes} classes into {output}...")
    with _errors_to_exit():
        manifest = write_synthetic_dataset(
            output,
            num_classes=classes,
            train_per_class=train_per_class,
            test_per_class=test_per_class,
            frames=frames,
            points=points,
            noise_scale=noise,
            seed=seed,
        )
    click.echo(f"✓ {len(manifest.records)} videos written, manifest at {output}/manifest.json")


@cli.command()
@click.option("--dataset", "-d", required=True, help="Dataset manifest JSON")
@click.option("--ratio", "-r", default=0.1, show_default=True, help="Labeled share per class")
@click.option("--seed", default=0, show_default=True)
@click.option("--output", "-o", default="splits/split.json", help="Split file")
def split(dataset, ratio, seed, output):
    """Split the training videos into labeled and unlabeled subsets"""
    _require(dataset, "Dataset manifest")
    with _errors_to_exit():
        result = split_dataset(load_manifest(dataset), ratio, seed=seed)
        save_split(result, output)
    click.echo(
        f"✓ {len(result.labeled_ids)} labeled / {len(result.unlabeled_ids)} unlabeled "
        f"videos saved to {output}"
    )


@cli.command()
@click.option("--config", "-c", required=True, help="Run manifest JSON")
@click.option("--method", type=click.Choice(METHODS), help="Override the Stage-2 method")
@click.option("--seed", type=int, help="Override the base seed")
@click.option("--mask-ratio", type=float, help="Override the masking ratio")
@click.option("--output-dir", "-o", help="Override the output directory")
@click.option("--stage1", help="Reuse a Stage-1 checkpoint")
@click.option("--export-features", "export", is_flag=True, help="Write global features")
def train(config, method, seed, mask_ratio, output_dir, stage1, export):
    """Run Stage 1 and Stage 2 of one experiment"""
    _require(config, "Run manifest")
    with _errors_to_exit():
        manifest = load_run_manifest(config).with_overrides(
            method=method, seed=seed, mask_ratio=mask_ratio, output_dir=output_dir
        )
        record = ExperimentJob(manifest).run(stage1_checkpoint=stage1, export=export)
    click.echo(f"Training completed: best accuracy {record.best_accuracy}")


@cli.command("evaluate")
@click.option("--checkpoint", required=True, help="Checkpoint file")
@click.option("--dataset", "-d", required=True, help="Dataset manifest JSON")
@click.option("--clip-frames", default=16, show_default=True)
@click.option("--clip-policy", type=click.Choice(CLIP_POLICIES), default="uniform-stride")
@click.option("--output", "-o", help="Optional CSV of per-video predictions")
def evaluate_cmd(checkpoint, dataset, clip_frames, clip_policy, output):
    """Accuracy of a checkpoint on the test videos of a dataset"""
    _require(checkpoint, "Checkpoint")
    _require(dataset, "Dataset manifest")
    with _errors_to_exit():
        ckpt = load_checkpoint(checkpoint)
        model = ckpt.build_model()
        loader = DatasetLoader(
            load_manifest(dataset), model.cfg.grouping, clip_frames, clip_policy
        )
        result = evaluate(model, loader.test_dataset())
    click.echo(f"Accuracy: {result.accuracy:.2f}% on {result.num_items} videos")
    for k, value in enumerate(result.per_class):
        click.echo(f"  class {k:>3}: {value:6.2f}%")
    if output:
        save_table(result.to_frame(), output, format="csv")
        click.echo(f"✓ Predictions saved to {output}")


def _sweep(config, output, run):
    _require(config, "Run manifest")
    with _errors_to_exit():
        manifest = load_run_manifest(config)
        table = run(ExperimentJob(manifest).get_data(), manifest)
    click.echo(table.to_string(index=False))
    click.echo(f"✓ Sweep saved to {output}")


@cli.command("sweep-mask")
@click.option("--config", "-c", required=True, help="Run manifest JSON")
@click.option("--ratios", default="0.25,0.5,0.75,0.9", show_default=True)
@click.option("--output", "-o", default="runs/sweep_mask_ratio.csv", help="Result table")
def sweep_mask(config, ratios, output):
    """Stage-2 accuracy as a function of the masking ratio"""
    values = _parse_list(ratios, float)
    _sweep(
        config,
        output,
        lambda data, m: sweep_mask_ratio(
            data, values, m.train, m.backbone, m.maple, output_path=output
        ),
    )


@cli.command("sweep-decoder-depth")
@click.option("--config", "-c", required=True, help="Run manifest JSON")
@click.option("--depths", default="1,2,4,8", show_default=True)
@click.option("--output", "-o", default="runs/sweep_decoder_depth.csv", help="Result table")
def sweep_depth(config, depths, output):
    """Stage-2 accuracy as a function of the temporal decoder depth"""
    values = _parse_list(depths, int)
    _sweep(
        config,
        output,
        lambda data, m: sweep_decoder_depth(
            data, values, m.train, m.backbone, m.maple, output_path=output
        ),
    )


@cli.command("export-features")
@click.option("--checkpoint", required=True, help="Checkpoint file")
@click.option("--dataset", "-d", required=True, help="Dataset manifest JSON")
@click.option("--subset", type=click.Choice(["train", "test", "all"]), default="all")
@click.option("--clip-frames", default=16, show_default=True)
@click.option("--output", "-o", default="runs/features.csv", help="Feature table")
@click.option("--format", "fmt", type=click.Choice(["csv", "parquet"]), default="csv")
def export_features_cmd(checkpoint, dataset, subset, clip_frames, output, fmt):
    """Write the global feature vector of every video"""
    _require(checkpoint, "Checkpoint")
    _require(dataset, "Dataset manifest")
    with _errors_to_exit():
        model = load_checkpoint(checkpoint).build_model()
        manifest = load_manifest(dataset)
        loader = DatasetLoader(manifest, model.cfg.grouping, clip_frames)
        subsets = ["train", "test"] if subset == "all" else [subset]
        datasets = [
            loader.dataset([r.video_id for r in manifest.subset(name)], labeled=True)
            for name in subsets
        ]
        frame = export_features(model, datasets, output, format=fmt)
    click.echo(f"✓ {len(frame)} feature vectors saved to {output}")


@cli.command()
@click.option("--runs", "-r", default="runs", help="Directory with one sub-directory per run")
@click.option("--output", "-o", help="Report directory (default: <runs>/report)")
@click.option("--format", "fmt", type=click.Choice(["csv", "parquet"]), default="csv")
def report(runs, output, fmt):
    """Aggregate finished runs into accuracy tables and figures"""
    _require(runs, "Run directory")
    with _errors_to_exit():
        result = build_report(runs, output, format=fmt)
    click.echo(f"Runs: {len(result.runs)}")
    if len(result.accuracy_matrix):
        click.echo(result.accuracy_matrix.to_string())
    for message in result.warnings:
        click.secho(f"Warning (partial report): {message}", fg="yellow", err=True)
    click.echo("Report completed successfully!")


def main():
    cli(obj={})


if __name__ == "__main__":
    main()
