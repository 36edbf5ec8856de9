import json
from pathlib import Path

import pandas as pd
import pytest
from click.testing import CliRunner

from src.cli import cli


@pytest.fixture
def runner():
    return CliRunner()


def invoke(runner, *args):
    return runner.invoke(cli, ["--log-level", "WARNING", *args], obj={})


class TestDataCommands:
    def test_gen_data_and_split(self, runner, temp_dir):
        """gen-data writes a dataset; split writes a stratified split of it."""
        data_dir = f"{temp_dir}/data"
        result = invoke(
            runner,
            "gen-data",
            "-o",
            data_dir,
            "--classes",
            "3",
            "--train-per-class",
            "5",
            "--test-per-class",
            "2",
            "--frames",
            "8",
            "--points",
            "16",
        )
        assert result.exit_code == 0, result.output
        assert "21 videos written" in result.output

        split_path = f"{temp_dir}/split.json"
        result = invoke(
            runner, "split", "-d", f"{data_dir}/manifest.json", "-r", "0.4", "-o", split_path
        )
        assert result.exit_code == 0, result.output
        with open(split_path) as f:
            split = json.load(f)
        assert len(split["labeled_ids"]) == 6
        assert len(split["unlabeled_ids"]) == 9

    def test_split_missing_dataset(self, runner, temp_dir):
        """A missing manifest exits with status 1."""
        result = invoke(runner, "split", "-d", f"{temp_dir}/absent.json")
        assert result.exit_code == 1
        assert "not found" in result.output

    def test_split_invalid_ratio(self, runner, synthetic_manifest, temp_dir):
        """Invalid values are reported as errors, not tracebacks."""
        result = invoke(
            runner,
            "split",
            "-d",
            f"{synthetic_manifest.root}/manifest.json",
            "-r",
            "1.5",
            "-o",
            f"{temp_dir}/s.json",
        )
        assert result.exit_code == 1
        assert "Error" in result.output


class TestTrainAndEvaluate:
    def test_train_evaluate_export_report(self, runner, run_config, run_manifest, temp_dir):
        """A run trains end to end and its checkpoint evaluates, exports and reports."""
        out = Path(run_manifest.output_dir)
        result = invoke(runner, "train", "-c", run_config, "--method", "vat+entmin+maple")
        assert result.exit_code == 0, result.output
        assert "Training completed" in result.output
        assert (out / "final.pt").exists()

        dataset = run_manifest.dataset
        predictions = f"{temp_dir}/predictions.csv"
        result = invoke(
            runner,
            "evaluate",
            "--checkpoint",
            str(out / "final.pt"),
            "-d",
            dataset,
            "--clip-frames",
            "8",
            "-o",
            predictions,
        )
        assert result.exit_code == 0, result.output
        assert "on 12 videos" in result.output
        assert len(pd.read_csv(predictions)) == 12

        features = f"{temp_dir}/features.csv"
        result = invoke(
            runner,
            "export-features",
            "--checkpoint",
            str(out / "final.pt"),
            "-d",
            dataset,
            "--subset",
            "test",
            "--clip-frames",
            "8",
            "-o",
            features,
        )
        assert result.exit_code == 0, result.output
        assert len(pd.read_csv(features)) == 12

        result = invoke(runner, "report", "-r", str(out.parent))
        assert result.exit_code == 0, result.output
        assert "Runs: 1" in result.output
        assert (out.parent / "report" / "report.json").exists()

    def test_train_missing_config(self, runner, temp_dir):
        """A missing run manifest exits with status 1."""
        result = invoke(runner, "train", "-c", f"{temp_dir}/absent.json")
        assert result.exit_code == 1
        assert "Run manifest not found" in result.output

    def test_train_unknown_method(self, runner, run_config):
        """Methods are validated by click."""
        result = invoke(runner, "train", "-c", run_config, "--method", "mixmatch")
        assert result.exit_code == 2

    def test_evaluate_missing_checkpoint(self, runner, run_manifest, temp_dir):
        """A missing checkpoint exits with status 1."""
        result = invoke(
            runner, "evaluate", "--checkpoint", f"{temp_dir}/absent.pt", "-d", run_manifest.dataset
        )
        assert result.exit_code == 1
        assert "Checkpoint not found" in result.output

    def test_report_missing_runs(self, runner, temp_dir):
        """A missing run directory exits with status 1."""
        result = invoke(runner, "report", "-r", f"{temp_dir}/absent")
        assert result.exit_code == 1


class TestSweepCommands:
    def test_sweep_mask(self, runner, run_config, temp_dir):
        """sweep-mask writes one row per ratio."""
        output = f"{temp_dir}/sweep_mask_ratio.csv"
        result = invoke(
            runner, "sweep-mask", "-c", run_config, "--ratios", "0.5,0.75", "-o", output
        )
        assert result.exit_code == 0, result.output
        assert pd.read_csv(output)["mask_ratio"].tolist() == [0.5, 0.75]

    def test_sweep_depth_bad_list(self, runner, run_config):
        """Malformed lists are rejected as bad parameters."""
        result = invoke(runner, "sweep-decoder-depth", "-c", run_config, "--depths", "1,two")
        assert result.exit_code == 2
