"""Desk-scale direction checks on the synthetic dataset.

These train the default-width backbone for several seeds and methods and take
minutes on a CPU; they are deselected unless ``-m slow`` is given.
"""

import statistics

import pytest

from src.data.loader import DatasetLoader
from src.data.split import split_dataset
from src.data.synthetic import write_synthetic_dataset
from src.models.config import BackboneConfig, MapleConfig
from src.training.config import TrainConfig
from src.training.trainer import (
    ExperimentData,
    evaluate,
    make_model,
    train_semisupervised,
    train_supervised,
)

pytestmark = pytest.mark.slow

SEEDS = (0, 1, 2)
METHODS = ("supervised-only", "maple", "vat+entmin+maple")


@pytest.fixture(scope="module")
def toy_dataset(tmp_path_factory):
    """4 classes, 50 train / 20 test videos each, T=16, N=64."""
    return write_synthetic_dataset(
        tmp_path_factory.mktemp("toy"), num_classes=4, train_per_class=50, test_per_class=20
    )


@pytest.fixture(scope="module")
def toy_runs(toy_dataset):
    """Stage-1 records and Stage-2 (accuracy, record) per seed and method."""
    backbone = BackboneConfig(num_classes=4)
    maple = MapleConfig()
    runs = {}
    for seed in SEEDS:
        cfg = TrainConfig.toy(seed=seed)
        loader = DatasetLoader(toy_dataset, backbone.grouping, clip_frames=cfg.clip_frames)
        data = ExperimentData.from_split(loader, split_dataset(toy_dataset, 0.1, seed=seed))
        model = make_model(backbone, cfg)
        stage1, stage1_record = train_supervised(data.labeled, model, cfg)
        runs[(seed, "stage1")] = (None, stage1_record)
        for method in METHODS:
            model = stage1.build_model()
            _, record = train_semisupervised(
                data.labeled, data.unlabeled, model, method, cfg, maple_cfg=maple
            )
            runs[(seed, method)] = (evaluate(model, data.test).accuracy, record)
    return runs


def median_accuracy(runs, method):
    return statistics.median(runs[(seed, method)][0] for seed in SEEDS)


class TestSemiSupervisedDirection:
    def test_maple_beats_supervised(self, toy_runs):
        """Median over seeds: MAPLE >= supervised-only + 2 points."""
        supervised = median_accuracy(toy_runs, "supervised-only")
        assert median_accuracy(toy_runs, "maple") >= supervised + 2

    def test_combo_keeps_maple_level(self, toy_runs):
        """Median over seeds: VAT+EntMin+MAPLE >= MAPLE - 1 point."""
        maple = median_accuracy(toy_runs, "maple")
        assert median_accuracy(toy_runs, "vat+entmin+maple") >= maple - 1


class TestNormStability:
    def test_reconstruction_norm_tracks_tokens(self, toy_runs):
        """Mean ||r|| over Stage 2 stays within [0.2x, 5x] of the Stage-1 mean ||g||."""
        _, stage1 = toy_runs[(0, "stage1")]
        _, stage2 = toy_runs[(0, "maple")]
        g_norm = stage1.stage_mean("g_norm", 1)
        r_norm = stage2.stage_mean("r_norm", 2)
        assert 0.2 * g_norm <= r_norm <= 5 * g_norm

    @pytest.mark.parametrize("method", ["maple-mse-detached", "maple-mse-attached"])
    def test_mse_ablation_traces_complete(self, toy_dataset, method):
        """The MSE ablations log a norm for every epoch of Stage 2."""
        backbone = BackboneConfig(num_classes=4)
        cfg = TrainConfig.toy(stage2_epochs=5, combo_phase_a_epochs=0, final_epochs=1)
        loader = DatasetLoader(toy_dataset, backbone.grouping, clip_frames=cfg.clip_frames)
        data = ExperimentData.from_split(loader, split_dataset(toy_dataset, 0.1, seed=0))
        model = make_model(backbone, cfg)
        train_supervised(data.labeled, model, cfg)
        _, record = train_semisupervised(
            data.labeled, data.unlabeled, model, method, cfg, maple_cfg=MapleConfig()
        )
        stage2 = [e for e in record.epochs if e.stage == 2]
        assert len(stage2) == 5
        assert all(e.r_norm is not None for e in stage2)
