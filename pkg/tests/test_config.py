import json
from dataclasses import replace

import pytest

from src.models.config import BackboneConfig, MapleConfig
from src.semisup.losses import UnsupLossWeights, VatConfig
from src.training.config import (
    RunManifest,
    TrainConfig,
    load_run_manifest,
    save_run_manifest,
)


class TestTrainConfig:
    def test_defaults(self):
        """Defaults describe the 40-epoch SGD schedule; b_u falls back to b_l."""
        cfg = TrainConfig()
        assert (cfg.stage1_epochs, cfg.stage2_epochs) == (40, 40)
        assert cfg.optimizer == "sgd"
        assert cfg.b_u == cfg.labeled_batch_size == 14
        assert replace(cfg, unlabeled_batch_size=28).b_u == 28

    def test_presets(self):
        """Dataset-scale presets carry their own budgets and autoencoder weights."""
        msr, ntu = TrainConfig.msr_scale(), TrainConfig.ntu_scale()
        assert (msr.stage1_epochs, msr.labeled_batch_size, msr.weights.maple) == (40, 14, 0.5)
        assert (ntu.stage1_epochs, ntu.labeled_batch_size, ntu.weights.maple) == (20, 32, 0.2)
        assert TrainConfig.toy(seed=3).seed == 3

    @pytest.mark.parametrize(
        "override",
        [
            {"base_lr": 0.0},
            {"stage1_epochs": -1},
            {"stage1_epochs": 12},
            {"combo_phase_a_epochs": 41},
            {"labeled_batch_size": 0},
            {"unlabeled_batch_size": 4},
            {"mask_ratio": 1.0},
            {"optimizer": "lbfgs"},
            {"dtype": "float16"},
            {"clip_policy": "reverse"},
            {"validation_fraction": 1.0},
            {"early_stop_patience": 0},
            {"clip_frames": 0},
        ],
    )
    def test_invalid_values(self, override):
        """Invalid hyperparameters are rejected at construction."""
        with pytest.raises(ValueError):
            TrainConfig(**override)

    def test_zero_epoch_stage_skips_schedule_check(self):
        """A disabled stage does not need room for warm-up."""
        assert TrainConfig(stage2_epochs=0, combo_phase_a_epochs=0).stage2_epochs == 0

    def test_dict_round_trip(self):
        """to_dict/from_dict restore the config; weights and VAT travel separately."""
        cfg = TrainConfig.toy(seed=5, early_stop_patience=3)
        again = TrainConfig.from_dict(cfg.to_dict(), weights=cfg.weights, vat=cfg.vat)
        assert again == cfg
        assert "weights" not in cfg.to_dict()

    def test_from_dict_rejects_unknown_keys(self):
        """Unknown keys are rejected."""
        with pytest.raises(ValueError, match="Unknown TrainConfig keys"):
            TrainConfig.from_dict({"epochs": 3})


class TestRunManifest:
    @pytest.fixture
    def manifest(self, temp_dir):
        return RunManifest(
            dataset=f"{temp_dir}/dataset.json",
            output_dir=f"{temp_dir}/run",
            method="vat+entmin",
            backbone=BackboneConfig(feature_dim=16, heads=2),
            maple=MapleConfig(decoder_blocks=2),
            train=TrainConfig.toy(
                weights=UnsupLossWeights(maple=0.5), vat=VatConfig(eps=0.2, power_iterations=2)
            ),
            report_formats=("csv", "parquet"),
        )

    def test_save_and_load(self, manifest, temp_dir):
        """A saved manifest loads back equal."""
        path = f"{temp_dir}/run.json"
        save_run_manifest(manifest, path)
        assert load_run_manifest(path) == manifest
        with open(path) as f:
            assert json.load(f)["schema_version"] == 1

    def test_schema_version(self, manifest):
        """Documents from another schema version are rejected."""
        data = manifest.to_dict()
        data["schema_version"] = 2
        with pytest.raises(ValueError, match="schema_version"):
            RunManifest.from_dict(data)

    @pytest.mark.parametrize("section", [None, "train", "vat", "weights"])
    def test_unknown_keys(self, manifest, section):
        """Unknown keys are rejected at every level."""
        data = manifest.to_dict()
        target = data if section is None else data[section]
        target["surprise"] = 1
        with pytest.raises(ValueError, match="Unknown"):
            RunManifest.from_dict(data)

    def test_required_fields(self):
        """dataset and output_dir are required."""
        with pytest.raises(ValueError, match="dataset"):
            RunManifest.from_dict({"schema_version": 1, "dataset": "d.json"})

    def test_invalid_fields(self, temp_dir):
        """Unknown methods, ratios and formats are rejected."""
        with pytest.raises(ValueError, match="Unknown method"):
            RunManifest("d.json", temp_dir, method="mixmatch")
        with pytest.raises(ValueError, match="labeled_ratio"):
            RunManifest("d.json", temp_dir, labeled_ratio=0.0)
        with pytest.raises(ValueError, match="Unsupported format"):
            RunManifest("d.json", temp_dir, report_formats=("xlsx",))

    def test_overrides(self, manifest):
        """Overrides replace fields; None values are ignored; seed and mask_ratio reach train."""
        updated = manifest.with_overrides(method="maple", seed=7, mask_ratio=0.5, split=None)
        assert updated.method == "maple"
        assert updated.train.seed == 7
        assert updated.train.mask_ratio == 0.5
        assert updated.split == manifest.split
        assert manifest.train.seed == 0

    def test_check_paths(self, manifest, temp_dir):
        """Missing dataset or split files raise FileNotFoundError."""
        with pytest.raises(FileNotFoundError):
            manifest.check_paths()
        with open(manifest.dataset, "w") as f:
            f.write("{}")
        manifest.check_paths()
        with pytest.raises(FileNotFoundError):
            replace(manifest, split=f"{temp_dir}/split.json").check_paths()
