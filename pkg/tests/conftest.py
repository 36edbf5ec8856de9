import shutil
import tempfile

import pytest
import torch

from src.data.loader import DatasetLoader, VideoDataset, collate_videos
from src.data.split import split_dataset
from src.data.synthetic import generate_synthetic_action, write_synthetic_dataset
from src.models.config import BackboneConfig, MapleConfig
from src.training.config import RunManifest, TrainConfig, save_run_manifest
from src.training.trainer import ExperimentData


@pytest.fixture
def temp_dir():
    """Create a temporary directory for test outputs."""
    temp_dir = tempfile.mkdtemp()
    yield temp_dir
    shutil.rmtree(temp_dir)


@pytest.fixture
def tiny_backbone():
    """Smallest backbone that still exercises every stage."""
    return BackboneConfig(
        feature_dim=8,
        heads=2,
        spatial_blocks=1,
        temporal_blocks=1,
        neighbors=4,
        radius=0.7,
        num_classes=4,
    )


@pytest.fixture
def tiny_maple():
    return MapleConfig(decoder_blocks=1, max_tokens=16)


@pytest.fixture
def fast_cfg():
    """Two-epoch stages, constant learning rate, 8-frame clips."""
    return TrainConfig.toy(
        warmup_epochs=0,
        final_epochs=0,
        stage1_epochs=2,
        stage2_epochs=2,
        combo_phase_a_epochs=1,
        labeled_batch_size=2,
        unlabeled_batch_size=4,
        clip_frames=8,
    )


@pytest.fixture
def sample_videos():
    """Two videos of each of four classes, T=8, N=16."""
    return [
        generate_synthetic_action(class_id, frames=8, points=16, seed=seed)
        for class_id in range(4)
        for seed in range(2)
    ]


@pytest.fixture
def sample_batch(sample_videos, tiny_backbone):
    """Collated labeled batch of the sample videos."""
    dataset = VideoDataset.from_videos(sample_videos, tiny_backbone.grouping)
    return collate_videos([dataset[i] for i in range(len(dataset))])


@pytest.fixture(scope="session")
def synthetic_manifest(tmp_path_factory):
    """Small on-disk synthetic dataset: 4 classes, 10 train / 3 test videos each."""
    root = tmp_path_factory.mktemp("synthetic")
    return write_synthetic_dataset(
        root, num_classes=4, train_per_class=10, test_per_class=3, frames=8, points=16
    )


@pytest.fixture
def experiment_data(synthetic_manifest, tiny_backbone):
    """8 labeled, 32 unlabeled and 12 test videos."""
    loader = DatasetLoader(synthetic_manifest, tiny_backbone.grouping, clip_frames=8)
    split = split_dataset(synthetic_manifest, 0.2, seed=0)
    return ExperimentData.from_split(loader, split, validation_fraction=0.0)


@pytest.fixture(autouse=True)
def _restore_torch_rng():
    """Keep tests from leaking global RNG state into each other."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(0)
        yield


@pytest.fixture
def run_manifest(synthetic_manifest, tiny_backbone, tiny_maple, fast_cfg, temp_dir):
    """Run manifest over the synthetic dataset, writing into temp_dir/run."""
    return RunManifest(
        dataset=f"{synthetic_manifest.root}/manifest.json",
        output_dir=f"{temp_dir}/run",
        method="maple",
        labeled_ratio=0.2,
        backbone=tiny_backbone,
        maple=tiny_maple,
        train=fast_cfg,
    )


@pytest.fixture
def run_config(run_manifest, temp_dir):
    """Path of the saved run manifest."""
    path = f"{temp_dir}/run.json"
    save_run_manifest(run_manifest, path)
    return path
