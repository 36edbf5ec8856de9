import pytest

from src.data.loader import DatasetManifest, VideoRecord
from src.data.split import (
    carve_validation,
    labeled_count,
    load_split,
    save_split,
    split_dataset,
)


def make_manifest(class_sizes, test_per_class=0):
    """Manifest whose records point nowhere; splitting never reads files."""
    records = []
    for class_id, size in enumerate(class_sizes):
        for i in range(size):
            records.append(
                VideoRecord(f"c{class_id}_v{i}", f"{class_id}/{i}.pcv", class_id, 16, 64)
            )
        for i in range(test_per_class):
            records.append(
                VideoRecord(f"c{class_id}_t{i}", f"{class_id}/t{i}.pcv", class_id, 16, 64, "test")
            )
    names = tuple(f"class_{k}" for k in range(len(class_sizes)))
    return DatasetManifest(root="/nowhere", records=tuple(records), class_names=names)


class TestLabeledCount:
    def test_floor(self):
        """floor(ratio * n) when positive."""
        assert labeled_count(0.05, 672) == 33
        assert labeled_count(0.1, 50) == 5

    def test_round_half_up_rescue(self):
        """A class that floors to zero is rounded instead."""
        assert labeled_count(0.075, 13) == 1
        assert labeled_count(0.075, 14) == 1
        assert labeled_count(0.01, 13) == 0


class TestSplitDataset:
    def test_msr_sized_split(self):
        """270 videos over 20 classes at 7.5 % give 20 / 250."""
        manifest = make_manifest([13] * 10 + [14] * 10)
        split = split_dataset(manifest, 0.075, seed=0)
        assert (len(split.labeled_ids), len(split.unlabeled_ids)) == (20, 250)

    def test_ntu_sized_split(self):
        """40,320 videos over 60 classes at 5 % give 1980 / 38340."""
        manifest = make_manifest([672] * 60)
        split = split_dataset(manifest, 0.05, seed=0)
        assert (len(split.labeled_ids), len(split.unlabeled_ids)) == (1980, 38340)

    def test_stratified_and_disjoint(self):
        """Every class gets its share; D_l and D_u partition the training set."""
        manifest = make_manifest([10, 20, 30], test_per_class=2)
        split = split_dataset(manifest, 0.1, seed=1)
        per_class = [sum(v.startswith(f"c{k}_") for v in split.labeled_ids) for k in range(3)]
        assert per_class == [1, 2, 3]
        assert not set(split.labeled_ids) & set(split.unlabeled_ids)
        train_ids = {r.video_id for r in manifest.subset("train")}
        assert set(split.labeled_ids) | set(split.unlabeled_ids) == train_ids

    def test_seeded(self):
        """Same seed, same split; another seed, another split."""
        manifest = make_manifest([40] * 4)
        a = split_dataset(manifest, 0.25, seed=3)
        b = split_dataset(manifest, 0.25, seed=3)
        c = split_dataset(manifest, 0.25, seed=4)
        assert a.labeled_ids == b.labeled_ids
        assert a.labeled_ids != c.labeled_ids

    @pytest.mark.parametrize("ratio", [0.0, -0.1, 1.5])
    def test_ratio_out_of_range(self, ratio):
        """Ratios outside (0, 1] are rejected."""
        with pytest.raises(ValueError):
            split_dataset(make_manifest([10, 10]), ratio)

    def test_ratio_too_small(self):
        """A ratio leaving a class without labels is rejected."""
        with pytest.raises(ValueError, match="no labeled video"):
            split_dataset(make_manifest([13, 13]), 0.01)

    def test_class_without_videos(self):
        """A class with no training video is rejected."""
        with pytest.raises(ValueError, match="without training videos"):
            split_dataset(make_manifest([10, 0]), 0.5)


class TestSplitFiles:
    def test_save_and_load(self, temp_dir):
        """A saved split loads back identically."""
        split = split_dataset(make_manifest([10, 10]), 0.2, seed=2)
        save_split(split, f"{temp_dir}/split.json")
        assert load_split(f"{temp_dir}/split.json") == split

    def test_bad_version(self, temp_dir):
        """Unknown split versions are rejected."""
        from src.utils.io_utils import write_json

        write_json(f"{temp_dir}/split.json", {"format_version": 9})
        with pytest.raises(ValueError, match="version"):
            load_split(f"{temp_dir}/split.json")


class TestCarveValidation:
    def test_holds_out_rounded_share(self):
        """round(fraction * n) ids move to validation, order preserved."""
        ids = [f"v{i}" for i in range(8)]
        train, val = carve_validation(ids, 0.25, seed=0)
        assert len(val) == 2
        assert sorted(train + val) == sorted(ids)
        assert train == [v for v in ids if v in train]

    def test_zero_fraction(self):
        """Fraction 0 keeps everything for training."""
        assert carve_validation(["a", "b"], 0.0) == (["a", "b"], [])

    def test_keeps_one_training_video(self):
        """Validation never takes the whole labeled set."""
        train, val = carve_validation(["a", "b"], 0.9)
        assert len(train) == 1 and len(val) == 1
