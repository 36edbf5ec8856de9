import math

import numpy as np
import pytest

from src.data.sampling import GroupingConfig, farthest_point_sampling, group_local_areas
from src.data.synthetic import generate_synthetic_action
from src.data.video import PointCloudVideo


def brute_force_fps(points, k, seed_index=0):
    """Greedy max-min selection over the full pairwise distance matrix."""
    pairwise = np.sum((points[:, None, :] - points[None, :, :]) ** 2, axis=-1)
    selected = [seed_index]
    while len(selected) < k:
        nearest = pairwise[:, selected].min(axis=1)
        best = None
        for j in range(len(points)):
            if j not in selected and (best is None or nearest[j] > nearest[best]):
                best = j
        selected.append(best)
    return selected


class TestFarthestPointSampling:
    def test_matches_brute_force_oracle(self):
        """200 random sets, every k, identical selections."""
        rng = np.random.default_rng(7)
        for trial in range(200):
            n = int(rng.integers(1, 65))
            if trial % 2:
                # small integer grid: many exact distance ties
                points = rng.integers(0, 3, size=(n, 3)).astype(np.float64)
            else:
                points = rng.normal(size=(n, 3))
            for k in sorted({1, n, int(rng.integers(1, n + 1))}):
                got = farthest_point_sampling(points, k).tolist()
                assert got == brute_force_fps(points, k), f"trial {trial}, n={n}, k={k}"

    def test_first_index_is_seed(self):
        """Selection starts from seed_index."""
        points = np.random.default_rng(0).normal(size=(10, 3))
        assert farthest_point_sampling(points, 4, seed_index=3)[0] == 3

    def test_rigid_motion_keeps_selection(self):
        """Rotating and translating the set changes no selected index, whatever the start."""
        rng = np.random.default_rng(11)
        for trial in range(20):
            points = rng.normal(size=(40, 3))
            q, r = np.linalg.qr(rng.normal(size=(3, 3)))
            rotation = q * np.sign(np.diag(r))
            if np.linalg.det(rotation) < 0:
                rotation[:, 0] *= -1
            moved = points @ rotation.T + rng.uniform(-5, 5, size=3)
            start = int(rng.integers(0, 40))
            expected = farthest_point_sampling(points, 16, seed_index=start)
            got = farthest_point_sampling(moved, 16, seed_index=start)
            assert got[0] == start
            assert got.tolist() == expected.tolist(), f"trial {trial}"

    def test_ties_go_to_lowest_index(self):
        """Equidistant candidates resolve to the lowest index."""
        points = np.array([[0, 0, 0], [1, 0, 0], [-1, 0, 0], [0, 1, 0]], dtype=float)
        assert farthest_point_sampling(points, 2).tolist() == [0, 1]

    def test_indices_are_distinct(self):
        """Duplicated points still yield k distinct indices."""
        points = np.zeros((5, 3))
        result = farthest_point_sampling(points, 5)
        assert sorted(result.tolist()) == [0, 1, 2, 3, 4]

    @pytest.mark.parametrize("k", [0, 6])
    def test_k_out_of_range(self, k):
        """k outside [1, N] is rejected."""
        with pytest.raises(ValueError):
            farthest_point_sampling(np.zeros((5, 3)), k)

    def test_empty_input(self):
        """An empty point set is rejected."""
        with pytest.raises(ValueError):
            farthest_point_sampling(np.zeros((0, 3)), 1)


class TestGroupLocalAreas:
    @pytest.fixture
    def cfg(self):
        return GroupingConfig(radius=0.7, neighbors=4, spatial_stride=2, temporal_stride=2)

    def test_shapes(self, cfg):
        """L = T // zeta segments, ceil(N / kappa) anchors, Z * n neighbors."""
        video = generate_synthetic_action(1, frames=8, points=15, seed=0)
        grouping = group_local_areas(video, cfg)
        assert grouping.num_segments == 4
        assert grouping.num_anchors == math.ceil(15 / 2)
        assert grouping.neighbor_indices.shape == (4, 8, 2, 4)
        assert grouping.offsets.shape == (4, 8, 2, 4, 4)
        assert grouping.flat_neighbor_indices().shape == (4, 8, 8)

    def test_anchors_follow_fps_on_reference_frame(self, cfg):
        """Each segment's anchors are FPS of its first frame."""
        video = generate_synthetic_action(2, frames=6, points=12, seed=1)
        grouping = group_local_areas(video, cfg)
        for seg in range(grouping.num_segments):
            expected = farthest_point_sampling(video.coordinates[seg * 2], 6)
            np.testing.assert_array_equal(grouping.anchor_indices[seg], expected)

    def test_neighbors_inside_radius_or_fallback(self, cfg):
        """Every neighbor is within radius, or is the anchor itself with zero offset."""
        video = generate_synthetic_action(3, frames=4, points=16, seed=2)
        grouping = group_local_areas(video, cfg)
        distances = np.linalg.norm(grouping.offsets[..., :3], axis=-1)
        fallback = np.all(grouping.offsets == 0, axis=-1)
        assert np.all((distances <= cfg.radius + 1e-9) | fallback)

    def test_isolated_anchor_uses_itself(self):
        """A frame with no in-radius point falls back to the anchor."""
        frames = np.zeros((2, 2, 3), dtype=np.float32)
        frames[1] += 100.0
        video = PointCloudVideo(frames, "far")
        cfg = GroupingConfig(radius=0.5, neighbors=2, spatial_stride=2, temporal_stride=2)
        grouping = group_local_areas(video, cfg)
        assert np.all(grouping.neighbor_frames[0, :, 1] == 0)
        assert np.all(grouping.offsets[0, :, 1] == 0)

    def test_time_offsets(self, cfg):
        """dt of a found neighbor is its frame offset within the segment."""
        video = generate_synthetic_action(0, frames=4, points=8, noise_scale=0.0, seed=0)
        grouping = group_local_areas(video, cfg)
        np.testing.assert_array_equal(grouping.offsets[..., 3], grouping.neighbor_frames)
        assert set(np.unique(grouping.neighbor_frames)) <= {0, 1}

    def test_too_few_frames(self, cfg):
        """A video shorter than one segment is rejected."""
        video = generate_synthetic_action(0, frames=1, points=8, seed=0)
        with pytest.raises(ValueError, match="temporal_stride"):
            group_local_areas(video, cfg)

    def test_invalid_config(self):
        """Nonpositive radius or strides are rejected."""
        with pytest.raises(ValueError):
            GroupingConfig(radius=0, neighbors=4, spatial_stride=2, temporal_stride=2)
        with pytest.raises(ValueError):
            GroupingConfig(radius=1, neighbors=4, spatial_stride=0, temporal_stride=2)
