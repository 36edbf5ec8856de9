"""Farthest point sampling and spatio-temporal local-area grouping.

The grouping is the data-preparation step of the backbone: each temporal
segment of ``temporal_stride`` adjacent frames gets ceil(N / spatial_stride)
anchors chosen by farthest point sampling on the segment's first frame, and
every anchor gathers up to ``neighbors`` in-radius points from each frame of
its segment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from src.data.video import PointCloudVideo


def _squared_distances(points: np.ndarray, index: int) -> np.ndarray:
    return np.sum((points - points[index]) ** 2, axis=1)


def farthest_point_sampling(points: np.ndarray, k: int, seed_index: int = 0) -> np.ndarray:
    """
    Greedy max-min-distance subset selection.

    The first selected index is ``seed_index``. Each following index is the
    unselected point whose minimum Euclidean distance to the selected set is
    largest; ties go to the lowest index.

    Args:
        points: Array of shape (N, 3).
        k: Number of indices to return, 1 <= k <= N.
        seed_index: Index of the first selected point.

    Returns:
        Integer array of k distinct indices in selection order.

    Raises:
        ValueError: On empty input, k outside [1, N] or an invalid seed_index.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] == 0:
        raise ValueError(f"points must be a non-empty (N, 3) array, got {points.shape}")
    total = points.shape[0]
    if not 1 <= k <= total:
        raise ValueError(f"k must be in [1, {total}], got {k}")
    if not 0 <= seed_index < total:
        raise ValueError(f"seed_index {seed_index} out of range for {total} points")

    selected = np.empty(k, dtype=np.int64)
    selected[0] = seed_index
    min_dist = _squared_distances(points, seed_index)
    min_dist[seed_index] = -np.inf
    for i in range(1, k):
        # argmax returns the first maximum, which gives the lowest-index tie rule
        nxt = int(np.argmax(min_dist))
        selected[i] = nxt
        min_dist = np.minimum(min_dist, _squared_distances(points, nxt))
        min_dist[selected[: i + 1]] = -np.inf
    return selected


@dataclass(frozen=True)
class GroupingConfig:
    """Parameters of the local-area construction."""

    radius: float
    neighbors: int
    spatial_stride: int
    temporal_stride: int

    def __post_init__(self) -> None:
        if self.radius <= 0:
            raise ValueError(f"radius must be > 0, got {self.radius}")
        if self.neighbors < 1:
            raise ValueError(f"neighbors must be >= 1, got {self.neighbors}")
        if self.spatial_stride < 1 or self.temporal_stride < 1:
            raise ValueError(
                "spatial_stride and temporal_stride must be >= 1, got "
                f"{self.spatial_stride} and {self.temporal_stride}"
            )


@dataclass(frozen=True)
class LocalAreaGrouping:
    """
    Local areas of one video.

    With L segments, A anchors per segment, Z = temporal_stride frames per
    segment and n neighbors per frame:

    Attributes:
        anchor_indices: (L, A) point indices into each segment's reference frame.
        anchor_coords: (L, A, 3) anchor coordinates.
        neighbor_indices: (L, A, Z, n) point indices into the frame given by
            ``segment * Z + neighbor_frames``.
        neighbor_frames: (L, A, Z, n) frame offset relative to the reference frame.
            A fallback neighbor (the anchor itself) has offset 0.
        offsets: (L, A, Z, n, 4) relative (dx, dy, dz, dt) of every neighbor.
        temporal_stride: Z.
        num_points: N of the source video.
    """

    anchor_indices: np.ndarray
    anchor_coords: np.ndarray
    neighbor_indices: np.ndarray
    neighbor_frames: np.ndarray
    offsets: np.ndarray
    temporal_stride: int
    num_points: int

    @property
    def num_segments(self) -> int:
        return int(self.anchor_indices.shape[0])

    @property
    def num_anchors(self) -> int:
        return int(self.anchor_indices.shape[1])

    def reference_frames(self) -> np.ndarray:
        return np.arange(self.num_segments) * self.temporal_stride

    def flat_anchor_indices(self) -> np.ndarray:
        """Anchor indices into the (T * N) flattened point array, shape (L, A)."""
        ref = self.reference_frames()[:, None]
        return ref * self.num_points + self.anchor_indices

    def flat_neighbor_indices(self) -> np.ndarray:
        """Neighbor indices into the (T * N) flattened point array, shape (L, A, Z * n)."""
        ref = self.reference_frames()[:, None, None, None]
        flat = (ref + self.neighbor_frames) * self.num_points + self.neighbor_indices
        return flat.reshape(self.num_segments, self.num_anchors, -1)


def _ball_query(
    anchors: np.ndarray, frame: np.ndarray, radius: float, neighbors: int
) -> tuple[np.ndarray, np.ndarray]:
    """
    Up to ``neighbors`` lowest-index in-radius points per anchor.

    Returns the (A, n) index array and a (A,) mask of anchors that found at
    least one point. Short lists repeat their first in-radius point.
    """
    total = frame.shape[0]
    dist = np.sum((anchors[:, None, :] - frame[None, :, :]) ** 2, axis=-1)
    candidates = np.where(dist <= radius**2, np.arange(total)[None, :], total)
    candidates = np.sort(candidates, axis=1)[:, :neighbors]
    if candidates.shape[1] < neighbors:
        pad = np.full((candidates.shape[0], neighbors - candidates.shape[1]), total)
        candidates = np.concatenate([candidates, pad], axis=1)
    found = candidates[:, 0] < total
    first = np.repeat(candidates[:, :1], neighbors, axis=1)
    candidates = np.where(candidates == total, first, candidates)
    return candidates, found


def group_local_areas(video: PointCloudVideo, cfg: GroupingConfig) -> LocalAreaGrouping:
    """
    Build the spatio-temporal local areas of a video.

    For each of floor(T / Z) segments the anchors are FPS-selected (seed
    index 0) from the segment's first frame. Each anchor gathers up to n
    in-radius neighbors from every frame of the segment. An anchor with no
    in-radius point in some frame uses itself (offset zero) for that frame.

    Raises:
        ValueError: If the video has fewer frames than ``cfg.temporal_stride``.
    """
    stride = cfg.temporal_stride
    if video.num_frames < stride:
        raise ValueError(
            f"video {video.video_id!r} has {video.num_frames} frames, "
            f"fewer than temporal_stride={stride}"
        )

    coords = video.coordinates.astype(np.float64)
    num_points = video.num_points
    segments = video.num_frames // stride
    anchors_per_segment = math.ceil(num_points / cfg.spatial_stride)
    n = cfg.neighbors

    anchor_indices = np.empty((segments, anchors_per_segment), dtype=np.int64)
    neighbor_indices = np.empty((segments, anchors_per_segment, stride, n), dtype=np.int64)
    neighbor_frames = np.empty_like(neighbor_indices)

    for seg in range(segments):
        ref = seg * stride
        chosen = farthest_point_sampling(coords[ref], anchors_per_segment, seed_index=0)
        anchor_indices[seg] = chosen
        anchor_xyz = coords[ref][chosen]
        for k in range(stride):
            idx, found = _ball_query(anchor_xyz, coords[ref + k], cfg.radius, n)
            frame_offset = np.full_like(idx, k)
            idx[~found] = chosen[~found, None]
            frame_offset[~found] = 0
            neighbor_indices[seg, :, k] = idx
            neighbor_frames[seg, :, k] = frame_offset

    ref_frames = np.arange(segments) * stride
    anchor_coords = coords[ref_frames[:, None], anchor_indices]
    neighbor_coords = coords[ref_frames[:, None, None, None] + neighbor_frames, neighbor_indices]
    offsets = np.concatenate(
        [
            neighbor_coords - anchor_coords[:, :, None, None, :],
            neighbor_frames[..., None].astype(np.float64),
        ],
        axis=-1,
    )

    return LocalAreaGrouping(
        anchor_indices=anchor_indices,
        anchor_coords=anchor_coords,
        neighbor_indices=neighbor_indices,
        neighbor_frames=neighbor_frames,
        offsets=offsets,
        temporal_stride=stride,
        num_points=num_points,
    )
