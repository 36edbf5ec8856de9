"""Point cloud video data model, temporal clipping and the binary point-file codec.

A point cloud video is a sequence of T frames, each holding N points with
3 spatial coordinates followed by C feature channels. Every dataset shipped
with this project has C = 0.

Point-file layout (little-endian):
    magic     4 bytes   b"PCVD"
    version   uint16    currently 1
    T, N, C   uint32 x3
    payload   float32   frame-major, shape (T, N, 3 + C)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

POINT_FILE_MAGIC = b"PCVD"
POINT_FILE_VERSION = 1
_HEADER = struct.Struct("<4sHIII")

CLIP_POLICIES = ("uniform-stride", "random-crop", "loop-pad")


@dataclass(frozen=True)
class PointCloudVideo:
    """
    A T-frame sequence of N-point frames.

    Attributes:
        frames: Array of shape (T, N, 3 + C). Columns 0-2 are x, y, z.
        video_id: Identifier unique within a dataset manifest.
        class_id: Action label, or None for videos whose label is withheld.
    """

    frames: np.ndarray
    video_id: str
    class_id: int | None = None

    def __post_init__(self) -> None:
        frames = np.asarray(self.frames)
        if frames.ndim != 3 or frames.shape[2] < 3:
            raise ValueError(
                f"frames must have shape (T, N, 3 + C), got {tuple(frames.shape)} "
                f"for video {self.video_id!r}"
            )
        if frames.shape[0] < 1 or frames.shape[1] < 1:
            raise ValueError(f"video {self.video_id!r} needs T >= 1 and N >= 1")
        if not np.all(np.isfinite(frames)):
            raise ValueError(f"video {self.video_id!r} contains non-finite coordinates")
        object.__setattr__(self, "frames", frames)

    @property
    def num_frames(self) -> int:
        return int(self.frames.shape[0])

    @property
    def num_points(self) -> int:
        return int(self.frames.shape[1])

    @property
    def num_channels(self) -> int:
        """Feature channels C beyond the three coordinates."""
        return int(self.frames.shape[2]) - 3

    @property
    def coordinates(self) -> np.ndarray:
        """Spatial part of every frame, shape (T, N, 3)."""
        return self.frames[:, :, :3]

    def without_label(self) -> PointCloudVideo:
        return PointCloudVideo(self.frames, self.video_id, None)


def temporal_clip(
    video: PointCloudVideo,
    target_frames: int,
    policy: str = "uniform-stride",
    seed: int = 0,
) -> PointCloudVideo:
    """
    Resample a video to exactly ``target_frames`` frames.

    Args:
        video: Source video with T >= 1 frames.
        target_frames: Desired frame count.
        policy: One of:
            - "uniform-stride": frame i maps to floor(i * T / target_frames).
            - "random-crop": a contiguous window starting at a seeded random
              offset; falls back to loop-pad when T < target_frames.
            - "loop-pad": frames 0..T-1 repeated cyclically; truncates when
              T > target_frames.
        seed: Seed for "random-crop".

    Returns:
        A new PointCloudVideo with the same id and label.

    Raises:
        ValueError: If the policy is unknown or target_frames < 1.
    """
    if target_frames < 1:
        raise ValueError(f"target_frames must be >= 1, got {target_frames}")
    if policy not in CLIP_POLICIES:
        raise ValueError(f"Unknown clip policy: {policy}. Supported policies: {CLIP_POLICIES}")

    total = video.num_frames
    if policy == "uniform-stride":
        index = (np.arange(target_frames) * total) // target_frames
    elif policy == "random-crop" and total >= target_frames:
        rng = np.random.default_rng(seed)
        start = int(rng.integers(0, total - target_frames + 1))
        index = np.arange(start, start + target_frames)
    else:
        index = np.arange(target_frames) % total

    return PointCloudVideo(video.frames[index], video.video_id, video.class_id)


def write_point_file(video: PointCloudVideo, path: str | Path) -> None:
    """Write a video in the binary point-file format."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = _HEADER.pack(
        POINT_FILE_MAGIC,
        POINT_FILE_VERSION,
        video.num_frames,
        video.num_points,
        video.num_channels,
    )
    payload = np.ascontiguousarray(video.frames, dtype="<f4").tobytes()
    path.write_bytes(header + payload)


def read_point_file(
    path: str | Path, video_id: str, class_id: int | None = None
) -> PointCloudVideo:
    """
    Read a binary point file.

    Raises:
        FileNotFoundError: If the file does not exist.
        ValueError: On a bad magic number, unsupported version or truncated payload.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Point file not found: {path}")

    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"Point file too short for a header: {path}")
    magic, version, frames, points, channels = _HEADER.unpack_from(raw)
    if magic != POINT_FILE_MAGIC:
        raise ValueError(f"Bad magic {magic!r} in point file {path}")
    if version != POINT_FILE_VERSION:
        raise ValueError(f"Unsupported point file version {version} in {path}")

    expected = frames * points * (3 + channels)
    data = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size)
    if data.size != expected:
        raise ValueError(
            f"Point file {path} holds {data.size} values, header promises {expected}"
        )
    return PointCloudVideo(
        data.reshape(frames, points, 3 + channels).astype(np.float32),
        video_id,
        class_id,
    )
