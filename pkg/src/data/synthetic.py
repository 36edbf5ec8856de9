"""Synthetic point cloud action videos.

Each action class is a parametric motion of an elongated Gaussian point
blob: a translation, a rotation, an oscillation or a scale pulse. The
blob shape, its size and a small global offset are drawn per video from
the seed, and isotropic Gaussian noise is added to every frame.

These stand in for depth-camera action datasets so the whole pipeline can
be trained and checked on a laptop.
"""

from __future__ import annotations

import logging
from collections.abc import Callable
from pathlib import Path

import numpy as np

from src.data.loader import DatasetManifest, VideoRecord, save_manifest
from src.data.video import PointCloudVideo, write_point_file

logger = logging.getLogger(__name__)

BLOB_STD = np.array([0.6, 0.35, 0.15])


def _rotation(axis: int, angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    i, j = [a for a in range(3) if a != axis]
    rot = np.eye(3)
    rot[i, i], rot[i, j], rot[j, i], rot[j, j] = c, -s, s, c
    return rot


def _translate(axis: int, distance: float) -> Callable[[np.ndarray, float], np.ndarray]:
    def motion(points: np.ndarray, s: float) -> np.ndarray:
        shift = np.zeros(3)
        shift[axis] = distance * s
        return points + shift

    return motion


def _rotate(axis: int, angle: float) -> Callable[[np.ndarray, float], np.ndarray]:
    def motion(points: np.ndarray, s: float) -> np.ndarray:
        return points @ _rotation(axis, angle * s).T

    return motion


def _oscillate(axis: int, amplitude: float) -> Callable[[np.ndarray, float], np.ndarray]:
    def motion(points: np.ndarray, s: float) -> np.ndarray:
        shift = np.zeros(3)
        shift[axis] = amplitude * np.sin(2.0 * np.pi * s)
        return points + shift

    return motion


def _expand(rate: float) -> Callable[[np.ndarray, float], np.ndarray]:
    def motion(points: np.ndarray, s: float) -> np.ndarray:
        return points * (1.0 + rate * s)

    return motion


def _static(points: np.ndarray, s: float) -> np.ndarray:
    return points


# Motions act on centered blob points; s runs from 0 (first frame) to 1 (last frame).
SYNTHETIC_CLASSES: dict[str, Callable[[np.ndarray, float], np.ndarray]] = {
    "static": _static,
    "translate_x": _translate(0, 1.5),
    "rotate_z": _rotate(2, np.pi / 2),
    "oscillate_y": _oscillate(1, 0.6),
    "translate_z": _translate(2, 1.5),
    "expand": _expand(0.8),
    "rotate_x": _rotate(0, np.pi / 2),
    "oscillate_z": _oscillate(2, 0.6),
}

CLASS_NAMES: tuple[str, ...] = tuple(SYNTHETIC_CLASSES)


def generate_synthetic_action(
    class_id: int,
    frames: int,
    points: int,
    noise_scale: float = 0.01,
    seed: int = 0,
    video_id: str | None = None,
) -> PointCloudVideo:
    """
    Generate one synthetic action video.

    Args:
        class_id: Index into ``CLASS_NAMES``.
        frames: Number of frames T >= 1.
        points: Points per frame N >= 1.
        noise_scale: Standard deviation of per-point isotropic noise.
        seed: Seed; the same (class_id, seed) pair always yields the same video.
        video_id: Optional id, defaults to "<class name>-<seed>".

    Returns:
        PointCloudVideo of shape (T, N, 3) carrying ``class_id`` as its label.

    Raises:
        ValueError: For an unknown class id, T < 1, N < 1 or negative noise.
    """
    if not 0 <= class_id < len(CLASS_NAMES):
        raise ValueError(f"Unknown class_id {class_id}; expected 0..{len(CLASS_NAMES) - 1}")
    if frames < 1 or points < 1:
        raise ValueError(f"frames and points must be >= 1, got {frames} and {points}")
    if noise_scale < 0:
        raise ValueError(f"noise_scale must be >= 0, got {noise_scale}")

    name = CLASS_NAMES[class_id]
    rng = np.random.default_rng([seed, class_id])
    size = rng.uniform(0.8, 1.2)
    blob = rng.normal(size=(points, 3)) * BLOB_STD * size
    blob -= blob.mean(axis=0)
    offset = rng.normal(scale=0.1, size=3)

    motion = SYNTHETIC_CLASSES[name]
    steps = np.linspace(0.0, 1.0, frames) if frames > 1 else np.zeros(1)
    video = np.stack([motion(blob, float(s)) + offset for s in steps])
    if noise_scale > 0:
        video = video + rng.normal(scale=noise_scale, size=video.shape)

    return PointCloudVideo(
        video.astype(np.float32),
        video_id or f"{name}-{seed}",
        class_id,
    )


def trajectory_statistics(video: PointCloudVideo) -> np.ndarray:
    """
    Hand-crafted motion descriptor used as a separability oracle.

    Concatenates the centroid's net displacement and temporal standard
    deviation with the change and temporal spread of the per-frame
    second-moment matrix (upper triangle).
    """
    coords = video.coordinates.astype(np.float64)
    centroids = coords.mean(axis=1)
    centered = coords - centroids[:, None, :]
    moments = np.einsum("tni,tnj->tij", centered, centered) / coords.shape[1]
    upper = moments[:, [0, 0, 0, 1, 1, 2], [0, 1, 2, 1, 2, 2]]
    return np.concatenate(
        [
            centroids[-1] - centroids[0],
            centroids.std(axis=0),
            upper[-1] - upper[0],
            upper.std(axis=0),
        ]
    )


def write_synthetic_dataset(
    root: str | Path,
    num_classes: int = 4,
    train_per_class: int = 50,
    test_per_class: int = 20,
    frames: int = 16,
    points: int = 64,
    noise_scale: float = 0.01,
    seed: int = 0,
) -> DatasetManifest:
    """
    Generate a synthetic dataset on disk and write its manifest.

    Files land in ``root/videos/<video_id>.pcv`` and the manifest in
    ``root/manifest.json``. Train and test videos use disjoint seeds.

    Returns:
        The manifest that was written.
    """
    if not 1 <= num_classes <= len(CLASS_NAMES):
        raise ValueError(f"num_classes must be in [1, {len(CLASS_NAMES)}], got {num_classes}")

    root = Path(root)
    records: list[VideoRecord] = []
    per_class = train_per_class + test_per_class
    for class_id in range(num_classes):
        for i in range(per_class):
            subset = "train" if i < train_per_class else "test"
            video_seed = seed * 1_000_003 + i
            video_id = f"{CLASS_NAMES[class_id]}_{subset}_{i:04d}"
            video = generate_synthetic_action(
                class_id, frames, points, noise_scale, video_seed, video_id
            )
            relative = Path("videos") / f"{video_id}.pcv"
            write_point_file(video, root / relative)
            records.append(
                VideoRecord(video_id, str(relative), class_id, frames, points, subset)
            )

    manifest = DatasetManifest(
        root=str(root),
        records=tuple(records),
        class_names=CLASS_NAMES[:num_classes],
    )
    save_manifest(manifest, root / "manifest.json")
    logger.info(
        "Wrote %d synthetic videos (%d classes) to %s", len(records), num_classes, root
    )
    return manifest
