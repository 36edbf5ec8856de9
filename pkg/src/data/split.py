"""Labeled / unlabeled split management.

The labeled subset D_l is drawn per class without replacement so every
action keeps the same labeled fraction; the rest of the training set is the
unlabeled subset D_u.
"""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from src.data.loader import DatasetManifest
from src.utils.io_utils import read_json, write_json

logger = logging.getLogger(__name__)

SPLIT_VERSION = 1


@dataclass(frozen=True)
class SemiSplit:
    """Partition of a training set into labeled and unlabeled video ids."""

    labeled_ids: tuple[str, ...]
    unlabeled_ids: tuple[str, ...]
    labeled_ratio: float
    seed: int

    def __post_init__(self) -> None:
        overlap = set(self.labeled_ids) & set(self.unlabeled_ids)
        if overlap:
            raise ValueError(f"labeled and unlabeled ids overlap: {sorted(overlap)[:5]}")


def labeled_count(ratio: float, class_total: int) -> int:
    """
    Number of labeled videos drawn from a class of ``class_total`` videos.

    floor(ratio * total); a class that would floor to zero is rounded half up
    instead, so a 13-video class at 7.5 % still contributes one video.
    """
    exact = ratio * class_total
    count = math.floor(exact + 1e-9)
    if count == 0:
        count = math.floor(exact + 0.5)
    return count


def split_dataset(manifest: DatasetManifest, labeled_ratio: float, seed: int = 0) -> SemiSplit:
    """
    Split the training subset of a manifest into D_l and D_u.

    Args:
        manifest: Dataset manifest; only records with subset "train" are used.
        labeled_ratio: Fraction of each class that is labeled, in (0, 1].
        seed: Seed of the per-class sampling.

    Returns:
        SemiSplit with ids listed in manifest order.

    Raises:
        ValueError: For a ratio outside (0, 1], a class with no training
            video, or a ratio that leaves some class with no labeled video.

    Example:
        A 270-video, 20-class training set at 7.5 % gives 20 labeled and
        250 unlabeled videos.
    """
    if not 0 < labeled_ratio <= 1:
        raise ValueError(f"labeled_ratio must be in (0, 1], got {labeled_ratio}")

    by_class: dict[int, list[str]] = defaultdict(list)
    train = manifest.subset("train")
    for record in train:
        by_class[record.class_id].append(record.video_id)

    missing = [c for c in range(manifest.num_classes) if not by_class[c]]
    if missing:
        raise ValueError(f"classes without training videos: {missing}")

    rng = np.random.default_rng(seed)
    labeled: set[str] = set()
    for class_id in range(manifest.num_classes):
        ids = by_class[class_id]
        count = labeled_count(labeled_ratio, len(ids))
        if count == 0:
            raise ValueError(
                f"labeled_ratio {labeled_ratio} yields no labeled video for class "
                f"{class_id} ({len(ids)} training videos)"
            )
        chosen = rng.choice(len(ids), size=count, replace=False)
        labeled.update(ids[i] for i in chosen)

    split = SemiSplit(
        labeled_ids=tuple(r.video_id for r in train if r.video_id in labeled),
        unlabeled_ids=tuple(r.video_id for r in train if r.video_id not in labeled),
        labeled_ratio=labeled_ratio,
        seed=seed,
    )
    logger.info(
        "Split %d training videos into %d labeled / %d unlabeled (ratio %.4g, seed %d)",
        len(train),
        len(split.labeled_ids),
        len(split.unlabeled_ids),
        labeled_ratio,
        seed,
    )
    return split


def carve_validation(
    labeled_ids: tuple[str, ...] | list[str], fraction: float, seed: int = 0
) -> tuple[list[str], list[str]]:
    """
    Hold out ``round(fraction * |D_l|)`` labeled videos for validation.

    Returns:
        (training ids, validation ids), both in input order. The validation
        list may be empty for small labeled sets.
    """
    if not 0 <= fraction < 1:
        raise ValueError(f"validation fraction must be in [0, 1), got {fraction}")
    ids = list(labeled_ids)
    count = min(int(round(fraction * len(ids))), max(len(ids) - 1, 0))
    rng = np.random.default_rng(seed)
    held = set(rng.choice(len(ids), size=count, replace=False).tolist()) if count else set()
    train = [v for i, v in enumerate(ids) if i not in held]
    val = [v for i, v in enumerate(ids) if i in held]
    return train, val


def save_split(split: SemiSplit, path: str | Path) -> None:
    write_json(
        path,
        {
            "format_version": SPLIT_VERSION,
            "labeled_ratio": split.labeled_ratio,
            "seed": split.seed,
            "labeled_ids": list(split.labeled_ids),
            "unlabeled_ids": list(split.unlabeled_ids),
        },
    )


def load_split(path: str | Path) -> SemiSplit:
    data = read_json(path)
    if data.get("format_version") != SPLIT_VERSION:
        raise ValueError(f"Unsupported split version {data.get('format_version')} in {path}")
    return SemiSplit(
        labeled_ids=tuple(data["labeled_ids"]),
        unlabeled_ids=tuple(data["unlabeled_ids"]),
        labeled_ratio=float(data["labeled_ratio"]),
        seed=int(data["seed"]),
    )
