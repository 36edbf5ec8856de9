"""Dataset manifests, video loading and torch batching.

The manifest is a versioned JSON document listing every video of a dataset
together with its label, frame count and point count. ``DatasetLoader``
reads the referenced point files, clips them to a fixed length, builds their
local-area groupings once and hands out torch datasets over any subset of
video ids.

Manifest format (schema version 1):
    {
      "format_version": 1,
      "class_names": ["static", ...],
      "videos": [
        {"video_id": "...", "path": "videos/x.pcv", "class_id": 0,
         "frames": 16, "points": 64, "subset": "train"},
        ...
      ]
    }
Paths are relative to the directory holding the manifest.
"""

from __future__ import annotations

import logging
import zlib
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch.utils.data import DataLoader, Dataset

from src.data.sampling import GroupingConfig, LocalAreaGrouping, group_local_areas
from src.data.video import PointCloudVideo, read_point_file, temporal_clip
from src.utils.io_utils import read_json, write_json

logger = logging.getLogger(__name__)

MANIFEST_VERSION = 1
SUBSETS = ("train", "test")


@dataclass(frozen=True)
class VideoRecord:
    """One manifest row."""

    video_id: str
    path: str
    class_id: int
    frames: int
    points: int
    subset: str = "train"

    def __post_init__(self) -> None:
        if self.subset not in SUBSETS:
            raise ValueError(f"Unknown subset {self.subset!r} for video {self.video_id!r}")


@dataclass(frozen=True)
class DatasetManifest:
    """
    Declarative description of a point cloud video dataset.

    Attributes:
        root: Directory the record paths are relative to.
        records: One VideoRecord per video.
        class_names: Names indexed by class id.
        format_version: Manifest schema version.
    """

    root: str
    records: tuple[VideoRecord, ...]
    class_names: tuple[str, ...]
    format_version: int = MANIFEST_VERSION
    _by_id: dict[str, VideoRecord] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        by_id = {r.video_id: r for r in self.records}
        if len(by_id) != len(self.records):
            raise ValueError("Manifest contains duplicate video ids")
        object.__setattr__(self, "_by_id", by_id)
        for record in self.records:
            if not 0 <= record.class_id < len(self.class_names):
                raise ValueError(
                    f"Video {record.video_id!r} has class_id {record.class_id} outside "
                    f"the {len(self.class_names)}-class table"
                )

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def subset(self, name: str) -> list[VideoRecord]:
        return [r for r in self.records if r.subset == name]

    def record(self, video_id: str) -> VideoRecord:
        return self._by_id[video_id]

    def resolve(self, record: VideoRecord) -> Path:
        return Path(self.root) / record.path


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    write_json(
        path,
        {
            "format_version": manifest.format_version,
            "class_names": list(manifest.class_names),
            "videos": [
                {
                    "video_id": r.video_id,
                    "path": r.path,
                    "class_id": r.class_id,
                    "frames": r.frames,
                    "points": r.points,
                    "subset": r.subset,
                }
                for r in manifest.records
            ],
        },
    )


def load_manifest(path: str | Path) -> DatasetManifest:
    """
    Read a manifest JSON file.

    Raises:
        FileNotFoundError: If the manifest does not exist.
        ValueError: On an unsupported format version or malformed rows.
    """
    path = Path(path)
    data = read_json(path)
    version = data.get("format_version")
    if version != MANIFEST_VERSION:
        raise ValueError(f"Unsupported manifest version {version} in {path}")
    try:
        records = tuple(VideoRecord(**row) for row in data["videos"])
    except TypeError as exc:
        raise ValueError(f"Malformed manifest row in {path}: {exc}") from exc
    return DatasetManifest(
        root=str(path.parent),
        records=records,
        class_names=tuple(data["class_names"]),
        format_version=version,
    )


def validate_manifest(manifest: DatasetManifest) -> None:
    """
    Check that every referenced file exists and matches its manifest row.

    Raises:
        FileNotFoundError: For a missing point file.
        ValueError: For a file whose shape disagrees with its row.
    """
    for record in manifest.records:
        video = read_point_file(manifest.resolve(record), record.video_id, record.class_id)
        if (video.num_frames, video.num_points) != (record.frames, record.points):
            raise ValueError(
                f"Video {record.video_id!r} has shape ({video.num_frames}, {video.num_points}), "
                f"manifest says ({record.frames}, {record.points})"
            )


@dataclass
class GroupingBatch:
    """
    Batched local-area indices into the flattened (T * N) point array.

    Attributes:
        anchor_index: (B, L, A) long tensor.
        neighbor_index: (B, L, A, K) long tensor, K = temporal_stride * neighbors.
        neighbor_dt: (B, L, A, K) float tensor of frame offsets.
    """

    anchor_index: torch.Tensor
    neighbor_index: torch.Tensor
    neighbor_dt: torch.Tensor

    @property
    def num_segments(self) -> int:
        return int(self.anchor_index.shape[1])

    @classmethod
    def from_groupings(cls, groupings: Sequence[LocalAreaGrouping]) -> GroupingBatch:
        return cls(
            anchor_index=torch.as_tensor(
                np.stack([g.flat_anchor_indices() for g in groupings]), dtype=torch.long
            ),
            neighbor_index=torch.as_tensor(
                np.stack([g.flat_neighbor_indices() for g in groupings]), dtype=torch.long
            ),
            neighbor_dt=torch.as_tensor(
                np.stack(
                    [
                        g.neighbor_frames.reshape(g.num_segments, g.num_anchors, -1)
                        for g in groupings
                    ]
                ),
                dtype=torch.float32,
            ),
        )

    def select(self, index: torch.Tensor | slice) -> GroupingBatch:
        return GroupingBatch(
            self.anchor_index[index], self.neighbor_index[index], self.neighbor_dt[index]
        )


@dataclass
class VideoBatch:
    """
    A mini-batch of videos.

    ``labels`` is None for unlabeled batches; nothing downstream of an
    unlabeled dataset can see the true class of its videos.
    """

    video_ids: list[str]
    points: torch.Tensor
    grouping: GroupingBatch
    labels: torch.Tensor | None = None

    def __len__(self) -> int:
        return len(self.video_ids)

    def to(self, dtype: torch.dtype) -> VideoBatch:
        return VideoBatch(
            self.video_ids,
            self.points.to(dtype),
            GroupingBatch(
                self.grouping.anchor_index,
                self.grouping.neighbor_index,
                self.grouping.neighbor_dt.to(dtype),
            ),
            self.labels,
        )


class VideoDataset(Dataset):
    """
    Torch dataset over preprocessed videos.

    Items are (video, grouping) pairs; labeled datasets also expose the
    class id, unlabeled datasets drop it at construction time.
    """

    def __init__(
        self,
        videos: Sequence[PointCloudVideo],
        groupings: Sequence[LocalAreaGrouping],
        labeled: bool,
    ):
        if len(videos) != len(groupings):
            raise ValueError("videos and groupings must have the same length")
        if labeled and any(v.class_id is None for v in videos):
            raise ValueError("labeled dataset contains a video without class_id")
        self.videos = [v if labeled else v.without_label() for v in videos]
        self.groupings = list(groupings)
        self.labeled = labeled

    @classmethod
    def from_videos(
        cls, videos: Sequence[PointCloudVideo], grouping: GroupingConfig, labeled: bool = True
    ) -> VideoDataset:
        return cls(videos, [group_local_areas(v, grouping) for v in videos], labeled)

    def __len__(self) -> int:
        return len(self.videos)

    def __getitem__(self, index: int) -> tuple[PointCloudVideo, LocalAreaGrouping]:
        return self.videos[index], self.groupings[index]

    @property
    def video_ids(self) -> list[str]:
        return [v.video_id for v in self.videos]

    @property
    def labels(self) -> list[int]:
        if not self.labeled:
            raise ValueError("unlabeled dataset has no labels")
        return [int(v.class_id) for v in self.videos]  # type: ignore[arg-type]


def collate_videos(items: Sequence[tuple[PointCloudVideo, LocalAreaGrouping]]) -> VideoBatch:
    videos = [v for v, _ in items]
    labels = None
    if all(v.class_id is not None for v in videos):
        labels = torch.tensor([v.class_id for v in videos], dtype=torch.long)
    return VideoBatch(
        video_ids=[v.video_id for v in videos],
        points=torch.as_tensor(np.stack([v.frames for v in videos]), dtype=torch.float32),
        grouping=GroupingBatch.from_groupings([g for _, g in items]),
        labels=labels,
    )


def make_loader(
    dataset: VideoDataset,
    batch_size: int,
    shuffle: bool,
    seed: int = 0,
    num_workers: int = 0,
) -> DataLoader:
    """
    Build a torch DataLoader with its own seeded generator.

    The generator makes the shuffling order a function of ``seed`` alone,
    independent of any other random stream in the process.
    """
    generator = torch.Generator()
    generator.manual_seed(seed)
    return DataLoader(
        dataset,
        batch_size=batch_size,
        shuffle=shuffle,
        collate_fn=collate_videos,
        generator=generator,
        num_workers=num_workers,
    )


class DatasetLoader:
    """
    Loads, clips and groups the videos of a manifest.

    Clipped videos and their groupings are cached per video id, so a run
    touches each point file once.

    Attributes:
        manifest: Dataset manifest.
        grouping: Local-area parameters shared with the backbone.
        clip_frames: Frame count every video is resampled to.
        clip_policy: Policy passed to ``temporal_clip``.
        seed: Base seed for the "random-crop" policy.
    """

    def __init__(
        self,
        manifest: DatasetManifest,
        grouping: GroupingConfig,
        clip_frames: int,
        clip_policy: str = "uniform-stride",
        seed: int = 0,
    ):
        self.manifest = manifest
        self.grouping = grouping
        self.clip_frames = clip_frames
        self.clip_policy = clip_policy
        self.seed = seed
        self._videos: dict[str, PointCloudVideo] = {}
        self._groupings: dict[str, LocalAreaGrouping] = {}

    def load_video(self, video_id: str) -> PointCloudVideo:
        if video_id not in self._videos:
            record = self.manifest.record(video_id)
            video = read_point_file(self.manifest.resolve(record), video_id, record.class_id)
            clip_seed = self.seed ^ zlib.crc32(video_id.encode())
            self._videos[video_id] = temporal_clip(
                video, self.clip_frames, self.clip_policy, seed=clip_seed
            )
        return self._videos[video_id]

    def load_grouping(self, video_id: str) -> LocalAreaGrouping:
        if video_id not in self._groupings:
            self._groupings[video_id] = group_local_areas(
                self.load_video(video_id), self.grouping
            )
        return self._groupings[video_id]

    def dataset(self, video_ids: Iterable[str], labeled: bool) -> VideoDataset:
        ids = list(video_ids)
        kind = "labeled" if labeled else "unlabeled"
        logger.debug("Building %s dataset over %d videos", kind, len(ids))
        return VideoDataset(
            [self.load_video(i) for i in ids],
            [self.load_grouping(i) for i in ids],
            labeled=labeled,
        )

    def test_dataset(self) -> VideoDataset:
        return self.dataset([r.video_id for r in self.manifest.subset("test")], labeled=True)
