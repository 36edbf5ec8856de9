"""Model configuration: backbone and temporal decoder hyperparameters."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields
from typing import Any

from src.data.sampling import GroupingConfig


@dataclass(frozen=True)
class BackboneConfig:
    """
    DestFormer hyperparameters.

    Attributes:
        feature_dim: Token width D; must be divisible by ``heads``.
        spatial_stride: kappa, one anchor per ``spatial_stride`` points.
        temporal_stride: zeta, frames merged into one segment/token.
        spatial_blocks: Self-attention blocks of the spatial transformer.
        temporal_blocks: Self-attention blocks of the temporal encoder.
        heads: Attention heads in every block.
        radius: Ball-query radius of the local areas.
        neighbors: Neighbors gathered per anchor per frame.
        num_classes: Size of the label space.
        head_hidden_dim: Hidden width of the prediction head; None means D.
        in_channels: Per-point feature channels C (0 for coordinates only).
        mlp_ratio: Feed-forward expansion inside attention blocks.
    """

    feature_dim: int = 64
    spatial_stride: int = 2
    temporal_stride: int = 2
    spatial_blocks: int = 4
    temporal_blocks: int = 3
    heads: int = 8
    radius: float = 0.7
    neighbors: int = 8
    num_classes: int = 4
    head_hidden_dim: int | None = None
    in_channels: int = 0
    mlp_ratio: int = 4

    def __post_init__(self) -> None:
        counts = {
            "feature_dim": self.feature_dim,
            "spatial_stride": self.spatial_stride,
            "temporal_stride": self.temporal_stride,
            "spatial_blocks": self.spatial_blocks,
            "temporal_blocks": self.temporal_blocks,
            "heads": self.heads,
            "neighbors": self.neighbors,
            "num_classes": self.num_classes,
            "mlp_ratio": self.mlp_ratio,
        }
        for name, value in counts.items():
            if value < 1:
                raise ValueError(f"{name} must be >= 1, got {value}")
        if self.feature_dim % self.heads:
            raise ValueError(
                f"feature_dim {self.feature_dim} is not divisible by heads {self.heads}"
            )
        if self.radius <= 0:
            raise ValueError(f"radius must be > 0, got {self.radius}")
        if self.in_channels < 0:
            raise ValueError(f"in_channels must be >= 0, got {self.in_channels}")
        if self.head_hidden_dim is not None and self.head_hidden_dim < 1:
            raise ValueError(f"head_hidden_dim must be >= 1, got {self.head_hidden_dim}")

    @property
    def hidden_dim(self) -> int:
        return self.head_hidden_dim or self.feature_dim

    @property
    def grouping(self) -> GroupingConfig:
        return GroupingConfig(
            radius=self.radius,
            neighbors=self.neighbors,
            spatial_stride=self.spatial_stride,
            temporal_stride=self.temporal_stride,
        )

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> BackboneConfig:
        return _from_dict(cls, data)


@dataclass(frozen=True)
class MapleConfig:
    """
    Temporal decoder hyperparameters.

    Attributes:
        decoder_blocks: Self-attention blocks of the decoder.
        decoder_heads: Attention heads; None means the backbone's head count.
        max_tokens: Rows of the learnable positional table (longest token sequence).
    """

    decoder_blocks: int = 8
    decoder_heads: int | None = None
    max_tokens: int = 64

    def __post_init__(self) -> None:
        if self.decoder_blocks < 1:
            raise ValueError(f"decoder_blocks must be >= 1, got {self.decoder_blocks}")
        if self.max_tokens < 1:
            raise ValueError(f"max_tokens must be >= 1, got {self.max_tokens}")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> MapleConfig:
        return _from_dict(cls, data)


def _from_dict(cls: Any, data: dict[str, Any]) -> Any:
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"Unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**data)


def config_hash(*configs: Any) -> str:
    """Stable SHA-256 over the JSON form of one or more config dataclasses."""
    payload = json.dumps([asdict(c) for c in configs], sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]
