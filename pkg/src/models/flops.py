"""Analytic FLOP counts for decoupled versus joint spatio-temporal attention.

Counting rule: a (m x n) @ (n x p) product costs 2 * m * n * p FLOPs
(multiply-adds counted twice). Norms, softmax, activations and residual
additions are not counted. For one attention block over L tokens of width D
with feed-forward ratio r:

    attention    8 * L * D^2 + 4 * L^2 * D   (QKV + output projections, QK^T and AV)
    feed-forward 4 * r * L * D^2             (16 * L * D^2 at r = 4)

Decoupled mode runs the spatial blocks once per segment over its N/kappa
anchors and the temporal blocks over the T/zeta segment tokens. Joint mode
runs every block over all (T/zeta) * (N/kappa) tokens at once. The P4Conv
and head costs are identical in both modes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from src.models.config import BackboneConfig

MODES = ("decoupled", "joint")


def flops_matmul(m: int, n: int, p: int) -> int:
    return 2 * m * n * p


def flops_attention(tokens: int, dim: int) -> int:
    flops = 0
    flops += flops_matmul(tokens, dim, 3 * dim)  # QKV
    flops += flops_matmul(tokens, dim, tokens)  # QK^T
    flops += flops_matmul(tokens, tokens, dim)  # AV
    flops += flops_matmul(tokens, dim, dim)  # output projection
    return flops


def flops_feed_forward(tokens: int, dim: int, mlp_ratio: int = 4) -> int:
    hidden = mlp_ratio * dim
    return flops_matmul(tokens, dim, hidden) + flops_matmul(tokens, hidden, dim)


def flops_block(tokens: int, dim: int, mlp_ratio: int = 4) -> int:
    return flops_attention(tokens, dim) + flops_feed_forward(tokens, dim, mlp_ratio)


@dataclass(frozen=True)
class FlopCount:
    """FLOPs of one forward pass, split by stage."""

    mode: str
    p4conv: int
    spatial_attention: int
    temporal_attention: int
    joint_attention: int
    head: int

    @property
    def attention(self) -> int:
        return self.spatial_attention + self.temporal_attention + self.joint_attention

    @property
    def total(self) -> int:
        return self.p4conv + self.attention + self.head

    @property
    def gflops(self) -> float:
        return self.total / 1e9


def estimate_flops(
    cfg: BackboneConfig,
    mode: str,
    frames: int,
    points: int,
    spatial_blocks: int | None = None,
    temporal_blocks: int | None = None,
) -> FlopCount:
    """
    Analytic FLOP count of one video forward pass.

    Args:
        cfg: Backbone configuration.
        mode: "decoupled" or "joint".
        frames: Clip length T.
        points: Points per frame N.
        spatial_blocks: Override of cfg.spatial_blocks; 0 is allowed here.
        temporal_blocks: Override of cfg.temporal_blocks; 0 is allowed here.

    Raises:
        ValueError: For an unknown mode, a negative block count or a clip
            shorter than one segment.
    """
    if mode not in MODES:
        raise ValueError(f"Unknown mode: {mode}. Supported modes: {MODES}")
    spatial_depth = cfg.spatial_blocks if spatial_blocks is None else spatial_blocks
    temporal_depth = cfg.temporal_blocks if temporal_blocks is None else temporal_blocks
    if spatial_depth < 0 or temporal_depth < 0:
        raise ValueError(f"block counts must be >= 0, got {spatial_depth}, {temporal_depth}")
    segments = frames // cfg.temporal_stride
    if segments < 1:
        raise ValueError(f"T={frames} is shorter than temporal_stride={cfg.temporal_stride}")
    anchors = math.ceil(points / cfg.spatial_stride)
    dim = cfg.feature_dim
    neighbors = cfg.temporal_stride * cfg.neighbors

    per_neighbor = flops_matmul(1, 4, dim) + flops_matmul(1, dim, dim)
    if cfg.in_channels:
        per_neighbor += flops_matmul(1, cfg.in_channels, dim)
    per_anchor = neighbors * per_neighbor + flops_matmul(1, 4, dim) + flops_matmul(1, dim, dim)
    p4conv = segments * anchors * per_anchor

    head = flops_matmul(1, dim, cfg.hidden_dim) + flops_matmul(1, cfg.hidden_dim, cfg.num_classes)

    spatial = temporal = joint = 0
    if mode == "decoupled":
        spatial = segments * spatial_depth * flops_block(anchors, dim, cfg.mlp_ratio)
        temporal = temporal_depth * flops_block(segments, dim, cfg.mlp_ratio)
    else:
        depth = spatial_depth + temporal_depth
        joint = depth * flops_block(segments * anchors, dim, cfg.mlp_ratio)

    return FlopCount(mode, p4conv, spatial, temporal, joint, head)
