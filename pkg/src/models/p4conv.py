"""Point 4D convolution over spatio-temporal local areas.

For every anchor the (dx, dy, dz, dt) offsets of its neighbors are embedded
point-wise, combined with neighbor features when the points carry any,
max-reduced over the neighborhood and projected to the token width. The
anchor's own (x, y, z, t) is embedded and added before the projection, which
is where the backbone receives its temporal position.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from src.data.loader import GroupingBatch


def gather_points(flat_points: torch.Tensor, index: torch.Tensor) -> torch.Tensor:
    """Index (B, T * N, C) points with a (B, ...) index tensor -> (B, ..., C)."""
    batch = torch.arange(flat_points.shape[0], device=flat_points.device)
    batch = batch.view(-1, *([1] * (index.dim() - 1)))
    return flat_points[batch, index]


class P4Conv(nn.Module):
    def __init__(self, dim: int, in_channels: int = 0):
        super().__init__()
        self.in_channels = in_channels
        self.offset_fc1 = nn.Linear(4, dim)
        self.offset_fc2 = nn.Linear(dim, dim)
        self.feature_fc = nn.Linear(in_channels, dim) if in_channels else None
        self.position = nn.Linear(4, dim)
        self.proj = nn.Linear(dim, dim)

    def forward(self, points: torch.Tensor, grouping: GroupingBatch) -> torch.Tensor:
        """
        Args:
            points: (B, T, N, 3 + C) point cloud videos.
            grouping: Local-area indices built for these videos.

        Returns:
            Short-term local features of shape (B, L, A, D).
        """
        batch, frames, num_points, channels = points.shape
        if channels != 3 + self.in_channels:
            raise ValueError(
                f"points carry {channels - 3} feature channels, P4Conv expects {self.in_channels}"
            )
        if grouping.anchor_index.shape[0] != batch:
            raise ValueError(
                f"grouping batch size {grouping.anchor_index.shape[0]} != points batch {batch}"
            )
        if int(grouping.neighbor_index.max()) >= frames * num_points:
            raise ValueError("grouping indices exceed the point array of this batch")

        flat = points.reshape(batch, frames * num_points, channels)
        anchors = gather_points(flat[..., :3], grouping.anchor_index)  # (B, L, A, 3)
        neighbors = gather_points(flat, grouping.neighbor_index)  # (B, L, A, K, 3 + C)

        dt = grouping.neighbor_dt.to(points.dtype).unsqueeze(-1)
        offsets = torch.cat([neighbors[..., :3] - anchors.unsqueeze(-2), dt], dim=-1)
        local = self.offset_fc2(F.gelu(self.offset_fc1(offsets)))
        if self.feature_fc is not None:
            local = local + self.feature_fc(neighbors[..., 3:])
        local = local.max(dim=-2).values  # (B, L, A, D)

        segments = grouping.anchor_index.shape[1]
        seg_time = torch.arange(segments, dtype=points.dtype, device=points.device)
        seg_time = seg_time.view(1, segments, 1, 1).expand(*anchors.shape[:-1], 1)
        local = local + self.position(torch.cat([anchors, seg_time], dim=-1))
        return self.proj(local)
