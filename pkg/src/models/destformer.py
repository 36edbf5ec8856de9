"""DestFormer: the decoupled spatial-temporal transformer backbone.

    points --P4Conv--> S (B, L, A, D)
           --spatial transformer, per segment--> M (B, L, A, D)
           --max over anchors--> g (B, L, D)
           --temporal encoder--> z (B, L, D)
           --max over tokens, LayerNorm, Linear, GELU, Linear--> logits (B, K)

Spatial attention never crosses segments and temporal attention only sees
one token per segment, which is what keeps the attention cost linear in the
number of segments times anchors.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from src.data.loader import GroupingBatch
from src.models.attention import AttentionStack, init_weights
from src.models.config import BackboneConfig
from src.models.distributions import ClassDistribution
from src.models.p4conv import P4Conv


class PredictionHead(nn.Module):
    def __init__(self, dim: int, hidden: int, num_classes: int):
        super().__init__()
        self.norm = nn.LayerNorm(dim)
        self.fc1 = nn.Linear(dim, hidden)
        self.fc2 = nn.Linear(hidden, num_classes)

    def forward(self, tokens: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Map (B, L, D) tokens to the global feature (B, D) and logits (B, K)."""
        feature = tokens.max(dim=1).values
        logits = self.fc2(F.gelu(self.fc1(self.norm(feature))))
        return feature, logits


@dataclass
class DestFormerOutput:
    """
    Intermediate and final outputs of one forward pass.

    Attributes:
        tokens: Short-term global features g, (B, L, D).
        latent: Temporal encoder output z, (B, L, D).
        feature: Global feature v, (B, D).
        logits: Class logits, (B, K).
    """

    tokens: torch.Tensor
    latent: torch.Tensor
    feature: torch.Tensor
    logits: torch.Tensor

    @property
    def distribution(self) -> ClassDistribution:
        return ClassDistribution(self.logits)


class DestFormer(nn.Module):
    def __init__(self, cfg: BackboneConfig):
        super().__init__()
        self.cfg = cfg
        dim = cfg.feature_dim
        self.p4conv = P4Conv(dim, cfg.in_channels)
        self.spatial_transformer = AttentionStack(
            dim, cfg.spatial_blocks, cfg.heads, cfg.mlp_ratio
        )
        self.temporal_encoder = AttentionStack(
            dim, cfg.temporal_blocks, cfg.heads, cfg.mlp_ratio
        )
        self.head = PredictionHead(dim, cfg.hidden_dim, cfg.num_classes)
        self.apply(init_weights)
        nn.init.zeros_(self.head.fc2.weight)
        nn.init.zeros_(self.head.fc2.bias)

    def extract_tokens(self, points: torch.Tensor, grouping: GroupingBatch) -> torch.Tensor:
        """Spatial extractor plus pooling: videos -> g of shape (B, L, D)."""
        local = p4conv_forward(self, points, grouping)
        merged = spatial_transformer_forward(self, local)
        return spatial_pool(merged)

    def classify(self, tokens: torch.Tensor) -> DestFormerOutput:
        """Temporal encoder and prediction head on an already extracted g."""
        latent = temporal_encoder_forward(self, tokens)
        feature, logits = self.head(latent)
        return DestFormerOutput(tokens, latent, feature, logits)

    def forward(self, points: torch.Tensor, grouping: GroupingBatch) -> DestFormerOutput:
        return self.classify(self.extract_tokens(points, grouping))


def p4conv_forward(
    model: DestFormer, points: torch.Tensor, grouping: GroupingBatch
) -> torch.Tensor:
    """Short-term local features S, shape (B, L, A, D)."""
    return model.p4conv(points, grouping)


def spatial_transformer_forward(model: DestFormer, local: torch.Tensor) -> torch.Tensor:
    """
    Merged local features M, shape (B, L, A, D).

    Every segment's anchors attend only among themselves.
    """
    batch, segments, anchors, dim = local.shape
    merged = model.spatial_transformer(local.reshape(batch * segments, anchors, dim))
    return merged.reshape(batch, segments, anchors, dim)


def spatial_pool(merged: torch.Tensor) -> torch.Tensor:
    """Channel-wise max over the anchors of each segment: (B, L, A, D) -> (B, L, D)."""
    return merged.max(dim=2).values


def temporal_encoder_forward(model: DestFormer, tokens: torch.Tensor) -> torch.Tensor:
    """Self-attention over the L segment tokens, no positional embedding added."""
    return model.temporal_encoder(tokens)


def prediction_head(
    model: DestFormer, latent: torch.Tensor
) -> tuple[torch.Tensor, ClassDistribution]:
    """Global feature v and the class distribution for (B, L, D) tokens."""
    feature, logits = model.head(latent)
    return feature, ClassDistribution(logits)


def destformer_forward(
    model: DestFormer, points: torch.Tensor, grouping: GroupingBatch
) -> tuple[torch.Tensor, ClassDistribution]:
    """Full forward pass returning g (for the autoencoder) and the class distribution."""
    out = model(points, grouping)
    return out.tokens, out.distribution
