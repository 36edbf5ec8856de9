"""Masked pseudo-labeling autoencoder over segment tokens.

A random subset of the short-term global features g is discarded, the
backbone's temporal encoder encodes the visible rest, and a temporal decoder
rebuilds the full sequence r from the encoded tokens plus one shared,
learnable mask token at every discarded position. The reconstruction is not
compared with g directly: the backbone's own prediction head turns both the
unmasked sequence and r into class distributions P and P_hat, and the
training signal is KL(P || P_hat) with P treated as a fixed target.

The mean-squared-error reconstruction loss is kept as an ablation together
with an L2-norm trace that shows how the reconstructed features drift under it.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
import torch
import torch.nn.functional as F
from torch import nn

from src.models.attention import AttentionStack, init_weights
from src.models.config import MapleConfig
from src.models.destformer import DestFormer, prediction_head, temporal_encoder_forward
from src.models.distributions import ClassDistribution, check_normalized, kl_divergence
from src.utils.io_utils import append_rows


@dataclass(frozen=True)
class MaskSpec:
    """Visible / masked partition of L token positions (both sorted)."""

    num_tokens: int
    visible_indices: tuple[int, ...]
    masked_indices: tuple[int, ...]
    ratio: float
    seed: int


def masked_count(num_tokens: int, ratio: float) -> int:
    """round(ratio * L), ties to even."""
    return round(ratio * num_tokens)


def sample_mask(num_tokens: int, ratio: float, seed: int) -> MaskSpec:
    """
    Choose round(ratio * L) positions to discard, uniformly without replacement.

    Raises:
        ValueError: If L < 1, ratio is outside [0, 1) or no token would stay visible.
    """
    if num_tokens < 1:
        raise ValueError(f"num_tokens must be >= 1, got {num_tokens}")
    if not 0 <= ratio < 1:
        raise ValueError(f"mask ratio must be in [0, 1), got {ratio}")
    count = masked_count(num_tokens, ratio)
    if count >= num_tokens:
        raise ValueError(
            f"mask ratio {ratio} masks all {num_tokens} tokens; the encoder needs one visible"
        )
    rng = np.random.default_rng(seed)
    masked = np.sort(rng.choice(num_tokens, size=count, replace=False))
    visible = np.setdiff1d(np.arange(num_tokens), masked)
    return MaskSpec(
        num_tokens=num_tokens,
        visible_indices=tuple(int(i) for i in visible),
        masked_indices=tuple(int(i) for i in masked),
        ratio=ratio,
        seed=seed,
    )


def _visible_index(
    masks: MaskSpec | Sequence[MaskSpec], batch: int, num_tokens: int, device: torch.device
) -> torch.Tensor:
    """(B, V) long tensor of visible positions, broadcasting a single mask."""
    if isinstance(masks, MaskSpec):
        masks = [masks] * batch
    if len(masks) != batch:
        raise ValueError(f"got {len(masks)} masks for a batch of {batch}")
    if any(m.num_tokens != num_tokens for m in masks):
        raise ValueError(f"mask length does not match the {num_tokens}-token sequence")
    if len({len(m.visible_indices) for m in masks}) != 1:
        raise ValueError("all masks in a batch must keep the same number of visible tokens")
    return torch.tensor([m.visible_indices for m in masks], dtype=torch.long, device=device)


def _gather_tokens(tokens: torch.Tensor, index: torch.Tensor) -> torch.Tensor:
    return torch.gather(tokens, 1, index.unsqueeze(-1).expand(-1, -1, tokens.shape[-1]))


class TemporalDecoder(nn.Module):
    """
    Decoder parameters: shared mask token, positional table, attention blocks
    and the output projection back to the token width.
    """

    def __init__(self, dim: int, cfg: MapleConfig, heads: int, mlp_ratio: int = 4):
        super().__init__()
        self.cfg = cfg
        self.mask_token = nn.Parameter(torch.zeros(dim))
        self.pos_embed = nn.Parameter(torch.zeros(cfg.max_tokens, dim))
        heads = cfg.decoder_heads or heads
        self.blocks = AttentionStack(dim, cfg.decoder_blocks, heads, mlp_ratio)
        self.norm = nn.LayerNorm(dim)
        self.proj = nn.Linear(dim, dim)
        self.apply(init_weights)
        nn.init.normal_(self.mask_token, std=0.02)
        nn.init.trunc_normal_(self.pos_embed, std=0.02)

    @classmethod
    def for_backbone(cls, model: DestFormer, cfg: MapleConfig) -> TemporalDecoder:
        return cls(model.cfg.feature_dim, cfg, model.cfg.heads, model.cfg.mlp_ratio)

    def assemble(
        self, z_visible: torch.Tensor, visible_index: torch.Tensor, num_tokens: int
    ) -> torch.Tensor:
        """Pre-decoder sequence: z at visible positions, mask token elsewhere, plus positions."""
        if num_tokens > self.cfg.max_tokens:
            raise ValueError(
                f"{num_tokens} tokens exceed the positional table ({self.cfg.max_tokens} rows)"
            )
        batch, _, dim = z_visible.shape
        full = self.mask_token.to(z_visible.dtype).expand(batch, num_tokens, dim)
        full = full.scatter(1, visible_index.unsqueeze(-1).expand(-1, -1, dim), z_visible)
        return full + self.pos_embed[:num_tokens].to(z_visible.dtype)

    def forward(
        self, z_visible: torch.Tensor, visible_index: torch.Tensor, num_tokens: int
    ) -> torch.Tensor:
        x = self.blocks(self.assemble(z_visible, visible_index, num_tokens))
        return self.proj(self.norm(x))


def encode_visible(
    model: DestFormer, tokens: torch.Tensor, masks: MaskSpec | Sequence[MaskSpec]
) -> torch.Tensor:
    """
    Run the temporal encoder on the visible tokens only.

    Args:
        model: Backbone whose temporal encoder is used.
        tokens: g, shape (B, L, D).
        masks: One mask for the whole batch or one per item.

    Returns:
        Latent visible tokens, (B, V, D), ordered like ``visible_indices``.
    """
    index = _visible_index(masks, tokens.shape[0], tokens.shape[1], tokens.device)
    return temporal_encoder_forward(model, _gather_tokens(tokens, index))


def decode_full(
    decoder: TemporalDecoder, z_visible: torch.Tensor, masks: MaskSpec | Sequence[MaskSpec]
) -> torch.Tensor:
    """Reconstructed sequence r, (B, L, D), aligned index-for-index with g."""
    first = masks if isinstance(masks, MaskSpec) else masks[0]
    index = _visible_index(masks, z_visible.shape[0], first.num_tokens, z_visible.device)
    if index.shape[1] != z_visible.shape[1]:
        raise ValueError(
            f"z_visible has {z_visible.shape[1]} tokens, mask keeps {index.shape[1]} visible"
        )
    return decoder(z_visible, index, first.num_tokens)


@dataclass
class MapleOutput:
    """
    One autoencoder pass.

    Attributes:
        target: P from the unmasked sequence, detached.
        prediction: P_hat from the reconstruction.
        reconstruction: r, (B, L, D).
        visible_tokens: Number of tokens that entered the encoder per item.
    """

    target: ClassDistribution
    prediction: ClassDistribution
    reconstruction: torch.Tensor
    visible_tokens: int


def maple_forward(
    model: DestFormer,
    decoder: TemporalDecoder,
    tokens: torch.Tensor,
    masks: MaskSpec | Sequence[MaskSpec],
) -> MapleOutput:
    """
    Mask, encode, decode and classify both the unmasked and the rebuilt sequence.

    The target P is the backbone's ordinary prediction on the full g with
    gradients severed; P_hat runs r through the same prediction head.
    """
    with torch.no_grad():
        target = model.classify(tokens.detach()).distribution
    z_visible = encode_visible(model, tokens, masks)
    reconstruction = decode_full(decoder, z_visible, masks)
    _, prediction = prediction_head(model, reconstruction)
    return MapleOutput(
        target=target.detach(),
        prediction=prediction,
        reconstruction=reconstruction,
        visible_tokens=z_visible.shape[1],
    )


def maple_loss(target: torch.Tensor, prediction: torch.Tensor) -> torch.Tensor:
    """
    Mean over the batch of KL(P || P_hat).

    Args:
        target: P, (B, K) probabilities; detached before use.
        prediction: P_hat, (B, K) probabilities; clamped at 1e-8 before the log.

    Raises:
        ValueError: If either input is not a batch of probability vectors.
    """
    check_normalized(target, "P")
    check_normalized(prediction, "P_hat")
    return kl_divergence(target.detach(), prediction).mean()


def mse_ablation_loss(
    tokens: torch.Tensor, reconstruction: torch.Tensor, detach_target: bool
) -> torch.Tensor:
    """
    Mean squared error between g and r.

    ``detach_target=True`` severs the gradient through g (the setting where
    reconstructed norms explode); False lets both sides move (norms vanish).
    """
    if tokens.shape != reconstruction.shape:
        raise ValueError(f"shape mismatch: {tuple(tokens.shape)} vs {tuple(reconstruction.shape)}")
    target = tokens.detach() if detach_target else tokens
    return F.mse_loss(reconstruction, target)


def l2_norm_trace(sequence: torch.Tensor) -> float:
    """Mean L2 norm of the tokens (last axis) of a sequence or batch of sequences."""
    with torch.no_grad():
        if sequence.numel() == 0:
            return 0.0
        return float(sequence.norm(dim=-1).mean())


@dataclass
class NormTrace:
    """
    Run-long trace of token norms, one row per step.

    Rows are written to an append-only CSV with columns
    step, g_norm, r_norm, loss.
    """

    rows: list[dict[str, float]] = field(default_factory=list)
    _flushed: int = 0

    def append(
        self, step: int, tokens: torch.Tensor, reconstruction: torch.Tensor, loss: float
    ) -> None:
        self.rows.append(
            {
                "step": step,
                "g_norm": l2_norm_trace(tokens),
                "r_norm": l2_norm_trace(reconstruction),
                "loss": float(loss),
            }
        )

    def mean(self, column: str) -> float:
        if not self.rows:
            return float("nan")
        return float(np.mean([r[column] for r in self.rows]))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=["step", "g_norm", "r_norm", "loss"])

    def flush(self, path: str | Path) -> None:
        """Append rows not yet written to ``path``."""
        append_rows(self.rows[self._flushed :], path)
        self._flushed = len(self.rows)
