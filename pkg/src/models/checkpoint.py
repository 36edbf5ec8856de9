"""Versioned checkpoints for the backbone and, optionally, the temporal decoder.

A checkpoint is a ``torch.save`` dictionary holding the configs, their hash
and the state dicts. Loading checks the format version and, when asked, that
the stored hash matches the configuration the caller expects.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import torch

from src.models.config import BackboneConfig, MapleConfig, config_hash
from src.models.destformer import DestFormer
from src.models.maple import TemporalDecoder

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


@dataclass
class Checkpoint:
    backbone_config: BackboneConfig
    backbone_state: dict[str, torch.Tensor]
    maple_config: MapleConfig | None = None
    maple_state: dict[str, torch.Tensor] | None = None
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def config_hash(self) -> str:
        return config_hash(self.backbone_config)

    @property
    def state_hash(self) -> str:
        """SHA-256 over the backbone parameters, identifying this exact snapshot."""
        digest = hashlib.sha256()
        for name in sorted(self.backbone_state):
            digest.update(name.encode())
            digest.update(self.backbone_state[name].detach().cpu().contiguous().numpy().tobytes())
        return digest.hexdigest()[:16]

    @classmethod
    def capture(
        cls,
        model: DestFormer,
        decoder: TemporalDecoder | None = None,
        metadata: dict[str, Any] | None = None,
    ) -> Checkpoint:
        """Snapshot (copy) the current parameters of a model and decoder."""
        return cls(
            backbone_config=model.cfg,
            backbone_state={k: v.detach().clone() for k, v in model.state_dict().items()},
            maple_config=decoder.cfg if decoder is not None else None,
            maple_state=(
                {k: v.detach().clone() for k, v in decoder.state_dict().items()}
                if decoder is not None
                else None
            ),
            metadata=dict(metadata or {}),
        )

    def build_model(self) -> DestFormer:
        model = DestFormer(self.backbone_config)
        dtype = next(iter(self.backbone_state.values())).dtype
        model.to(dtype)
        model.load_state_dict(self.backbone_state)
        return model

    def build_decoder(self, model: DestFormer) -> TemporalDecoder | None:
        if self.maple_config is None or self.maple_state is None:
            return None
        decoder = TemporalDecoder.for_backbone(model, self.maple_config)
        decoder.to(next(iter(self.maple_state.values())).dtype)
        decoder.load_state_dict(self.maple_state)
        return decoder

    def restore(self, model: DestFormer, decoder: TemporalDecoder | None = None) -> None:
        """Load the stored parameters into existing modules."""
        if model.cfg != self.backbone_config:
            raise ValueError("checkpoint backbone config does not match the model")
        model.load_state_dict(self.backbone_state)
        if decoder is not None and self.maple_state is not None:
            decoder.load_state_dict(self.maple_state)


def save_checkpoint(checkpoint: Checkpoint, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "config_hash": checkpoint.config_hash,
        "backbone_config": checkpoint.backbone_config.to_dict(),
        "backbone_state": checkpoint.backbone_state,
        "maple_config": (
            checkpoint.maple_config.to_dict() if checkpoint.maple_config is not None else None
        ),
        "maple_state": checkpoint.maple_state,
        "metadata": checkpoint.metadata,
    }
    torch.save(payload, path)
    logger.debug("Saved checkpoint %s (config %s)", path, checkpoint.config_hash)
    return path


def load_checkpoint(path: str | Path, expected_hash: str | None = None) -> Checkpoint:
    """
    Read a checkpoint file.

    Args:
        path: File written by ``save_checkpoint``.
        expected_hash: When given, the stored config hash must equal it.

    Raises:
        FileNotFoundError: If the file does not exist.
        ValueError: On an unsupported format version or a hash mismatch.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"File not found: {path}")
    payload = torch.load(path, map_location="cpu", weights_only=False)
    version = payload.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"Unsupported checkpoint version {version} in {path}")
    maple_cfg = payload.get("maple_config")
    checkpoint = Checkpoint(
        backbone_config=BackboneConfig.from_dict(payload["backbone_config"]),
        backbone_state=payload["backbone_state"],
        maple_config=MapleConfig.from_dict(maple_cfg) if maple_cfg is not None else None,
        maple_state=payload.get("maple_state"),
        metadata=payload.get("metadata", {}),
    )
    if checkpoint.config_hash != payload["config_hash"]:
        raise ValueError(f"{path}: stored config hash does not match its config")
    if expected_hash is not None and checkpoint.config_hash != expected_hash:
        raise ValueError(
            f"{path}: checkpoint config {checkpoint.config_hash} != expected {expected_hash}"
        )
    return checkpoint
