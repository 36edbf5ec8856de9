"""Hard pseudo labels for unlabeled videos.

Labels are the argmax of the backbone's class distribution. The file form is
a CSV with one row per video and the hash of the checkpoint that produced
it, so labels from a stale model are never mixed into a run silently.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import pandas as pd
import torch
import torch.nn.functional as F
from torch import nn

from src.data.loader import VideoDataset, make_loader
from src.utils.io_utils import save_table
from src.utils.torch_utils import model_dtype

logger = logging.getLogger(__name__)

COLUMNS = ["video_id", "class_id", "confidence", "checkpoint_hash"]


@dataclass(frozen=True)
class PseudoLabel:
    video_id: str
    class_id: int
    confidence: float


@torch.no_grad()
def generate_hard_pseudo_labels(
    model: nn.Module,
    dataset: VideoDataset,
    batch_size: int = 32,
    threshold: float | None = None,
) -> list[PseudoLabel]:
    """
    Predict a hard label for every video of an unlabeled dataset.

    Ties go to the lowest class index. The model is put in eval mode for the
    pass and restored to its previous mode afterwards.

    Args:
        model: Backbone returning an output with ``.logits``.
        dataset: Unlabeled (or labeled; labels are ignored) videos.
        batch_size: Inference batch size.
        threshold: Drop videos whose top probability is below this value.

    Returns:
        Labels in dataset order; empty for an empty dataset.
    """
    if len(dataset) == 0:
        return []
    was_training = model.training
    model.eval()
    dtype = model_dtype(model)
    labels: list[PseudoLabel] = []
    try:
        for batch in make_loader(dataset, batch_size, shuffle=False):
            batch = batch.to(dtype)
            logits = model(batch.points, batch.grouping).logits
            classes = torch.argmax(logits, dim=-1)
            confidence = F.softmax(logits, dim=-1).gather(1, classes.unsqueeze(1)).squeeze(1)
            for video_id, c, p in zip(batch.video_ids, classes.tolist(), confidence.tolist()):
                labels.append(PseudoLabel(video_id, int(c), float(p)))
    finally:
        model.train(was_training)

    if threshold is not None:
        kept = [label for label in labels if label.confidence >= threshold]
        logger.info(
            "Pseudo labels: kept %d of %d above confidence %.3f", len(kept), len(labels), threshold
        )
        labels = kept
    return labels


def save_pseudo_labels(
    labels: list[PseudoLabel], path: str | Path, checkpoint_hash: str
) -> Path:
    frame = pd.DataFrame(
        [(p.video_id, p.class_id, p.confidence, checkpoint_hash) for p in labels],
        columns=COLUMNS,
    )
    return save_table(frame, path, format="csv")


def load_pseudo_labels(
    path: str | Path, expected_hash: str | None = None
) -> list[PseudoLabel]:
    """
    Read a pseudo-label CSV.

    Raises:
        FileNotFoundError: If the file does not exist.
        ValueError: If the file lacks required columns or was produced by a
            checkpoint other than ``expected_hash``.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"File not found: {path}")
    frame = pd.read_csv(path, dtype={"video_id": str, "checkpoint_hash": str})
    missing = set(COLUMNS) - set(frame.columns)
    if missing:
        raise ValueError(f"{path} is missing columns {sorted(missing)}")
    if expected_hash is not None and len(frame):
        found = set(frame["checkpoint_hash"])
        if found != {expected_hash}:
            raise ValueError(
                f"{path} was produced by checkpoint(s) {sorted(found)}, expected {expected_hash}"
            )
    return [
        PseudoLabel(str(row.video_id), int(row.class_id), float(row.confidence))
        for row in frame.itertuples(index=False)
    ]
