"""Small torch helpers shared by the training code."""

from __future__ import annotations

from collections.abc import Iterable, Iterator
from typing import TypeVar

import torch
from torch import nn

T = TypeVar("T")


def make_generator(seed: int) -> torch.Generator:
    generator = torch.Generator()
    generator.manual_seed(seed)
    return generator


def count_parameters(model: nn.Module, trainable_only: bool = True) -> int:
    return sum(p.numel() for p in model.parameters() if p.requires_grad or not trainable_only)


def model_dtype(model: nn.Module) -> torch.dtype:
    """Floating dtype of the first parameter (float32 for parameter-free modules)."""
    for p in model.parameters():
        return p.dtype
    return torch.float32


def cycle(loader: Iterable[T]) -> Iterator[T]:
    """Iterate a loader forever, re-entering it (and reshuffling) after each pass."""
    while True:
        empty = True
        for item in loader:
            empty = False
            yield item
        if empty:
            raise ValueError("cannot cycle over an empty loader")
