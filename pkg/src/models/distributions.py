"""Class distributions and the divergences built on them.

Probabilities are clamped at ``PROB_EPS`` before any logarithm so a zero
entry never produces an infinite loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

PROB_EPS = 1e-8
NORMALIZATION_TOL = 1e-4


@dataclass
class ClassDistribution:
    """Raw logits over the label space and their softmax, shape (B, K)."""

    logits: torch.Tensor

    @property
    def probs(self) -> torch.Tensor:
        return F.softmax(self.logits, dim=-1)

    def detach(self) -> ClassDistribution:
        return ClassDistribution(self.logits.detach())


def check_normalized(probs: torch.Tensor, name: str = "distribution") -> None:
    """
    Raise ValueError unless every row is a probability vector.

    Rows must be nonnegative and sum to one within ``NORMALIZATION_TOL``.
    """
    with torch.no_grad():
        if probs.numel() == 0:
            return
        if bool((probs < 0).any()):
            raise ValueError(f"{name} has negative entries")
        sums = probs.sum(dim=-1)
        if bool(((sums - 1).abs() > NORMALIZATION_TOL).any()):
            low, high = float(sums.min()), float(sums.max())
            raise ValueError(f"{name} rows do not sum to 1 (got {low:.6g}..{high:.6g})")


def kl_divergence(p: torch.Tensor, q: torch.Tensor, eps: float = PROB_EPS) -> torch.Tensor:
    """
    Per-row KL(p || q) = sum_y p(y) ln(p(y) / q(y)).

    Zero entries of ``p`` contribute zero; ``q`` is clamped at ``eps``.
    """
    return (torch.xlogy(p, p) - p * torch.log(q.clamp_min(eps))).sum(dim=-1)


def entropy(p: torch.Tensor, eps: float = PROB_EPS) -> torch.Tensor:
    """Per-row Shannon entropy with entries clamped at ``eps``."""
    return -(p * torch.log(p.clamp_min(eps))).sum(dim=-1)
