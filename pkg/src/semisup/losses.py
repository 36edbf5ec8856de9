"""Unsupervised objectives for Stage-2 training.

Every loss here works on class distributions produced by the backbone. The
VAT helpers take a ``forward_fn`` that maps a batch of point coordinates to
logits, so the same code perturbs the full DestFormer or a toy classifier.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Mapping
from dataclasses import asdict, dataclass

import torch
import torch.nn.functional as F

from src.models.distributions import check_normalized, entropy, kl_divergence

logger = logging.getLogger(__name__)

ForwardFn = Callable[[torch.Tensor], torch.Tensor]
TermValue = torch.Tensor | float | Callable[[], torch.Tensor]

TERMS = ("pseudo", "vat", "entmin", "maple")

# Stage-2 method -> unsupervised terms it trains with.
METHOD_TERMS: dict[str, tuple[str, ...]] = {
    "supervised-only": (),
    "pseudo-label": ("pseudo",),
    "vat": ("vat",),
    "entmin": ("entmin",),
    "vat+entmin": ("vat", "entmin"),
    "maple": ("maple",),
    "maple-mse-detached": ("maple",),
    "maple-mse-attached": ("maple",),
    "vat+entmin+maple": ("vat", "entmin", "maple"),
}

METHODS = tuple(METHOD_TERMS)


def method_terms(method: str) -> tuple[str, ...]:
    """
    Unsupervised terms used by a Stage-2 method.

    Raises:
        ValueError: If the method is not recognized.
    """
    if method not in METHOD_TERMS:
        raise ValueError(f"Unknown method: {method}. Supported methods: {', '.join(METHODS)}")
    return METHOD_TERMS[method]


@dataclass(frozen=True)
class VatConfig:
    """
    Virtual adversarial perturbation parameters.

    Attributes:
        eps: L2 radius of the perturbation over one whole video (input units).
            0 disables the term.
        xi: Finite-difference step used to estimate the adversarial direction.
        power_iterations: Power-iteration steps refining the direction.
    """

    eps: float = 0.05
    xi: float = 10.0
    power_iterations: int = 1

    def __post_init__(self) -> None:
        if self.eps < 0:
            raise ValueError(f"eps must be >= 0, got {self.eps}")
        if self.xi <= 0:
            raise ValueError(f"xi must be > 0, got {self.xi}")
        if self.power_iterations < 1:
            raise ValueError(f"power_iterations must be >= 1, got {self.power_iterations}")

    def to_dict(self) -> dict[str, float | int]:
        return asdict(self)


@dataclass(frozen=True)
class UnsupLossWeights:
    """Nonnegative weights of the unsupervised terms in L = L_l + sum(alpha * L_u)."""

    vat: float = 1.0
    entmin: float = 1.0
    maple: float = 0.5
    pseudo: float = 1.0

    def __post_init__(self) -> None:
        for name, value in asdict(self).items():
            if value < 0 or not math.isfinite(value):
                raise ValueError(f"weight {name} must be finite and >= 0, got {value}")

    def to_dict(self) -> dict[str, float]:
        return asdict(self)

    def restricted_to(self, terms: tuple[str, ...]) -> UnsupLossWeights:
        """Copy with every term outside ``terms`` set to zero."""
        return UnsupLossWeights(**{k: (v if k in terms else 0.0) for k, v in asdict(self).items()})

    def active(self) -> tuple[str, ...]:
        return tuple(k for k, v in asdict(self).items() if v > 0)


def _normalize_per_item(d: torch.Tensor) -> torch.Tensor:
    norms = d.flatten(1).norm(dim=1).clamp_min(1e-12)
    return d / norms.view(-1, *([1] * (d.dim() - 1)))


def vat_perturbation(
    forward_fn: ForwardFn,
    x: torch.Tensor,
    cfg: VatConfig,
    generator: torch.Generator | None = None,
) -> torch.Tensor:
    """
    Approximate the most sensitive perturbation of radius ``cfg.eps`` per item.

    Starts from a random unit direction d and repeats
    d <- normalize(grad_d KL(f(x) || f(x + xi * d))) ``power_iterations``
    times. Items whose gradient vanishes keep their current direction.

    Args:
        forward_fn: Maps coordinates (B, ...) to logits (B, K). It must be
            deterministic between calls.
        x: Batch of coordinates; only these are perturbed.
        cfg: Radius, finite-difference step and iteration count.
        generator: Random stream for the initial direction.

    Returns:
        Detached perturbation with ``||delta_i||_2 == cfg.eps`` for every item.
    """
    if cfg.eps == 0:
        return torch.zeros_like(x)
    x = x.detach()
    with torch.no_grad():
        target = F.softmax(forward_fn(x), dim=-1)
    d = torch.randn(x.shape, generator=generator, dtype=x.dtype).to(x.device)
    d = _normalize_per_item(d)
    for _ in range(cfg.power_iterations):
        d.requires_grad_(True)
        nudged = F.softmax(forward_fn(x + cfg.xi * d), dim=-1)
        divergence = kl_divergence(target, nudged).mean()
        (grad,) = torch.autograd.grad(divergence, d)
        d = d.detach()
        grad_norm = grad.flatten(1).norm(dim=1)
        stalled = grad_norm == 0
        if bool(stalled.any()):
            logger.debug("VAT gradient vanished for %d items", int(stalled.sum()))
        keep = stalled.view(-1, *([1] * (d.dim() - 1)))
        d = torch.where(keep, d, _normalize_per_item(grad))
    return cfg.eps * d


def vat_divergence(clean: torch.Tensor, perturbed: torch.Tensor) -> torch.Tensor:
    """Mean KL(clean || perturbed) with ``clean`` treated as a fixed target."""
    return kl_divergence(clean.detach(), perturbed).mean()


def vat_loss(
    forward_fn: ForwardFn,
    x: torch.Tensor,
    delta: torch.Tensor,
    clean_logits: torch.Tensor | None = None,
) -> torch.Tensor:
    """
    L_vat = mean_i KL(f(x_i) || f(x_i + delta_i)).

    Args:
        forward_fn: Maps coordinates to logits.
        x: Clean coordinates.
        delta: Perturbation from ``vat_perturbation``.
        clean_logits: Logits of ``x`` when the caller already has them.

    Raises:
        ValueError: If ``x`` and ``delta`` differ in shape.
    """
    if x.shape != delta.shape:
        raise ValueError(f"shape mismatch: x {tuple(x.shape)} vs delta {tuple(delta.shape)}")
    if clean_logits is None:
        with torch.no_grad():
            clean_logits = forward_fn(x)
    clean = F.softmax(clean_logits.detach(), dim=-1)
    perturbed = F.softmax(forward_fn(x + delta), dim=-1)
    return vat_divergence(clean, perturbed)


def entmin_loss(probs: torch.Tensor) -> torch.Tensor:
    """
    Mean Shannon entropy of a batch of distributions.

    Lies in [0, ln K]: 0 for one-hot rows, ln K for uniform rows.

    Raises:
        ValueError: If the rows are not probability vectors.
    """
    check_normalized(probs, "entmin input")
    return entropy(probs).mean()


def pseudo_label_loss(logits: torch.Tensor, pseudo_labels: torch.Tensor) -> torch.Tensor:
    """Cross-entropy of unlabeled predictions against their hard pseudo labels."""
    if logits.shape[0] != pseudo_labels.shape[0]:
        raise ValueError(
            f"{logits.shape[0]} predictions but {pseudo_labels.shape[0]} pseudo labels"
        )
    if logits.shape[0] == 0:
        return logits.sum() * 0
    return F.cross_entropy(logits, pseudo_labels)


def combined_unsup_loss(
    terms: Mapping[str, TermValue],
    weights: UnsupLossWeights | Mapping[str, float],
) -> tuple[torch.Tensor, dict[str, float]]:
    """
    Weighted sum of unsupervised terms.

    Terms may be given as callables; a callable whose weight is zero is never
    called, so its forward passes never run.

    Args:
        terms: Term name -> value or zero-argument callable producing it.
        weights: Per-term weights; a missing name counts as weight 0.

    Returns:
        (total, components) where components maps every evaluated term to
        its unweighted value.

    Example:
        >>> total, parts = combined_unsup_loss({"vat": 0.3, "entmin": 0.7}, UnsupLossWeights())
        >>> float(total)
        1.0
    """
    weight_map = weights.to_dict() if isinstance(weights, UnsupLossWeights) else dict(weights)
    total: torch.Tensor | None = None
    components: dict[str, float] = {}
    for name, term in terms.items():
        weight = float(weight_map.get(name, 0.0))
        if weight == 0:
            continue
        value = term() if callable(term) else term
        value = value if isinstance(value, torch.Tensor) else torch.as_tensor(float(value))
        components[name] = float(value.detach())
        weighted = weight * value
        total = weighted if total is None else total + weighted
    if total is None:
        return torch.zeros(()), components
    return total, components
