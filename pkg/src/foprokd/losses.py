"""Training objectives.

Covers the two phases of the alternating loop and the long-tail baselines:

* statistics matching between a frozen teacher's stored batch-norm moments
  and the moments its activations exhibit on prompted images;
* an entropy term pushing the teacher's pooled features toward a uniform
  softmax, and their weighted sum (the inversion objective);
* a cosine feature-matching distillation loss between L2-normalized student
  and teacher encodings, bounded in ``[0, 4]``;
* balanced-softmax cross-entropy for long-tailed targets;
* the exploitation composite (target + weighted distillation) and the
  exploration composite (inversion minus weighted distillation, which trains
  the prompt generator adversarially).

All functions are pure and differentiable; reductions over the batch are
means unless stated otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import torch
import torch.nn.functional as F
from torch import Tensor

from .exceptions import (
    ContractViolationError,
    DegenerateEncodingError,
    InvalidArgumentError,
)

NORMALIZATION_EPS = 1e-12


class BNStatistics(NamedTuple):
    """Per-layer first and second moments, one entry per batch-norm layer."""

    means: tuple[Tensor, ...]
    variances: tuple[Tensor, ...]

    @classmethod
    def from_pairs(cls, pairs: Sequence[tuple[Tensor, Tensor]]) -> "BNStatistics":
        means, variances = zip(*pairs) if pairs else ((), ())
        return cls(tuple(means), tuple(variances))

    def __len__(self) -> int:
        return len(self.means)


@dataclass(frozen=True)
class LossWeights:
    """Weighting factors for the composite objectives.

    ``gamma`` scales the adversarial term and is capped at 1, below the
    distillation factor ``lambda_f``.
    """

    lambda_f: float = 3.0
    mu: float = 10.0
    gamma: float = 0.3

    def __post_init__(self):
        if self.lambda_f < 0:
            raise InvalidArgumentError(f"lambda_f must be >= 0, got {self.lambda_f}")
        if self.mu < 0:
            raise InvalidArgumentError(f"mu must be >= 0, got {self.mu}")
        if not 0.0 <= self.gamma <= 1.0:
            raise InvalidArgumentError(f"gamma must lie in [0, 1], got {self.gamma}")


def bn_regularization(batch_stats: BNStatistics, running_stats: BNStatistics) -> Tensor:
    """Squared-L2 divergence between batch and stored batch-norm statistics.

    Sums ``||mean_batch - mean_running||^2 + ||var_batch - var_running||^2``
    over layers. Zero exactly when the statistics coincide.
    """
    if len(batch_stats) != len(running_stats):
        raise ContractViolationError(
            f"layer lists differ: {len(batch_stats)} batch vs {len(running_stats)} running"
        )
    total = None
    for i, (bm, bv, rm, rv) in enumerate(
        zip(batch_stats.means, batch_stats.variances, running_stats.means, running_stats.variances)
    ):
        if bm.shape != rm.shape or bv.shape != rv.shape:
            raise ContractViolationError(f"statistics shape mismatch at layer {i}")
        term = ((bm - rm) ** 2).sum() + ((bv - rv) ** 2).sum()
        total = term if total is None else total + term
    if total is None:
        raise ContractViolationError("statistics cover no layers")
    return total


def balance_loss(features: Tensor) -> Tensor:
    """Negative entropy of the softmax over feature dimensions, batch mean.

    Minimizing drives the per-sample softmax toward uniform; the minimum is
    ``-log C`` and the supremum 0.
    """
    if features.dim() != 2:
        raise InvalidArgumentError(f"expected B x C features, got shape {tuple(features.shape)}")
    if features.shape[1] < 2:
        raise InvalidArgumentError("balance loss needs at least 2 feature dimensions")
    logp = F.log_softmax(features, dim=1)
    return (logp.exp() * logp).sum(dim=1).mean()


def inversion_loss(bn_term: Tensor, bal_term: Tensor, weights: LossWeights) -> Tensor:
    """Statistics-matching term plus ``mu`` times the balance term."""
    return bn_term + weights.mu * bal_term


def ekd_loss(y: Tensor, t: Tensor) -> Tensor:
    """Cosine feature-matching loss ``2 - 2 <y_hat, t_hat>``, batch mean.

    Both encodings are L2-normalized with an epsilon guard; an exactly
    zero-norm row is rejected. The cosine is clamped to ``[-1, 1]`` against
    roundoff so the loss is bounded in ``[0, 4]`` for all inputs.
    """
    if y.shape != t.shape or y.dim() != 2:
        raise InvalidArgumentError(
            f"encodings must share a B x C shape, got {tuple(y.shape)} and {tuple(t.shape)}"
        )
    y_norm = y.norm(dim=1, keepdim=True)
    t_norm = t.norm(dim=1, keepdim=True)
    with torch.no_grad():
        if (y_norm == 0).any() or (t_norm == 0).any():
            raise DegenerateEncodingError("zero-norm encoding cannot be normalized")
    y_hat = y / y_norm.clamp_min(NORMALIZATION_EPS)
    t_hat = t / t_norm.clamp_min(NORMALIZATION_EPS)
    cosine = (y_hat * t_hat).sum(dim=1).clamp(-1.0, 1.0)
    return (2.0 - 2.0 * cosine).mean()


def balanced_softmax_loss(logits: Tensor, labels: Tensor, class_counts: Tensor) -> Tensor:
    """Cross-entropy on logits shifted by the log class counts, batch mean.

    Counts are divided by their minimum before the log, which leaves the loss
    unchanged (softmax is shift-invariant) and makes the uniform-count case
    add an exact zero, reducing bit-for-bit to plain cross-entropy.
    """
    counts = torch.as_tensor(class_counts, dtype=logits.dtype, device=logits.device)
    if counts.dim() != 1 or counts.shape[0] != logits.shape[1]:
        raise InvalidArgumentError(
            f"need one count per class: got {tuple(counts.shape)} for {logits.shape[1]} classes"
        )
    if (counts < 1).any():
        raise InvalidArgumentError("class counts must all be >= 1")
    adjusted = logits + (counts / counts.min()).log().unsqueeze(0)
    return F.cross_entropy(adjusted, labels)


def exploitation_loss(target_term: Tensor, distill_term: Tensor, weights: LossWeights) -> Tensor:
    """Target loss plus ``lambda_f`` times the distillation loss."""
    return target_term + weights.lambda_f * distill_term


def exploration_loss(distill_term: Tensor, inv_term: Tensor, weights: LossWeights) -> Tensor:
    """Inversion loss minus ``gamma * lambda_f`` times the distillation loss.

    Minimizing this pushes the distillation loss up, searching for prompts
    the student has not matched yet.
    """
    return -weights.gamma * weights.lambda_f * distill_term + inv_term
