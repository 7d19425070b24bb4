"""Per-view noise combination: completion-score weighting and variance repair.

Per-view noise predictions are back-transformed into the canonical frame,
convexly combined with weights derived from task completion scores, and the
combination is rescaled so its per-element variance returns to one. The
weight exponent runs linearly from -1 at the start of denoising (t = T) to
-2 at the end (t = 0): low completion scores get large weights, more
aggressively as the image cleans up and the scores become reliable.

The variance of a weighted sum of unit-variance noises is
sum_i a_i^2 + sum_{i<j} 2 a_i a_j rho_ij; the rectification factor is the
inverse square root of that quantity, with the per-step correlation
coefficients estimated as mean elementwise products.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Sequence

import numpy as np
import torch

from . import views as views_mod

__all__ = [
    "CS_FLOOR",
    "RADICAND_FLOOR",
    "WeightVector",
    "CorrelationEstimate",
    "completion_weights",
    "uniform_weights",
    "combine_noise",
    "estimate_correlation",
    "rectification_radicand",
    "rectification_factor",
    "rectify",
]

# Completion scores are cosines and may be <= 0, where a negative power is
# unbounded or undefined; values below this floor are raised to it.
CS_FLOOR = 0.05
# Lower clamp for the variance expression under strong negative correlation.
RADICAND_FLOOR = 1e-4


@dataclasses.dataclass(frozen=True)
class WeightVector:
    """Nonnegative per-view combination weights, normalized to sum 1."""

    alpha: tuple

    def __post_init__(self):
        if len(self.alpha) == 0:
            raise ValueError("empty weight vector")
        if any(a < 0 for a in self.alpha):
            raise ValueError(f"weights must be nonnegative, got {self.alpha}")
        if abs(sum(self.alpha) - 1.0) > 1e-6:
            raise ValueError(f"weights must sum to 1, got sum {sum(self.alpha)!r}")

    def __len__(self) -> int:
        return len(self.alpha)


@dataclasses.dataclass(frozen=True)
class CorrelationEstimate:
    """Symmetric correlation matrix with unit diagonal (numpy, float64)."""

    rho: np.ndarray

    def pair(self, i: int, j: int) -> float:
        return float(self.rho[i, j])


def _score_value(s) -> float:
    return float(getattr(s, "value", s))


def completion_weights(scores: Sequence, t: int, T: int) -> WeightVector:
    """Weights alpha_i proportional to clamp(CS_i) ** (-2 + t/T).

    ``scores`` may hold CompletionScore objects or bare floats. Scores below
    CS_FLOOR are raised to it before the power.
    """
    if len(scores) == 0:
        raise ValueError("completion_weights needs at least one score")
    if not 0 <= t <= T:
        raise ValueError(f"timestep {t} outside [0, {T}]")
    exponent = -2.0 + t / T
    raised = [max(_score_value(s), CS_FLOOR) ** exponent for s in scores]
    total = sum(raised)
    return WeightVector(alpha=tuple(a / total for a in raised))


def uniform_weights(n: int) -> WeightVector:
    if n < 1:
        raise ValueError("need at least one view")
    return WeightVector(alpha=(1.0 / n,) * n)


def combine_noise(eps: Sequence[torch.Tensor], views: Sequence,
                  alpha: WeightVector) -> torch.Tensor:
    """Convex combination sum_i alpha_i * invert(v_i)(eps_i)."""
    if not (len(eps) == len(views) == len(alpha)):
        raise ValueError(
            f"length mismatch: {len(eps)} noises, {len(views)} views, {len(alpha)} weights")
    shape = eps[0].shape
    if any(e.shape != shape for e in eps):
        raise ValueError("all noise tensors must share one shape")
    out = None
    for a, e, v in zip(alpha.alpha, eps, views):
        term = a * views_mod.apply(views_mod.invert(v), e)
        out = term if out is None else out + term
    return out


def estimate_correlation(eps: Sequence[torch.Tensor], views: Sequence) -> CorrelationEstimate:
    """Mean elementwise products of back-transformed noises; diagonal forced to 1.

    This is the unit-variance approximation of the correlation coefficient,
    accurate when each noise is (close to) standard normal and the element
    count is large.
    """
    if len(eps) < 2:
        raise ValueError("correlation needs at least two noise vectors")
    if len(eps) != len(views):
        raise ValueError(f"length mismatch: {len(eps)} noises, {len(views)} views")
    shape = eps[0].shape
    if any(e.shape != shape for e in eps):
        raise ValueError("all noise tensors must share one shape")
    back = [views_mod.apply(views_mod.invert(v), e).detach().double().flatten()
            for e, v in zip(eps, views)]
    n = len(back)
    count = back[0].numel()
    rho = np.eye(n, dtype=np.float64)
    for i in range(n):
        for j in range(i + 1, n):
            r = float(torch.dot(back[i], back[j])) / count
            rho[i, j] = rho[j, i] = r
    return CorrelationEstimate(rho=rho)


def rectification_radicand(alpha: WeightVector, rho: CorrelationEstimate) -> float:
    """Predicted variance of the combination: sum a_i^2 + sum_{i<j} 2 a_i a_j rho_ij."""
    n = len(alpha)
    if rho.rho.shape != (n, n):
        raise ValueError(f"rho is {rho.rho.shape}, weights have {n} entries")
    a = alpha.alpha
    total = sum(ai * ai for ai in a)
    for i in range(n):
        for j in range(i + 1, n):
            total += 2.0 * a[i] * a[j] * rho.pair(i, j)
    return total


def rectification_factor(alpha: WeightVector, rho: CorrelationEstimate) -> float:
    """Scale restoring unit variance, 1/sqrt(radicand); radicand clamped below
    at RADICAND_FLOOR so strong negative correlation cannot blow up."""
    return 1.0 / math.sqrt(max(rectification_radicand(alpha, rho), RADICAND_FLOOR))


def rectify(eps_combined: torch.Tensor, c: float) -> torch.Tensor:
    """Elementwise scaling of the combined noise by c > 0."""
    if c <= 0:
        raise ValueError(f"scale factor must be positive, got {c}")
    return eps_combined * c
