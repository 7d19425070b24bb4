"""Anti-segregation guidance: attention-overlap loss and image update.

Concepts in different views segregate when their attention maps occupy
disjoint regions. The loss below pulls every pairwise overlap ratio
    sum_p min(a, b) / sum_p (a + b)   in [0, 0.5]
toward a target phi, and a single gradient step on the freshly denoised
image reduces it. Maps are compared in the canonical frame: each view's map
is pulled back through the inverse view, since comparing a flipped map
against an unflipped one says nothing about spatial overlap.

The update applies only during the early, layout-forming part of the
schedule (timestep fraction above 1 - active_fraction) and uses a
max-abs-normalized gradient so the step size is scale-free.
"""

from __future__ import annotations

import dataclasses
from typing import Sequence

import torch

from . import views as views_mod

__all__ = ["AsoConfig", "AsoStepInfo", "concept_map", "overlap_ratio",
           "anti_seg_loss", "aso_update", "aso_step", "is_active"]


@dataclasses.dataclass(frozen=True)
class AsoConfig:
    phi: float = 0.45
    step_size: float = 0.1
    active_fraction: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.phi <= 0.5:
            raise ValueError(f"phi must be in [0, 0.5], got {self.phi}")
        if self.step_size < 0:
            raise ValueError(f"step_size must be >= 0, got {self.step_size}")
        if not 0.0 <= self.active_fraction <= 1.0:
            raise ValueError(
                f"active_fraction must be in [0, 1], got {self.active_fraction}")


@dataclasses.dataclass(frozen=True)
class AsoStepInfo:
    """Instrumentation of one applied update."""

    loss: float
    overlaps: tuple          # pairwise ratios, ordered (i, j) with i < j
    update_norm: float       # L2 norm of the applied delta


def concept_map(grid: torch.Tensor, channels: Sequence[int],
                v: views_mod.ViewTransform) -> torch.Tensor:
    """Canonical-frame concept map from a view's (r, r, K) attention grid.

    Sums the concept's token channels, then pulls the map back through the
    inverse view. Differentiable.
    """
    k = grid.shape[-1]
    for ch in channels:
        if not 0 <= ch < k:
            raise KeyError(f"token channel {ch} outside grid with {k} channels")
    summed = grid[..., list(channels)].sum(dim=-1)
    return views_mod.apply_to_grid(views_mod.invert(v), summed)


def overlap_ratio(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """sum min(a, b) / sum (a + b); scalar tensor in [0, 0.5].

    Equals 0.5 iff the maps coincide elementwise (for nonnegative maps),
    0 for disjoint supports. Undefined (raises) when both maps are all zero.
    """
    if a.shape != b.shape:
        raise ValueError(f"map shapes differ: {tuple(a.shape)} vs {tuple(b.shape)}")
    denom = (a + b).sum()
    if float(denom.detach()) <= 0.0:
        raise ValueError("overlap ratio undefined: both maps are all zero")
    return torch.minimum(a, b).sum() / denom


def anti_seg_loss(maps: Sequence[torch.Tensor], phi: float) -> torch.Tensor:
    """Mean absolute deviation of pairwise overlap ratios from phi.

    Sum over unordered pairs i < j of |phi - ratio_ij|, scaled by
    1 / (N (N - 1)). Scalar tensor; differentiable, with the subgradient at
    the |.| kink equal to zero.
    """
    n = len(maps)
    if n < 2:
        raise ValueError("anti-segregation loss needs at least 2 maps")
    total = None
    for i in range(n):
        for j in range(i + 1, n):
            term = torch.abs(phi - overlap_ratio(maps[i], maps[j]))
            total = term if total is None else total + term
    return total / (n * (n - 1))


def is_active(t: int, total_timesteps: int, active_fraction: float) -> bool:
    """Gate: the update runs only while t / total exceeds 1 - active_fraction."""
    return t / total_timesteps > 1.0 - active_fraction


def aso_step(x_next: torch.Tensor, tasks, denoiser, t: int, cfg: AsoConfig,
             total_timesteps: int | None = None):
    """Apply one anti-segregation update; returns (image, AsoStepInfo | None).

    ``x_next`` is the freshly denoised state the next reverse step will
    consume; attention is probed there at timestep ``t`` (the look-ahead).
    Info is None when the gate or a zero step size left the image untouched.
    """
    from .denoiser import attention_loss_details

    if total_timesteps is not None and not is_active(t, total_timesteps,
                                                     cfg.active_fraction):
        return x_next, None
    if cfg.step_size == 0.0:
        return x_next, None
    grad, loss, overlaps = attention_loss_details(denoiser, x_next, t, tasks, cfg.phi)
    gmax = float(grad.abs().max())
    if gmax == 0.0:
        return x_next, None
    delta = (cfg.step_size / gmax) * grad
    info = AsoStepInfo(loss=loss, overlaps=tuple(overlaps),
                       update_norm=float(delta.norm()))
    return x_next - delta, info


def aso_update(x_next: torch.Tensor, tasks, denoiser, t: int, cfg: AsoConfig,
               total_timesteps: int | None = None) -> torch.Tensor:
    """Single-step look-ahead gradient descent on the overlap loss."""
    return aso_step(x_next, tasks, denoiser, t, cfg, total_timesteps)[0]
