"""DDPM noise schedule, forward noising, and the ancestral reverse step.

Timesteps follow the usual convention: t = 0 is the clean image, t = T pure
noise. The per-step variances ``beta`` and the cumulative products
``alpha_bar`` are stored as length-T arrays indexed by t - 1, so
``alpha_bar[0] == 1 - beta[0]``. All randomness is owned by the caller: the
reverse step takes an explicit draw ``z``.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np
import torch

__all__ = [
    "DiffusionSchedule",
    "InferenceSchedule",
    "make_schedule",
    "subsample_schedule",
    "add_noise",
    "reverse_step",
    "DEFAULT_T",
    "DEFAULT_BETA_START",
    "DEFAULT_BETA_END",
    "DEFAULT_STEPS",
]

DEFAULT_T = 1000
DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.02
# Inference default: a short stride-subsampled schedule.
DEFAULT_STEPS = 30


@dataclasses.dataclass(frozen=True)
class DiffusionSchedule:
    """Linear-beta schedule with precomputed cumulative products."""

    T: int
    beta: np.ndarray       # shape (T,), float64, each in (0, 1)
    alpha_bar: np.ndarray  # shape (T,), float64, strictly decreasing

    def beta_at(self, t: int) -> float:
        """Per-step variance beta_t for t in [1, T]."""
        if not 1 <= t <= self.T:
            raise ValueError(f"timestep {t} outside [1, {self.T}]")
        return float(self.beta[t - 1])

    def alpha_bar_at(self, t: int) -> float:
        """Cumulative product alpha_bar_t for t in [0, T]; t=0 gives 1."""
        if not 0 <= t <= self.T:
            raise ValueError(f"timestep {t} outside [0, {self.T}]")
        if t == 0:
            return 1.0
        return float(self.alpha_bar[t - 1])


@dataclasses.dataclass(frozen=True)
class InferenceSchedule:
    """A coarse schedule plus the map from coarse steps to model timesteps.

    ``schedule`` has T = number of inference steps, with effective betas
    beta_k = 1 - alpha_bar(t_k) / alpha_bar(t_{k-1}) so that the coarse
    forward marginals agree with the full schedule at the selected
    timesteps. ``timestep_map[k-1]`` is the full-schedule timestep the model
    is conditioned on at coarse step k.
    """

    schedule: DiffusionSchedule
    timestep_map: np.ndarray  # shape (steps,), int, increasing, in [1, T_full]

    @property
    def steps(self) -> int:
        return self.schedule.T

    def model_timestep(self, k: int) -> int:
        """Full-schedule timestep for coarse step k in [1, steps]."""
        if not 1 <= k <= self.steps:
            raise ValueError(f"coarse step {k} outside [1, {self.steps}]")
        return int(self.timestep_map[k - 1])


def make_schedule(T: int, beta_start: float = DEFAULT_BETA_START,
                  beta_end: float = DEFAULT_BETA_END) -> DiffusionSchedule:
    """Linear interpolation of beta over T steps; alpha_bar by cumulative product."""
    if T < 1:
        raise ValueError(f"T must be positive, got {T}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError(f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})")
    beta = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    alpha_bar = np.cumprod(1.0 - beta)
    return DiffusionSchedule(T=T, beta=beta, alpha_bar=alpha_bar)


def subsample_schedule(s: DiffusionSchedule, steps: int) -> InferenceSchedule:
    """Stride-based subsampling of a full schedule down to ``steps`` steps."""
    if not 1 <= steps <= s.T:
        raise ValueError(f"steps must be in [1, {s.T}], got {steps}")
    stride = s.T // steps
    timesteps = np.arange(1, steps + 1) * stride  # last one <= T
    abar = np.array([s.alpha_bar_at(int(t)) for t in timesteps])
    prev = np.concatenate([[1.0], abar[:-1]])
    beta = 1.0 - abar / prev
    coarse = DiffusionSchedule(T=steps, beta=beta, alpha_bar=abar)
    return InferenceSchedule(schedule=coarse, timestep_map=timesteps)


def add_noise(x0: torch.Tensor, eps: torch.Tensor, t: int,
              s: DiffusionSchedule) -> torch.Tensor:
    """Forward-noise x0 to timestep t: sqrt(abar_t) x0 + sqrt(1 - abar_t) eps."""
    if x0.shape != eps.shape:
        raise ValueError(f"shape mismatch: x0 {tuple(x0.shape)} vs eps {tuple(eps.shape)}")
    abar = s.alpha_bar_at(t)
    return math.sqrt(abar) * x0 + math.sqrt(1.0 - abar) * eps


def reverse_step(x_t: torch.Tensor, eps_hat: torch.Tensor, t: int,
                 z: torch.Tensor, s: DiffusionSchedule) -> torch.Tensor:
    """One ancestral DDPM step from x_t to x_{t-1}.

    Mean (x_t - beta_t / sqrt(1 - abar_t) * eps_hat) / sqrt(1 - beta_t), plus
    sigma_t * z with sigma_t^2 = beta_t. The caller draws z from a standard
    normal for t > 1 and passes zeros at the final step.
    """
    if t == 0:
        raise ValueError("reverse_step is undefined at t=0 (already clean)")
    if x_t.shape != eps_hat.shape or x_t.shape != z.shape:
        raise ValueError("x_t, eps_hat and z must share one shape")
    beta = s.beta_at(t)
    abar = s.alpha_bar_at(t)
    mean = (x_t - (beta / math.sqrt(1.0 - abar)) * eps_hat) / math.sqrt(1.0 - beta)
    return mean + math.sqrt(beta) * z
