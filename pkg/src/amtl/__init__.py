"""Desk-scale visual anagram generation as multi-task denoising.

A small trainable diffusion stack (conditional denoiser with one
cross-attention block, noise-aware and vanilla embedding scorers) plus the
three sampling-time techniques that make multi-view generation behave:
attention-overlap guidance, completion-score noise weighting, and noise
variance rectification.
"""

__version__ = "0.1.0"

from . import (aso, bench, checkpoint, combine, data, denoiser, figures,
               metrics, pipeline, schedule, scorer, views)

__all__ = ["aso", "bench", "checkpoint", "combine", "data", "denoiser",
           "figures", "metrics", "pipeline", "schedule", "scorer", "views",
           "__version__"]
