"""Anagram quality metrics over a prompt-by-view score matrix.

S[i, j] is the cosine between concept i's embedding and the embedding of the
image under view j, computed with the held-out evaluation scorer (never the
scorer the pipeline optimizes against). The diagonal carries each task's own
alignment; off-diagonal entries measure how visible a concept is in the
wrong view.
"""

from __future__ import annotations

import dataclasses

import numpy as np
import torch

from . import views as views_mod

__all__ = ["ScoreMatrix", "score_matrix", "worst_alignment", "concealment",
           "average_alignment", "DEFAULT_TAU"]

# Softmax temperature; 0.01 corresponds to a logit scale of 100.
DEFAULT_TAU = 0.01


@dataclasses.dataclass(frozen=True)
class ScoreMatrix:
    """N x N cosine matrix; rows are prompts, columns are views."""

    S: np.ndarray
    tasks: tuple = ()


def _mat(S) -> np.ndarray:
    m = np.asarray(S.S if isinstance(S, ScoreMatrix) else S, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"score matrix must be square, got shape {m.shape}")
    return m


def score_matrix(eval_scorer, image: torch.Tensor, tasks) -> ScoreMatrix:
    """Cosines of every (prompt i, view j) pair on one generated image."""
    n = len(tasks)
    if n == 0:
        raise ValueError("need at least one task")
    S = np.zeros((n, n), dtype=np.float64)
    with torch.no_grad():
        view_embs = [eval_scorer.embed_image(views_mod.apply(t.view, image))
                     for t in tasks]
        for i, task in enumerate(tasks):
            ce = eval_scorer.embed_concept(task.concept)
            for j in range(n):
                S[i, j] = float(torch.dot(ce, view_embs[j]))
    return ScoreMatrix(S=S, tasks=tuple(tasks))


def worst_alignment(S) -> float:
    """Minimum diagonal entry: the worst prompt-view alignment."""
    return float(np.min(np.diag(_mat(S))))


def average_alignment(S) -> float:
    """Mean diagonal entry: overall prompt-view alignment."""
    return float(np.mean(np.diag(_mat(S))))


def _softmax(m: np.ndarray, axis: int) -> np.ndarray:
    z = m - m.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def concealment(S, tau: float = DEFAULT_TAU) -> float:
    """Mean of the row-softmax and column-softmax traces of S / tau, over N.

    In (0, 1]; equals 1/N for a constant matrix and approaches 1 when every
    diagonal entry dominates its row and column.
    """
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    m = _mat(S) / tau
    n = m.shape[0]
    tr_rows = float(np.trace(_softmax(m, axis=1)))
    tr_cols = float(np.trace(_softmax(m, axis=0)))
    return (tr_rows + tr_cols) / (2.0 * n)
