"""Model-free statistical verification of the combination math.

Monte Carlo checks that the variance-rectified combination restores unit
variance for prescribed correlations, that the correlation estimator
concentrates at the CLT rate, and that the weight schedule hits its closed
forms. Everything is seeded and runs in a few seconds with no trained
models.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .combine import (CorrelationEstimate, WeightVector, completion_weights,
                      rectification_factor, uniform_weights)

__all__ = ["BenchResult", "run_bench", "variance_restoration_checks",
           "correlation_estimator_checks", "weight_schedule_checks",
           "rectification_closed_form_checks", "RHO_GRID"]

RHO_GRID = (-0.5, 0.0, 0.5, 0.9, 1.0)


@dataclasses.dataclass(frozen=True)
class BenchResult:
    name: str
    value: float
    tolerance: float
    passed: bool

    def row(self) -> dict:
        return {"check": self.name, "value": self.value,
                "tolerance": self.tolerance, "passed": self.passed}


def _result(name: str, value: float, tolerance: float) -> BenchResult:
    return BenchResult(name=name, value=float(value), tolerance=float(tolerance),
                       passed=bool(abs(value) <= tolerance))


def correlated_normals(rho: float, n_views: int, size: int,
                       rng: np.random.Generator) -> np.ndarray:
    """(n_views, size) standard normals with pairwise correlation rho."""
    cov = np.full((n_views, n_views), rho)
    np.fill_diagonal(cov, 1.0)
    vals, vecs = np.linalg.eigh(cov)
    factor = vecs @ np.diag(np.sqrt(np.clip(vals, 0.0, None)))
    return factor @ rng.standard_normal((n_views, size))


def random_weights(n: int, rng: np.random.Generator) -> WeightVector:
    raw = rng.uniform(0.2, 1.0, size=n)
    return WeightVector(alpha=tuple(raw / raw.sum()))


def variance_restoration_checks(elements: int = 1_000_000,
                                seed: int = 2024) -> list:
    """Rectified combinations of correlated normals: mean ~ 0, variance ~ 1."""
    rng = np.random.default_rng(seed)
    out = []
    for n_views in (2, 3):
        for rho in RHO_GRID:
            eps = correlated_normals(rho, n_views, elements, rng)
            w = random_weights(n_views, rng)
            combined = sum(a * e for a, e in zip(w.alpha, eps))
            est = CorrelationEstimate(rho=np.full((n_views, n_views), rho)
                                      + np.eye(n_views) * (1.0 - rho))
            c = rectification_factor(w, est)
            rect = c * combined
            tag = f"rho={rho:+.1f},N={n_views}"
            out.append(_result(f"variance_restoration.mean[{tag}]",
                               rect.mean(), 0.01))
            out.append(_result(f"variance_restoration.var_minus_1[{tag}]",
                               rect.var() - 1.0, 0.02))
    return out


def correlation_estimator_checks(elements: int = 4096, trials: int = 1000,
                                 seed: int = 77) -> list:
    """|rho_hat - rho| <= 3/sqrt(n) on at least 95% of trials per rho."""
    rng = np.random.default_rng(seed)
    bound = 3.0 / math.sqrt(elements)
    out = []
    for rho in RHO_GRID:
        eps = correlated_normals(rho, 2, elements * trials, rng)
        a = eps[0].reshape(trials, elements)
        b = eps[1].reshape(trials, elements)
        rho_hat = (a * b).mean(axis=1)
        frac = float((np.abs(rho_hat - rho) <= bound).mean())
        # report the failure excess over the allowed 5%
        out.append(_result(f"correlation_estimator.miss_excess[rho={rho:+.1f}]",
                           max(0.0, 0.95 - frac), 0.0))
    return out


def weight_schedule_checks() -> list:
    """Closed forms of the completion-weight schedule."""
    out = []
    w0 = completion_weights([0.4, 0.2], t=0, T=10)
    out.append(_result("weights.exponent_-2_at_t0", w0.alpha[1] - 0.8, 1e-9))
    wT = completion_weights([0.4, 0.2], t=10, T=10)
    out.append(_result("weights.exponent_-1_at_tT", wT.alpha[1] - 2.0 / 3.0, 1e-9))
    rng = np.random.default_rng(5)
    worst = 0.0
    mono_ok = True
    for _ in range(200):
        scores = rng.uniform(0.06, 1.0, size=rng.integers(2, 6))
        t = int(rng.integers(0, 51))
        w = completion_weights(list(scores), t=t, T=50)
        worst = max(worst, abs(sum(w.alpha) - 1.0))
        order = np.argsort(scores)
        alphas = np.array(w.alpha)[order]
        mono_ok &= bool(np.all(np.diff(alphas) <= 1e-12))
    out.append(_result("weights.sum_error", worst, 1e-6))
    out.append(_result("weights.monotonicity_violations", 0.0 if mono_ok else 1.0, 0.0))
    return out


def rectification_closed_form_checks() -> list:
    out = []
    one = CorrelationEstimate(rho=np.ones((2, 2)))
    out.append(_result("rectify.c_at_rho1_uniform",
                       rectification_factor(uniform_weights(2), one) - 1.0, 1e-12))
    indep = CorrelationEstimate(rho=np.eye(2))
    out.append(_result("rectify.c_at_rho0_uniform",
                       rectification_factor(uniform_weights(2), indep) - math.sqrt(2.0),
                       1e-12))
    single = CorrelationEstimate(rho=np.ones((1, 1)))
    out.append(_result("rectify.c_single_task",
                       rectification_factor(uniform_weights(1), single) - 1.0, 0.0))
    return out


def run_bench(seed: int = 2024) -> list:
    """The full suite; deterministic for a fixed seed."""
    results = []
    results += variance_restoration_checks(seed=seed)
    results += correlation_estimator_checks(seed=seed + 1)
    results += weight_schedule_checks()
    results += rectification_closed_form_checks()
    return results
