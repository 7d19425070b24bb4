"""Full anagram generation runs: the per-step loop plus instrumentation.

Each reverse step, from t = T down to 1:

  1. every task's viewed copy of x_t goes through the denoiser with
     classifier-free guidance;
  2. with weighting enabled, the scorer rates each viewed x_t and the
     completion weights replace the uniform average;
  3. the per-view noises are pulled back to the canonical frame and combined;
  4. with rectification enabled, the combination is rescaled by the factor
     computed from the estimated correlations;
  5. the ancestral reverse step produces x_{t-1}';
  6. with anti-segregation guidance active, x_{t-1}' takes one look-ahead
     gradient step on the attention-overlap loss.

All stochasticity flows from the seed through one generator; the initial
x_T and the per-step z are the only draws. The trace records one row per
step; quantities belonging to disabled components are stored as None (null
in CSV), never fabricated. Pairwise noise cosines and correlation estimates
are pure instrumentation of the model predictions and are recorded for every
multi-view run regardless of toggles.
"""

from __future__ import annotations

import csv
import dataclasses
import io
from typing import Sequence

import numpy as np
import torch

from . import aso as aso_mod
from . import combine, metrics
from . import views as views_mod
from .schedule import DiffusionSchedule, reverse_step, subsample_schedule

__all__ = ["GenerationTask", "RunConfig", "StepRecord", "RunTrace",
           "generate", "run_ablation", "ALL_TOGGLES", "write_trace_csv",
           "trace_rows"]

# The 8 toggle combinations of the ablation grid, baseline first, full last.
ALL_TOGGLES = (
    (False, False, False),
    (True, False, False),
    (False, True, False),
    (False, False, True),
    (False, True, True),
    (True, False, True),
    (True, True, False),
    (True, True, True),
)


@dataclasses.dataclass(frozen=True)
class GenerationTask:
    """One (concept, view) pair: see this concept under that view."""

    concept: str
    view: views_mod.ViewTransform

    def to_dict(self) -> dict:
        return {"concept": self.concept, "view": self.view.value}

    @classmethod
    def from_dict(cls, d: dict) -> "GenerationTask":
        return cls(concept=d["concept"], view=views_mod.view_from_name(d["view"]))


@dataclasses.dataclass(frozen=True)
class RunConfig:
    tasks: tuple
    seed: int = 0
    steps: int = 30
    guidance_scale: float = 3.0
    aso: bool = True
    nvb: bool = True
    nvr: bool = True
    aso_config: aso_mod.AsoConfig = dataclasses.field(default_factory=aso_mod.AsoConfig)
    scorer_regime: str = "noise_aware"

    def __post_init__(self):
        if len(self.tasks) == 0:
            raise ValueError("at least one generation task is required")
        vs = [t.view for t in self.tasks]
        if len(set(vs)) != len(vs):
            raise ValueError("task views must be pairwise distinct")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")

    def to_dict(self) -> dict:
        return {
            "tasks": [t.to_dict() for t in self.tasks],
            "seed": self.seed,
            "steps": self.steps,
            "guidance_scale": self.guidance_scale,
            "aso": self.aso,
            "nvb": self.nvb,
            "nvr": self.nvr,
            "aso_config": dataclasses.asdict(self.aso_config),
            "scorer_regime": self.scorer_regime,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        d["tasks"] = tuple(GenerationTask.from_dict(t) for t in d["tasks"])
        d["aso_config"] = aso_mod.AsoConfig(**d.get("aso_config", {}))
        return cls(**d)


@dataclasses.dataclass
class StepRecord:
    step: int                 # coarse step k, counting down to 1
    t_model: int              # full-schedule timestep the model saw
    alpha_bar: float
    cs: tuple | None          # per-view completion scores (None if NVB off)
    cs_clamped: tuple | None  # per-view floor-clamp flags
    alpha: tuple              # weights actually used
    rho: tuple | None         # pairwise correlation estimates, i<j order
    noise_cos: tuple | None   # pairwise cosines of back-transformed noises
    c: float | None           # rectification factor (None if NVR off)
    c_clamped: bool | None
    aso_applied: bool
    aso_loss: float | None
    aso_overlaps: tuple | None
    aso_update_norm: float | None
    probe_cs: dict            # probe scorer name -> per-view scores


@dataclasses.dataclass
class RunTrace:
    config: RunConfig
    records: list
    final_image: torch.Tensor | None = None


def _pair_order(n: int):
    return [(i, j) for i in range(n) for j in range(i + 1, n)]


def _pairwise_cosines(back: Sequence[torch.Tensor]) -> tuple:
    out = []
    flat = [b.double().flatten() for b in back]
    for i, j in _pair_order(len(flat)):
        denom = float(flat[i].norm() * flat[j].norm())
        out.append(float(torch.dot(flat[i], flat[j])) / denom if denom > 0 else 0.0)
    return tuple(out)


def generate(cfg: RunConfig, denoiser, scorer, schedule: DiffusionSchedule,
             probe_scorers: dict | None = None):
    """Run one anagram generation; returns (final image, RunTrace).

    ``scorer`` is the pipeline scorer and may be None when cfg.nvb is off.
    ``probe_scorers`` maps names to extra scorers whose completion scores of
    the viewed x_t are recorded each step, instrumentation only; they never
    affect the trajectory. Deterministic given cfg.seed.
    """
    tasks = cfg.tasks
    n = len(tasks)
    if cfg.nvb and scorer is None:
        raise ValueError("noise vector balancing requires a pipeline scorer")
    for t in tasks:
        denoiser.vocab.index(t.concept)  # fail fast on unknown concepts
    dc = denoiser.config
    shape = (dc.channels, dc.image_size, dc.image_size)
    inf = subsample_schedule(schedule, cfg.steps)
    gen = torch.Generator().manual_seed(cfg.seed)

    x = torch.randn(shape, generator=gen)
    records = []
    for k in range(cfg.steps, 0, -1):
        t_model = inf.model_timestep(k)
        with torch.no_grad():
            eps_list, _grids = [], []
            for task in tasks:
                xv = views_mod.apply(task.view, x)
                e, g = denoiser.cfg_predict(xv, t_model, task.concept,
                                            cfg.guidance_scale)
                eps_list.append(e)
                _grids.append(g)

            cs = cs_clamped = None
            if cfg.nvb:
                raw = []
                for i, task in enumerate(tasks):
                    xv = views_mod.apply(task.view, x)
                    s = scorer.completion_score(task.concept, xv)
                    raw.append(dataclasses.replace(s, view_index=i, timestep=t_model))
                cs = tuple(s.value for s in raw)
                cs_clamped = tuple(v < combine.CS_FLOOR for v in cs)
                alpha = combine.completion_weights(raw, t_model, schedule.T)
            else:
                alpha = combine.uniform_weights(n)

            probe_cs = {}
            if probe_scorers:
                for name, ps in probe_scorers.items():
                    probe_cs[name] = tuple(
                        ps.completion_score(task.concept,
                                            views_mod.apply(task.view, x)).value
                        for task in tasks)

            eps_comb = combine.combine_noise(eps_list, [t.view for t in tasks], alpha)

            rho_est = None
            rho_pairs = cos_pairs = None
            if n >= 2:
                rho_est = combine.estimate_correlation(
                    eps_list, [t.view for t in tasks])
                rho_pairs = tuple(rho_est.pair(i, j) for i, j in _pair_order(n))
                back = [views_mod.apply(views_mod.invert(t.view), e)
                        for t, e in zip(tasks, eps_list)]
                cos_pairs = _pairwise_cosines(back)

            c = c_clamped = None
            if cfg.nvr:
                est = rho_est if rho_est is not None else \
                    combine.CorrelationEstimate(rho=np.ones((1, 1)))
                rad = combine.rectification_radicand(alpha, est)
                c = combine.rectification_factor(alpha, est)
                c_clamped = rad < combine.RADICAND_FLOOR
                eps_comb = combine.rectify(eps_comb, c)

            z = torch.randn(shape, generator=gen) if k > 1 else torch.zeros(shape)
            x_prev = reverse_step(x, eps_comb, k, z, inf.schedule)

        aso_applied = False
        aso_info = None
        if cfg.aso and n >= 2 and k > 1:
            t_probe = inf.model_timestep(k - 1)
            x_new, aso_info = aso_mod.aso_step(
                x_prev, tasks, denoiser, t_probe, cfg.aso_config,
                total_timesteps=schedule.T)
            aso_applied = aso_info is not None
            x = x_new
        else:
            x = x_prev

        records.append(StepRecord(
            step=k, t_model=t_model, alpha_bar=inf.schedule.alpha_bar_at(k),
            cs=cs, cs_clamped=cs_clamped, alpha=alpha.alpha,
            rho=rho_pairs, noise_cos=cos_pairs, c=c, c_clamped=c_clamped,
            aso_applied=aso_applied,
            aso_loss=aso_info.loss if aso_info else None,
            aso_overlaps=aso_info.overlaps if aso_info else None,
            aso_update_norm=aso_info.update_norm if aso_info else None,
            probe_cs=probe_cs,
        ))

    trace = RunTrace(config=cfg, records=records, final_image=x)
    return x, trace


# -- trace serialization ------------------------------------------------------


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def trace_rows(trace: RunTrace):
    """Flatten a trace into (header, rows of strings) for CSV output."""
    n = len(trace.config.tasks)
    pairs = _pair_order(n)
    probe_names = sorted({name for r in trace.records for name in r.probe_cs})
    header = ["step", "t_model", "alpha_bar"]
    header += [f"cs_{i}" for i in range(n)]
    header += [f"cs_clamped_{i}" for i in range(n)]
    header += [f"alpha_{i}" for i in range(n)]
    header += [f"rho_{i}_{j}" for i, j in pairs]
    header += [f"noise_cos_{i}_{j}" for i, j in pairs]
    header += ["c", "c_clamped", "aso_applied", "aso_loss"]
    header += [f"overlap_{i}_{j}" for i, j in pairs]
    header += ["aso_update_norm"]
    for name in probe_names:
        header += [f"probe_{name}_cs_{i}" for i in range(n)]

    rows = []
    for r in trace.records:
        row = [_fmt(r.step), _fmt(r.t_model), _fmt(r.alpha_bar)]
        row += [_fmt(v) for v in (r.cs or (None,) * n)]
        row += [_fmt(v) for v in (r.cs_clamped or (None,) * n)]
        row += [_fmt(v) for v in r.alpha]
        row += [_fmt(v) for v in (r.rho or (None,) * len(pairs))]
        row += [_fmt(v) for v in (r.noise_cos or (None,) * len(pairs))]
        row += [_fmt(r.c), _fmt(r.c_clamped), _fmt(r.aso_applied), _fmt(r.aso_loss)]
        row += [_fmt(v) for v in (r.aso_overlaps or (None,) * len(pairs))]
        row += [_fmt(r.aso_update_norm)]
        for name in probe_names:
            row += [_fmt(v) for v in r.probe_cs.get(name, (None,) * n)]
        rows.append(row)
    return header, rows


def write_trace_csv(trace: RunTrace, path) -> None:
    header, rows = trace_rows(trace)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(buf.getvalue())


# -- ablation harness ---------------------------------------------------------


def run_ablation(task_sets, seeds, denoiser, scorer, eval_scorer,
                 schedule: DiffusionSchedule, base: RunConfig | None = None,
                 toggles=ALL_TOGGLES):
    """Generate and evaluate every toggle combination over task sets x seeds.

    Returns (summary_rows, run_rows): one summary row per toggle combination
    with seed-averaged metrics, plus the individual per-run rows. All runs of
    one combination share the same seeds, so combinations differ only by the
    toggles.
    """
    summary, run_rows = [], []
    for aso_on, nvb_on, nvr_on in toggles:
        vals = {"a_min": [], "c": [], "a_avg": []}
        for tasks in task_sets:
            for seed in seeds:
                if base is not None:
                    cfg = dataclasses.replace(
                        base, tasks=tuple(tasks), seed=seed,
                        aso=aso_on, nvb=nvb_on, nvr=nvr_on)
                else:
                    cfg = RunConfig(tasks=tuple(tasks), seed=seed,
                                    aso=aso_on, nvb=nvb_on, nvr=nvr_on)
                img, _ = generate(cfg, denoiser, scorer, schedule)
                S = metrics.score_matrix(eval_scorer, img, cfg.tasks)
                row = {
                    "aso": aso_on, "nvb": nvb_on, "nvr": nvr_on,
                    "tasks": "+".join(f"{t.concept}@{t.view.value}" for t in cfg.tasks),
                    "seed": seed,
                    "a_min": metrics.worst_alignment(S),
                    "c": metrics.concealment(S),
                    "a_avg": metrics.average_alignment(S),
                }
                run_rows.append(row)
                for key in vals:
                    vals[key].append(row[key])
        summary.append({
            "aso": aso_on, "nvb": nvb_on, "nvr": nvr_on,
            "n_runs": len(vals["a_min"]),
            "a_min": float(np.mean(vals["a_min"])),
            "c": float(np.mean(vals["c"])),
            "a_avg": float(np.mean(vals["a_avg"])),
        })
    return summary, run_rows
