"""Command-line surface: data generation, training, generation, evaluation,
sweeps, ablations, and the statistical bench.

Config resolution order is defaults < config file (TOML or JSON) < explicit
flags, and every run writes its fully resolved config next to its outputs so
any artifact can be reproduced from that file alone. Paths default into the
directory named by the AMTL_DATA_DIR environment variable (./amtl_data
otherwise). CSVs are the source of truth for every report; charts rendered
next to them are a convenience (disable with --no-charts).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import os
import sys
from pathlib import Path

import numpy as np
import torch

from . import bench as bench_mod
from . import data as data_mod
from . import figures, metrics, pipeline
from .aso import AsoConfig
from .checkpoint import CheckpointError
from .denoiser import (ConceptVocab, DenoiserConfig, TrainConfig,
                       load_denoiser, save_denoiser, train_denoiser)
from .schedule import (DEFAULT_BETA_END, DEFAULT_BETA_START, DEFAULT_STEPS,
                       DEFAULT_T, make_schedule)
from .scorer import (REGIMES, ScorerConfig, ScorerTrainConfig, load_scorer,
                     save_scorer, train_scorer)
from .views import view_from_name

__all__ = ["main"]


def data_root() -> Path:
    return Path(os.environ.get("AMTL_DATA_DIR", "amtl_data"))


def _load_config_file(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"config file not found: {p}")
    if p.suffix.lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        return tomllib.loads(p.read_text(encoding="utf-8"))
    return json.loads(p.read_text(encoding="utf-8"))


def _overlay(defaults: dict, ns: argparse.Namespace) -> dict:
    """defaults < config file < explicit flags; rejects unknown file keys."""
    file_cfg = _load_config_file(ns.config) if getattr(ns, "config", None) else {}
    unknown = set(file_cfg) - set(defaults)
    if unknown:
        raise ValueError(f"unknown config file keys: {sorted(unknown)}")
    out = dict(defaults)
    out.update(file_cfg)
    for key in defaults:
        v = getattr(ns, key, None)
        if v is not None:
            out[key] = v
    return out


def _write_json(path, obj) -> None:
    Path(path).write_text(
        json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _fmt_cell(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_csv(path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt_cell(r[k]) for k in header])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def _as_list(v, cast=str) -> list:
    if isinstance(v, str):
        parts = [p for p in v.split(",") if p != ""]
    else:
        parts = list(v)
    return [cast(p) for p in parts]


def _parse_seeds(resolved) -> list:
    if resolved.get("seeds") is not None:
        return _as_list(resolved["seeds"], int)
    return list(range(int(resolved["num_seeds"])))


def _schedule_from(resolved):
    return make_schedule(int(resolved["timesteps"]),
                         float(resolved["beta_start"]),
                         float(resolved["beta_end"]))


def _load_pipeline_scorer(path):
    sc = load_scorer(path)
    if sc.config.role == "evaluation":
        raise ValueError(
            f"{path} is the held-out evaluation scorer; the pipeline must not read it")
    return sc


def _load_eval_scorer(path):
    sc = load_scorer(path)
    if sc.config.role != "evaluation":
        raise ValueError(
            f"{path} has role {sc.config.role!r}; evaluation requires a scorer "
            "trained with --role evaluation")
    return sc


def _tasks_from(concepts, view_names):
    if len(concepts) != len(view_names):
        raise ValueError(
            f"{len(concepts)} concepts but {len(view_names)} views; "
            "the lists must pair up one to one")
    return tuple(pipeline.GenerationTask(c, view_from_name(v))
                 for c, v in zip(concepts, view_names))


def _save_run_outputs(out: Path, img, trace, resolved, charts: bool) -> None:
    out.mkdir(parents=True, exist_ok=True)
    np.save(out / "final.npy", img.numpy().astype(np.float32))
    (out / "final.png").write_bytes(data_mod.image_to_png_bytes(img))
    pipeline.write_trace_csv(trace, out / "trace.csv")
    _write_json(out / "config.resolved.json", resolved)
    if charts:
        figures.trace_figure(out / "trace.csv", out / "trace.png")


SCHEDULE_DEFAULTS = {
    "timesteps": DEFAULT_T,
    "beta_start": DEFAULT_BETA_START,
    "beta_end": DEFAULT_BETA_END,
}


# -- gen-data ------------------------------------------------------------------

GEN_DATA_DEFAULTS = {
    "n_per_class": 64,
    "seed": 0,
    "size": 32,
    "out": None,
}


def cmd_gen_data(ns) -> int:
    r = _overlay(GEN_DATA_DEFAULTS, ns)
    out = Path(r["out"]) if r["out"] else \
        data_root() / "datasets" / f"shapes_n{r['n_per_class']}_s{r['seed']}"
    ds = data_mod.make_dataset(int(r["n_per_class"]), int(r["seed"]), int(r["size"]))
    data_mod.save_dataset(ds, out)
    r["out"] = str(out)
    _write_json(out / "config.resolved.json", {"command": "gen-data", **r})
    print(f"wrote {len(ds)} images to {out}")
    return 0


# -- train ---------------------------------------------------------------------

TRAIN_DEFAULTS = {
    "dataset": None,
    "out": None,
    "seed": 0,
    "lr": None,
    "epochs": 250,
    "batch_size": 64,
    "cond_dropout": 0.1,
    "steps": 1500,
    "regime": "noise_aware",
    "role": "pipeline",
    "emb_dim": 64,
    "base_channels": None,
    "charts": True,
    **SCHEDULE_DEFAULTS,
}


def cmd_train(ns) -> int:
    r = _overlay(TRAIN_DEFAULTS, ns)
    if not r["dataset"]:
        raise ValueError("--dataset is required (a gen-data dump directory)")
    ds_dir = Path(r["dataset"])
    if not (ds_dir / "manifest.json").exists():
        raise FileNotFoundError(f"no dataset manifest under {ds_dir}")
    ds = data_mod.load_dataset(ds_dir)
    vocab = ConceptVocab.create(ds.class_names, dim=32, seed=7)
    sched = _schedule_from(r)
    out = Path(r["out"]) if r["out"] else data_root() / "models" / ns.model
    out.mkdir(parents=True, exist_ok=True)

    if ns.model == "denoiser":
        lr = 2e-3 if r["lr"] is None else float(r["lr"])
        arch = DenoiserConfig(
            image_size=int(ds.images.shape[-1]),
            channels=int(ds.images.shape[1]),
            base_channels=int(r["base_channels"] or 24),
            attn_dim=32, n_heads=2, time_dim=32, max_timestep=sched.T)
        cfg = TrainConfig(epochs=int(r["epochs"]), batch_size=int(r["batch_size"]),
                          lr=lr, cond_dropout=float(r["cond_dropout"]),
                          seed=int(r["seed"]))
        model, log = train_denoiser(ds, vocab, sched, cfg, arch)
        save_denoiser(model, out / "denoiser.ckpt")
    else:
        lr = 2e-3 if r["lr"] is None else float(r["lr"])
        arch = ScorerConfig(
            image_size=int(ds.images.shape[-1]),
            channels=int(ds.images.shape[1]),
            base_channels=int(r["base_channels"] or 16),
            emb_dim=int(r["emb_dim"]), regime=r["regime"], role=r["role"])
        cfg = ScorerTrainConfig(steps=int(r["steps"]), lr=lr, seed=int(r["seed"]))
        model, log = train_scorer(ds, vocab, sched, r["regime"], cfg, arch)
        save_scorer(model, out / "scorer.ckpt")

    _write_csv(out / "loss.csv", ["step", "loss"],
               [{"step": s, "loss": v} for s, v in log])
    r.update({"command": f"train {ns.model}", "out": str(out), "lr": lr})
    _write_json(out / "config.resolved.json", r)
    if r["charts"]:
        figures.loss_figure(out / "loss.csv", out / "loss.png")
    print(f"trained {ns.model}; artifacts in {out}")
    return 0


# -- generate ------------------------------------------------------------------

GENERATE_DEFAULTS = {
    "denoiser": None,
    "scorer": None,
    "concepts": None,
    "views": "identity,flip_v",
    "seed": 0,
    "steps": DEFAULT_STEPS,
    "guidance": 3.0,
    "aso": True,
    "nvb": True,
    "nvr": True,
    "phi": 0.45,
    "step_size": 0.1,
    "active_fraction": 0.5,
    "out": None,
    "charts": True,
    **SCHEDULE_DEFAULTS,
}


def _run_config_from(resolved, tasks, seed, toggles=None):
    aso_on, nvb_on, nvr_on = toggles if toggles is not None else (
        bool(resolved["aso"]), bool(resolved["nvb"]), bool(resolved["nvr"]))
    return pipeline.RunConfig(
        tasks=tasks, seed=int(seed), steps=int(resolved["steps"]),
        guidance_scale=float(resolved["guidance"]),
        aso=aso_on, nvb=nvb_on, nvr=nvr_on,
        aso_config=AsoConfig(phi=float(resolved["phi"]),
                             step_size=float(resolved["step_size"]),
                             active_fraction=float(resolved["active_fraction"])),
    )


def cmd_generate(ns) -> int:
    r = _overlay(GENERATE_DEFAULTS, ns)
    if not r["denoiser"]:
        raise ValueError("--denoiser checkpoint is required")
    if not Path(r["denoiser"]).exists():
        raise FileNotFoundError(f"denoiser checkpoint not found: {r['denoiser']}")
    if not r["concepts"]:
        raise ValueError("--concepts is required (comma-separated list)")
    concepts = _as_list(r["concepts"])
    view_names = _as_list(r["views"])
    tasks = _tasks_from(concepts, view_names)

    dn = load_denoiser(r["denoiser"])
    sc = None
    if bool(r["nvb"]):
        if not r["scorer"]:
            raise ValueError("--scorer checkpoint is required when balancing is on "
                             "(pass --no-nvb to disable)")
        if not Path(r["scorer"]).exists():
            raise FileNotFoundError(f"scorer checkpoint not found: {r['scorer']}")
        sc = _load_pipeline_scorer(r["scorer"])

    sched = _schedule_from(r)
    cfg = _run_config_from(r, tasks, r["seed"])
    if sc is not None:
        cfg = dataclasses.replace(cfg, scorer_regime=sc.config.regime)
    img, trace = pipeline.generate(cfg, dn, sc, sched)

    slug = "_".join(f"{t.concept}@{t.view.value}" for t in tasks) + f"_s{r['seed']}"
    out = Path(r["out"]) if r["out"] else data_root() / "runs" / slug
    r.update({"command": "generate", "out": str(out),
              "run_config": cfg.to_dict()})
    _save_run_outputs(out, img, trace, r, bool(r["charts"]))
    print(f"run artifacts in {out}")
    return 0


# -- evaluate ------------------------------------------------------------------

EVALUATE_DEFAULTS = {
    "eval_scorer": None,
    "runs": None,
    "out": None,
    "tau": metrics.DEFAULT_TAU,
    "charts": True,
}


def _evaluate_run_dir(run_dir: Path, eval_scorer, tau):
    cfg_path = run_dir / "config.resolved.json"
    img_path = run_dir / "final.npy"
    if not cfg_path.exists() or not img_path.exists():
        raise FileNotFoundError(
            f"{run_dir} is not a run directory (needs final.npy and "
            "config.resolved.json)")
    resolved = json.loads(cfg_path.read_text(encoding="utf-8"))
    rc = pipeline.RunConfig.from_dict(resolved["run_config"])
    img = torch.from_numpy(np.load(img_path))
    S = metrics.score_matrix(eval_scorer, img, rc.tasks)
    return {
        "run_id": run_dir.name,
        "seed": rc.seed,
        "aso": rc.aso, "nvb": rc.nvb, "nvr": rc.nvr,
        "a_min": metrics.worst_alignment(S),
        "c": metrics.concealment(S, tau=tau),
        "a_avg": metrics.average_alignment(S),
    }


def cmd_evaluate(ns) -> int:
    r = _overlay(EVALUATE_DEFAULTS, ns)
    if not r["eval_scorer"]:
        raise ValueError("--eval-scorer checkpoint is required")
    if not Path(r["eval_scorer"]).exists():
        raise FileNotFoundError(f"evaluation scorer not found: {r['eval_scorer']}")
    if not r["runs"]:
        raise ValueError("pass one or more run directories via --runs")
    eval_scorer = _load_eval_scorer(r["eval_scorer"])
    run_dirs = [Path(p) for p in _as_list(r["runs"])]
    rows = [_evaluate_run_dir(d, eval_scorer, float(r["tau"])) for d in run_dirs]
    agg = {
        "run_id": "aggregate", "seed": "",
        "aso": "", "nvb": "", "nvr": "",
        "a_min": float(np.mean([x["a_min"] for x in rows])),
        "c": float(np.mean([x["c"] for x in rows])),
        "a_avg": float(np.mean([x["a_avg"] for x in rows])),
    }
    out = Path(r["out"]) if r["out"] else data_root() / "reports" / "report.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    header = ["run_id", "seed", "aso", "nvb", "nvr", "a_min", "c", "a_avg"]
    _write_csv(out, header, rows + [agg])
    r.update({"command": "evaluate", "out": str(out),
              "runs": [str(d) for d in run_dirs]})
    _write_json(out.with_suffix(".config.json"), r)
    if r["charts"]:
        figures.report_figure(out, out.with_suffix(".png"))
    print(f"evaluated {len(rows)} runs; report at {out}")
    return 0


# -- ablate ---------------------------------------------------------------------

ABLATE_DEFAULTS = {
    "denoiser": None,
    "scorer": None,
    "eval_scorer": None,
    "pairs": "circle:star,square:triangle,ring:cross,crescent:diamond,bar:spiral",
    "views": "identity,flip_v",
    "seeds": None,
    "num_seeds": 4,
    "steps": DEFAULT_STEPS,
    "guidance": 3.0,
    "phi": 0.45,
    "step_size": 0.1,
    "active_fraction": 0.5,
    "out": None,
    "charts": True,
    **SCHEDULE_DEFAULTS,
}


def _task_sets_from(r):
    view_names = _as_list(r["views"])
    sets = []
    for pair in _as_list(r["pairs"]):
        concepts = pair.split(":")
        sets.append(_tasks_from(concepts, view_names))
    return sets


def cmd_ablate(ns) -> int:
    r = _overlay(ABLATE_DEFAULTS, ns)
    for key in ("denoiser", "scorer", "eval_scorer"):
        if not r[key]:
            raise ValueError(f"--{key.replace('_', '-')} checkpoint is required")
    dn = load_denoiser(r["denoiser"])
    sc = _load_pipeline_scorer(r["scorer"])
    ev = _load_eval_scorer(r["eval_scorer"])
    sched = _schedule_from(r)
    task_sets = _task_sets_from(r)
    seeds = _parse_seeds(r)
    base = _run_config_from(r, task_sets[0], 0, toggles=(True, True, True))
    summary, runs = pipeline.run_ablation(task_sets, seeds, dn, sc, ev, sched,
                                          base=base)
    out = Path(r["out"]) if r["out"] else data_root() / "reports" / "ablation"
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "ablation.csv",
               ["aso", "nvb", "nvr", "n_runs", "a_min", "c", "a_avg"], summary)
    _write_csv(out / "ablation_runs.csv",
               ["aso", "nvb", "nvr", "tasks", "seed", "a_min", "c", "a_avg"], runs)
    r.update({"command": "ablate", "out": str(out), "seeds": seeds})
    _write_json(out / "config.resolved.json", r)
    if r["charts"]:
        figures.ablation_figure(out / "ablation.csv", out / "ablation.png")
    best = max(summary, key=lambda row: row["a_avg"])
    tag = "+".join(n for n in ("aso", "nvb", "nvr") if best[n]) or "baseline"
    print(f"ablation grid written to {out}; best a_avg: {tag} ({best['a_avg']:.4f})")
    return 0


# -- sweep-phi --------------------------------------------------------------------

SWEEP_DEFAULTS = {
    "denoiser": None,
    "eval_scorer": None,
    "phi_grid": "0.0,0.1,0.2,0.3,0.4,0.45,0.5",
    "pairs": "circle:star,square:triangle",
    "views": "identity,flip_v",
    "seeds": None,
    "num_seeds": 3,
    "steps": DEFAULT_STEPS,
    "guidance": 3.0,
    "step_size": 0.1,
    "active_fraction": 0.5,
    "out": None,
    "charts": True,
    **SCHEDULE_DEFAULTS,
}


def cmd_sweep_phi(ns) -> int:
    r = _overlay(SWEEP_DEFAULTS, ns)
    for key in ("denoiser", "eval_scorer"):
        if not r[key]:
            raise ValueError(f"--{key.replace('_', '-')} checkpoint is required")
    phis = _as_list(r["phi_grid"], float)
    if not phis:
        raise ValueError("--phi-grid must name at least one value")
    bad = [p for p in phis if not 0.0 <= p <= 0.5]
    if bad:
        raise ValueError(f"target overlap ratios outside [0, 0.5]: {bad}")
    dn = load_denoiser(r["denoiser"])
    ev = _load_eval_scorer(r["eval_scorer"])
    sched = _schedule_from(r)
    task_sets = _task_sets_from(r)
    seeds = _parse_seeds(r)

    rows = []
    for phi in phis:
        vals = {"a_min": [], "c": [], "a_avg": []}
        for tasks in task_sets:
            for seed in seeds:
                cfg = pipeline.RunConfig(
                    tasks=tasks, seed=seed, steps=int(r["steps"]),
                    guidance_scale=float(r["guidance"]),
                    aso=True, nvb=False, nvr=False,
                    aso_config=AsoConfig(
                        phi=phi, step_size=float(r["step_size"]),
                        active_fraction=float(r["active_fraction"])))
                img, _ = pipeline.generate(cfg, dn, None, sched)
                S = metrics.score_matrix(ev, img, tasks)
                vals["a_min"].append(metrics.worst_alignment(S))
                vals["c"].append(metrics.concealment(S))
                vals["a_avg"].append(metrics.average_alignment(S))
        rows.append({"phi": phi,
                     "n_runs": len(vals["a_min"]),
                     "a_min": float(np.mean(vals["a_min"])),
                     "c": float(np.mean(vals["c"])),
                     "a_avg": float(np.mean(vals["a_avg"]))})
    out = Path(r["out"]) if r["out"] else data_root() / "reports" / "phi_sweep"
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "sweep.csv", ["phi", "n_runs", "a_min", "c", "a_avg"], rows)
    r.update({"command": "sweep-phi", "out": str(out), "seeds": seeds,
              "phi_grid": phis})
    _write_json(out / "config.resolved.json", r)
    if r["charts"]:
        figures.sweep_figure(out / "sweep.csv", out / "sweep.png")
    print(f"phi sweep written to {out}")
    return 0


# -- bench ---------------------------------------------------------------------

BENCH_DEFAULTS = {
    "seed": 2024,
    "out": None,
    "charts": True,
}


def cmd_bench(ns) -> int:
    r = _overlay(BENCH_DEFAULTS, ns)
    results = bench_mod.run_bench(seed=int(r["seed"]))
    width = max(len(x.name) for x in results)
    for x in results:
        status = "PASS" if x.passed else "FAIL"
        print(f"{status}  {x.name:<{width}}  value {x.value:+.3e}  "
              f"tolerance {x.tolerance:.3e}")
    out = Path(r["out"]) if r["out"] else data_root() / "reports" / "bench"
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "bench.csv", ["check", "value", "tolerance", "passed"],
               [x.row() for x in results])
    r.update({"command": "bench", "out": str(out)})
    _write_json(out / "config.resolved.json", r)
    if r["charts"]:
        figures.bench_figure(out / "bench.csv", out / "bench.png")
    failed = [x for x in results if not x.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 1 if failed else 0


# -- parser ----------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML or JSON config file overlay")
    p.add_argument("--out", default=None, help="output directory or file")
    p.add_argument("--charts", action=argparse.BooleanOptionalAction,
                   default=None, help="render charts next to CSV outputs")


def _add_schedule(p: argparse.ArgumentParser) -> None:
    p.add_argument("--timesteps", type=int, default=None)
    p.add_argument("--beta-start", type=float, default=None)
    p.add_argument("--beta-end", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="amtl",
        description="Visual anagram generation with multi-task-balanced "
                    "diffusion sampling.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="render the synthetic shape dataset")
    g.add_argument("--n-per-class", type=int, default=None)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--size", type=int, default=None)
    _add_common(g)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train the denoiser or a scorer")
    t.add_argument("model", choices=["denoiser", "scorer"])
    t.add_argument("--dataset", default=None, help="gen-data dump directory")
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--lr", type=float, default=None)
    t.add_argument("--epochs", type=int, default=None, help="denoiser epochs")
    t.add_argument("--batch-size", type=int, default=None)
    t.add_argument("--cond-dropout", type=float, default=None)
    t.add_argument("--steps", type=int, default=None, help="scorer steps")
    t.add_argument("--regime", choices=list(REGIMES), default=None)
    t.add_argument("--role", choices=["pipeline", "evaluation"], default=None)
    t.add_argument("--emb-dim", type=int, default=None)
    t.add_argument("--base-channels", type=int, default=None)
    _add_schedule(t)
    _add_common(t)
    t.set_defaults(func=cmd_train)

    gen = sub.add_parser("generate", help="run one anagram generation")
    gen.add_argument("--denoiser", default=None)
    gen.add_argument("--scorer", default=None, help="pipeline scorer checkpoint")
    gen.add_argument("--concepts", default=None, help="comma-separated concepts")
    gen.add_argument("--views", default=None, help="comma-separated views")
    gen.add_argument("--seed", type=int, default=None)
    gen.add_argument("--steps", type=int, default=None)
    gen.add_argument("--guidance", type=float, default=None)
    gen.add_argument("--aso", action=argparse.BooleanOptionalAction, default=None)
    gen.add_argument("--nvb", action=argparse.BooleanOptionalAction, default=None)
    gen.add_argument("--nvr", action=argparse.BooleanOptionalAction, default=None)
    gen.add_argument("--phi", type=float, default=None)
    gen.add_argument("--step-size", type=float, default=None)
    gen.add_argument("--active-fraction", type=float, default=None)
    _add_schedule(gen)
    _add_common(gen)
    gen.set_defaults(func=cmd_generate)

    ev = sub.add_parser("evaluate", help="score run directories with the "
                                         "held-out evaluation scorer")
    ev.add_argument("--eval-scorer", default=None)
    ev.add_argument("--runs", default=None,
                    help="comma-separated run directories")
    ev.add_argument("--tau", type=float, default=None)
    _add_common(ev)
    ev.set_defaults(func=cmd_evaluate)

    ab = sub.add_parser("ablate", help="run the 8-way toggle grid")
    ab.add_argument("--denoiser", default=None)
    ab.add_argument("--scorer", default=None)
    ab.add_argument("--eval-scorer", default=None)
    ab.add_argument("--pairs", default=None,
                    help="comma-separated concept pairs like circle:star")
    ab.add_argument("--views", default=None)
    ab.add_argument("--seeds", default=None, help="comma-separated seed list")
    ab.add_argument("--num-seeds", type=int, default=None)
    ab.add_argument("--steps", type=int, default=None)
    ab.add_argument("--guidance", type=float, default=None)
    ab.add_argument("--phi", type=float, default=None)
    ab.add_argument("--step-size", type=float, default=None)
    ab.add_argument("--active-fraction", type=float, default=None)
    _add_schedule(ab)
    _add_common(ab)
    ab.set_defaults(func=cmd_ablate)

    sw = sub.add_parser("sweep-phi", help="metric-vs-phi sweep with only the "
                                          "overlap guidance enabled")
    sw.add_argument("--denoiser", default=None)
    sw.add_argument("--eval-scorer", default=None)
    sw.add_argument("--phi-grid", default=None)
    sw.add_argument("--pairs", default=None)
    sw.add_argument("--views", default=None)
    sw.add_argument("--seeds", default=None)
    sw.add_argument("--num-seeds", type=int, default=None)
    sw.add_argument("--steps", type=int, default=None)
    sw.add_argument("--guidance", type=float, default=None)
    sw.add_argument("--step-size", type=float, default=None)
    sw.add_argument("--active-fraction", type=float, default=None)
    _add_schedule(sw)
    _add_common(sw)
    sw.set_defaults(func=cmd_sweep_phi)

    b = sub.add_parser("bench", help="model-free statistical verification suite")
    b.add_argument("--seed", type=int, default=None)
    _add_common(b)
    b.set_defaults(func=cmd_bench)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        return ns.func(ns)
    except (ValueError, KeyError, FileNotFoundError, CheckpointError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
