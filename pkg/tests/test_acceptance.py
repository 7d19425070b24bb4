"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with `pytest tests/test_acceptance.py -v -s`. The trained-model criteria
(8, 9, 10) train once per session (cached under tests/.model_cache) and are
directional: they check orderings, not absolute magnitudes.
"""

import itertools
import math
import time

import numpy as np
import pytest
import torch

import helpers_fd
import helpers_sampler
from amtl import bench, combine, pipeline, views
from amtl.aso import anti_seg_loss
from amtl.cli import main as cli_main
from amtl.denoiser import save_denoiser
from amtl.scorer import save_scorer

V = views.ViewTransform
RHO_GRID = (-0.5, 0.0, 0.5, 0.9, 1.0)

BENCH_PAIRS = [("circle", "star"), ("square", "triangle"), ("ring", "cross"),
               ("crescent", "diamond"), ("bar", "spiral")]


def report(n, ok, detail):
    line = f"ACCEPTANCE {n:>2} {'PASS' if ok else 'FAIL'}: {detail}"
    print(line)
    assert ok, line


def task_sets():
    return [(pipeline.GenerationTask(a, V.IDENTITY),
             pipeline.GenerationTask(b, V.FLIP_VERTICAL))
            for a, b in BENCH_PAIRS]


def test_c01_variance_restoration():
    t0 = time.time()
    results = bench.variance_restoration_checks(elements=1_000_000, seed=2024)
    elapsed = time.time() - t0
    worst_mean = max(abs(r.value) for r in results if ".mean[" in r.name)
    worst_var = max(abs(r.value) for r in results if ".var_minus_1[" in r.name)
    ok = all(r.passed for r in results) and elapsed < 10.0
    report(1, ok,
           f"rectified pairs/triples at rho in {RHO_GRID}: worst |mean| "
           f"{worst_mean:.4f} (tol 0.01), worst |var-1| {worst_var:.4f} "
           f"(tol 0.02), {elapsed:.1f}s (< 10s)")


def test_c02_correlation_estimator():
    t0 = time.time()
    chw = 4096  # e.g. one 64x64 channel
    trials = 1000
    bound = 3.0 / math.sqrt(chw)
    rng = np.random.default_rng(99)
    fracs = {}
    for rho in RHO_GRID:
        eps = bench.correlated_normals(rho, 2, chw * trials, rng)
        hits = 0
        for i in range(trials):
            pair = [torch.from_numpy(eps[j, i * chw:(i + 1) * chw].reshape(1, 64, 64))
                    for j in range(2)]
            est = combine.estimate_correlation(pair, [V.IDENTITY, V.IDENTITY])
            hits += abs(est.pair(0, 1) - rho) <= bound
        fracs[rho] = hits / trials
    elapsed = time.time() - t0
    ok = all(f >= 0.95 for f in fracs.values()) and elapsed < 30.0
    report(2, ok,
           f"|rho_hat-rho| <= 3/sqrt({chw}) fractions "
           + ", ".join(f"{r:+.1f}: {f:.1%}" for r, f in fracs.items())
           + f" (need >= 95%), {elapsed:.1f}s (< 30s)")


@pytest.mark.slow
def test_c03_baseline_equivalence(trained_models, sched1000):
    dn = trained_models["denoiser"]
    checks = []
    for tasks, seed in [
        ((pipeline.GenerationTask("circle", V.IDENTITY),), 3),
        (task_sets()[0], 4),
        (task_sets()[1], 5),
    ]:
        cfg = pipeline.RunConfig(tasks=tuple(tasks), seed=seed, steps=30,
                                 aso=False, nvb=False, nvr=False)
        img, _ = pipeline.generate(cfg, dn, None, sched1000)
        want = helpers_sampler.plain_average_sampler(tasks, seed, 30, 3.0,
                                                     dn, sched1000)
        checks.append(torch.equal(img, want))
    report(3, all(checks),
           f"pipeline (toggles off) vs independent plain-averaging sampler, "
           f"bit-for-bit, N=1 and N=2 over 30 steps: {checks}")


def test_c04_aso_gradient_finite_differences():
    rels = []
    for seed in range(20):
        rel, _ = helpers_fd.relative_error(seed)
        rels.append(rel)
    ok = all(r <= 1e-3 for r in rels)
    report(4, ok,
           f"autograd vs central differences on 20 random tiny configs: "
           f"max rel err {max(rels):.2e} (tol 1e-3)")


def test_c05_loss_closed_forms():
    worst = 0.0
    g = torch.Generator().manual_seed(0)
    for n in (2, 3, 4):
        pairs = n * (n - 1) // 2
        base = torch.rand((5, 5), generator=g, dtype=torch.float64) + 0.1
        disjoint = []
        for i in range(n):
            m = torch.zeros((5, 5), dtype=torch.float64)
            m[i, i] = 1.0
            disjoint.append(m)
        for phi in (0.0, 0.2, 0.45, 0.5):
            got = float(anti_seg_loss([base] * n, phi))
            want = abs(phi - 0.5) * pairs / (n * (n - 1))
            worst = max(worst, abs(got - want))
            got = float(anti_seg_loss(disjoint, phi))
            want = phi * pairs / (n * (n - 1))
            worst = max(worst, abs(got - want))
    report(5, worst <= 1e-6,
           f"identical and disjoint maps, N in (2,3,4): max deviation "
           f"{worst:.2e} (tol 1e-6)")


def test_c06_weight_schedule():
    w0 = combine.completion_weights([0.4, 0.2], t=0, T=10)
    e0 = abs(w0.alpha[1] - 0.8)
    wT = combine.completion_weights([0.4, 0.2], t=10, T=10)
    eT = abs(wT.alpha[1] - 2.0 / 3.0)
    rng = np.random.default_rng(1)
    worst_sum, mono = 0.0, True
    for _ in range(300):
        scores = rng.uniform(combine.CS_FLOOR + 1e-3, 1.0,
                             size=int(rng.integers(2, 7)))
        t = int(rng.integers(0, 101))
        w = combine.completion_weights(list(scores), t=t, T=100)
        worst_sum = max(worst_sum, abs(sum(w.alpha) - 1.0))
        for i, j in itertools.combinations(range(len(scores)), 2):
            if scores[i] < scores[j] - 1e-12 and w.alpha[i] <= w.alpha[j]:
                mono = False
    ok = e0 < 1e-9 and eT < 1e-9 and worst_sum <= 1e-6 and mono
    report(6, ok,
           f"exponent endpoints -2/-1 (err {e0:.1e}/{eT:.1e}), sum error "
           f"{worst_sum:.1e} (tol 1e-6), monotone on 300 random vectors: {mono}")


def test_c07_view_group():
    x = torch.randn((1, 12, 12), generator=torch.Generator().manual_seed(2))
    comp = sum(torch.equal(views.apply(views.compose(a, b), x),
                           views.apply(a, views.apply(b, x)))
               for a, b in itertools.product(views.ANAGRAM_VIEWS, repeat=2))
    inv = sum(torch.equal(views.apply(views.invert(v), views.apply(v, x)), x)
              for v in views.ANAGRAM_VIEWS)
    norm_exact = all(
        torch.equal(torch.sort(views.apply(v, x).flatten()).values,
                    torch.sort(x.flatten()).values)
        for v in V)
    ok = comp == 36 and inv == 6 and norm_exact
    report(7, ok,
           f"{comp}/36 composition identities, {inv}/6 inverse identities, "
           f"value multiset (hence norm) preserved bitwise: {norm_exact}")


@pytest.mark.slow
def test_c08_directional_benchmark(trained_models, sched1000):
    t0 = time.time()
    seeds = list(range(20))
    summary, _ = pipeline.run_ablation(
        task_sets(), seeds,
        trained_models["denoiser"], trained_models["scorer_noise_aware"],
        trained_models["eval_scorer"], sched1000,
        base=pipeline.RunConfig(tasks=task_sets()[0], steps=30))
    elapsed = time.time() - t0
    by_toggle = {(r["aso"], r["nvb"], r["nvr"]): r for r in summary}
    baseline = by_toggle[(False, False, False)]
    full = by_toggle[(True, True, True)]
    beats = full["a_min"] > baseline["a_min"] and full["a_avg"] > baseline["a_avg"]
    best_other = max(r["a_avg"] for k, r in by_toggle.items()
                     if k != (True, True, True))
    weakly_best = full["a_avg"] >= best_other - 1e-9
    ok = beats and weakly_best and elapsed < 1800
    lines = "; ".join(
        f"{''.join('ASO' if k[0] else '') + ('NVB' if k[1] else '') + ('NVR' if k[2] else '') or 'base'}"
        f" a_min {r['a_min']:+.4f} a_avg {r['a_avg']:+.4f}"
        for k, r in by_toggle.items())
    report(8, ok,
           f"10 classes x 20 seeds x 30 steps, 8-way grid in {elapsed:.0f}s "
           f"(< 30 min): full vs baseline a_min {full['a_min']:+.4f} vs "
           f"{baseline['a_min']:+.4f}, a_avg {full['a_avg']:+.4f} vs "
           f"{baseline['a_avg']:+.4f}; full a_avg weakly best: {weakly_best} "
           f"[{lines}]")


@pytest.fixture(scope="module")
def probe_traces(trained_models, sched1000):
    """Baseline 2-view runs instrumented with both scorer regimes."""
    traces = []
    for tasks in task_sets():
        for seed in (100, 101):
            cfg = pipeline.RunConfig(tasks=tasks, seed=seed, steps=30,
                                     aso=False, nvb=False, nvr=False)
            _, tr = pipeline.generate(
                cfg, trained_models["denoiser"], None, sched1000,
                probe_scorers={"noise_aware": trained_models["scorer_noise_aware"],
                               "vanilla": trained_models["scorer_vanilla"]})
            traces.append(tr)
    return traces


@pytest.mark.slow
def test_c09_noise_aware_curves_smoother(probe_traces):
    deltas = {"noise_aware": [], "vanilla": []}
    for tr in probe_traces:
        for name in deltas:
            curve = np.array([r.probe_cs[name] for r in tr.records])
            deltas[name].append(float(np.abs(np.diff(curve, axis=0)).mean()))
    na, va = float(np.mean(deltas["noise_aware"])), float(np.mean(deltas["vanilla"]))
    report(9, na < va,
           f"mean per-step |dCS| over {len(probe_traces)} baseline runs: "
           f"noise-aware {na:.4f} < vanilla {va:.4f}")


@pytest.mark.slow
def test_c10_late_schedule_noise_correlation(probe_traces, sched1000):
    half = sched1000.T / 2
    rhos, cosines = [], []
    for tr in probe_traces:
        late = [r for r in tr.records if r.t_model >= half]
        rhos += [r.rho[0] for r in late]
        cosines += [r.noise_cos[0] for r in late]
    mean_rho, mean_cos = float(np.mean(rhos)), float(np.mean(cosines))
    report(10, mean_rho > 0.5 and mean_cos > 0.5,
           f"late-half (t >= T/2) baseline noise agreement: mean rho_hat "
           f"{mean_rho:.3f}, mean cosine {mean_cos:.3f} (both > 0.5)")


@pytest.mark.slow
def test_c11_rerun_determinism(trained_models, tmp_path):
    dn_path = tmp_path / "denoiser.ckpt"
    sc_path = tmp_path / "scorer.ckpt"
    ev_path = tmp_path / "eval.ckpt"
    save_denoiser(trained_models["denoiser"], dn_path)
    save_scorer(trained_models["scorer_noise_aware"], sc_path)
    save_scorer(trained_models["eval_scorer"], ev_path)

    outs = [tmp_path / "r1", tmp_path / "r2"]
    for out in outs:
        code = cli_main(["generate", "--denoiser", str(dn_path),
                         "--scorer", str(sc_path), "--concepts", "circle,star",
                         "--seed", "7", "--steps", "12", "--out", str(out),
                         "--no-charts"])
        assert code == 0
    same_trace = (outs[0] / "trace.csv").read_bytes() == \
        (outs[1] / "trace.csv").read_bytes()
    same_raw = (outs[0] / "final.npy").read_bytes() == \
        (outs[1] / "final.npy").read_bytes()

    reports = [tmp_path / "rep1.csv", tmp_path / "rep2.csv"]
    for rep in reports:
        code = cli_main(["evaluate", "--eval-scorer", str(ev_path),
                         "--runs", str(outs[0]), "--out", str(rep),
                         "--no-charts"])
        assert code == 0
    same_report = reports[0].read_bytes() == reports[1].read_bytes()

    benches = [tmp_path / "b1", tmp_path / "b2"]
    for b in benches:
        assert cli_main(["bench", "--out", str(b), "--no-charts"]) == 0
    same_bench = (benches[0] / "bench.csv").read_bytes() == \
        (benches[1] / "bench.csv").read_bytes()

    ok = same_trace and same_raw and same_report and same_bench
    report(11, ok,
           f"byte-identical re-runs: trace {same_trace}, raw dump {same_raw}, "
           f"report {same_report}, bench {same_bench}")
