"""Chart rendering for the CSV artifacts.

Every figure is a convenience layered on a delimited file that already holds
the data; the CSV stays the source of truth. All rendering is headless.
"""

from __future__ import annotations

import csv

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

__all__ = ["trace_figure", "loss_figure", "report_figure", "ablation_figure",
           "sweep_figure", "bench_figure"]


def _read_csv(path):
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


def _floats(rows, key):
    xs, ys = [], []
    for i, r in enumerate(rows):
        v = r.get(key, "")
        if v != "":
            xs.append(i)
            ys.append(float(v))
    return xs, ys


def _columns(rows, prefix):
    if not rows:
        return []
    return sorted(k for k in rows[0] if k.startswith(prefix))


def trace_figure(trace_csv, out_png) -> None:
    """Per-step curves: completion scores, weights, correlations, rectifier."""
    rows = _read_csv(trace_csv)
    fig, axes = plt.subplots(2, 2, figsize=(9, 6), sharex=True)
    panels = [
        ("completion score",
         [c for c in _columns(rows, "cs_") if not c.startswith("cs_clamped")]),
        ("weight", _columns(rows, "alpha_")),
        ("noise correlation", _columns(rows, "rho_") + _columns(rows, "noise_cos_")),
        ("rectification factor", ["c"]),
    ]
    for ax, (title, cols) in zip(axes.flat, panels):
        plotted = False
        for col in cols:
            xs, ys = _floats(rows, col)
            if xs:
                ax.plot(xs, ys, label=col, linewidth=1.2)
                plotted = True
        ax.set_title(title, fontsize=10)
        ax.set_xlabel("step")
        if plotted:
            ax.legend(fontsize=7)
        else:
            ax.text(0.5, 0.5, "disabled", ha="center", va="center",
                    transform=ax.transAxes, color="gray")
    fig.tight_layout()
    fig.savefig(out_png, dpi=110)
    plt.close(fig)


def loss_figure(loss_csv, out_png) -> None:
    rows = _read_csv(loss_csv)
    steps = [int(r["step"]) for r in rows]
    loss = [float(r["loss"]) for r in rows]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(steps, loss, linewidth=1.0)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    fig.tight_layout()
    fig.savefig(out_png, dpi=110)
    plt.close(fig)


def report_figure(report_csv, out_png) -> None:
    """Per-run metric bars from an evaluation report."""
    rows = [r for r in _read_csv(report_csv) if r.get("run_id", "") != "aggregate"]
    ids = [r["run_id"] for r in rows]
    fig, ax = plt.subplots(figsize=(max(6, 0.5 * len(ids) + 2), 3.5))
    x = range(len(ids))
    for key, off in (("a_min", -0.25), ("c", 0.0), ("a_avg", 0.25)):
        ax.bar([i + off for i in x], [float(r[key]) for r in rows],
               width=0.25, label=key)
    ax.set_xticks(list(x))
    ax.set_xticklabels(ids, rotation=45, ha="right", fontsize=7)
    ax.legend(fontsize=8)
    ax.set_ylabel("score")
    fig.tight_layout()
    fig.savefig(out_png, dpi=110)
    plt.close(fig)


def ablation_figure(summary_csv, out_png) -> None:
    rows = _read_csv(summary_csv)
    labels = []
    for r in rows:
        on = [n for n in ("aso", "nvb", "nvr") if r[n] in ("1", "True", "true")]
        labels.append("+".join(on) if on else "baseline")
    fig, ax = plt.subplots(figsize=(8, 3.5))
    x = range(len(rows))
    for key, off in (("a_min", -0.25), ("c", 0.0), ("a_avg", 0.25)):
        ax.bar([i + off for i in x], [float(r[key]) for r in rows],
               width=0.25, label=key)
    ax.set_xticks(list(x))
    ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
    ax.legend(fontsize=8)
    ax.set_ylabel("score")
    fig.tight_layout()
    fig.savefig(out_png, dpi=110)
    plt.close(fig)


def sweep_figure(sweep_csv, out_png) -> None:
    rows = _read_csv(sweep_csv)
    phis = [float(r["phi"]) for r in rows]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for key in ("a_min", "c", "a_avg"):
        ax.plot(phis, [float(r[key]) for r in rows], marker="o", label=key)
    ax.set_xlabel("target overlap ratio")
    ax.set_ylabel("score")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_png, dpi=110)
    plt.close(fig)


def bench_figure(bench_csv, out_png) -> None:
    rows = _read_csv(bench_csv)
    fig, ax = plt.subplots(figsize=(max(6, 0.3 * len(rows) + 2), 4))
    names = [r["check"] for r in rows]
    vals = [abs(float(r["value"])) for r in rows]
    tols = [float(r["tolerance"]) for r in rows]
    x = range(len(rows))
    ax.bar(x, vals, width=0.6, label="|value|")
    ax.plot(list(x), tols, "r_", markersize=10, label="tolerance")
    ax.set_xticks(list(x))
    ax.set_xticklabels(names, rotation=80, ha="right", fontsize=5)
    ax.set_yscale("symlog", linthresh=1e-12)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_png, dpi=110)
    plt.close(fig)
