"""Report rendering: aggregate CSV/JSON plus PNG figures.

The report path re-ingests the per-run CSV (and optional sweep / training
curve CSVs), recomputes every aggregate from scratch, and renders figures
next to the delimited outputs. Aggregates must be recomputable from the
CSV alone, so nothing here reaches back into live solver state.
"""

from __future__ import annotations

import csv
import json
import math
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .metrics import (AlignmentReport, MetricsReport, aggregate, read_runs,
                      write_aggregate)


def render_benchmark_figure(report: MetricsReport, path: str) -> None:
    """Grouped log-scale bars: geometric-mean node count per family."""
    families = report.families
    policies = report.policies
    fig, ax = plt.subplots(figsize=(1.8 + 1.6 * len(families), 4.0))
    width = 0.8 / max(len(policies), 1)
    for i, pol in enumerate(policies):
        xs, ys = [], []
        for j, fam in enumerate(families):
            try:
                s = report.get(fam, pol)
            except KeyError:
                continue
            xs.append(j + i * width)
            ys.append(s.geo_nodes)
        ax.bar(xs, ys, width=width * 0.95, label=pol)
    ax.set_yscale("log")
    ax.set_xticks([j + 0.4 - width / 2 for j in range(len(families))])
    ax.set_xticklabels(families)
    ax.set_ylabel("geometric mean nodes")
    ax.set_title("Final tree size by policy")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_sweep_figure(sweep_rows, path: str) -> None:
    budgets = [r.budget for r in sweep_rows]
    nodes = [r.geo_nodes for r in sweep_rows]
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    ax.plot(budgets, nodes, marker="o")
    ax.set_xlabel("simulation budget per step")
    ax.set_ylabel("geometric mean nodes")
    ax.set_title("Planning budget sweep")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_curve_figure(curve_path: str, path: str) -> None:
    steps, totals = [], []
    with open(curve_path, newline="") as fh:
        for rec in csv.DictReader(fh):
            steps.append(int(rec["step"]))
            totals.append(float(rec["total"]))
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    ax.plot(steps, totals, lw=0.8)
    if len(totals) > 20:
        k = max(len(totals) // 50, 1)
        smooth = [sum(totals[i:i + k]) / len(totals[i:i + k])
                  for i in range(0, len(totals), k)]
        ax.plot(steps[::k][:len(smooth)], smooth, lw=1.8)
    ax.set_xlabel("training step")
    ax.set_ylabel("loss")
    ax.set_title("Training loss")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def summary_dict(report: MetricsReport,
                 alignment: list[AlignmentReport] | None = None,
                 sweep_rows=None) -> dict:
    out = {
        "reference_policy": report.reference_policy,
        "contests": report.contests,
        "overall_norm_score": {k: _json_num(v)
                               for k, v in report.overall_norm_score.items()},
        "benchmarks": [
            {
                "family": s.family, "policy": s.policy, "runs": s.runs,
                "solved": s.solved, "geo_nodes": _json_num(s.geo_nodes),
                "geo_time": _json_num(s.geo_time),
                "seed_std_pct": _json_num(s.seed_std_pct), "wins": s.wins,
                "mean_rank": _json_num(s.mean_rank),
                "norm_score": _json_num(s.norm_score),
            }
            for s in report.summaries
        ],
    }
    if alignment:
        out["alignment"] = [
            {"policy": a.policy, "c_entropy": _json_num(a.c_entropy),
             "score": _json_num(a.score), "frequency": _json_num(a.frequency),
             "states": a.states}
            for a in alignment
        ]
    if sweep_rows:
        out["sweep"] = [
            {"budget": r.budget, "geo_nodes": _json_num(r.geo_nodes),
             "geo_time": _json_num(r.geo_time), "solved": r.solved,
             "runs": r.runs}
            for r in sweep_rows
        ]
    return out


def _json_num(x: float):
    if x is None or (isinstance(x, float) and not math.isfinite(x)):
        return None
    return x


def write_summary(path: str, report: MetricsReport,
                  alignment=None, sweep_rows=None) -> None:
    with open(path, "w") as fh:
        json.dump(summary_dict(report, alignment, sweep_rows), fh, indent=2)
        fh.write("\n")


def build_report(runs_csv: str, out_dir: str,
                 reference_policy: str | None = None,
                 sweep_csv: str | None = None,
                 curve_csv: str | None = None) -> MetricsReport:
    """Full report pipeline: read rows, aggregate, emit CSV/JSON/PNG."""
    os.makedirs(out_dir, exist_ok=True)
    rows = read_runs(runs_csv)
    report = aggregate(rows, reference_policy)
    write_aggregate(os.path.join(out_dir, "aggregate.csv"), report)
    sweep_rows = None
    if sweep_csv:
        from .harness import read_sweep
        sweep_rows = read_sweep(sweep_csv)
        render_sweep_figure(sweep_rows,
                            os.path.join(out_dir, "fig_budget_sweep.png"))
    write_summary(os.path.join(out_dir, "summary.json"), report,
                  sweep_rows=sweep_rows)
    render_benchmark_figure(report, os.path.join(out_dir, "fig_tree_size.png"))
    if curve_csv:
        render_curve_figure(curve_csv,
                            os.path.join(out_dir, "fig_training_curve.png"))
    return report
