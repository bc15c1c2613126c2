"""Aggregate metrics over solver runs: geometric means, wins, ranks,
normalized scores, and expert-alignment statistics.

Every aggregate is a pure function of the per-run rows, so reports can be
recomputed offline from the CSV alone and must come out bit-identical.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, fields

import numpy as np

RUN_COLUMNS = [
    "family", "instance", "policy", "seed", "termination", "solved",
    "nodes", "steps", "wall_time", "objective", "dual_gap",
    "discovery_step", "discovery_ratio", "lp_iterations",
    "warm_iters_mean", "cold_iters_mean",
]


@dataclass
class RunRow:
    family: str
    instance: str
    policy: str
    seed: int
    termination: str
    solved: bool
    nodes: int
    steps: int
    wall_time: float
    objective: float
    dual_gap: float
    discovery_step: int
    discovery_ratio: float
    lp_iterations: int
    warm_iters_mean: float
    cold_iters_mean: float


def run_row_from_result(result) -> RunRow:
    from .bnb import TERM_OPTIMAL, discovery_step, dual_gap
    t_d, t_r = discovery_step(result)
    warm = result.warm_iterations
    cold = result.cold_iterations
    return RunRow(
        family=result.instance.family or "unknown",
        instance=result.instance.name or "unnamed",
        policy=result.policy_name,
        seed=result.seed,
        termination=result.termination,
        solved=result.termination == TERM_OPTIMAL,
        nodes=result.node_count,
        steps=result.step_count,
        wall_time=result.wall_time,
        objective=result.objective if result.objective is not None else math.nan,
        dual_gap=dual_gap(result),
        discovery_step=t_d if t_d is not None else -1,
        discovery_ratio=t_r if t_r is not None else math.nan,
        lp_iterations=int(sum(result.lp_iterations)),
        warm_iters_mean=float(np.mean(warm)) if warm else math.nan,
        cold_iters_mean=float(np.mean(cold)) if cold else math.nan,
    )


def write_runs(path: str, rows: list[RunRow]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RUN_COLUMNS)
        for row in rows:
            writer.writerow([getattr(row, c) for c in RUN_COLUMNS])


def read_runs(path: str) -> list[RunRow]:
    with open(path, newline="") as fh:
        return _parse_runs(fh)


def _parse_runs(fh) -> list[RunRow]:
    reader = csv.DictReader(fh)
    missing = set(RUN_COLUMNS) - set(reader.fieldnames or [])
    if missing:
        raise ValueError(f"run CSV missing columns: {sorted(missing)}")
    types = {f.name: f.type for f in fields(RunRow)}
    rows = []
    for rec in reader:
        kwargs = {}
        for col in RUN_COLUMNS:
            raw = rec[col]
            t = types[col]
            if t == "bool":
                kwargs[col] = raw == "True"
            elif t == "int":
                kwargs[col] = int(raw)
            elif t == "float":
                kwargs[col] = float(raw)
            else:
                kwargs[col] = raw
        rows.append(RunRow(**kwargs))
    return rows


def runs_to_csv_text(rows: list[RunRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(RUN_COLUMNS)
    for row in rows:
        writer.writerow([getattr(row, c) for c in RUN_COLUMNS])
    return buf.getvalue()


def geometric_mean(values) -> float:
    vals = np.asarray(list(values), dtype=float)
    if vals.size == 0:
        raise ValueError("geometric mean of an empty sample")
    if np.any(vals <= 0):
        raise ValueError("geometric mean needs positive values")
    return float(np.exp(np.log(vals).mean()))


# ---------------------------------------------------------------------------
# benchmark aggregation


@dataclass
class PolicySummary:
    family: str
    policy: str
    runs: int
    solved: int
    geo_nodes: float
    geo_time: float
    seed_std_pct: float
    wins: int
    mean_rank: float
    norm_score: float


@dataclass
class MetricsReport:
    policies: list[str]
    families: list[str]
    summaries: list[PolicySummary]
    reference_policy: str
    overall_norm_score: dict[str, float]   # geometric across families
    contests: int

    def get(self, family: str, policy: str) -> PolicySummary:
        for s in self.summaries:
            if s.family == family and s.policy == policy:
                return s
        raise KeyError((family, policy))


def aggregate(rows: list[RunRow], reference_policy: str | None = None) -> MetricsReport:
    """Build the benchmark report from per-run rows.

    Wins and ranks are computed per contest, one contest per
    (family, instance, seed) triple covered by every policy: solved runs
    rank by node count, unsolved runs follow ranked by dual gap, and all
    ties break toward the policy listed first.
    """
    if not rows:
        raise ValueError("no runs to aggregate")
    policies = sorted({r.policy for r in rows})
    families = sorted({r.family for r in rows})
    if reference_policy is None:
        reference_policy = "plan" if "plan" in policies else policies[0]
    if reference_policy not in policies:
        raise ValueError(f"reference policy {reference_policy!r} has no runs")

    by_key: dict[tuple, RunRow] = {}
    for r in rows:
        by_key[(r.family, r.instance, r.seed, r.policy)] = r

    wins = {(f, p): 0 for f in families for p in policies}
    rank_sums = {(f, p): 0.0 for f in families for p in policies}
    contest_counts = {f: 0 for f in families}
    for fam in families:
        keys = sorted({(r.instance, r.seed) for r in rows if r.family == fam})
        for inst, seed in keys:
            entries = []
            for idx, pol in enumerate(policies):
                row = by_key.get((fam, inst, seed, pol))
                if row is None:
                    break
                entries.append((row, idx))
            else:
                contest_counts[fam] += 1
                order = sorted(
                    entries,
                    key=lambda e: ((0, e[0].nodes, e[1]) if e[0].solved
                                   else (1, e[0].dual_gap, e[1])))
                for rank, (row, _) in enumerate(order, start=1):
                    rank_sums[(fam, row.policy)] += rank
                    if rank == 1:
                        wins[(fam, row.policy)] += 1

    summaries = []
    geo_nodes_by = {}
    for fam in families:
        for pol in policies:
            sel = [r for r in rows if r.family == fam and r.policy == pol]
            if not sel:
                continue
            geo_nodes = geometric_mean(r.nodes for r in sel)
            geo_time = geometric_mean(max(r.wall_time, 1e-9) for r in sel)
            geo_nodes_by[(fam, pol)] = geo_nodes
            per_seed = {}
            for r in sel:
                per_seed.setdefault(r.seed, []).append(r.nodes)
            seed_geos = [geometric_mean(v) for v in per_seed.values()]
            std_pct = (100.0 * float(np.std(seed_geos)) / float(np.mean(seed_geos))
                       if len(seed_geos) > 1 else 0.0)
            n_contests = contest_counts[fam]
            summaries.append(PolicySummary(
                family=fam, policy=pol, runs=len(sel),
                solved=sum(r.solved for r in sel),
                geo_nodes=geo_nodes, geo_time=geo_time, seed_std_pct=std_pct,
                wins=wins[(fam, pol)],
                mean_rank=(rank_sums[(fam, pol)] / n_contests
                           if n_contests else math.nan),
                norm_score=math.nan))

    for s in summaries:
        ref = geo_nodes_by.get((s.family, reference_policy))
        if ref is not None:
            # ratio first: ref/ref is exactly 1.0, keeping the reference at 100
            s.norm_score = 100.0 * (ref / s.geo_nodes)

    overall = {}
    for pol in policies:
        vals = [s.norm_score for s in summaries
                if s.policy == pol and not math.isnan(s.norm_score)]
        # geomean of ratios keeps the reference at exactly 100 (log(1)=0)
        overall[pol] = (100.0 * geometric_mean(v / 100.0 for v in vals)
                        if vals else math.nan)

    return MetricsReport(policies=policies, families=families,
                         summaries=summaries, reference_policy=reference_policy,
                         overall_norm_score=overall,
                         contests=sum(contest_counts.values()))


AGGREGATE_COLUMNS = ["family", "policy", "runs", "solved", "geo_nodes",
                     "geo_time", "seed_std_pct", "wins", "mean_rank",
                     "norm_score"]


def write_aggregate(path: str, report: MetricsReport) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(AGGREGATE_COLUMNS)
        for s in report.summaries:
            writer.writerow([getattr(s, c) for c in AGGREGATE_COLUMNS])


# ---------------------------------------------------------------------------
# expert alignment


@dataclass
class AlignmentState:
    """One branchable state: expert scores plus a policy's reaction."""

    mask_size: int
    sb_action: int
    sb_scores: dict[int, float]
    policy_action: int
    policy_prob_sb: float     # probability the policy puts on the SB action


@dataclass
class AlignmentReport:
    policy: str
    c_entropy: float
    score: float
    frequency: float
    states: int


def alignment_report(policy_name: str, states: list[AlignmentState]) -> AlignmentReport:
    """C-Entropy normalized by the uniform policy; score and frequency."""
    if not states:
        raise ValueError("empty alignment sample")
    ce_terms, uniform_terms, score_terms, freq_terms = [], [], [], []
    for st in states:
        p = max(st.policy_prob_sb, 1e-300)
        ce_terms.append(-math.log(p))
        uniform_terms.append(-math.log(1.0 / st.mask_size))
        best = st.sb_scores[st.sb_action]
        chosen = st.sb_scores.get(st.policy_action, 0.0)
        score_terms.append(1.0 if best == chosen else
                           (chosen / best if best != 0 else 1.0))
        freq_terms.append(1.0 if st.policy_action == st.sb_action else 0.0)
    denom = float(np.mean(uniform_terms))
    c_entropy = float(np.mean(ce_terms)) / denom if denom > 0 else math.nan
    return AlignmentReport(policy=policy_name, c_entropy=c_entropy,
                           score=float(np.mean(score_terms)),
                           frequency=float(np.mean(freq_terms)),
                           states=len(states))
