"""Benchmark harness: run policies over instance corpora and collect rows.

The harness owns everything that touches a live engine; the metrics module
stays pure. Runs are merged deterministically by (family, instance, seed,
policy) regardless of completion order.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .bnb import BnbEngine, LpFailure
from .generators import GeneratorConfig, generate
from .metrics import (AlignmentState, MetricsReport, RunRow, aggregate,
                      geometric_mean, run_row_from_result)
from .milp import MilpInstance
from .planner import GumbelConfig
from .policies import (NetworkPolicy, PlannerPolicy, RandomPolicy,
                       StrongBranchingPolicy, strong_branching_scores)


@dataclass
class HarnessConfig:
    node_limit: int = 200_000
    time_limit: float = 600.0
    d_v: int = 19
    d_c: int = 5
    d_e: int = 1
    timing_mode: bool = False


def make_corpus(family: str, count: int, seed0: int,
                params: dict | None = None) -> list[MilpInstance]:
    return [generate(GeneratorConfig(family=family, seed=seed0 + i,
                                     params=dict(params or {})))
            for i in range(count)]


def policy_factory(name: str, model=None, search: GumbelConfig | None = None):
    """Returns factory(seed) -> policy callable for the named strategy."""
    if name == "random":
        return lambda seed: RandomPolicy(seed)
    if name == "sb":
        return lambda seed: StrongBranchingPolicy()
    if name == "net":
        if model is None:
            raise ValueError("net policy needs a model")
        return lambda seed: NetworkPolicy(model, seed=seed)
    if name == "plan":
        if model is None:
            raise ValueError("plan policy needs a model")
        cfg = search or GumbelConfig()
        return lambda seed: PlannerPolicy(model, cfg, seed=seed)
    raise ValueError(f"unknown policy {name!r}")


def solve_one(instance: MilpInstance, policy, policy_name: str, seed: int,
              config: HarnessConfig) -> RunRow:
    engine = BnbEngine(instance, seed=seed, node_limit=config.node_limit,
                       time_limit=config.time_limit,
                       timing_mode=config.timing_mode,
                       d_v=config.d_v, d_c=config.d_c, d_e=config.d_e)
    engine.run(policy)
    result = engine.finish(policy_name=policy_name)
    return run_row_from_result(result)


def run_benchmark(instances: list[MilpInstance], policy_specs: list[tuple],
                  seeds: list[int], config: HarnessConfig | None = None,
                  reference_policy: str | None = None,
                  on_row=None) -> tuple[list[RunRow], MetricsReport]:
    """policy_specs: list of (name, factory) with factory(seed) -> policy.

    Instance failures (LP pivot caps) are recorded as unsolved rows with
    nodes clamped to 1 rather than aborting the sweep.
    """
    config = config or HarnessConfig()
    rows: list[RunRow] = []
    for instance in instances:
        for seed in seeds:
            for name, factory in policy_specs:
                try:
                    row = solve_one(instance, factory(seed), name, seed, config)
                except LpFailure as exc:
                    row = RunRow(
                        family=instance.family or "unknown",
                        instance=instance.name or "unnamed",
                        policy=name, seed=seed,
                        termination=f"lp-failure:{exc}", solved=False,
                        nodes=1, steps=0, wall_time=0.0, objective=math.nan,
                        dual_gap=math.inf, discovery_step=-1,
                        discovery_ratio=math.nan, lp_iterations=0,
                        warm_iters_mean=math.nan, cold_iters_mean=math.nan)
                rows.append(row)
                if on_row is not None:
                    on_row(row)
    rows.sort(key=lambda r: (r.family, r.instance, r.seed, r.policy))
    return rows, aggregate(rows, reference_policy)


# ---------------------------------------------------------------------------
# expert alignment sampling


def collect_alignment_states(instances: list[MilpInstance],
                             policies: dict[str, object], seed: int,
                             config: HarnessConfig | None = None,
                             max_states_per_instance: int = 50,
                             ) -> dict[str, list[AlignmentState]]:
    """Walk SB-driven episodes; at each state query every candidate policy.

    The walk itself always follows the expert action, so every policy is
    scored on the same state distribution.
    """
    config = config or HarnessConfig()
    out: dict[str, list[AlignmentState]] = {name: [] for name in policies}
    for instance in instances:
        engine = BnbEngine(instance, seed=seed, node_limit=config.node_limit,
                           time_limit=config.time_limit, d_v=config.d_v,
                           d_c=config.d_c, d_e=config.d_e)
        states = 0
        while not engine.done and states < max_states_per_instance:
            node = engine.current_node()
            if node is None:
                break
            obs = engine.current_observation()
            scores, _ = strong_branching_scores(engine, node)
            cands = obs.candidates
            ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
            sb_action = ranked[0][0]
            for name, policy in policies.items():
                decision = policy(obs, engine)
                out[name].append(AlignmentState(
                    mask_size=int(cands.size),
                    sb_action=sb_action,
                    sb_scores=dict(scores),
                    policy_action=decision.action,
                    policy_prob_sb=float(decision.distribution.get(sb_action, 0.0))))
            states += 1
            sb_dist = {int(j): 1.0 if int(j) == sb_action else 0.0 for j in cands}
            engine.transition(sb_action, sb_dist, obs)
        engine.finish(policy_name="sb")
    return out


# ---------------------------------------------------------------------------
# budget sweep


SWEEP_COLUMNS = ["budget", "geo_nodes", "geo_time", "solved", "runs"]


@dataclass
class SweepRow:
    budget: int
    geo_nodes: float
    geo_time: float
    solved: int
    runs: int


def budget_sweep(instances: list[MilpInstance], model,
                 budgets: list[int], seeds: list[int],
                 base: GumbelConfig | None = None,
                 config: HarnessConfig | None = None) -> list[SweepRow]:
    config = config or HarnessConfig()
    base = base or GumbelConfig()
    rows = []
    for budget in sorted(set(int(b) for b in budgets)):
        search = GumbelConfig(
            simulations=budget,
            root_actions=min(base.root_actions, max(budget, 1)),
            c_visit=base.c_visit, c_scale=base.c_scale,
            depth_cap=base.depth_cap,
            branchable_threshold=base.branchable_threshold)
        nodes, times, solved, runs = [], [], 0, 0
        for instance in instances:
            for seed in seeds:
                policy = PlannerPolicy(model, search, seed=seed)
                row = solve_one(instance, policy, "plan", seed, config)
                nodes.append(row.nodes)
                times.append(max(row.wall_time, 1e-9))
                solved += row.solved
                runs += 1
        rows.append(SweepRow(budget, geometric_mean(nodes),
                             geometric_mean(times), solved, runs))
    return rows


def write_sweep(path: str, rows: list[SweepRow]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SWEEP_COLUMNS)
        for r in rows:
            writer.writerow([r.budget, r.geo_nodes, r.geo_time, r.solved, r.runs])


def read_sweep(path: str) -> list[SweepRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if set(SWEEP_COLUMNS) - set(reader.fieldnames or []):
            raise ValueError("malformed sweep CSV")
        return [SweepRow(int(r["budget"]), float(r["geo_nodes"]),
                         float(r["geo_time"]), int(r["solved"]), int(r["runs"]))
                for r in reader]


# ---------------------------------------------------------------------------
# transition timing


TIMING_COLUMNS = ["family", "transitions", "warm_ms", "cold_ms",
                  "warm_iters", "cold_iters", "warm_leq_cold_frac"]


@dataclass
class TimingRow:
    family: str
    transitions: int
    warm_ms: float
    cold_ms: float
    warm_iters: float
    cold_iters: float
    warm_leq_cold_frac: float


def transition_timing(per_family_instances: dict[str, list[MilpInstance]],
                      seed: int = 0,
                      config: HarnessConfig | None = None) -> list[TimingRow]:
    """Per-family warm vs cold LP effort, measured on random-policy runs."""
    config = config or HarnessConfig()
    rows = []
    for family in sorted(per_family_instances):
        warm_iters, cold_iters, warm_t, cold_t = [], [], [], []
        for instance in per_family_instances[family]:
            engine = BnbEngine(instance, seed=seed,
                               node_limit=config.node_limit,
                               time_limit=config.time_limit, timing_mode=True,
                               d_v=config.d_v, d_c=config.d_c, d_e=config.d_e)
            engine.run(RandomPolicy(seed))
            result = engine.finish(policy_name="random")
            warm_iters.extend(result.warm_iterations)
            cold_iters.extend(result.cold_iterations)
            warm_t.extend(result.warm_times)
            cold_t.extend(result.cold_times)
        n = len(warm_iters)
        leq = float(np.mean([w <= c for w, c in zip(warm_iters, cold_iters)])) \
            if n else math.nan
        rows.append(TimingRow(
            family=family, transitions=n,
            warm_ms=1e3 * float(np.mean(warm_t)) if n else math.nan,
            cold_ms=1e3 * float(np.mean(cold_t)) if n else math.nan,
            warm_iters=float(np.mean(warm_iters)) if n else math.nan,
            cold_iters=float(np.mean(cold_iters)) if n else math.nan,
            warm_leq_cold_frac=leq))
    return rows


def write_timing(path: str, rows: list[TimingRow]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TIMING_COLUMNS)
        for r in rows:
            writer.writerow([getattr(r, c) for c in TIMING_COLUMNS])
