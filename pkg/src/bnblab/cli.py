"""Command-line surface.

Subcommands: generate, solve, train, evaluate, sweep, align, timing,
report. Global flags --seed/--config/--out-dir/--limit-nodes/
--limit-seconds apply everywhere; --config falls back to the BNBLAB_CONFIG
environment variable, then to built-in defaults.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import config as cfgmod
from .bnb import solve as bnb_solve
from .generators import FAMILIES, GeneratorConfig, generate, resolve_family
from .harness import (HarnessConfig, budget_sweep, collect_alignment_states,
                      make_corpus, policy_factory, run_benchmark,
                      transition_timing, write_sweep, write_timing)
from .metrics import alignment_report, run_row_from_result, write_runs
from .milp import read_instance, write_instance
from .model import BnbModel, load_model
from .planner import GumbelConfig
from .policies import make_policy
from .reporting import build_report


def _parse_params(pairs: list[str]) -> dict:
    out = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise SystemExit(f"--param {pair!r} is not key=value")
        key, _, raw = pair.partition("=")
        try:
            val: object = int(raw)
        except ValueError:
            try:
                val = float(raw)
            except ValueError:
                val = raw
        out[key.strip()] = val
    return out


def _families_arg(text: str) -> list[str]:
    if text == "all":
        return list(FAMILIES)
    try:
        return [resolve_family(f.strip()) for f in text.split(",") if f.strip()]
    except ValueError as exc:
        raise SystemExit(str(exc))


def _out_dir(args) -> str:
    path = args.out_dir or "."
    os.makedirs(path, exist_ok=True)
    return path


def _load_model_arg(args, cfg) -> BnbModel:
    if getattr(args, "checkpoint", None):
        return load_model(args.checkpoint)
    print("note: no --checkpoint given, using untrained parameters",
          file=sys.stderr)
    return BnbModel(cfgmod.model_config(cfg), seed=args.seed)


def _harness_config(args, cfg) -> HarnessConfig:
    return HarnessConfig(
        node_limit=args.limit_nodes, time_limit=args.limit_seconds,
        d_v=cfg["d_v"], d_c=cfg["d_c"], d_e=cfg["d_e"])


# -- subcommands -------------------------------------------------------------


def cmd_generate(args, cfg) -> int:
    out = _out_dir(args)
    params = _parse_params(args.param)
    for fam in _families_arg(args.family):
        for i in range(args.count):
            inst = generate(GeneratorConfig(family=fam, seed=args.seed + i,
                                            params=dict(params)))
            path = os.path.join(out, f"{inst.name}.milp")
            write_instance(inst, path)
            print(path)
    return 0


def cmd_solve(args, cfg) -> int:
    model = None
    if args.policy in ("net", "plan"):
        model = _load_model_arg(args, cfg)
    rows = []
    for path in args.instance:
        inst = read_instance(path)
        if args.policy == "plan":
            search = cfgmod.gumbel_config(cfg, simulations=args.budget)
            policy = make_policy("plan", seed=args.seed, model=model,
                                 config=search)
        else:
            policy = make_policy(args.policy, seed=args.seed, model=model)
        result = bnb_solve(inst, policy, seed=args.seed,
                           node_limit=args.limit_nodes,
                           time_limit=args.limit_seconds,
                           d_v=cfg["d_v"], d_c=cfg["d_c"], d_e=cfg["d_e"])
        row = run_row_from_result(result)
        rows.append(row)
        obj = "none" if result.objective is None else f"{result.objective:.6f}"
        print(f"{path}: {result.termination} objective={obj} "
              f"nodes={result.node_count} steps={result.step_count} "
              f"time={result.wall_time:.2f}s")
    if args.out_dir:
        out = _out_dir(args)
        write_runs(os.path.join(out, "runs.csv"), rows)
        print(os.path.join(out, "runs.csv"))
    return 0


def cmd_train(args, cfg) -> int:
    from .training import train
    out = _out_dir(args)
    tc = cfgmod.train_config(cfg, seed=args.seed,
                             family_params=_parse_params(args.param))
    if args.steps is not None:
        from dataclasses import replace
        tc = replace(tc, steps=args.steps)
    state = train(tc, out_dir=out, log=lambda msg: print(msg, flush=True))
    print(f"trained {tc.steps} steps, {state.episodes_run} episodes; "
          f"checkpoints: {', '.join(state.checkpoints)}")
    return 0


def cmd_evaluate(args, cfg) -> int:
    out = _out_dir(args)
    policy_names = [p.strip() for p in args.policies.split(",") if p.strip()]
    seeds = [int(s) for s in args.seeds.split(",")]
    model = None
    if any(p in ("net", "plan") for p in policy_names):
        model = _load_model_arg(args, cfg)
    specs = [(name, policy_factory(name, model=model,
                                   search=cfgmod.gumbel_config(cfg)))
             for name in policy_names]
    params = _parse_params(args.param)
    all_rows = []
    hconf = _harness_config(args, cfg)
    for fam in _families_arg(args.families):
        corpus = make_corpus(fam, args.count, args.seed, params)
        rows, _ = run_benchmark(corpus, specs, seeds, hconf,
                                reference_policy=args.reference)
        all_rows.extend(rows)
    runs_path = os.path.join(out, "runs.csv")
    write_runs(runs_path, all_rows)
    report = build_report(runs_path, out, reference_policy=args.reference)
    for s in report.summaries:
        print(f"{s.family:4s} {s.policy:8s} geo_nodes={s.geo_nodes:10.2f} "
              f"solved={s.solved}/{s.runs} wins={s.wins} "
              f"rank={s.mean_rank:.2f} score={s.norm_score:.1f}")
    print(runs_path)
    return 0


def cmd_sweep(args, cfg) -> int:
    out = _out_dir(args)
    model = _load_model_arg(args, cfg)
    budgets = [int(b) for b in args.budgets.split(",")]
    seeds = [int(s) for s in args.seeds.split(",")]
    params = _parse_params(args.param)
    corpus = make_corpus(args.family, args.count, args.seed, params)
    rows = budget_sweep(corpus, model, budgets, seeds,
                        base=cfgmod.gumbel_config(cfg),
                        config=_harness_config(args, cfg))
    path = os.path.join(out, "sweep.csv")
    write_sweep(path, rows)
    for r in rows:
        print(f"N={r.budget:4d} geo_nodes={r.geo_nodes:10.2f} "
              f"solved={r.solved}/{r.runs}")
    print(path)
    return 0


def cmd_align(args, cfg) -> int:
    out = _out_dir(args)
    policy_names = [p.strip() for p in args.policies.split(",") if p.strip()]
    model = None
    if any(p in ("net", "plan") for p in policy_names):
        model = _load_model_arg(args, cfg)
    policies = {}
    for name in policy_names:
        factory = policy_factory(name, model=model,
                                 search=cfgmod.gumbel_config(cfg))
        policies[name] = factory(args.seed)
    params = _parse_params(args.param)
    corpus = make_corpus(args.family, args.count, args.seed, params)
    states = collect_alignment_states(corpus, policies, args.seed,
                                      _harness_config(args, cfg),
                                      max_states_per_instance=args.max_states)
    path = os.path.join(out, "alignment.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["policy", "c_entropy", "score", "frequency", "states"])
        for name in policy_names:
            rep = alignment_report(name, states[name])
            writer.writerow([rep.policy, rep.c_entropy, rep.score,
                             rep.frequency, rep.states])
            print(f"{name:8s} c_entropy={rep.c_entropy:.4f} "
                  f"score={rep.score:.4f} freq={rep.frequency:.4f} "
                  f"states={rep.states}")
    print(path)
    return 0


def cmd_timing(args, cfg) -> int:
    out = _out_dir(args)
    params = _parse_params(args.param)
    per_family = {fam: make_corpus(fam, args.count, args.seed, params)
                  for fam in _families_arg(args.families)}
    rows = transition_timing(per_family, seed=args.seed,
                             config=_harness_config(args, cfg))
    path = os.path.join(out, "timing.csv")
    write_timing(path, rows)
    for r in rows:
        print(f"{r.family:4s} transitions={r.transitions:6d} "
              f"warm={r.warm_ms:.3f}ms/{r.warm_iters:.1f}it "
              f"cold={r.cold_ms:.3f}ms/{r.cold_iters:.1f}it "
              f"warm<=cold {100 * r.warm_leq_cold_frac:.0f}%")
    print(path)
    return 0


def cmd_report(args, cfg) -> int:
    out = _out_dir(args)
    report = build_report(args.runs, out, reference_policy=args.reference,
                          sweep_csv=args.sweep, curve_csv=args.curve)
    print(json.dumps({p: report.overall_norm_score[p]
                      for p in report.policies}, indent=2))
    for name in ("aggregate.csv", "summary.json", "fig_tree_size.png"):
        print(os.path.join(out, name))
    return 0


# -- wiring -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--config", default=None,
                        help=f"key=value file (default ${cfgmod.ENV_VAR})")
    common.add_argument("--set", action="append", default=[], metavar="K=V",
                        help="override a single config key")
    common.add_argument("--out-dir", default=None)
    common.add_argument("--limit-nodes", type=int, default=200_000)
    common.add_argument("--limit-seconds", type=float, default=600.0)

    parser = argparse.ArgumentParser(
        prog="bnblab",
        description="Exact MILP branch-and-bound laboratory with a learned "
                    "latent model and planning-based branching.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common],
                       help="write instance files for a benchmark family")
    p.add_argument("--family", default="sc")
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--param", action="append", default=[])
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("solve", parents=[common],
                       help="solve instance files with a chosen policy")
    p.add_argument("instance", nargs="+")
    p.add_argument("--policy", choices=["random", "sb", "net", "plan"],
                   default="sb")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--budget", type=int, default=None,
                   help="planner simulations per step")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("train", parents=[common],
                       help="run the sequential act/learn loop")
    p.add_argument("--steps", type=int, default=None,
                   help="override training_steps from the config")
    p.add_argument("--param", action="append", default=[],
                   help="instance family parameter override")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[common],
                       help="benchmark policies over generated corpora")
    p.add_argument("--families", default="all")
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--policies", default="random,sb")
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--reference", default=None)
    p.add_argument("--param", action="append", default=[])
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", parents=[common],
                       help="planner node counts across simulation budgets")
    p.add_argument("--family", default="ca")
    p.add_argument("--count", type=int, default=5)
    p.add_argument("--budgets", default="0,4,8,16,32")
    p.add_argument("--seeds", default="0")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--param", action="append", default=[])
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("align", parents=[common],
                       help="expert-alignment metrics against strong branching")
    p.add_argument("--family", default="sc")
    p.add_argument("--count", type=int, default=5)
    p.add_argument("--policies", default="random")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--max-states", type=int, default=50)
    p.add_argument("--param", action="append", default=[])
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("timing", parents=[common],
                       help="warm vs cold per-transition LP effort")
    p.add_argument("--families", default="all")
    p.add_argument("--count", type=int, default=5)
    p.add_argument("--param", action="append", default=[])
    p.set_defaults(func=cmd_timing)

    p = sub.add_parser("report", parents=[common],
                       help="recompute aggregates and render figures from CSVs")
    p.add_argument("--runs", required=True)
    p.add_argument("--sweep", default=None)
    p.add_argument("--curve", default=None)
    p.add_argument("--reference", default=None)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = cfgmod.apply_overrides(cfgmod.resolve_config(args.config),
                                     args.set)
    except ValueError as exc:
        raise SystemExit(str(exc))
    return args.func(args, cfg)


if __name__ == "__main__":
    sys.exit(main())
