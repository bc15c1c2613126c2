"""Aggregation arithmetic: geometric means, wins/ranks, normalized scores,
and expert-alignment statistics, all against hand-computed fixtures."""

import math

import numpy as np
import pytest

from bnblab.generators import GeneratorConfig, generate
from bnblab.bnb import solve
from bnblab.metrics import (AGGREGATE_COLUMNS, AlignmentState, RunRow,
                            aggregate, alignment_report, geometric_mean,
                            read_runs, run_row_from_result, runs_to_csv_text,
                            write_aggregate, write_runs)
from bnblab.policies import make_policy


def row(policy, instance, nodes, family="fa", seed=0, solved=True,
        dual_gap=0.0, wall_time=0.5):
    return RunRow(family=family, instance=instance, policy=policy, seed=seed,
                  termination="optimal" if solved else "node-limit",
                  solved=solved, nodes=nodes, steps=nodes // 2,
                  wall_time=wall_time, objective=-1.0, dual_gap=dual_gap,
                  discovery_step=0, discovery_ratio=0.0, lp_iterations=nodes,
                  warm_iters_mean=2.0, cold_iters_mean=5.0)


class TestGeometricMean:
    def test_one_and_hundred(self):
        assert geometric_mean([1.0, 100.0]) == pytest.approx(10.0, rel=1e-12)

    def test_single_value(self):
        assert geometric_mean([7.0]) == pytest.approx(7.0)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            geometric_mean([])

    def test_nonpositive_rejected(self):
        with pytest.raises(ValueError):
            geometric_mean([1.0, 0.0])
        with pytest.raises(ValueError):
            geometric_mean([1.0, -2.0])


class TestRunsCsv:
    def test_round_trip(self, tmp_path):
        rows = [row("plan", "i1", 10), row("sb", "i1", 20, solved=False,
                                           dual_gap=0.25)]
        rows[1].objective = math.nan
        path = str(tmp_path / "runs.csv")
        write_runs(path, rows)
        back = read_runs(path)
        assert len(back) == 2
        for a, b in zip(rows, back):
            assert a.policy == b.policy and a.nodes == b.nodes
            assert a.solved == b.solved and a.seed == b.seed
            assert a.dual_gap == b.dual_gap
        assert math.isnan(back[1].objective)

    def test_text_matches_file(self, tmp_path):
        rows = [row("plan", "i1", 10)]
        path = str(tmp_path / "runs.csv")
        write_runs(path, rows)
        with open(path, newline="") as fh:
            assert fh.read() == runs_to_csv_text(rows)

    def test_missing_column_rejected(self, tmp_path):
        path = str(tmp_path / "bad.csv")
        with open(path, "w") as fh:
            fh.write("family,instance\nfa,i1\n")
        with pytest.raises(ValueError):
            read_runs(path)

    def test_row_from_solve_result(self):
        inst = generate(GeneratorConfig(family="mk", seed=3,
                                        params={"items": 6, "knapsacks": 2}))
        res = solve(inst, make_policy("sb"), seed=5)
        r = run_row_from_result(res)
        assert r.family == "multiple-knapsack"
        assert r.policy == "sb" and r.seed == 5
        assert r.solved and r.dual_gap == 0.0
        assert r.nodes == res.node_count and r.steps == res.step_count
        assert r.lp_iterations == sum(res.lp_iterations)


def three_policy_rows():
    return [
        row("plan", "i1", 10), row("plan", "i2", 40),
        row("random", "i1", 100), row("random", "i2", 400),
        row("sb", "i1", 10), row("sb", "i2", 160),
    ]


class TestAggregate:
    def test_hand_computed_report(self):
        report = aggregate(three_policy_rows())
        assert report.reference_policy == "plan"
        assert report.contests == 2
        plan = report.get("fa", "plan")
        rand = report.get("fa", "random")
        sb = report.get("fa", "sb")
        assert plan.geo_nodes == pytest.approx(20.0, rel=1e-12)
        assert rand.geo_nodes == pytest.approx(200.0, rel=1e-12)
        assert sb.geo_nodes == pytest.approx(40.0, rel=1e-12)
        # i1 ties plan/sb on nodes and breaks toward the earlier policy
        assert plan.wins == 2 and rand.wins == 0 and sb.wins == 0
        assert plan.mean_rank == 1.0
        assert sb.mean_rank == 2.0
        assert rand.mean_rank == 3.0
        assert plan.norm_score == 100.0          # exact, not approximately
        assert rand.norm_score == pytest.approx(10.0, rel=1e-12)
        assert sb.norm_score == pytest.approx(50.0, rel=1e-12)
        assert report.overall_norm_score["plan"] == 100.0

    def test_reference_is_exactly_100_with_awkward_counts(self):
        rows = []
        rng = np.random.default_rng(3)
        for fam in ("fa", "fb", "fc"):
            for inst in ("i1", "i2", "i3"):
                for pol in ("plan", "random"):
                    rows.append(row(pol, inst, int(rng.integers(3, 9999)),
                                    family=fam))
        report = aggregate(rows, reference_policy="plan")
        for fam in ("fa", "fb", "fc"):
            assert report.get(fam, "plan").norm_score == 100.0
        assert report.overall_norm_score["plan"] == 100.0

    def test_wins_sum_to_contests(self):
        rows = three_policy_rows() + [
            row("plan", "j1", 5, family="fb"), row("plan", "j2", 7, family="fb"),
            row("random", "j1", 9, family="fb"), row("random", "j2", 3, family="fb"),
            row("sb", "j1", 4, family="fb"), row("sb", "j2", 8, family="fb"),
        ]
        report = aggregate(rows)
        assert sum(s.wins for s in report.summaries) == report.contests == 4

    def test_uncovered_contest_skipped(self):
        rows = three_policy_rows() + [row("plan", "i3", 9),
                                      row("random", "i3", 11)]
        report = aggregate(rows)   # sb has no i3 run
        assert report.contests == 2
        assert sum(s.wins for s in report.summaries) == 2

    def test_solved_beats_unsolved_regardless_of_nodes(self):
        rows = [row("a", "i1", 500), row("b", "i1", 10, solved=False,
                                         dual_gap=0.3)]
        report = aggregate(rows, reference_policy="a")
        assert report.get("fa", "a").wins == 1
        assert report.get("fa", "a").mean_rank == 1.0
        assert report.get("fa", "b").mean_rank == 2.0

    def test_unsolved_rank_by_dual_gap(self):
        rows = [row("a", "i1", 10, solved=False, dual_gap=0.9),
                row("b", "i1", 999, solved=False, dual_gap=0.1)]
        report = aggregate(rows, reference_policy="a")
        assert report.get("fa", "b").wins == 1

    def test_seed_spread(self):
        rows = [row("a", "i1", 10, seed=0), row("a", "i1", 40, seed=1)]
        report = aggregate(rows, reference_policy="a")
        s = report.get("fa", "a")
        assert s.seed_std_pct == pytest.approx(60.0, rel=1e-12)
        single = aggregate([row("a", "i1", 10)], reference_policy="a")
        assert single.get("fa", "a").seed_std_pct == 0.0

    def test_bad_inputs(self):
        with pytest.raises(ValueError):
            aggregate([])
        with pytest.raises(ValueError):
            aggregate(three_policy_rows(), reference_policy="nope")

    def test_aggregate_csv(self, tmp_path):
        report = aggregate(three_policy_rows())
        path = str(tmp_path / "aggregate.csv")
        write_aggregate(path, report)
        with open(path) as fh:
            lines = fh.read().strip().splitlines()
        assert lines[0] == ",".join(AGGREGATE_COLUMNS)
        assert len(lines) == 1 + len(report.summaries)


def state(mask_size, sb_action, scores, action, prob_sb):
    return AlignmentState(mask_size=mask_size, sb_action=sb_action,
                          sb_scores=scores, policy_action=action,
                          policy_prob_sb=prob_sb)


class TestAlignment:
    def test_expert_against_itself(self):
        states = [state(5, 2, {2: 8.0, 1: 3.0}, 2, 1.0),
                  state(3, 1, {1: 4.0, 0: 1.0}, 1, 1.0)]
        rep = alignment_report("sb", states)
        assert rep.c_entropy == 0.0
        assert rep.score == 1.0
        assert rep.frequency == 1.0
        assert rep.states == 2

    def test_uniform_policy_has_unit_entropy(self):
        # mixed mask sizes on purpose: the ratio of means must still be 1
        states = [state(m, 0, {0: 2.0, 1: 1.0}, 1, 1.0 / m)
                  for m in (2, 3, 5, 8)]
        rep = alignment_report("random", states)
        assert rep.c_entropy == 1.0

    def test_one_hot_miss_scores_by_ratio(self):
        states = [state(4, 0, {0: 10.0, 1: 4.0}, 1, 0.0)]
        rep = alignment_report("net", states)
        assert rep.score == pytest.approx(0.4, rel=1e-12)
        assert rep.frequency == 0.0
        assert rep.c_entropy > 100.0   # clamped log of a zero probability

    def test_unscored_choice_counts_zero(self):
        states = [state(4, 0, {0: 10.0}, 3, 0.0)]
        rep = alignment_report("net", states)
        assert rep.score == 0.0

    def test_zero_best_score_degenerates_to_one(self):
        states = [state(3, 0, {0: 0.0, 1: 0.0}, 1, 0.5)]
        rep = alignment_report("net", states)
        assert rep.score == 1.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            alignment_report("x", [])
