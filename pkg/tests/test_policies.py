"""Branching policies: mask discipline, SB scoring, determinism, uniformity."""

import numpy as np
import pytest
from scipy.stats import chi2

from bnblab.bnb import BnbEngine, solve
from bnblab.generators import GeneratorConfig, generate
from bnblab.model import BnbModel, ModelConfig
from bnblab.policies import (BranchingDecision, NetworkPolicy, PlannerPolicy,
                             RandomPolicy, StrongBranchingPolicy,
                             make_policy, masked_softmax,
                             strong_branching_scores)
from bnblab.planner import GumbelConfig


def mk_instance(seed=3, items=6, sacks=2):
    return generate(GeneratorConfig("mk", seed=seed,
                                    params={"items": items, "knapsacks": sacks}))


def root_state(seed=3):
    engine = BnbEngine(mk_instance(seed=seed))
    obs = engine.current_observation()
    assert obs is not None
    return engine, obs


# -- random policy ---------------------------------------------------------


def test_random_single_candidate_is_forced():
    engine, obs = root_state()
    forced = obs.candidates[:1]
    obs.mask[:] = False
    obs.mask[forced] = True
    decision = RandomPolicy(0)(obs, engine)
    assert decision.action == int(forced[0])
    assert decision.distribution == {int(forced[0]): 1.0}


def test_random_uniform_distribution_reported():
    engine, obs = root_state()
    cands = obs.candidates
    decision = RandomPolicy(0)(obs, engine)
    assert decision.action in set(int(j) for j in cands)
    for j in cands:
        assert decision.distribution[int(j)] == pytest.approx(1.0 / cands.size)


def test_random_deterministic_per_state_and_seed():
    engine, obs = root_state()
    a = RandomPolicy(4)(obs, engine).action
    b = RandomPolicy(4)(obs, engine).action
    assert a == b


def test_random_chi_square_uniform_over_seeds():
    # same state, 10000 seeds; counts should be uniform across the mask
    engine, obs = root_state(seed=9)
    cands = obs.candidates
    k = cands.size
    assert k >= 2
    counts = np.zeros(k)
    index = {int(j): i for i, j in enumerate(cands)}
    for seed in range(10_000):
        counts[index[RandomPolicy(seed)(obs, engine).action]] += 1
    expected = 10_000 / k
    stat = float(((counts - expected) ** 2 / expected).sum())
    assert stat < chi2.ppf(0.99, df=k - 1), (counts, stat)


# -- strong branching --------------------------------------------------------


def test_sb_score_formula_and_argmax():
    # score = min(delta_left, delta_right); argmax over candidates
    engine, obs = root_state(seed=5)
    node = engine.current_node()
    scores, flagged = strong_branching_scores(engine, node)
    assert not flagged
    assert set(scores) == set(int(j) for j in obs.candidates)

    decision = StrongBranchingPolicy()(obs, engine)
    best = max(sorted(scores), key=lambda j: scores[j])
    # max with sorted keys resolves ties to the lowest index
    ordered = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    assert decision.action == ordered[0][0] == best or scores[decision.action] == scores[best]
    assert decision.action == ordered[0][0]


def test_sb_deltas_match_independent_probe():
    # recompute each candidate's child objectives with fresh cold solves
    engine, obs = root_state(seed=5)
    node = engine.current_node()
    scores, _ = strong_branching_scores(engine, node)
    base = node.lp.objective
    x = node.lp.x
    for j in obs.candidates:
        j = int(j)
        deltas = []
        for kind in ("u", "l"):
            lo, hi = node.l.copy(), node.u.copy()
            if kind == "u":
                hi[j] = np.floor(x[j])
            else:
                lo[j] = np.ceil(x[j])
            probe = engine.solver.solve_cold(lo, hi)
            if probe.status == "infeasible":
                deltas.append(1e12)
            else:
                deltas.append(min(probe.objective - base, 1e12))
        assert scores[j] == pytest.approx(min(deltas), abs=1e-6)


def test_sb_distribution_is_one_hot():
    engine, obs = root_state(seed=2)
    decision = StrongBranchingPolicy()(obs, engine)
    dist = decision.distribution
    assert sum(dist.values()) == pytest.approx(1.0)
    assert dist[decision.action] == 1.0
    assert all(v in (0.0, 1.0) for v in dist.values())


def test_sb_tie_break_prefers_lowest_index():
    # triangle: LP relaxation is (1/2,1/2,1/2), all probes identical
    from bnblab.milp import MilpInstance
    inst = MilpInstance(
        n=3, m=3,
        a_rows=[0, 0, 1, 1, 2, 2], a_cols=[0, 1, 1, 2, 0, 2],
        a_vals=np.ones(6), b=np.ones(3), c=[-1.0, -1.0, -1.0],
        l=np.zeros(3), u=np.ones(3), integer_idx=[0, 1, 2])
    engine = BnbEngine(inst)
    obs = engine.current_observation()
    np.testing.assert_array_equal(obs.candidates, [0, 1, 2])
    decision = StrongBranchingPolicy()(obs, engine)
    scores = decision.scores
    assert scores[0] == pytest.approx(scores[1], abs=1e-9)
    assert scores[1] == pytest.approx(scores[2], abs=1e-9)
    assert decision.action == 0


# -- network policy ---------------------------------------------------------


def test_masked_softmax_uniform_for_equal_logits():
    probs = masked_softmax(np.zeros(10), np.array([2, 5, 9]))
    np.testing.assert_allclose(probs, np.full(3, 1.0 / 3.0))


def test_masked_softmax_shift_invariant():
    logits = np.random.default_rng(0).normal(size=8)
    cands = np.array([1, 3, 4, 6])
    a = masked_softmax(logits, cands)
    b = masked_softmax(logits + 123.0, cands)
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_network_policy_argmax_deterministic():
    engine, obs = root_state(seed=4)
    model = BnbModel(ModelConfig(d_h=8), seed=0)
    pol = NetworkPolicy(model)
    a = pol(obs, engine)
    b = pol(obs, engine)
    assert a.action == b.action
    assert a.distribution == b.distribution
    assert a.action in set(int(j) for j in obs.candidates)


def test_network_policy_never_selects_masked(seed=0):
    engine, obs = root_state(seed=6)
    model = BnbModel(ModelConfig(d_h=8), seed=1)
    pol = NetworkPolicy(model, temperature=1.0, seed=seed)
    allowed = set(int(j) for j in obs.candidates)
    for _ in range(300):
        assert pol(obs, engine).action in allowed


def test_network_distribution_sums_to_one():
    engine, obs = root_state(seed=8)
    model = BnbModel(ModelConfig(d_h=8), seed=2)
    decision = NetworkPolicy(model)(obs, engine)
    assert sum(decision.distribution.values()) == pytest.approx(1.0)


# -- planner policy ----------------------------------------------------------


def test_planner_budget_zero_equals_network_argmax():
    model = BnbModel(ModelConfig(d_h=8), seed=3)
    checked = 0
    for seed in range(6):
        engine, obs = root_state(seed=seed)
        net = NetworkPolicy(model)(obs, engine)
        plan = PlannerPolicy(model, GumbelConfig(simulations=0))(obs, engine)
        assert plan.action == net.action
        checked += 1
    assert checked == 6


def test_planner_distribution_over_mask():
    engine, obs = root_state(seed=3)
    model = BnbModel(ModelConfig(d_h=8), seed=3)
    pol = PlannerPolicy(model, GumbelConfig(simulations=8, root_actions=4))
    decision = pol(obs, engine)
    allowed = set(int(j) for j in obs.candidates)
    assert decision.action in allowed
    assert set(decision.distribution) <= allowed
    assert sum(decision.distribution.values()) == pytest.approx(1.0)


def test_make_policy_factory():
    assert isinstance(make_policy("random"), RandomPolicy)
    assert isinstance(make_policy("sb"), StrongBranchingPolicy)
    model = BnbModel(ModelConfig(d_h=8), seed=0)
    assert isinstance(make_policy("net", model=model), NetworkPolicy)
    assert isinstance(make_policy("plan", model=model), PlannerPolicy)
    with pytest.raises(ValueError):
        make_policy("net")
    with pytest.raises(ValueError):
        make_policy("bogus")


def test_every_policy_stays_inside_mask_full_solve():
    inst = mk_instance(seed=1, items=5)
    model = BnbModel(ModelConfig(d_h=8), seed=0)
    for policy in (make_policy("random", seed=1), make_policy("sb"),
                   make_policy("net", model=model),
                   make_policy("plan", model=model,
                               config=GumbelConfig(simulations=4, root_actions=2))):
        result = solve(inst, policy, seed=0, node_limit=300)
        for step in result.record.steps:
            obs = step.observation
            assert obs.mask[step.action]
