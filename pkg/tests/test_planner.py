"""Gumbel search: budget accounting, selection rules, backup arithmetic."""

import numpy as np
import pytest

from bnblab.bnb import BnbEngine
from bnblab.generators import GeneratorConfig, generate
from bnblab.model import BnbModel, ModelConfig
from bnblab.observation import BipartiteObservation
from bnblab.planner import (GumbelConfig, ImaginedNode, SearchNode,
                            _completed_q, _halving_schedule, _normalized_q,
                            _select_interior, improved_policy, search)


def root_obs(seed=4):
    inst = generate(GeneratorConfig(family="mk", seed=seed,
                                    params={"items": 6, "knapsacks": 2}))
    obs = BnbEngine(inst).current_observation()
    assert obs is not None and obs.candidates.size >= 3
    return obs


def small_model(seed=1):
    return BnbModel(ModelConfig(d_h=8, d_proj=4, m_b=6), seed=seed)


class TestBudget:
    @pytest.mark.parametrize("budget", [0, 1, 2, 3, 4, 5, 7, 8, 16, 31, 32, 50])
    def test_budget_spent_exactly(self, budget):
        obs = root_obs()
        model = small_model()
        cfg = GumbelConfig(simulations=budget, root_actions=4)
        res = search(obs, model, cfg, seed=3)
        assert res.simulations == budget
        assert int(res.root_visits.sum()) == budget
        assert len(res.per_sim_calls) == budget

    def test_call_counts_per_simulation(self):
        obs = root_obs()
        model = small_model()
        res = search(obs, model, GumbelConfig(simulations=24, root_actions=4),
                     seed=5)
        # an expanding simulation costs one dynamics and two prediction calls;
        # a replay that bottoms out at a terminal costs nothing
        assert all(c in ((1, 2), (0, 0)) for c in res.per_sim_calls)
        assert res.dynamics_calls == sum(g for g, _ in res.per_sim_calls)
        assert res.prediction_calls == 2 * res.dynamics_calls

    def test_zero_budget_is_network_argmax(self):
        obs = root_obs()
        model = small_model()
        res = search(obs, model, GumbelConfig(simulations=0), seed=9)
        logits = model.policy_logits(obs)
        cands = obs.candidates
        assert res.action == int(cands[np.argmax(logits[cands])])
        assert res.dynamics_calls == 0 and res.prediction_calls == 0
        probs = np.array([res.policy[int(a)] for a in cands])
        assert probs.sum() == pytest.approx(1.0)
        # with no visits the policy collapses to the masked prior
        want = np.exp(logits[cands] - logits[cands].max())
        assert np.allclose(probs, want / want.sum(), atol=1e-12)

    def test_single_arm_takes_whole_budget(self):
        obs = root_obs()
        model = small_model()
        res = search(obs, model, GumbelConfig(simulations=6, root_actions=1),
                     seed=2)
        assert int(res.root_visits.sum()) == 6
        assert np.count_nonzero(res.root_visits) == 1


class TestHalvingSchedule:
    def test_m4_n8(self):
        assert _halving_schedule(4, 8) == [(4, 1), (2, 2)]

    def test_m1_gets_everything(self):
        assert _halving_schedule(1, 13) == [(1, 13)]

    def test_leftover_whole_rounds(self):
        # 8 spent by the base schedule, 2 left = exactly one extra round of 2
        assert _halving_schedule(4, 10) == [(4, 1), (2, 3)]

    def test_leftover_partial_round_overprovisions(self):
        sched = _halving_schedule(4, 9)
        assert sched == [(4, 1), (2, 3)]
        assert sum(s * v for s, v in sched) >= 9

    @pytest.mark.parametrize("m", [1, 2, 3, 4, 5, 8, 10])
    @pytest.mark.parametrize("budget", [1, 2, 5, 8, 17, 50])
    def test_never_underprovisions(self, m, budget):
        sched = _halving_schedule(m, budget)
        assert sum(s * v for s, v in sched) >= budget
        sizes = [s for s, _ in sched]
        assert sizes == sorted(sizes, reverse=True)
        assert sizes[-1] >= 1

    def test_m4_n8_visit_multiset(self):
        inst = generate(GeneratorConfig(family="mis", seed=0,
                                        params={"nodes": 16, "edge_prob": 0.25}))
        obs = BnbEngine(inst).current_observation()
        assert obs.candidates.size >= 4
        model = small_model()
        res = search(obs, model, GumbelConfig(simulations=8, root_actions=4),
                     seed=7)
        visited = sorted(int(v) for v in res.root_visits if v > 0)
        assert visited == [1, 1, 3, 3]


class TestRootSelection:
    def test_zero_gumbel_visits_top_prior_arms_only(self):
        obs = root_obs()
        model = small_model()
        cfg = GumbelConfig(simulations=8, root_actions=2, zero_gumbel=True)
        res = search(obs, model, cfg, seed=0)
        cands = obs.candidates
        logits = model.policy_logits(obs)[cands]
        top2 = set(np.argsort(-logits, kind="stable")[:2])
        assert set(np.flatnonzero(res.root_visits)) <= top2
        assert res.action in {int(cands[i]) for i in top2}

    def test_same_seed_same_outcome(self):
        obs = root_obs()
        model = small_model()
        cfg = GumbelConfig(simulations=12, root_actions=4)
        a = search(obs, model, cfg, seed=42)
        b = search(obs, model, cfg, seed=42)
        assert a.action == b.action
        assert np.array_equal(a.root_visits, b.root_visits)
        assert np.array_equal(a.root_values, b.root_values)

    def test_empty_mask_rejected(self):
        obs = root_obs()
        bare = BipartiteObservation(obs.var_feats, obs.con_feats,
                                    obs.edge_rows, obs.edge_cols,
                                    obs.edge_feats,
                                    np.zeros(obs.n, dtype=bool))
        with pytest.raises(ValueError):
            search(bare, small_model(), GumbelConfig(simulations=2))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            GumbelConfig(root_actions=0).validate()
        with pytest.raises(ValueError):
            GumbelConfig(simulations=-1).validate()


def hand_node(logits, visits, qvals):
    inner = ImaginedNode(latent=None, depth=0, pos=(),
                         policy_logits=np.asarray(logits, dtype=float),
                         value=-3.0, p_branch=1.0)
    node = SearchNode([inner], 0, np.arange(len(logits)))
    node.visit = np.asarray(visits, dtype=float)
    node.qval = np.asarray(qvals, dtype=float)
    return node


class TestInteriorSelection:
    # both cases worked out by hand from the argmax(pi' - N/(1+sum N)) rule

    def test_prior_plus_quality_wins(self):
        # arm 1 is visited once with the best Q; sigma lifts it far above
        # the visit penalty, so it is selected again
        node = hand_node([1.0, 0.0, -1.0], [2, 1, 0], [-5.0, -3.0, 0.0])
        cfg = GumbelConfig(c_visit=50.0, c_scale=0.1)
        assert _select_interior(node, node, cfg) == 1

    def test_visit_penalty_redirects(self):
        # degenerate Q range makes sigma uniform, so the heavily visited
        # arm 1 loses to the highest-prior arm 0
        node = hand_node([1.0, 0.0, -1.0], [0, 4, 0], [0.0, -3.0, 0.0])
        cfg = GumbelConfig(c_visit=50.0, c_scale=0.1)
        assert _select_interior(node, node, cfg) == 0

    def test_completed_q_prior_weighted_fill(self):
        node = hand_node([1.0, 0.0, -1.0], [2, 1, 0], [-5.0, -3.0, 0.0])
        q = _completed_q(node)
        assert q[0] == -5.0 and q[1] == -3.0
        p = np.exp([0.0, -1.0])
        want = (p[0] * -5.0 + p[1] * -3.0) / p.sum()
        assert q[2] == pytest.approx(want, abs=1e-12)

    def test_no_visits_normalizes_to_half(self):
        node = hand_node([1.0, 0.0, -1.0], [0, 0, 0], [0.0, 0.0, 0.0])
        assert np.array_equal(_normalized_q(node, node), [0.5, 0.5, 0.5])

    def test_equal_q_normalizes_to_half(self):
        node = hand_node([1.0, 0.0, -1.0], [1, 2, 0], [-4.0, -4.0, 0.0])
        assert np.array_equal(_normalized_q(node, node), [0.5, 0.5, 0.5])

    def test_improved_policy_without_visits_is_prior(self):
        node = hand_node([1.0, 0.0, -1.0], [0, 0, 0], [0.0, 0.0, 0.0])
        pol = improved_policy(node, GumbelConfig())
        e = np.exp([0.0, -1.0, -2.0])
        assert np.allclose(pol, e / e.sum(), atol=1e-12)


class TestBackup:
    def test_returns_decrement_along_path(self):
        obs = root_obs()
        model = small_model()
        cfg = GumbelConfig(simulations=20, root_actions=4, trace=True)
        res = search(obs, model, cfg, seed=11)
        assert len(res.trace) == 20
        for rec in res.trace:
            length = len(rec["path"])
            if length == 0:
                continue
            want = [rec["leaf_value"] - (length - 1 - i) for i in range(length)]
            assert np.allclose(rec["g"], want, atol=1e-12)

    def test_root_q_is_mean_of_root_returns(self):
        obs = root_obs()
        model = small_model()
        cfg = GumbelConfig(simulations=16, root_actions=4, trace=True)
        res = search(obs, model, cfg, seed=13)
        sums = {}
        counts = {}
        for rec in res.trace:
            if not rec["path"]:
                continue
            arm = rec["path"][0]
            sums[arm] = sums.get(arm, 0.0) + rec["g"][0]
            counts[arm] = counts.get(arm, 0) + 1
        for arm, n in counts.items():
            assert res.root_visits[arm] == n
            assert res.root_values[arm] == pytest.approx(sums[arm] / n, abs=1e-12)

    def test_search_value_never_positive(self):
        # remaining work is a count of nodes still to close, so every
        # imagined return is <= 0 (exactly 0 when the subtree is all closed)
        obs = root_obs()
        model = small_model()
        res = search(obs, model, GumbelConfig(simulations=10, root_actions=3),
                     seed=17)
        assert res.value <= 0.0

    def test_depth_cap_bootstraps_without_new_calls(self):
        obs = root_obs()
        model = small_model()
        cfg = GumbelConfig(simulations=4, root_actions=1, depth_cap=1,
                           trace=True)
        res = search(obs, model, cfg, seed=19)
        assert res.per_sim_calls == [(1, 2), (0, 0), (0, 0), (0, 0)]
        assert res.dynamics_calls == 1
        leaves = {rec["leaf_value"] for rec in res.trace}
        assert len(leaves) == 1
        arm = int(np.flatnonzero(res.root_visits)[0])
        assert res.root_values[arm] == pytest.approx(leaves.pop(), abs=1e-12)
