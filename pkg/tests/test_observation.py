"""Bipartite feature extraction at a solved node."""

import numpy as np
import pytest

from bnblab.generators import GeneratorConfig, generate
from bnblab.milp import MilpInstance
from bnblab.observation import (BASE_DC, BASE_DE, BASE_DV,
                                BipartiteObservation, extract_observation,
                                fractional_candidates)
from bnblab.simplex import SimplexSolver


def solved_instance(seed=0):
    inst = generate(GeneratorConfig("mk", seed=seed,
                                    params={"items": 6, "knapsacks": 2}))
    solver = SimplexSolver(inst.dense_a(), inst.b, inst.c)
    sol = solver.solve_cold(inst.l, inst.u)
    assert sol.status == "optimal"
    return inst, sol


def test_shapes_and_defaults():
    inst, sol = solved_instance()
    obs = extract_observation(inst, inst.l, inst.u, sol, None, depth=0)
    assert obs.var_feats.shape == (inst.n, BASE_DV)
    assert obs.con_feats.shape == (inst.m, BASE_DC)
    assert obs.edge_feats.shape == (inst.nnz, BASE_DE)
    assert obs.edge_rows.shape == obs.edge_cols.shape == (inst.nnz,)
    assert obs.n == inst.n and obs.m == inst.m


def test_padding_above_base_dims():
    inst, sol = solved_instance()
    obs = extract_observation(inst, inst.l, inst.u, sol, None, depth=0,
                              d_v=24, d_c=8, d_e=3)
    assert obs.var_feats.shape == (inst.n, 24)
    assert np.all(obs.var_feats[:, BASE_DV:] == 0.0)
    assert np.all(obs.con_feats[:, BASE_DC:] == 0.0)
    assert np.all(obs.edge_feats[:, BASE_DE:] == 0.0)


def test_dims_below_base_rejected():
    inst, sol = solved_instance()
    with pytest.raises(ValueError):
        extract_observation(inst, inst.l, inst.u, sol, None, depth=0, d_v=5)


def test_mask_matches_independent_recount():
    inst, sol = solved_instance(seed=5)
    obs = extract_observation(inst, inst.l, inst.u, sol, None, depth=0)
    frac = np.abs(sol.x - np.round(sol.x))
    expect = np.zeros(inst.n, dtype=bool)
    for j in inst.integer_idx:
        if frac[j] > 1e-6:
            expect[j] = True
    np.testing.assert_array_equal(obs.mask, expect)
    np.testing.assert_array_equal(obs.candidates, np.flatnonzero(expect))


def test_features_finite_and_ranged():
    inst, sol = solved_instance(seed=3)
    obs = extract_observation(inst, inst.l, inst.u, sol, inst.witness, depth=4)
    vf = obs.var_feats
    assert np.all(np.isfinite(vf))
    assert np.all(np.abs(vf[:, 0]) <= 1.0)         # scaled objective
    assert np.all((vf[:, 7] >= 0) & (vf[:, 7] <= 0.5))  # fractionality
    assert np.all(np.isin(vf[:, 5], (0.0, 1.0)))   # integer flag
    # basic/at-lower/at-upper flags partition the variables
    assert np.all(vf[:, 10] + vf[:, 11] + vf[:, 12] <= 1.0 + 1e-12)
    assert np.all(vf[:, 17] == 4.0 / 12.0)         # depth feature


def test_incumbent_features_toggle():
    inst, sol = solved_instance(seed=2)
    without = extract_observation(inst, inst.l, inst.u, sol, None, depth=0)
    with_inc = extract_observation(inst, inst.l, inst.u, sol, inst.witness, depth=0)
    assert np.all(without.var_feats[:, 14] == 0.0)
    assert np.all(with_inc.var_feats[:, 14] == 1.0)


def test_state_hash_distinguishes_depth():
    inst, sol = solved_instance(seed=1)
    a = extract_observation(inst, inst.l, inst.u, sol, None, depth=0)
    b = extract_observation(inst, inst.l, inst.u, sol, None, depth=1)
    same = extract_observation(inst, inst.l, inst.u, sol, None, depth=0)
    assert a.state_hash() != b.state_hash()
    assert a.state_hash() == same.state_hash()


def test_infinite_bounds_produce_flags_not_values():
    inst = MilpInstance(
        n=2, m=1, a_rows=[0, 0], a_cols=[0, 1], a_vals=[1.0, 1.0],
        b=[4.0], c=[1.0, -1.0], l=[0.0, -np.inf], u=[np.inf, 3.0],
        integer_idx=[0])
    solver = SimplexSolver(inst.dense_a(), inst.b, inst.c)
    sol = solver.solve_cold(inst.l, inst.u)
    assert sol.status == "optimal"
    obs = extract_observation(inst, inst.l, inst.u, sol, None, depth=0)
    vf = obs.var_feats
    assert vf[0, 1] == 1.0 and vf[0, 2] == 0.0  # finite lower, infinite upper
    assert vf[1, 1] == 0.0 and vf[1, 2] == 1.0
    assert np.all(np.isfinite(vf))


def test_fractional_candidates_tolerance():
    inst = MilpInstance(
        n=3, m=1, a_rows=[0, 0, 0], a_cols=[0, 1, 2], a_vals=[1.0, 1.0, 1.0],
        b=[10.0], c=[1.0, 1.0, 1.0], l=np.zeros(3), u=np.full(3, 5.0),
        integer_idx=[0, 1, 2])
    x = np.array([1.0 + 5e-7, 2.5, 3.0])
    mask = fractional_candidates(inst, x)
    np.testing.assert_array_equal(mask, [False, True, False])
