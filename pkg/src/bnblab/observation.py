"""Bipartite-graph feature extraction for one B&B node.

Variable features (19, in order):
  0  objective coefficient / max(1, max |c|)                 in [-1, 1]
  1  finite-lower-bound flag                                 {0, 1}
  2  finite-upper-bound flag                                 {0, 1}
  3  lower bound / bound scale (0 when infinite)             in [-1, 1]
  4  upper bound / bound scale (0 when infinite)             in [-1, 1]
  5  integer flag                                            {0, 1}
  6  LP value / max(1, max |x|)                              in [-1, 1]
  7  fractionality (distance to nearest integer, int vars)   in [0, 0.5]
  8  LP value minus floor                                    in [0, 1)
  9  ceil minus LP value                                     in [0, 1)
 10  basic flag                                              {0, 1}
 11  nonbasic-at-lower flag                                  {0, 1}
 12  nonbasic-at-upper flag                                  {0, 1}
 13  reduced-cost sign                                       {-1, 0, 1}
 14  incumbent-present flag                                  {0, 1}
 15  incumbent value / LP value scale, clipped               in [-10, 10]
 16  incumbent-agreement flag (|x_j - inc_j| <= 1e-6)        {0, 1}
 17  depth / (depth + 8)                                     in [0, 1)
 18  fractionality minus node mean fractionality             in [-0.5, 0.5]

Constraint features (5): rhs / max(1, max |b|); slack / max(1, |b_i|)
clipped to [-10, 10]; dual sign; row 2-norm / max row norm; tightness flag.
Edge feature (1): coefficient / max(1, max |A_ij|).

Configured dimensions larger than these lists are zero-padded on the right.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .milp import INTEGRALITY_TOL, MilpInstance
from .simplex import AT_LOWER, AT_UPPER, BASIC, LpSolution

BASE_DV, BASE_DC, BASE_DE = 19, 5, 1


@dataclass
class BipartiteObservation:
    var_feats: np.ndarray    # (n, d_v)
    con_feats: np.ndarray    # (m, d_c)
    edge_rows: np.ndarray    # (nnz,)
    edge_cols: np.ndarray    # (nnz,)
    edge_feats: np.ndarray   # (nnz, d_e)
    mask: np.ndarray         # (n,) bool, fractional integer candidates

    @property
    def n(self) -> int:
        return self.var_feats.shape[0]

    @property
    def m(self) -> int:
        return self.con_feats.shape[0]

    @property
    def candidates(self) -> np.ndarray:
        return np.flatnonzero(self.mask)

    def state_hash(self) -> bytes:
        h = hashlib.blake2b(digest_size=16)
        for arr in (self.var_feats, self.con_feats, self.edge_rows,
                    self.edge_cols, self.edge_feats, self.mask):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.digest()


def fractional_candidates(instance: MilpInstance, x: np.ndarray,
                          tol: float = INTEGRALITY_TOL) -> np.ndarray:
    mask = np.zeros(instance.n, dtype=bool)
    ii = instance.integer_idx
    frac = np.abs(x[ii] - np.round(x[ii]))
    mask[ii[frac > tol]] = True
    return mask


def extract_observation(instance: MilpInstance, l: np.ndarray, u: np.ndarray,
                        sol: LpSolution, incumbent: np.ndarray | None,
                        depth: int, d_v: int = BASE_DV, d_c: int = BASE_DC,
                        d_e: int = BASE_DE) -> BipartiteObservation:
    if sol is None or sol.status != "optimal":
        raise ValueError("observation requires an optimal LP solution at the node")
    if d_v < BASE_DV or d_c < BASE_DC or d_e < BASE_DE:
        raise ValueError(f"configured dims must be >= ({BASE_DV},{BASE_DC},{BASE_DE})")
    n, m = instance.n, instance.m
    x = sol.x
    c = instance.c
    b = instance.b

    cscale = max(1.0, float(np.max(np.abs(c))) if n else 1.0)
    finite_bounds = np.concatenate([l[np.isfinite(l)], u[np.isfinite(u)]])
    bscale = max(1.0, float(np.max(np.abs(finite_bounds))) if finite_bounds.size else 1.0)
    xscale = max(1.0, float(np.max(np.abs(x))) if n else 1.0)

    is_int = np.zeros(n, dtype=bool)
    is_int[instance.integer_idx] = True
    frac_dist = np.abs(x - np.round(x)) * is_int
    mean_frac = float(frac_dist[is_int].mean()) if is_int.any() else 0.0

    vf = np.zeros((n, d_v))
    vf[:, 0] = c / cscale
    vf[:, 1] = np.isfinite(l)
    vf[:, 2] = np.isfinite(u)
    vf[:, 3] = np.where(np.isfinite(l), l, 0.0) / bscale
    vf[:, 4] = np.where(np.isfinite(u), u, 0.0) / bscale
    vf[:, 5] = is_int
    vf[:, 6] = x / xscale
    vf[:, 7] = frac_dist
    vf[:, 8] = x - np.floor(x)
    vf[:, 9] = np.ceil(x) - x
    st = sol.basis.status[:n]
    vf[:, 10] = st == BASIC
    vf[:, 11] = st == AT_LOWER
    vf[:, 12] = st == AT_UPPER
    vf[:, 13] = np.sign(np.where(np.abs(sol.reduced_costs) > 1e-9, sol.reduced_costs, 0.0))
    if incumbent is not None:
        vf[:, 14] = 1.0
        vf[:, 15] = np.clip(incumbent / xscale, -10.0, 10.0)
        vf[:, 16] = np.abs(x - incumbent) <= 1e-6
    vf[:, 17] = depth / (depth + 8.0)
    vf[:, 18] = (frac_dist - mean_frac) * is_int

    dense = instance.dense_a()
    row_norm = np.linalg.norm(dense, axis=1) if m else np.zeros(0)
    max_norm = max(1e-12, float(row_norm.max()) if m else 1.0)
    slack = b - dense @ x if m else np.zeros(0)
    cf = np.zeros((m, d_c))
    if m:
        cf[:, 0] = b / max(1.0, float(np.max(np.abs(b))))
        cf[:, 1] = np.clip(slack / np.maximum(1.0, np.abs(b)), -10.0, 10.0)
        duals = sol.duals if sol.duals is not None else np.zeros(m)
        cf[:, 2] = np.sign(np.where(np.abs(duals) > 1e-9, duals, 0.0))
        cf[:, 3] = row_norm / max_norm
        cf[:, 4] = slack <= 1e-7 * (1.0 + np.abs(b))

    ascale = max(1.0, float(np.max(np.abs(instance.a_vals))) if instance.nnz else 1.0)
    ef = np.zeros((instance.nnz, d_e))
    if instance.nnz:
        ef[:, 0] = instance.a_vals / ascale

    obs = BipartiteObservation(
        var_feats=vf, con_feats=cf,
        edge_rows=instance.a_rows.copy(), edge_cols=instance.a_cols.copy(),
        edge_feats=ef, mask=fractional_candidates(instance, x),
    )
    for arr in (obs.var_feats, obs.con_feats, obs.edge_feats):
        if not np.all(np.isfinite(arr)):
            raise ValueError("non-finite feature produced")
    return obs
