"""Bounded-variable revised simplex with dual-simplex warm starts.

Solves min c.x subject to Ax <= b, l <= x <= u with a dense explicit basis
inverse kept current through eta (product-form) updates and refactorized
every REFACTOR_EVERY pivots. Slack variables make the working matrix
[A | I]; a cold solve starts from the slack basis with nonbasic statuses
chosen dual-feasible when possible, falling back to a zero-cost dual
phase 1. A warm solve reinstalls the parent basis after a single bound
change; nonbasic values slide to the moved bound and dual feasibility is
preserved, so the dual simplex finishes the job.

Pricing is Dantzig by default with a permanent switch to Bland's rule once
the cumulative degenerate-pivot count passes BLAND_AFTER, which guarantees
termination. The pivot cap is 50*(n+m) per solve.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FEAS_TOL = 1e-7
COST_TOL = 1e-7
PIVOT_TOL = 1e-9
REFACTOR_EVERY = 50
BLAND_AFTER = 1000

BASIC, AT_LOWER, AT_UPPER, NB_FREE = 0, 1, 2, 3

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERLIMIT = "iterlimit"


@dataclass
class Basis:
    status: np.ndarray  # (n+m,) int8, one of the four status codes
    basic: np.ndarray   # (m,) column index basic in each row

    def copy(self) -> "Basis":
        return Basis(self.status.copy(), self.basic.copy())


@dataclass
class LpSolution:
    status: str
    x: np.ndarray            # structural variable values (n,)
    objective: float
    basis: Basis | None
    iterations: int
    duals: np.ndarray | None          # y (m,)
    reduced_costs: np.ndarray | None  # structural part (n,)
    fallback_cold: bool = False


class SingularBasisError(RuntimeError):
    pass


class SimplexSolver:
    """Reusable solver for one constraint matrix; bounds vary per call."""

    def __init__(self, a_dense: np.ndarray, b: np.ndarray, c: np.ndarray):
        a_dense = np.asarray(a_dense, dtype=np.float64)
        self.m, self.n = a_dense.shape
        self.full = np.hstack([a_dense, np.eye(self.m)])
        self.cost = np.concatenate([np.asarray(c, dtype=np.float64), np.zeros(self.m)])
        self.b = np.asarray(b, dtype=np.float64)

    # -- public API --------------------------------------------------------

    def solve_cold(self, l: np.ndarray, u: np.ndarray) -> LpSolution:
        lf, uf = self._full_bounds(l, u)
        if np.any(lf > uf + FEAS_TOL):
            return LpSolution(INFEASIBLE, np.full(self.n, np.nan), np.inf, None, 0, None, None)
        basis = self._slack_basis(lf, uf)
        return self._run(lf, uf, basis)

    def solve_warm(self, l: np.ndarray, u: np.ndarray, parent_basis: Basis) -> LpSolution:
        """Re-solve after bound changes, starting from the parent's optimal basis."""
        lf, uf = self._full_bounds(l, u)
        if np.any(lf > uf + FEAS_TOL):
            return LpSolution(INFEASIBLE, np.full(self.n, np.nan), np.inf, None, 0, None, None)
        basis = parent_basis.copy()
        # a status that no longer matches a finite bound degrades to free
        no_lo = ~np.isfinite(lf)
        no_hi = ~np.isfinite(uf)
        basis.status[(basis.status == AT_LOWER) & no_lo] = NB_FREE
        basis.status[(basis.status == AT_UPPER) & no_hi] = NB_FREE
        try:
            return self._run(lf, uf, basis)
        except SingularBasisError:
            out = self.solve_cold(l, u)
            out.fallback_cold = True
            return out

    # -- internals ----------------------------------------------------------

    def _full_bounds(self, l, u):
        lf = np.concatenate([np.asarray(l, dtype=np.float64), np.zeros(self.m)])
        uf = np.concatenate([np.asarray(u, dtype=np.float64), np.full(self.m, np.inf)])
        return lf, uf

    def _slack_basis(self, lf, uf) -> Basis:
        status = np.empty(self.n + self.m, dtype=np.int8)
        for j in range(self.n):
            cj = self.cost[j]
            if cj > 0:
                status[j] = AT_LOWER if np.isfinite(lf[j]) else NB_FREE
            elif cj < 0:
                status[j] = AT_UPPER if np.isfinite(uf[j]) else NB_FREE
            else:
                if np.isfinite(lf[j]):
                    status[j] = AT_LOWER
                elif np.isfinite(uf[j]):
                    status[j] = AT_UPPER
                else:
                    status[j] = NB_FREE
        status[self.n:] = BASIC
        basic = np.arange(self.n, self.n + self.m, dtype=np.int64)
        return Basis(status, basic)

    def _nb_values(self, basis: Basis, lf, uf) -> np.ndarray:
        vals = np.zeros(self.n + self.m)
        at_lo = basis.status == AT_LOWER
        at_hi = basis.status == AT_UPPER
        vals[at_lo] = lf[at_lo]
        vals[at_hi] = uf[at_hi]
        return vals

    def _factorize(self, basis: Basis) -> np.ndarray:
        mat = self.full[:, basis.basic]
        try:
            binv = np.linalg.inv(mat)
        except np.linalg.LinAlgError as exc:
            raise SingularBasisError(str(exc)) from exc
        if not np.all(np.isfinite(binv)):
            raise SingularBasisError("non-finite basis inverse")
        return binv

    def _run(self, lf, uf, basis: Basis) -> LpSolution:
        max_iter = 50 * (self.n + self.m)
        state = _State(self, lf, uf, basis, max_iter)

        if state.dual_feasible():
            status = state.dual_simplex(self.cost)
        elif state.primal_feasible():
            status = state.primal_simplex()
        else:
            status = state.dual_simplex(np.zeros_like(self.cost))  # zero-cost phase 1
            if status == OPTIMAL:
                status = state.primal_simplex()
            elif status == INFEASIBLE:
                pass
        if status == OPTIMAL and not state.primal_feasible():
            # dual simplex ended optimal w.r.t. costs; polish any residual primal work
            status = state.primal_simplex()
        return state.solution(status)


class _State:
    """Mutable solve state: bounds, basis, inverse, values, counters."""

    def __init__(self, solver: SimplexSolver, lf, uf, basis: Basis, max_iter: int):
        self.sv = solver
        self.lf, self.uf = lf, uf
        self.basis = basis
        self.binv = solver._factorize(basis)
        self.vals = solver._nb_values(basis, lf, uf)
        self._recompute_basics()
        self.iters = 0
        self.max_iter = max_iter
        self.degenerate = 0
        self.bland = False
        self.pivots_since_refactor = 0

    # basic-value bookkeeping

    def _recompute_basics(self):
        nb_vals = self.vals.copy()
        nb_vals[self.basis.basic] = 0.0
        rhs = self.sv.b - self.sv.full @ nb_vals
        self.vals[self.basis.basic] = self.binv @ rhs

    def _refactor_if_due(self):
        self.pivots_since_refactor += 1
        if self.pivots_since_refactor >= REFACTOR_EVERY:
            self.binv = self.sv._factorize(self.basis)
            self._recompute_basics()
            self.pivots_since_refactor = 0

    def _eta_update(self, r: int, alpha: np.ndarray):
        piv = alpha[r]
        if abs(piv) < PIVOT_TOL:
            raise SingularBasisError("pivot element too small")
        self.binv[r, :] /= piv
        rest = alpha.copy()
        rest[r] = 0.0
        self.binv -= np.outer(rest, self.binv[r, :])

    # feasibility predicates

    def primal_feasible(self) -> bool:
        bi = self.basis.basic
        v = self.vals[bi]
        return bool(np.all(v >= self.lf[bi] - FEAS_TOL) and np.all(v <= self.uf[bi] + FEAS_TOL))

    def reduced_costs(self, cost) -> tuple[np.ndarray, np.ndarray]:
        y = cost[self.basis.basic] @ self.binv
        d = cost - y @ self.sv.full
        d[self.basis.basic] = 0.0
        return y, d

    def dual_feasible(self) -> bool:
        _, d = self.reduced_costs(self.sv.cost)
        st = self.basis.status
        bad = ((st == AT_LOWER) & (d < -COST_TOL)) | \
              ((st == AT_UPPER) & (d > COST_TOL)) | \
              ((st == NB_FREE) & (np.abs(d) > COST_TOL))
        return not bool(bad.any())

    def _note_degenerate(self, step: float):
        if abs(step) < PIVOT_TOL:
            self.degenerate += 1
            if self.degenerate >= BLAND_AFTER:
                self.bland = True

    # primal simplex ---------------------------------------------------------

    def primal_simplex(self) -> str:
        cost = self.sv.cost
        while True:
            if self.iters >= self.max_iter:
                return ITERLIMIT
            _, d = self.reduced_costs(cost)
            st = self.basis.status
            can_up = ((st == AT_LOWER) | (st == NB_FREE)) & (d < -COST_TOL)
            can_dn = ((st == AT_UPPER) | (st == NB_FREE)) & (d > COST_TOL)
            eligible = np.where(can_up | can_dn)[0]
            if eligible.size == 0:
                return OPTIMAL
            if self.bland:
                q = int(eligible[0])
            else:
                q = int(eligible[np.argmax(np.abs(d[eligible]))])
            direction = 1.0 if can_up[q] else -1.0

            alpha = self.binv @ self.sv.full[:, q]
            # steps of basic vars per unit step of x_q: dx_B = -direction*alpha
            delta = -direction * alpha
            bi = self.basis.basic
            t_best = np.inf
            r_best = -1
            if np.isfinite(self.lf[q]) and np.isfinite(self.uf[q]):
                t_best = self.uf[q] - self.lf[q]  # bound flip
            lo_block = delta < -PIVOT_TOL
            hi_block = delta > PIVOT_TOL
            with np.errstate(divide="ignore", invalid="ignore"):
                t_lo = np.where(lo_block & np.isfinite(self.lf[bi]),
                                (self.vals[bi] - self.lf[bi]) / -delta, np.inf)
                t_hi = np.where(hi_block & np.isfinite(self.uf[bi]),
                                (self.uf[bi] - self.vals[bi]) / delta, np.inf)
            t_rows = np.minimum(t_lo, t_hi)
            t_rows = np.maximum(t_rows, 0.0)
            r_candidates = np.where(t_rows < t_best - PIVOT_TOL)[0]
            if r_candidates.size:
                t_min = float(np.min(t_rows[r_candidates]))
                ties = r_candidates[np.isclose(t_rows[r_candidates], t_min, rtol=0.0, atol=PIVOT_TOL)]
                if self.bland:
                    r_best = int(ties[np.argmin(bi[ties])])
                else:
                    r_best = int(ties[np.argmax(np.abs(alpha[ties]))])
                t_best = max(t_min, 0.0)
            if not np.isfinite(t_best):
                return UNBOUNDED

            self.iters += 1
            self._note_degenerate(t_best)
            if r_best < 0:
                # bound flip: q moves across its range, basis unchanged
                self.vals[bi] += delta * t_best
                self.vals[q] = self.uf[q] if st[q] == AT_LOWER else self.lf[q]
                self.basis.status[q] = AT_UPPER if st[q] == AT_LOWER else AT_LOWER
                continue
            leaving = int(bi[r_best])
            self.vals[bi] += delta * t_best
            self.vals[q] = self.vals[q] + direction * t_best
            hit_lower = delta[r_best] < 0
            self.basis.status[leaving] = AT_LOWER if hit_lower else AT_UPPER
            self.vals[leaving] = self.lf[leaving] if hit_lower else self.uf[leaving]
            self.basis.status[q] = BASIC
            self.basis.basic[r_best] = q
            self._eta_update(r_best, alpha)
            self._refactor_if_due()

    # dual simplex -----------------------------------------------------------

    def dual_simplex(self, cost: np.ndarray) -> str:
        while True:
            if self.iters >= self.max_iter:
                return ITERLIMIT
            bi = self.basis.basic
            v = self.vals[bi]
            below = self.lf[bi] - v
            above = v - self.uf[bi]
            below[~np.isfinite(below)] = -np.inf
            above[~np.isfinite(above)] = -np.inf
            viol = np.maximum(below, above)
            if float(viol.max(initial=-np.inf)) <= FEAS_TOL:
                return OPTIMAL
            if self.bland:
                rows = np.where(viol > FEAS_TOL)[0]
                r = int(rows[np.argmin(bi[rows])])
            else:
                r = int(np.argmax(viol))
            is_below = below[r] >= above[r]

            rho = self.binv[r, :] @ self.sv.full
            rho[bi] = 0.0
            st = self.basis.status
            _, d = self.reduced_costs(cost)
            if is_below:
                # raise x_B[r]: lower-status vars with rho<0 or upper-status with rho>0
                elig = ((st == AT_LOWER) & (rho < -PIVOT_TOL)) | \
                       ((st == AT_UPPER) & (rho > PIVOT_TOL)) | \
                       ((st == NB_FREE) & (np.abs(rho) > PIVOT_TOL))
            else:
                elig = ((st == AT_LOWER) & (rho > PIVOT_TOL)) | \
                       ((st == AT_UPPER) & (rho < -PIVOT_TOL)) | \
                       ((st == NB_FREE) & (np.abs(rho) > PIVOT_TOL))
            cand = np.where(elig)[0]
            if cand.size == 0:
                return INFEASIBLE
            ratios = np.abs(d[cand]) / np.abs(rho[cand])
            if self.bland:
                best = float(np.min(ratios))
                tied = cand[np.isclose(ratios, best, rtol=0.0, atol=COST_TOL)]
                q = int(tied.min())
            else:
                best = float(np.min(ratios))
                tied = cand[np.isclose(ratios, best, rtol=0.0, atol=COST_TOL)]
                q = int(tied[np.argmax(np.abs(rho[tied]))])

            target = self.lf[bi[r]] if is_below else self.uf[bi[r]]
            dx_q = (target - self.vals[bi[r]]) / (-rho[q])
            self.iters += 1
            self._note_degenerate(best)

            alpha = self.binv @ self.sv.full[:, q]
            leaving = int(bi[r])
            self.vals[bi] += -alpha * dx_q
            self.vals[q] = self.vals[q] + dx_q
            self.vals[leaving] = target
            self.basis.status[leaving] = AT_LOWER if is_below else AT_UPPER
            self.basis.status[q] = BASIC
            self.basis.basic[r] = q
            self._eta_update(r, alpha)
            self._refactor_if_due()

    # result assembly ---------------------------------------------------------

    def solution(self, status: str) -> LpSolution:
        n = self.sv.n
        if status != OPTIMAL:
            obj = np.inf if status == INFEASIBLE else -np.inf if status == UNBOUNDED else np.nan
            return LpSolution(status, self.vals[:n].copy(), obj, self.basis.copy(),
                              self.iters, None, None)
        y, d = self.reduced_costs(self.sv.cost)
        x = self.vals[:n].copy()
        obj = float(self.sv.cost[:n] @ x)
        return LpSolution(OPTIMAL, x, obj, self.basis.copy(), self.iters,
                          y.copy(), d[:n].copy())
