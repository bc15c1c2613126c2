"""Depth-first branch-and-bound over LP relaxations with warm-started children.

The search keeps an explicit stack of open nodes (children pushed
right-then-left so the floor child pops first) and advances one branching
step per transition: pop the deepest open node, re-check bound dominance
against the current incumbent (a node can be pruned on arrival when the
incumbent improved since it was created), otherwise ask the policy for a
fractional variable and create the floor/ceil children. Child LPs are
solved eagerly with the parent's basis so they can be classified
(infeasible / dominated / integral / open) as part of the transition.

Every episode is recorded: per branching step the observation, action,
search policy, and the open-node snapshot; per node its branchability
label, classification time, LP objective, and (after termination) the
exact final subtree size. Each branching step carries reward -1, so the
value of a state is minus the number of nodes still to be created or
finished, which the recorded snapshots let tests audit exactly.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .milp import INTEGRALITY_TOL, MilpInstance
from .observation import BipartiteObservation, extract_observation
from .simplex import INFEASIBLE, ITERLIMIT, OPTIMAL, UNBOUNDED, Basis, LpSolution, SimplexSolver

BOUND_PRUNE_TOL = 1e-9

ROOT, LEFT, RIGHT = "root", "left", "right"
OPEN, BRANCHED = "open", "closed-branched"
PRUNED_INFEASIBLE, PRUNED_BOUND, PRUNED_INTEGRAL = (
    "pruned-infeasible", "pruned-bound", "pruned-integral")

TERM_OPTIMAL, TERM_NODE_LIMIT, TERM_TIME_LIMIT = "optimal", "node-limit", "time-limit"


class LpFailure(RuntimeError):
    """An LP relaxation hit the pivot cap; the node solve is aborted."""


@dataclass
class BnbNode:
    node_id: int
    parent_id: int | None
    depth: int
    side: str
    branch_var: int | None = None       # variable whose bound this node tightened
    bound_kind: str | None = None       # 'u' for floor child, 'l' for ceil child
    bound_val: float | None = None
    status: str = OPEN
    lp_objective: float = np.nan
    tau: int = 0                        # step index at which the node was classified
    subtree_size: int | None = None
    child_ids: tuple[int, int] | None = None
    # transient payload, dropped once the node is closed
    l: np.ndarray | None = None
    u: np.ndarray | None = None
    lp: LpSolution | None = None


@dataclass
class EpisodeStep:
    node_id: int
    observation: BipartiteObservation
    action: int
    policy: dict[int, float]            # distribution over the candidate mask
    gub_before: float
    gub_after: float
    open_ids_before: tuple[int, ...]    # open stack at the instant the node was popped
    closed_before: int                  # nodes already classified closed at that instant
    depth: int


@dataclass
class EpisodeRecord:
    instance_name: str
    seed: int
    steps: list[EpisodeStep] = field(default_factory=list)
    nodes: dict[int, BnbNode] = field(default_factory=dict)
    total_nodes: int = 0
    complete: bool = False
    final_objective: float | None = None

    def branchable_label(self, node_id: int) -> int:
        return 1 if self.nodes[node_id].status == BRANCHED else 0


@dataclass
class SolveResult:
    instance: MilpInstance
    policy_name: str
    seed: int
    termination: str
    objective: float | None
    incumbent: np.ndarray | None
    node_count: int
    step_count: int
    wall_time: float
    lp_iterations: list[int]
    warm_iterations: list[int]
    cold_iterations: list[int]
    warm_times: list[float]
    cold_times: list[float]
    record: EpisodeRecord
    discovery_step: int | None = None


class BnbEngine:
    """One depth-first solve over a single instance; single-threaded."""

    def __init__(self, instance: MilpInstance, seed: int = 0,
                 node_limit: int = 200_000, time_limit: float = 600.0,
                 timing_mode: bool = False, d_v: int = 19, d_c: int = 5, d_e: int = 1):
        self.instance = instance
        self.seed = seed
        self.node_limit = node_limit
        self.time_limit = time_limit
        self.timing_mode = timing_mode
        self.dims = (d_v, d_c, d_e)
        self.solver = SimplexSolver(instance.dense_a(), instance.b, instance.c)

        self.nodes: dict[int, BnbNode] = {}
        self.stack: list[int] = []
        self.incumbent: np.ndarray | None = None
        self.gub: float = np.inf
        self.step_index = 0
        self.closed_count = 0
        self.next_id = 0
        self.start_time = time.perf_counter()
        self.lp_iterations: list[int] = []
        self.warm_iterations: list[int] = []
        self.cold_iterations: list[int] = []
        self.warm_times: list[float] = []
        self.cold_times: list[float] = []
        self.gub_history: list[float] = []
        self.record = EpisodeRecord(instance.name, seed)
        self.termination: str | None = None

        self._open_root()

    # -- setup ---------------------------------------------------------------

    def _open_root(self):
        root = BnbNode(self._take_id(), None, 0, ROOT,
                       l=self.instance.l.copy(), u=self.instance.u.copy())
        t0 = time.perf_counter()
        sol = self.solver.solve_cold(root.l, root.u)
        self.lp_iterations.append(sol.iterations)
        self.cold_times.append(time.perf_counter() - t0)
        if sol.status == ITERLIMIT:
            raise LpFailure(f"{self.instance.name}: root LP hit the pivot cap")
        if sol.status == UNBOUNDED:
            raise LpFailure(f"{self.instance.name}: root LP unbounded")
        root.lp = sol
        root.lp_objective = sol.objective if sol.status == OPTIMAL else np.inf
        self.nodes[root.node_id] = root
        self.record.nodes[root.node_id] = root
        if sol.status == INFEASIBLE:
            self._close(root, PRUNED_INFEASIBLE)
        elif self._is_integral(sol.x):
            self._accept_incumbent(sol.x, sol.objective)
            self._close(root, PRUNED_INTEGRAL)
        else:
            self.stack.append(root.node_id)

    def _take_id(self) -> int:
        nid = self.next_id
        self.next_id += 1
        return nid

    # -- state predicates ------------------------------------------------------

    @property
    def done(self) -> bool:
        return self.termination is not None or not self.stack

    def _is_integral(self, x: np.ndarray) -> bool:
        ii = self.instance.integer_idx
        return bool(np.all(np.abs(x[ii] - np.round(x[ii])) <= INTEGRALITY_TOL))

    def _dominated(self, objective: float) -> bool:
        # minimization: a node whose LP bound cannot beat the incumbent is cut;
        # ties are pruned
        return objective >= self.gub - BOUND_PRUNE_TOL

    # -- incumbents and closing -------------------------------------------------

    def _accept_incumbent(self, x: np.ndarray, objective: float):
        if objective < self.gub:
            self.incumbent = x.copy()
            self.gub = objective

    def _close(self, node: BnbNode, status: str):
        node.status = status
        node.tau = self.step_index
        node.l = node.u = node.lp = None  # keep nodes light once classified
        self.closed_count += 1

    # -- the public stepwise API -------------------------------------------------

    def current_node(self) -> BnbNode:
        """Pop dominated nodes until a branchable node surfaces; may finish the solve."""
        while self.stack:
            node = self.nodes[self.stack[-1]]
            if self._dominated(node.lp_objective):
                self.stack.pop()
                self._close(node, PRUNED_BOUND)
                continue
            return node
        return None

    def current_observation(self) -> BipartiteObservation | None:
        node = self.current_node()
        if node is None:
            return None
        d_v, d_c, d_e = self.dims
        return extract_observation(self.instance, node.l, node.u, node.lp,
                                   self.incumbent, node.depth, d_v, d_c, d_e)

    def transition(self, action: int, policy_dist: dict[int, float] | None = None,
                   observation: BipartiteObservation | None = None) -> None:
        """Apply one branching step at the current node."""
        node = self.current_node()
        if node is None:
            raise RuntimeError("transition on a terminal state")
        obs = observation if observation is not None else self.current_observation()
        if not obs.mask[action]:
            raise ValueError(f"action {action} outside the fractional-candidate mask")
        open_before = tuple(self.stack)
        closed_before = self.closed_count
        gub_before = self.gub
        self.stack.pop()

        xhat = float(node.lp.x[action])
        left = self._make_child(node, LEFT, action, "u", float(np.floor(xhat)))
        right = self._make_child(node, RIGHT, action, "l", float(np.ceil(xhat)))
        node.child_ids = (left.node_id, right.node_id)
        self._close(node, BRANCHED)

        # right pushed first so the floor child pops first (DFS goes left)
        for child in (right, left):
            if child.status == OPEN:
                self.stack.append(child.node_id)

        dist = policy_dist if policy_dist is not None else {action: 1.0}
        self.record.steps.append(EpisodeStep(
            node_id=node.node_id, observation=obs, action=int(action),
            policy={int(k): float(v) for k, v in dist.items()},
            gub_before=gub_before, gub_after=self.gub,
            open_ids_before=open_before, closed_before=closed_before,
            depth=node.depth,
        ))
        self.step_index += 1
        self.gub_history.append(self.gub)

        if len(self.nodes) >= self.node_limit:
            self.termination = TERM_NODE_LIMIT
        elif time.perf_counter() - self.start_time > self.time_limit:
            self.termination = TERM_TIME_LIMIT

    def _make_child(self, parent: BnbNode, side: str, var: int,
                    kind: str, val: float) -> BnbNode:
        child = BnbNode(self._take_id(), parent.node_id, parent.depth + 1, side,
                        branch_var=var, bound_kind=kind, bound_val=val,
                        l=parent.l.copy(), u=parent.u.copy())
        if kind == "u":
            child.u[var] = min(child.u[var], val)
        else:
            child.l[var] = max(child.l[var], val)
        self.nodes[child.node_id] = child
        self.record.nodes[child.node_id] = child

        t0 = time.perf_counter()
        sol = self.solver.solve_warm(child.l, child.u, parent.lp.basis)
        warm_elapsed = time.perf_counter() - t0
        if sol.status == ITERLIMIT:
            raise LpFailure(f"{self.instance.name}: node {child.node_id} LP hit the pivot cap")
        if sol.status == UNBOUNDED:
            raise LpFailure(f"{self.instance.name}: node {child.node_id} LP unbounded")
        self.lp_iterations.append(sol.iterations)
        self.warm_iterations.append(sol.iterations)
        self.warm_times.append(warm_elapsed)
        if self.timing_mode:
            t1 = time.perf_counter()
            cold = self.solver.solve_cold(child.l, child.u)
            self.cold_times.append(time.perf_counter() - t1)
            self.cold_iterations.append(cold.iterations)

        child.lp = sol
        child.lp_objective = sol.objective if sol.status == OPTIMAL else np.inf
        if sol.status == INFEASIBLE:
            self._close(child, PRUNED_INFEASIBLE)
        elif self._dominated(sol.objective):
            self._close(child, PRUNED_BOUND)
        elif self._is_integral(sol.x):
            self._accept_incumbent(sol.x, sol.objective)
            self._close(child, PRUNED_INTEGRAL)
        return child

    # -- full solve ----------------------------------------------------------------

    def run(self, policy) -> SolveResult:
        while not self.done:
            obs = self.current_observation()
            if obs is None:
                break
            decision = policy(obs, self)
            self.transition(decision.action, decision.distribution, observation=obs)
        return self.finish(getattr(policy, "name", "custom"))

    def finish(self, policy_name: str) -> SolveResult:
        termination = self.termination or TERM_OPTIMAL
        self.record.total_nodes = len(self.nodes)
        self.record.complete = termination == TERM_OPTIMAL
        self.record.final_objective = None if self.incumbent is None else self.gub
        label_subtree_sizes(self.record)
        result = SolveResult(
            instance=self.instance, policy_name=policy_name, seed=self.seed,
            termination=termination,
            objective=None if self.incumbent is None else float(self.gub),
            incumbent=self.incumbent,
            node_count=len(self.nodes), step_count=self.step_index,
            wall_time=time.perf_counter() - self.start_time,
            lp_iterations=self.lp_iterations,
            warm_iterations=self.warm_iterations, cold_iterations=self.cold_iterations,
            warm_times=self.warm_times, cold_times=self.cold_times,
            record=self.record,
        )
        result.discovery_step = discovery_step(result)[0]
        return result


def solve(instance: MilpInstance, policy, seed: int = 0, node_limit: int = 200_000,
          time_limit: float = 600.0, timing_mode: bool = False,
          d_v: int = 19, d_c: int = 5, d_e: int = 1) -> SolveResult:
    engine = BnbEngine(instance, seed=seed, node_limit=node_limit,
                       time_limit=time_limit, timing_mode=timing_mode,
                       d_v=d_v, d_c=d_c, d_e=d_e)
    return engine.run(policy)


def label_subtree_sizes(record: EpisodeRecord) -> EpisodeRecord:
    """Fill exact subtree sizes bottom-up; size(leaf)=1, size(v)=1+left+right.

    On incomplete episodes only fathomed subtrees (no open descendants) get
    sizes; nodes above an open node keep size None.
    """
    order = sorted(record.nodes.values(), key=lambda nd: nd.depth, reverse=True)
    for node in order:
        if node.status == OPEN:
            node.subtree_size = None
        elif node.child_ids is None:
            node.subtree_size = 1
        else:
            left, right = (record.nodes[cid] for cid in node.child_ids)
            if left.subtree_size is None or right.subtree_size is None:
                node.subtree_size = None
            else:
                node.subtree_size = 1 + left.subtree_size + right.subtree_size
    return record


def discovery_step(result: SolveResult) -> tuple[int | None, float | None]:
    """(t_d, t_r): steps completed when the incumbent first matched the final optimum."""
    if result.objective is None or result.termination != TERM_OPTIMAL:
        return None, None
    final = result.objective
    if result.step_count == 0:
        return 0, 0.0  # integral root: discovered before any branching
    t_d = result.step_count
    for t, step in enumerate(result.record.steps, start=1):
        if abs(step.gub_after - final) <= 1e-6:
            t_d = t
            break
    return t_d, t_d / result.step_count


def dual_gap(result: SolveResult) -> float:
    """(GUB - best open lower bound) / max(1, |GUB|); 0 when solved to optimality."""
    if result.termination == TERM_OPTIMAL:
        return 0.0
    open_bounds = [nd.lp_objective for nd in result.record.nodes.values() if nd.status == OPEN]
    gub = result.objective if result.objective is not None else np.inf
    if not open_bounds:
        return 0.0
    lb = min(open_bounds)
    if not np.isfinite(gub):
        return np.inf
    return float((gub - lb) / max(1.0, abs(gub)))


# -- persistence -------------------------------------------------------------------

RECORD_VERSION = 1


def save_record(record: EpisodeRecord, path) -> None:
    payload = {
        "version": RECORD_VERSION,
        "instance": record.instance_name,
        "seed": record.seed,
        "total_nodes": record.total_nodes,
        "complete": record.complete,
        "final_objective": record.final_objective,
        "steps": [
            {
                "node": s.node_id, "action": s.action,
                "policy": {str(k): v for k, v in s.policy.items()},
                "gub_before": _json_float(s.gub_before), "gub_after": _json_float(s.gub_after),
                "open_before": list(s.open_ids_before), "closed_before": s.closed_before,
                "depth": s.depth,
                "observation": _obs_to_json(s.observation),
            }
            for s in record.steps
        ],
        "nodes": [
            {
                "id": nd.node_id, "parent": nd.parent_id, "depth": nd.depth,
                "side": nd.side, "status": nd.status,
                "branch_var": nd.branch_var, "bound_kind": nd.bound_kind,
                "bound_val": nd.bound_val,
                "lp_objective": _json_float(nd.lp_objective),
                "tau": nd.tau, "subtree_size": nd.subtree_size,
                "children": list(nd.child_ids) if nd.child_ids else None,
            }
            for nd in record.nodes.values()
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def _json_float(v):
    if v is None:
        return None
    v = float(v)
    if np.isposinf(v):
        return "inf"
    if np.isneginf(v):
        return "-inf"
    return v


def _unjson_float(v):
    if v is None:
        return None
    if v == "inf":
        return np.inf
    if v == "-inf":
        return -np.inf
    return float(v)


def _obs_to_json(obs):
    if obs is None:
        return None
    return {
        "var": obs.var_feats.tolist(), "con": obs.con_feats.tolist(),
        "erow": obs.edge_rows.tolist(), "ecol": obs.edge_cols.tolist(),
        "efeat": obs.edge_feats.tolist(), "mask": obs.mask.astype(int).tolist(),
    }


def _obs_from_json(blob):
    if blob is None:
        return None
    return BipartiteObservation(
        var_feats=np.array(blob["var"], dtype=np.float64).reshape(len(blob["var"]), -1),
        con_feats=np.array(blob["con"], dtype=np.float64).reshape(len(blob["con"]), -1),
        edge_rows=np.array(blob["erow"], dtype=np.int64),
        edge_cols=np.array(blob["ecol"], dtype=np.int64),
        edge_feats=np.array(blob["efeat"], dtype=np.float64).reshape(len(blob["efeat"]), -1),
        mask=np.array(blob["mask"], dtype=bool),
    )


def load_record(path) -> EpisodeRecord:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("version") != RECORD_VERSION:
        raise ValueError(f"unsupported record version {payload.get('version')}")
    record = EpisodeRecord(payload["instance"], payload["seed"])
    record.total_nodes = payload["total_nodes"]
    record.complete = payload["complete"]
    record.final_objective = payload["final_objective"]
    for s in payload["steps"]:
        record.steps.append(EpisodeStep(
            node_id=s["node"], observation=_obs_from_json(s.get("observation")), action=s["action"],
            policy={int(k): v for k, v in s["policy"].items()},
            gub_before=_unjson_float(s["gub_before"]), gub_after=_unjson_float(s["gub_after"]),
            open_ids_before=tuple(s["open_before"]), closed_before=s["closed_before"],
            depth=s["depth"],
        ))
    for nd in payload["nodes"]:
        node = BnbNode(nd["id"], nd["parent"], nd["depth"], nd["side"],
                       branch_var=nd["branch_var"], bound_kind=nd["bound_kind"],
                       bound_val=nd["bound_val"], status=nd["status"])
        node.lp_objective = _unjson_float(nd["lp_objective"])
        node.tau = nd["tau"]
        node.subtree_size = nd["subtree_size"]
        node.child_ids = tuple(nd["children"]) if nd["children"] else None
        record.nodes[node.node_id] = node
    return record
