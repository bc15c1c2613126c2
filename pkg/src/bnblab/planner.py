"""Gumbel tree search over imagined branch-and-bound subtrees.

Each search node holds an imagined subtree: the set of still-open imagined
nodes plus a count of closed ones. Expanding an edge applies the dynamics
network once to the deepest open node (leftmost on ties), classifies both
children by predicted branchability, and evaluates each child with the
prediction network, so every expanding simulation costs exactly one
dynamics call and two prediction calls.

Root selection uses Sequential Halving over a Gumbel-Top-k subset of M
candidate actions; interior selection is the deterministic
argmax(pi'(a) - N(a) / (1 + sum_b N(b))) rule. Returns are backed up as
G^k = -(l - k) + v_leaf and folded into running means. The improved policy
is softmax(prior_logits + sigma(Qtilde)) with sigma(q) =
(c_visit + max_b N) * c_scale * q and Qtilde min-max normalized across the
whole search tree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class GumbelConfig:
    simulations: int = 50
    root_actions: int = 10
    c_visit: float = 50.0
    c_scale: float = 0.1
    depth_cap: int = 64
    branchable_threshold: float = 0.5
    zero_gumbel: bool = False   # test hook: top-M by prior logit alone
    trace: bool = False

    def validate(self) -> None:
        if self.root_actions < 1:
            raise ValueError("need at least one root action")
        if self.simulations < 0:
            raise ValueError("negative simulation budget")


@dataclass
class ImaginedNode:
    latent: object
    depth: int
    pos: tuple[int, ...]        # 0/1 per level; lexicographic = leftmost
    policy_logits: np.ndarray
    value: float
    p_branch: float


class SearchNode:
    """One search-tree vertex: an imagined subtree plus per-action stats."""

    __slots__ = ("open_nodes", "closed_count", "actions", "prior_logits",
                 "prior_probs", "visit", "qval", "children", "value",
                 "terminal", "current")

    def __init__(self, open_nodes: list[ImaginedNode], closed_count: int,
                 actions: np.ndarray, terminal_bootstrap: bool = False):
        self.open_nodes = open_nodes
        self.closed_count = closed_count
        self.actions = actions
        self.terminal = not open_nodes
        if self.terminal:
            self.current = None
            self.value = 0.0
            logits = np.zeros(actions.size)
        else:
            self.current = min(open_nodes, key=lambda o: (-o.depth, o.pos))
            self.value = float(sum(o.value for o in open_nodes))
            logits = self.current.policy_logits[actions].astype(float)
            if terminal_bootstrap:
                # depth cap reached: stop here but keep the summed value
                self.terminal = True
                self.current = None
        self.prior_logits = logits - logits.max() if logits.size else logits
        e = np.exp(self.prior_logits)
        self.prior_probs = e / e.sum() if e.size else e
        self.visit = np.zeros(actions.size)
        self.qval = np.zeros(actions.size)
        self.children: dict[int, SearchNode] = {}


@dataclass
class SearchResult:
    action: int
    policy: dict[int, float]
    root_actions: np.ndarray
    root_visits: np.ndarray
    root_values: np.ndarray
    value: float
    simulations: int
    per_sim_calls: list[tuple[int, int]]
    dynamics_calls: int
    prediction_calls: int
    trace: list[dict] = field(default_factory=list)


class _Counter:
    __slots__ = ("g", "f")

    def __init__(self):
        self.g = 0
        self.f = 0


def search(obs, model, config: GumbelConfig | None = None, seed=0,
           interior_actions: np.ndarray | None = None) -> SearchResult:
    """Run Gumbel search from a real observation; returns action + policy."""
    config = config or GumbelConfig()
    config.validate()
    root_cands = obs.candidates
    if root_cands.size == 0:
        raise ValueError("search requires a branchable root")
    actions = np.asarray(interior_actions if interior_actions is not None
                         else root_cands, dtype=int)
    counter = _Counter()
    latent = model.represent(obs)
    logits, value, p_branch = model.evaluate(latent)
    root_imagined = ImaginedNode(latent, 0, (), logits, value, p_branch)
    # the root's stats run over the true candidate mask, not the full set
    root = SearchNode([root_imagined], 0, root_cands)
    rng = np.random.default_rng(seed)
    trace: list[dict] = []

    gumbel = np.zeros(root_cands.size) if config.zero_gumbel \
        else rng.gumbel(size=root_cands.size)
    g_score = gumbel + root.prior_logits

    m = min(config.root_actions, root_cands.size)
    survivors = list(np.argsort(-g_score, kind="stable")[:m])
    per_sim_calls: list[tuple[int, int]] = []

    if config.simulations > 0:
        used = 0
        for phase_arms, visits in _halving_schedule(m, config.simulations):
            live = survivors[:phase_arms]
            for _ in range(visits):
                for arm in live:
                    if used >= config.simulations:
                        break
                    g0, f0 = counter.g, counter.f
                    rec = _simulate(root, arm, model, config, actions, counter)
                    per_sim_calls.append((counter.g - g0, counter.f - f0))
                    used += 1
                    if config.trace:
                        trace.append(rec)
            order = _rank(root, live, gumbel, config)
            survivors = [live[i] for i in order]
        action = int(root_cands[survivors[0]])
    else:
        action = int(root_cands[int(np.argmax(root.prior_logits))])

    policy = improved_policy(root, config)
    pol_dict = {int(a): float(p) for a, p in zip(root_cands, policy)}
    q_root = _completed_q(root)
    return SearchResult(
        action=action, policy=pol_dict, root_actions=root_cands.copy(),
        root_visits=root.visit.copy(), root_values=root.qval.copy(),
        value=float(np.dot(policy, q_root)) if root.visit.sum() else root_imagined.value,
        simulations=int(root.visit.sum()), per_sim_calls=per_sim_calls,
        dynamics_calls=counter.g, prediction_calls=counter.f, trace=trace)


def _halving_schedule(m: int, budget: int) -> list[tuple[int, int]]:
    """Phases as (surviving arm count, visits per arm), spending ~budget."""
    phases = max(1, math.ceil(math.log2(m))) if m > 1 else 1
    sizes = [max(1, math.ceil(m / 2 ** p)) for p in range(phases)]
    out = []
    spent = 0
    for p, size in enumerate(sizes):
        v = max(1, (budget // phases) // size)
        out.append([size, v])
        spent += size * v
    leftover = budget - spent
    if leftover > 0:
        extra, rem = divmod(leftover, sizes[-1])
        # a partial final round is allowed; the caller's budget cap trims it
        out[-1][1] += extra + (1 if rem else 0)
    return [(s, v) for s, v in out]


def _simulate(root: SearchNode, root_arm: int, model, config: GumbelConfig,
              actions: np.ndarray, counter: _Counter) -> dict:
    path: list[tuple[SearchNode, int]] = []
    node = root
    arm = root_arm
    leaf_value = 0.0
    while True:
        if node.terminal:
            leaf_value = node.value
            break
        if arm is None:
            arm = _select_interior(node, root, config)
        child = node.children.get(arm)
        path.append((node, arm))
        if child is None:
            child = _expand(node, arm, model, config, actions, counter)
            node.children[arm] = child
            leaf_value = child.value
            break
        node = child
        arm = None
    length = len(path)
    gvals = []
    for k in range(length, 0, -1):
        parent, a = path[k - 1]
        g = -(length - k) + leaf_value
        gvals.append(g)
        parent.qval[a] = (parent.visit[a] * parent.qval[a] + g) / (parent.visit[a] + 1)
        parent.visit[a] += 1
    return {"path": [int(a) for _, a in path], "leaf_value": leaf_value,
            "g": gvals[::-1]}


def _expand(parent: SearchNode, arm: int, model, config: GumbelConfig,
            actions: np.ndarray, counter: _Counter) -> SearchNode:
    cur = parent.current
    var = int(parent.actions[arm])
    left_lat, right_lat = model.dynamics(cur.latent, var)
    counter.g += 1
    children = []
    for lat, side in ((left_lat, 0), (right_lat, 1)):
        logits, value, p_branch = model.evaluate(lat)
        counter.f += 1
        children.append(ImaginedNode(lat, cur.depth + 1, cur.pos + (side,),
                                     logits, value, p_branch))
    open_next = [o for o in parent.open_nodes if o is not cur]
    closed = parent.closed_count + 1
    for child in children:
        if child.p_branch >= config.branchable_threshold:
            open_next.append(child)
        else:
            closed += 1
    capped = bool(open_next) and cur.depth + 1 >= config.depth_cap
    return SearchNode(open_next, closed, actions, terminal_bootstrap=capped)


def _select_interior(node: SearchNode, root: SearchNode,
                     config: GumbelConfig) -> int:
    pi = _improved_dist(node, config, root)
    total = node.visit.sum()
    score = pi - node.visit / (1.0 + total)
    return int(np.argmax(score))


def _tree_q_bounds(root: SearchNode) -> tuple[float, float]:
    lo, hi = np.inf, -np.inf
    stack = [root]
    while stack:
        node = stack.pop()
        mask = node.visit > 0
        if mask.any():
            lo = min(lo, node.qval[mask].min())
            hi = max(hi, node.qval[mask].max())
        stack.extend(node.children.values())
    return lo, hi


def _completed_q(node: SearchNode) -> np.ndarray:
    """Qtilde: raw Q where visited, prior-weighted visited mean elsewhere."""
    visited = node.visit > 0
    q = node.qval.copy()
    if visited.any():
        w = node.prior_probs[visited]
        fill = float(np.dot(w, node.qval[visited]) / w.sum()) if w.sum() > 0 \
            else float(node.qval[visited].mean())
    else:
        fill = 0.0
    q[~visited] = fill
    return q


def _normalized_q(node: SearchNode, root: SearchNode) -> np.ndarray:
    q = _completed_q(node)
    lo, hi = _tree_q_bounds(root)
    if not np.isfinite(lo) or hi - lo < 1e-12:
        return np.full_like(q, 0.5)
    return np.clip((q - lo) / (hi - lo), 0.0, 1.0)


def _improved_dist(node: SearchNode, config: GumbelConfig,
                   root: SearchNode | None = None) -> np.ndarray:
    qn = _normalized_q(node, root if root is not None else node)
    sigma = (config.c_visit + node.visit.max()) * config.c_scale * qn
    z = node.prior_logits + sigma
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def improved_policy(root: SearchNode, config: GumbelConfig) -> np.ndarray:
    """Final policy target over the root's action set."""
    if root.visit.sum() == 0:
        e = np.exp(root.prior_logits)
        return e / e.sum()
    return _improved_dist(root, config)


def _rank(root: SearchNode, live: list[int], gumbel: np.ndarray,
          config: GumbelConfig) -> np.ndarray:
    """Order live arms by gumbel + prior logit + sigma(Qdagger), best first."""
    qn = _normalized_q(root, root)
    sigma = (config.c_visit + root.visit.max()) * config.c_scale * qn
    score = np.array([gumbel[a] + root.prior_logits[a] + sigma[a] for a in live])
    return np.argsort(-score, kind="stable")


def format_trace(result: SearchResult) -> str:
    lines = [f"simulations={result.simulations} "
             f"dynamics_calls={result.dynamics_calls} "
             f"prediction_calls={result.prediction_calls}"]
    for i, rec in enumerate(result.trace):
        path = "->".join(str(a) for a in rec["path"]) or "(terminal)"
        gtxt = ",".join(f"{g:+.3f}" for g in rec["g"])
        lines.append(f"sim {i:3d} path {path} leaf {rec['leaf_value']:+.3f} G [{gtxt}]")
    lines.append("root action visits value")
    for a, n, q in zip(result.root_actions, result.root_visits, result.root_values):
        lines.append(f"  x{a:<4d} {int(n):4d} {q:+.4f}")
    return "\n".join(lines)
