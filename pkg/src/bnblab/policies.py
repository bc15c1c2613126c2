"""Branching policies: random, strong branching, network argmax, and planner.

Every policy is a callable taking (observation, engine) and returning a
BranchingDecision whose chosen index lies inside the fractional-candidate
mask and whose distribution sums to one over that mask.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .observation import BipartiteObservation
from .simplex import INFEASIBLE, OPTIMAL

INFINITE_SCORE_CAP = 1e12


@dataclass
class BranchingDecision:
    action: int
    distribution: dict[int, float]
    scores: dict[int, float] = field(default_factory=dict)


class RandomPolicy:
    """Uniform over the candidate mask, deterministic per (state hash, seed)."""

    name = "random"

    def __init__(self, seed: int = 0):
        self.seed = seed

    def __call__(self, obs: BipartiteObservation, engine=None) -> BranchingDecision:
        cands = obs.candidates
        if cands.size == 0:
            raise ValueError("random policy on a node with empty candidate mask")
        h = hashlib.blake2b(obs.state_hash(), digest_size=8,
                            key=str(self.seed).encode()).digest()
        pick = int.from_bytes(h, "big") % cands.size
        dist = {int(j): 1.0 / cands.size for j in cands}
        return BranchingDecision(int(cands[pick]), dist)


class StrongBranchingPolicy:
    """Expert rule: probe both children of every candidate, keep the best worst side.

    score(x_i) = min(delta_left, delta_right) where delta is the child LP
    objective minus the node objective and an infeasible child counts as
    +inf capped at 1e12. Argmax score wins, ties to the lowest index; the
    reported distribution is one-hot at the winner.
    """

    name = "sb"

    def __call__(self, obs: BipartiteObservation, engine) -> BranchingDecision:
        node = engine.current_node()
        if node is None:
            raise ValueError("strong branching invoked on a terminal state")
        scores, flagged = strong_branching_scores(engine, node)
        cands = obs.candidates
        order = np.argsort(-np.array([scores[int(j)] for j in cands]), kind="stable")
        best = int(cands[order[0]])
        dist = {int(j): 1.0 if int(j) == best else 0.0 for j in cands}
        return BranchingDecision(best, dist, scores={int(j): scores[int(j)] for j in cands})


def strong_branching_scores(engine, node) -> tuple[dict[int, float], set[int]]:
    """Per-candidate min(delta_l, delta_r) from warm-started probe solves."""
    sol = node.lp
    base = sol.objective
    x = sol.x
    inst = engine.instance
    from .observation import fractional_candidates
    cands = np.flatnonzero(fractional_candidates(inst, x))
    scores: dict[int, float] = {}
    flagged: set[int] = set()
    for j in cands:
        deltas = []
        for kind in ("u", "l"):
            lo, hi = node.l.copy(), node.u.copy()
            if kind == "u":
                hi[j] = np.floor(x[j])
            else:
                lo[j] = np.ceil(x[j])
            probe = engine.solver.solve_warm(lo, hi, sol.basis)
            if probe.status == INFEASIBLE:
                deltas.append(INFINITE_SCORE_CAP)
            elif probe.status == OPTIMAL:
                deltas.append(min(probe.objective - base, INFINITE_SCORE_CAP))
            else:
                deltas.append(-np.inf)  # probe failed; candidate flagged
                flagged.add(int(j))
        scores[int(j)] = float(min(deltas))
    return scores, flagged


class NetworkPolicy:
    """Masked softmax over the policy head; argmax at temperature 0."""

    name = "net"

    def __init__(self, model, temperature: float = 0.0, seed: int = 0):
        self.model = model
        self.temperature = temperature
        self.rng = np.random.default_rng([seed, 7171])

    def __call__(self, obs: BipartiteObservation, engine=None) -> BranchingDecision:
        cands = obs.candidates
        if cands.size == 0:
            raise ValueError("network policy on a node with empty candidate mask")
        logits = self.model.policy_logits(obs)
        probs = masked_softmax(logits, cands)
        dist = {int(j): float(p) for j, p in zip(cands, probs)}
        if self.temperature == 0.0:
            action = int(cands[int(np.argmax(probs))])
        else:
            heated = np.log(np.maximum(probs, 1e-300)) / self.temperature
            heated -= heated.max()
            p = np.exp(heated)
            p /= p.sum()
            action = int(self.rng.choice(cands, p=p))
        return BranchingDecision(action, dist)


def masked_softmax(logits: np.ndarray, candidates: np.ndarray) -> np.ndarray:
    z = logits[candidates]
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


class PlannerPolicy:
    """Tree-search improved policy; N=0 degenerates to the network argmax."""

    name = "plan"

    def __init__(self, model, config, seed: int = 0):
        from .planner import GumbelConfig
        self.model = model
        self.config = config if config is not None else GumbelConfig()
        self.seed = seed
        self._counter = 0

    def __call__(self, obs: BipartiteObservation, engine=None) -> BranchingDecision:
        from .planner import search
        self._counter += 1
        # imagined interior nodes have no LP, so the whole integer set is
        # the action vocabulary there; the root still uses the true mask
        interior = engine.instance.integer_idx if engine is not None else None
        out = search(obs, self.model, self.config,
                     seed=[self.seed, self._counter],
                     interior_actions=interior)
        return BranchingDecision(out.action, out.policy)


def make_policy(name: str, seed: int = 0, model=None, config=None):
    if name == "random":
        return RandomPolicy(seed)
    if name == "sb":
        return StrongBranchingPolicy()
    if name == "net":
        if model is None:
            raise ValueError("net policy needs a model")
        return NetworkPolicy(model, seed=seed)
    if name == "plan":
        if model is None:
            raise ValueError("plan policy needs a model")
        return PlannerPolicy(model, config, seed=seed)
    raise ValueError(f"unknown policy {name!r}")
