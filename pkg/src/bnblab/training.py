"""Replay, subtree trajectories, losses, and the sequential train loop.

Episodes are decomposed into one trajectory per branching step, each
following the recorded depth-first order for up to K actions inside the
subtree rooted at its start node. Steps past subtree termination are
padded: they keep a zero value target and contribute nothing to the
policy or value loss, while the divisor stays K+1.

The loss has four terms:

* policy cross-entropy against the stored search policies;
* value cross-entropy against histogram-coded subtree-size targets
  (exact DFS counts by default, n-step bootstrap behind a flag);
* branchability cross-entropy for the imagined children of every real
  unroll step;
* consistency: negative cosine between the predicted child latent
  (online branch: projector then predictor) and the embedding of the
  child node's real observation (target branch: projector then
  stop-gradient), for children that were actually branched.

Training alternates acting and learning in one thread: the acting
parameters are refreshed every ``sync_every`` optimizer steps.
"""

from __future__ import annotations

import csv
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .bnb import BRANCHED, OPEN, BnbEngine, EpisodeRecord
from .generators import GeneratorConfig, generate
from .model import BnbModel, LatentState, ModelConfig, save_model
from .observation import BipartiteObservation
from .planner import GumbelConfig
from .policies import PlannerPolicy


class TrainingDivergence(RuntimeError):
    """Loss became non-finite; training halts with diagnostics."""


@dataclass(frozen=True)
class LossWeights:
    policy: float = 1.0
    value: float = 1.0
    branchability: float = 1.0
    consistency: float = 1.0

    def validate(self) -> None:
        if min(self.policy, self.value, self.branchability, self.consistency) < 0:
            raise ValueError("loss weights must be nonnegative")


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 20_000
    batch_size: int = 32
    lr_init: float = 1e-3
    lr_final: float = 1e-5
    unroll: int = 3                  # K
    td_steps: int = 3                # n
    value_target_mode: str = "exact"  # or "bootstrap"
    buffer_capacity: int = 100_000
    sync_every: int = 100
    episodes_per_sync: int = 1
    act_node_limit: int = 400
    act_time_limit: float = 120.0
    family: str = "ca"
    family_params: dict = field(default_factory=dict)
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    model: ModelConfig = field(default_factory=lambda: ModelConfig(d_h=32))
    search: GumbelConfig = field(default_factory=lambda: GumbelConfig(
        simulations=8, root_actions=4))
    checkpoint_every: int = 0        # 0 = only init + final
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8


# ---------------------------------------------------------------------------
# replay


class ReplayBuffer:
    """FIFO episode store bounded by total branching-step count."""

    def __init__(self, capacity_steps: int = 100_000):
        if capacity_steps < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity_steps
        self._episodes: list[EpisodeRecord] = []
        self._steps = 0

    def push(self, episode: EpisodeRecord) -> None:
        if not episode.steps:
            return
        self._episodes.append(episode)
        self._steps += len(episode.steps)
        while self._steps > self.capacity and len(self._episodes) > 1:
            dropped = self._episodes.pop(0)
            self._steps -= len(dropped.steps)

    def __len__(self) -> int:
        return self._steps

    @property
    def episode_count(self) -> int:
        return len(self._episodes)

    def sample_trajectories(self, batch: int, k: int,
                            rng: np.random.Generator) -> list["SubtreeTrajectory"]:
        """Uniform over stored branching steps."""
        if not self._episodes:
            raise ValueError("sampling from an empty buffer")
        counts = np.array([len(e.steps) for e in self._episodes])
        cum = np.cumsum(counts)
        out = []
        for _ in range(batch):
            flat = int(rng.integers(cum[-1]))
            ep_idx = int(np.searchsorted(cum, flat, side="right"))
            start = flat - (cum[ep_idx - 1] if ep_idx else 0)
            out.append(extract_trajectory(self._episodes[ep_idx], int(start), k))
        return out


# ---------------------------------------------------------------------------
# trajectories


@dataclass
class ChildPair:
    """Real children created at one unroll step, with training targets."""

    left_id: int
    right_id: int
    left_branchable: int | None      # None when the episode left it open
    right_branchable: int | None
    left_obs: BipartiteObservation | None   # observation at the child's own step
    right_obs: BipartiteObservation | None


@dataclass
class SubtreeTrajectory:
    episode: EpisodeRecord
    start: int
    unroll: int
    steps: list                       # EpisodeStep | None, length K+1
    actions: list[int]                # length K, padded by repeating the last
    real: list[bool]                  # length K+1
    children: list[ChildPair | None]  # length K
    z: np.ndarray | None = None       # length K+1, filled by compute_value_targets

    @property
    def real_steps(self) -> int:
        return sum(self.real)


def subtree_step_count(episode: EpisodeRecord, start: int) -> int:
    """Branching steps spent inside the subtree rooted at step ``start``.

    DFS makes the subtree's steps contiguous: it ends at the first later
    step whose node is no deeper than the start node.
    """
    steps = episode.steps
    d0 = steps[start].depth
    for s in range(start + 1, len(steps)):
        if steps[s].depth <= d0:
            return s - start
    return len(steps) - start


def extract_trajectory(episode: EpisodeRecord, start: int, k: int) -> SubtreeTrajectory:
    if not 0 <= start < len(episode.steps):
        raise ValueError(f"start step {start} out of range")
    span = subtree_step_count(episode, start)
    step_by_node = {s.node_id: i for i, s in enumerate(episode.steps)}
    steps, actions, real, children = [], [], [], []
    for j in range(k + 1):
        if j < span:
            steps.append(episode.steps[start + j])
            real.append(True)
        else:
            steps.append(None)
            real.append(False)
    for j in range(k):
        if real[j]:
            st = episode.steps[start + j]
            actions.append(st.action)
            node = episode.nodes[st.node_id]
            lid, rid = node.child_ids
            children.append(ChildPair(
                lid, rid,
                _branch_label(episode, lid), _branch_label(episode, rid),
                _child_obs(episode, step_by_node, lid),
                _child_obs(episode, step_by_node, rid)))
        else:
            actions.append(actions[-1])
            children.append(None)
    return SubtreeTrajectory(episode, start, k, steps, actions, real, children)


def _branch_label(episode: EpisodeRecord, node_id: int) -> int | None:
    status = episode.nodes[node_id].status
    if status == OPEN:
        return None
    return 1 if status == BRANCHED else 0


def _child_obs(episode: EpisodeRecord, step_by_node: dict, node_id: int):
    idx = step_by_node.get(node_id)
    return episode.steps[idx].observation if idx is not None else None


def extract_trajectories(episode: EpisodeRecord, k: int) -> list[SubtreeTrajectory]:
    """One trajectory per branching step of the episode."""
    if episode.complete:
        for node in episode.nodes.values():
            if node.subtree_size is None:
                raise ValueError("episode is complete but not labeled")
    return [extract_trajectory(episode, t, k) for t in range(len(episode.steps))]


# ---------------------------------------------------------------------------
# value targets


def _subtree_member_ids(episode: EpisodeRecord, root_id: int) -> set[int]:
    members = {root_id}
    stack = [root_id]
    while stack:
        node = episode.nodes[stack.pop()]
        if node.child_ids:
            for cid in node.child_ids:
                members.add(cid)
                stack.append(cid)
    return members


def compute_value_targets(traj: SubtreeTrajectory, mode: str = "exact",
                          target_model: BnbModel | None = None,
                          td_steps: int = 3) -> np.ndarray:
    """Fill traj.z: z[k] per unroll step, 0 on padded steps."""
    episode = traj.episode
    k_max = traj.unroll
    z = np.zeros(k_max + 1)
    members = _subtree_member_ids(episode, traj.steps[0].node_id)
    span = subtree_step_count(episode, traj.start)
    if mode == "exact":
        for j in range(k_max + 1):
            if not traj.real[j]:
                continue
            step = traj.steps[j]
            total = 0
            for oid in step.open_ids_before:
                if oid in members:
                    size = episode.nodes[oid].subtree_size
                    if size is None:
                        raise ValueError(
                            f"node {oid} unlabeled; exact targets need sizes")
                    total += size
            z[j] = -float(total)
    elif mode == "bootstrap":
        if target_model is None:
            raise ValueError("bootstrap targets need a target model")
        step_by_node = {s.node_id: i for i, s in enumerate(episode.steps)}
        for j in range(k_max + 1):
            if not traj.real[j]:
                continue
            horizon = j + td_steps
            if horizon >= span:
                # subtree finishes inside the horizon: fall back to the
                # exact remaining count (terminal value is zero)
                total = 0
                for oid in traj.steps[j].open_ids_before:
                    if oid in members:
                        size = episode.nodes[oid].subtree_size
                        if size is None:
                            raise ValueError(f"node {oid} unlabeled")
                        total += size
                z[j] = -float(total)
                continue
            boot_step = episode.steps[traj.start + horizon]
            value = 0.0
            for oid in boot_step.open_ids_before:
                if oid not in members:
                    continue
                idx = step_by_node.get(oid)
                if idx is None:
                    value -= 1.0     # never branched: exact leaf of size 1
                else:
                    lat = target_model.represent(episode.steps[idx].observation)
                    _, v, _ = target_model.evaluate(lat)
                    value += v
            z[j] = -float(td_steps) + value
    else:
        raise ValueError(f"unknown value target mode {mode!r}")
    traj.z = z
    return z


# ---------------------------------------------------------------------------
# losses


def _masked_log_policy(logits: ad.Tensor, mask: np.ndarray) -> ad.Tensor:
    gather = np.zeros((mask.size, logits.data.shape[0]))
    gather[np.arange(mask.size), mask] = 1.0
    picked = ad.reshape(ad.matmul(ad.constant(gather),
                                  ad.reshape(logits, (-1, 1))), (mask.size,))
    return ad.log(ad.softmax(picked, axis=-1))


def _cross_entropy(target: np.ndarray, log_probs: ad.Tensor) -> ad.Tensor:
    return ad.scale(ad.reduce_sum(ad.mul(ad.constant(target), log_probs)), -1.0)


def unroll_and_loss(traj: SubtreeTrajectory, model: BnbModel,
                    target_model: BnbModel | None = None,
                    weights: LossWeights | None = None,
                    config: TrainConfig | None = None):
    """Loss tensor for one trajectory plus a dict of scalar terms."""
    weights = weights or LossWeights()
    weights.validate()
    config = config or TrainConfig()
    codec = model.config.codec()
    if traj.z is None:
        compute_value_targets(traj, config.value_target_mode, target_model,
                              config.td_steps)

    k_max = traj.unroll
    latent = model.represent(traj.steps[0].observation)
    latents_by_node: dict[int, LatentState] = {traj.steps[0].node_id: latent}

    pv_terms: list[ad.Tensor] = []
    bt_terms: list[ad.Tensor] = []
    child_count = 0
    scalars = {"policy": 0.0, "value": 0.0, "branchability": 0.0,
               "consistency": 0.0}

    for j in range(k_max + 1):
        if traj.real[j]:
            step = traj.steps[j]
            if j > 0:
                latent = latents_by_node[step.node_id]
            pred = model.predict(latent)
            mask = step.observation.candidates
            pi = np.array([step.policy.get(int(a), 0.0) for a in mask])
            if pi.sum() > 0:
                pi = pi / pi.sum()
            lp = _cross_entropy(pi, _masked_log_policy(pred.policy_logits, mask))
            zk = min(float(traj.z[j]), -1.0)
            enc, _ = codec.encode(zk)
            lv = _cross_entropy(enc, ad.log(pred.value_hist))
            scalars["policy"] += float(lp.data)
            scalars["value"] += float(lv.data)
            pv_terms.append(ad.add(ad.scale(lp, weights.policy),
                                   ad.scale(lv, weights.value)))
        if j >= k_max:
            break
        pair = traj.children[j]
        if traj.real[j] and pair is not None:
            kids = model.dynamics(latent, traj.actions[j])
            for lat_child, cid, label, obs in (
                    (kids[0], pair.left_id, pair.left_branchable, pair.left_obs),
                    (kids[1], pair.right_id, pair.right_branchable, pair.right_obs)):
                latents_by_node[cid] = lat_child
                if label is None:
                    continue
                child_count += 1
                pred_c = model.predict(lat_child)
                onehot = np.eye(2)[label]
                lb = _cross_entropy(onehot,
                                    ad.log(ad.softmax(pred_c.branch_logits, axis=-1)))
                scalars["branchability"] += float(lb.data)
                term = ad.scale(lb, weights.branchability)
                if label == 1 and obs is not None and weights.consistency > 0:
                    target_lat = model.represent(obs)
                    lt = model.consistency_loss(lat_child, target_lat)
                    scalars["consistency"] += float(lt.data)
                    term = ad.add(term, ad.scale(lt, weights.consistency))
                bt_terms.append(term)

    loss = ad.scale(_sum_terms(pv_terms), 1.0 / (k_max + 1))
    if bt_terms and child_count:
        loss = ad.add(loss, ad.scale(_sum_terms(bt_terms), 1.0 / child_count))
    scalars["policy"] /= k_max + 1
    scalars["value"] /= k_max + 1
    if child_count:
        scalars["branchability"] /= child_count
        scalars["consistency"] /= child_count
    scalars["total"] = float(loss.data)
    scalars["children"] = child_count
    return loss, scalars


def _sum_terms(terms: list[ad.Tensor]) -> ad.Tensor:
    total = terms[0]
    for t in terms[1:]:
        total = ad.add(total, t)
    return total


def batch_loss(trajs: list[SubtreeTrajectory], model: BnbModel,
               target_model: BnbModel | None = None,
               weights: LossWeights | None = None,
               config: TrainConfig | None = None):
    losses, agg = [], None
    for traj in trajs:
        loss, scalars = unroll_and_loss(traj, model, target_model, weights, config)
        losses.append(loss)
        if agg is None:
            agg = {k: 0.0 for k in scalars}
        for k, v in scalars.items():
            agg[k] += v
    total = ad.scale(_sum_terms(losses), 1.0 / len(losses))
    agg = {k: v / len(trajs) for k, v in agg.items()}
    agg["total"] = float(total.data)
    return total, agg


# ---------------------------------------------------------------------------
# optimizer and schedule


class Adam:
    """Adaptive-moment stochastic gradient descent."""

    def __init__(self, params: dict[str, ad.Tensor], beta1=0.9, beta2=0.999,
                 eps=1e-8):
        self.params = params
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(t.data) for k, t in params.items()}
        self.v = {k: np.zeros_like(t.data) for k, t in params.items()}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray], lr: float) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for k, p in self.params.items():
            g = grads.get(k)
            if g is None:
                continue
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            mh = self.m[k] / (1 - b1 ** self.t)
            vh = self.v[k] / (1 - b2 ** self.t)
            p.data = p.data - lr * mh / (np.sqrt(vh) + self.eps)


def cosine_lr(step: int, total: int, lr_init: float, lr_final: float) -> float:
    if total <= 1:
        return lr_init
    frac = min(max(step / (total - 1), 0.0), 1.0)
    return lr_final + 0.5 * (lr_init - lr_final) * (1.0 + math.cos(math.pi * frac))


# ---------------------------------------------------------------------------
# the loop


@dataclass
class TrainState:
    model: BnbModel
    buffer: ReplayBuffer
    curve: list[dict]
    episodes_run: int
    checkpoints: list[str]


def _act(model: BnbModel, config: TrainConfig, episode_idx: int,
         buffer: ReplayBuffer) -> bool:
    """Run one planner-policy episode; push it if it solved to completion."""
    gen = GeneratorConfig(family=config.family,
                          seed=config.seed * 100_003 + episode_idx,
                          params=dict(config.family_params))
    instance = generate(gen)
    policy = PlannerPolicy(model, config.search, seed=config.seed + episode_idx)
    engine = BnbEngine(instance, seed=config.seed,
                       node_limit=config.act_node_limit,
                       time_limit=config.act_time_limit,
                       d_v=model.config.d_v, d_c=model.config.d_c,
                       d_e=model.config.d_e)
    engine.run(policy)
    result = engine.finish(policy_name="plan")
    if result.record.complete and result.record.steps:
        buffer.push(result.record)
        return True
    return False


def train(config: TrainConfig, out_dir: str | None = None,
          log=None) -> TrainState:
    """Sequential act/learn loop; returns final state with curve rows."""
    config.weights.validate()
    model = BnbModel(config.model, seed=config.seed)
    target = BnbModel(config.model, seed=config.seed)
    target.load_state_dict(model.state_dict())
    actor = BnbModel(config.model, seed=config.seed)
    actor.load_state_dict(model.state_dict())

    buffer = ReplayBuffer(config.buffer_capacity)
    opt = Adam(model.params, config.adam_beta1, config.adam_beta2,
               config.adam_eps)
    rng = np.random.default_rng([config.seed, 515])
    curve: list[dict] = []
    checkpoints: list[str] = []
    episodes = 0

    def save(tag: str) -> None:
        if out_dir is None:
            return
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, f"model_{tag}.ckpt")
        save_model(path, model, {"tag": tag, "seed": str(config.seed)})
        checkpoints.append(path)

    save("init")
    start_time = time.monotonic()
    for step in range(config.steps):
        if step % config.sync_every == 0:
            actor.load_state_dict(model.state_dict())
            target.load_state_dict(model.state_dict())
            for _ in range(config.episodes_per_sync):
                _act(actor, config, episodes, buffer)
                episodes += 1
            attempts = 0
            while len(buffer) < config.batch_size:
                if attempts >= 50:
                    raise TrainingDivergence(
                        "could not fill the replay buffer: episodes keep "
                        "hitting node/time limits; raise act_node_limit or "
                        "shrink the instances")
                _act(actor, config, episodes, buffer)
                episodes += 1
                attempts += 1
        trajs = buffer.sample_trajectories(config.batch_size, config.unroll, rng)
        loss, scalars = batch_loss(trajs, model, target, config.weights, config)
        if not np.isfinite(loss.data):
            raise TrainingDivergence(
                f"non-finite loss at step {step}: {scalars}")
        grads = ad.gradients(loss, model.params)
        lr = cosine_lr(step, config.steps, config.lr_init, config.lr_final)
        opt.step(grads, lr)
        row = {"step": step, "lr": lr, "episodes": episodes,
               "buffer_steps": len(buffer),
               "elapsed": time.monotonic() - start_time}
        row.update(scalars)
        curve.append(row)
        if log is not None and (step % 50 == 0 or step == config.steps - 1):
            log(f"step {step} loss {scalars['total']:.4f} lr {lr:.2e} "
                f"episodes {episodes} buffer {len(buffer)}")
        if config.checkpoint_every and (step + 1) % config.checkpoint_every == 0:
            save(f"step{step + 1:07d}")
    save("final")
    if out_dir is not None:
        _write_curve(out_dir, curve)
    return TrainState(model, buffer, curve, episodes, checkpoints)


def _write_curve(out_dir: str, curve: list[dict]) -> None:
    cols = ["step", "total", "policy", "value", "branchability", "consistency",
            "lr", "episodes", "buffer_steps", "elapsed"]
    with open(os.path.join(out_dir, "training_curve.csv"), "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore")
        writer.writeheader()
        for row in curve:
            writer.writerow(row)
