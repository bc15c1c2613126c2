"""Throughput probe: per-optimizer-step and per-act-episode cost at the
criterion-9 scale candidates. Not part of the package."""

import sys
import time

sys.path.insert(0, "src")

import numpy as np

from bnblab.model import BnbModel, ModelConfig
from bnblab.planner import GumbelConfig
from bnblab.policies import PlannerPolicy
from bnblab.bnb import solve
from bnblab.generators import GeneratorConfig, generate
from bnblab import training as tr
from bnblab import autodiff as ad


def probe(d_h, batch, items, bids, sims, roots):
    mc = ModelConfig(d_h=d_h, d_proj=max(4, d_h // 4))
    model = BnbModel(mc, seed=0)
    gc = GumbelConfig(simulations=sims, root_actions=roots)

    # act cost: one planner episode on a tiny CA instance
    inst = generate(GeneratorConfig(family="combinatorial-auction", seed=777,
                                    params={"items": items, "bids": bids}))
    pol = PlannerPolicy(model, gc, seed=1)
    t0 = time.perf_counter()
    res = solve(inst, pol, seed=1, node_limit=400, time_limit=120)
    act_s = time.perf_counter() - t0

    # fill a buffer from a couple of cheap sb episodes for the step probe
    from bnblab.policies import StrongBranchingPolicy
    buf = tr.ReplayBuffer(10_000)
    for s in range(3):
        inst2 = generate(GeneratorConfig(family="combinatorial-auction", seed=900 + s,
                                         params={"items": items, "bids": bids}))
        r2 = solve(inst2, StrongBranchingPolicy(), seed=s, node_limit=400)
        if r2.record.complete:
            buf.push(r2.record)

    rng = np.random.default_rng(0)
    cfg = tr.TrainConfig(batch_size=batch, model=mc, search=gc)
    opt = tr.Adam(model.params)
    t0 = time.perf_counter()
    nsteps = 10
    for i in range(nsteps):
        trajs = buf.sample_trajectories(batch, cfg.unroll, rng)
        loss, parts = tr.batch_loss(trajs, model, None, cfg.weights, cfg)
        grads = ad.gradients(loss, model.params)
        opt.step(grads, lr=1e-3)
    step_s = (time.perf_counter() - t0) / nsteps

    total_min = (20_000 * step_s + 200 * act_s * 1) / 60
    print(f"d_h={d_h} batch={batch} ca={items}/{bids} N={sims}/M={roots}: "
          f"act={act_s:.2f}s/ep nodes={res.node_count} step={step_s*1000:.0f}ms "
          f"-> 20k-step run ~{total_min:.1f} min")


probe(16, 8, 8, 16, 8, 4)
probe(16, 4, 8, 16, 8, 4)
probe(8, 4, 8, 16, 4, 2)
