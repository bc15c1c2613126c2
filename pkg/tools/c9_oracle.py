"""Criterion-9 oracle: one full 2e4-step training run at desk scale, then the
net-only vs random held-out comparison. Run before freezing the acceptance
test so its outcome and runtime are known. Not part of the package."""

import sys
import time

sys.path.insert(0, "src")

import numpy as np

from bnblab import training as tr
from bnblab.bnb import solve
from bnblab.generators import GeneratorConfig, generate
from bnblab.model import ModelConfig, load_model
from bnblab.planner import GumbelConfig
from bnblab.policies import NetworkPolicy, RandomPolicy


CA = {"items": 20, "bids": 50}

cfg = tr.TrainConfig(
    steps=20_000,
    batch_size=8,
    unroll=3,
    sync_every=100,
    episodes_per_sync=1,
    act_node_limit=400,
    act_time_limit=60.0,
    family="combinatorial-auction",
    family_params=dict(CA),
    seed=0,
    model=ModelConfig(d_h=16, d_proj=8),
    search=GumbelConfig(simulations=8, root_actions=4),
)

out = sys.argv[1] if len(sys.argv) > 1 else "/tmp/c9_run"
t0 = time.perf_counter()
model = tr.train(cfg, out_dir=out)
train_min = (time.perf_counter() - t0) / 60
print(f"training: {train_min:.1f} min", flush=True)

# held-out instances: seeds disjoint from the training stream (seed*100003+i)
held = [generate(GeneratorConfig(family="combinatorial-auction", seed=5000 + i,
                                 params=dict(CA))) for i in range(20)]

for name, mk in [("net", lambda s: NetworkPolicy(model)),
                 ("random", lambda s: RandomPolicy(seed=s))]:
    geos = []
    for seed in (0, 1, 2):
        nodes = [solve(inst, mk(seed), seed=seed, node_limit=4000).node_count
                 for inst in held]
        geos.append(float(np.exp(np.mean(np.log(nodes)))))
    print(f"{name}: per-seed geo {['%.2f' % g for g in geos]} "
          f"mean {np.mean(geos):.3f}", flush=True)
