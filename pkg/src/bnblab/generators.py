"""Seeded random generators for the four benchmark families.

All four produce pure-binary minimization instances that are feasible by
construction; the constructing point is stored as the instance witness.
Maximization families (auctions, independent set, knapsacks) negate their
objective so the solver always minimizes.

Default sizes target minutes-scale desk experiments: set covering 100x200,
combinatorial auctions 50 items / 150 bids, independent set on 80-node
graphs with edge probability 0.08, and 30 items across 3 knapsacks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .milp import MilpInstance

FAMILIES = ("set-covering", "combinatorial-auction", "max-independent-set", "multiple-knapsack")

# short spellings accepted anywhere a family name is
ALIASES = {"sc": "set-covering", "ca": "combinatorial-auction",
           "mis": "max-independent-set", "mk": "multiple-knapsack"}


def resolve_family(name: str) -> str:
    full = ALIASES.get(name, name)
    if full not in FAMILIES:
        raise ValueError(f"unknown family {name!r}; choose from {FAMILIES}")
    return full

DEFAULT_SIZES = {
    "set-covering": {"rows": 100, "cols": 200},
    "combinatorial-auction": {"items": 50, "bids": 150},
    "max-independent-set": {"nodes": 80, "edge_prob": 0.08},
    "multiple-knapsack": {"items": 30, "knapsacks": 3},
}


@dataclass
class GeneratorConfig:
    family: str
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.family = resolve_family(self.family)
        merged = dict(DEFAULT_SIZES[self.family])
        unknown = set(self.params) - set(merged)
        if unknown:
            raise ValueError(
                f"unknown size parameter(s) {sorted(unknown)} for "
                f"{self.family}; accepted: {sorted(merged)}")
        merged.update(self.params)
        self.params = merged
        for key, val in self.params.items():
            if key == "edge_prob":
                if not (0.0 < val <= 1.0):
                    raise ValueError("edge_prob must lie in (0, 1]")
            elif val < 1:
                raise ValueError(f"size parameter {key} must be positive")


def generate(config: GeneratorConfig) -> MilpInstance:
    rng = np.random.default_rng([config.seed, FAMILIES.index(config.family)])
    builder = {
        "set-covering": _set_covering,
        "combinatorial-auction": _combinatorial_auction,
        "max-independent-set": _max_independent_set,
        "multiple-knapsack": _multiple_knapsack,
    }[config.family]
    inst = builder(rng, **config.params)
    inst.family = config.family
    inst.seed = config.seed
    inst.name = f"{config.family}-s{config.seed}"
    inst.validate()
    return inst


def _coo_from_rows(row_entries):
    rows, cols, vals = [], [], []
    for i, entries in enumerate(row_entries):
        for j, v in entries:
            rows.append(i)
            cols.append(j)
            vals.append(float(v))
    return np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64), np.array(vals)


def _set_covering(rng, rows: int, cols: int) -> MilpInstance:
    """Min-cost cover: every row must be covered, each row coverable by >= 2 columns."""
    if cols < 2:
        raise ValueError("set covering needs at least 2 columns")
    cost = rng.integers(1, 101, size=cols).astype(np.float64)
    row_entries = []
    for _ in range(rows):
        k = int(rng.integers(2, max(3, cols // 4) + 1))
        chosen = rng.choice(cols, size=min(k, cols), replace=False)
        # coverage row sum_{j in chosen} x_j >= 1 stored as -sum x_j <= -1
        row_entries.append([(int(j), -1.0) for j in sorted(chosen)])
    a_rows, a_cols, a_vals = _coo_from_rows(row_entries)
    return MilpInstance(
        n=cols, m=rows, a_rows=a_rows, a_cols=a_cols, a_vals=a_vals,
        b=-np.ones(rows), c=cost, l=np.zeros(cols), u=np.ones(cols),
        integer_idx=np.arange(cols), witness=np.ones(cols),
    )


def _combinatorial_auction(rng, items: int, bids: int) -> MilpInstance:
    """Winner determination: accept bids, each item sold at most once, maximize value."""
    prices = rng.uniform(1.0, 100.0, size=items)
    bundles, values = [], []
    for _ in range(bids):
        size = min(items, int(rng.geometric(1.0 / 3.0)))
        bundle = rng.choice(items, size=max(1, size), replace=False)
        noise = rng.uniform(0.0, 0.2)
        bundles.append(np.sort(bundle))
        values.append(prices[bundle].sum() * (1.0 + noise))
    row_entries = [[] for _ in range(items)]
    for j, bundle in enumerate(bundles):
        for i in bundle:
            row_entries[int(i)].append((j, 1.0))
    # items never bid on would create empty rows; give them a throwaway bid
    for i, entries in enumerate(row_entries):
        if not entries:
            bundles.append(np.array([i]))
            values.append(float(prices[i]))
            row_entries[i].append((len(values) - 1, 1.0))
    n = len(values)
    a_rows, a_cols, a_vals = _coo_from_rows(row_entries)
    return MilpInstance(
        n=n, m=items, a_rows=a_rows, a_cols=a_cols, a_vals=a_vals,
        b=np.ones(items), c=-np.asarray(values), l=np.zeros(n), u=np.ones(n),
        integer_idx=np.arange(n), witness=np.zeros(n),
    )


def _max_independent_set(rng, nodes: int, edge_prob: float) -> MilpInstance:
    """Max independent set on G(nodes, edge_prob): x_u + x_v <= 1 per edge."""
    for attempt in range(64):
        iu, iv = np.triu_indices(nodes, k=1)
        mask = rng.random(iu.size) < edge_prob
        edges = list(zip(iu[mask], iv[mask]))
        if edges:
            break
    else:
        raise ValueError("edge probability too small: no edges after 64 draws")
    row_entries = [[(int(a), 1.0), (int(b), 1.0)] for a, b in edges]
    a_rows, a_cols, a_vals = _coo_from_rows(row_entries)
    m = len(edges)
    return MilpInstance(
        n=nodes, m=m, a_rows=a_rows, a_cols=a_cols, a_vals=a_vals,
        b=np.ones(m), c=-np.ones(nodes), l=np.zeros(nodes), u=np.ones(nodes),
        integer_idx=np.arange(nodes), witness=np.zeros(nodes),
    )


def _multiple_knapsack(rng, items: int, knapsacks: int) -> MilpInstance:
    """Assign items to knapsacks under capacity, maximize packed profit."""
    profit = rng.integers(10, 101, size=items).astype(np.float64)
    weight = rng.integers(5, 51, size=items).astype(np.float64)
    cap = np.full(knapsacks, max(1.0, np.floor(0.5 * weight.sum() / knapsacks)))
    n = items * knapsacks  # x[i,k] laid out item-major: j = i*knapsacks + k
    row_entries = []
    for k in range(knapsacks):
        row_entries.append([(i * knapsacks + k, weight[i]) for i in range(items)])
    for i in range(items):
        row_entries.append([(i * knapsacks + k, 1.0) for k in range(knapsacks)])
    a_rows, a_cols, a_vals = _coo_from_rows(row_entries)
    b = np.concatenate([cap, np.ones(items)])
    c = -np.concatenate([np.full(knapsacks, p) for p in profit])
    return MilpInstance(
        n=n, m=knapsacks + items, a_rows=a_rows, a_cols=a_cols, a_vals=a_vals,
        b=b, c=c, l=np.zeros(n), u=np.ones(n),
        integer_idx=np.arange(n), witness=np.zeros(n),
    )


def random_binary_milp(n_vars: int, n_rows: int, seed: int) -> MilpInstance:
    """Small random pure-binary MILP, feasible by construction (used by tests and demos)."""
    rng = np.random.default_rng([seed, 9090])
    c = rng.integers(-50, 51, size=n_vars).astype(np.float64)
    witness = (rng.random(n_vars) < 0.5).astype(np.float64)
    rows, cols, vals, b = [], [], [], []
    for i in range(n_rows):
        k = int(rng.integers(2, n_vars + 1))
        chosen = rng.choice(n_vars, size=k, replace=False)
        coefs = rng.integers(-10, 11, size=k).astype(np.float64)
        if np.all(coefs == 0):
            coefs[0] = 1.0
        lhs = float(coefs @ witness[chosen])
        slackness = float(rng.integers(0, 6))
        b.append(lhs + slackness)
        for j, v in zip(chosen, coefs):
            rows.append(i)
            cols.append(int(j))
            vals.append(float(v))
    return MilpInstance(
        n=n_vars, m=n_rows, a_rows=np.array(rows, dtype=np.int64),
        a_cols=np.array(cols, dtype=np.int64), a_vals=np.array(vals),
        b=np.array(b), c=c, l=np.zeros(n_vars), u=np.ones(n_vars),
        integer_idx=np.arange(n_vars), witness=witness,
        name=f"random-binary-s{seed}", family="random-binary", seed=seed,
    )
