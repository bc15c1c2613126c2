"""Plain key=value configuration files.

One flat namespace covers model, search, and training knobs. Unknown keys
are rejected so typos fail loudly. The environment variable BNBLAB_CONFIG
names a default config file picked up when the CLI gets no --config.
"""

from __future__ import annotations

import os

from .model import ModelConfig
from .planner import GumbelConfig
from .training import LossWeights, TrainConfig

ENV_VAR = "BNBLAB_CONFIG"

# name -> (type, default)
SCHEMA: dict[str, tuple] = {
    # training
    "training_steps": (int, 20_000),
    "batch_size": (int, 32),
    "lr_init": (float, 1e-3),
    "lr_final": (float, 1e-5),
    "unroll_steps": (int, 3),            # K
    "td_steps": (int, 3),                # n
    "value_target_mode": (str, "exact"),
    "buffer_capacity": (int, 100_000),
    "sync_every": (int, 100),
    "episodes_per_sync": (int, 1),
    "act_node_limit": (int, 400),
    "act_time_limit": (float, 120.0),
    "family": (str, "ca"),
    "lambda_p": (float, 1.0),
    "lambda_v": (float, 1.0),
    "lambda_b": (float, 1.0),
    "lambda_t": (float, 1.0),
    # model
    "d_v": (int, 19),
    "d_c": (int, 5),
    "d_e": (int, 1),
    "d_h": (int, 64),
    "d_proj": (int, 16),
    "num_bins": (int, 18),               # m_b
    "z_min": (float, -1.0),
    "z_max": (float, 16.0),
    "sigma_g": (float, 0.75),
    # search
    "simulations": (int, 50),            # N
    "root_actions": (int, 10),           # M
    "c_visit": (float, 50.0),
    "c_scale": (float, 0.1),
    "depth_cap": (int, 64),
    # training-time search (smaller budget while acting)
    "act_simulations": (int, 8),
    "act_root_actions": (int, 4),
    # training model width may differ from the eval default
    "train_d_h": (int, 32),
}


def defaults() -> dict:
    return {k: v for k, (_, v) in SCHEMA.items()}


def parse_value(key: str, raw: str):
    if key not in SCHEMA:
        raise ValueError(f"unknown config key {key!r}")
    typ = SCHEMA[key][0]
    raw = raw.strip()
    try:
        return typ(raw)
    except ValueError as exc:
        raise ValueError(f"bad value for {key}: {raw!r}") from exc


def load_config(path: str) -> dict:
    cfg = defaults()
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            if "=" not in text:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, _, raw = text.partition("=")
            cfg[key.strip()] = parse_value(key.strip(), raw)
    return cfg


def save_config(path: str, cfg: dict) -> None:
    with open(path, "w") as fh:
        for key in SCHEMA:
            fh.write(f"{key}={cfg.get(key, SCHEMA[key][1])}\n")


def resolve_config(explicit_path: str | None) -> dict:
    """--config beats BNBLAB_CONFIG beats built-in defaults."""
    path = explicit_path or os.environ.get(ENV_VAR)
    if path:
        return load_config(path)
    return defaults()


def apply_overrides(cfg: dict, pairs: list[str]) -> dict:
    out = dict(cfg)
    for pair in pairs:
        if "=" not in pair:
            raise ValueError(f"override {pair!r} is not key=value")
        key, _, raw = pair.partition("=")
        out[key.strip()] = parse_value(key.strip(), raw)
    return out


# -- builders ---------------------------------------------------------------


def model_config(cfg: dict, d_h: int | None = None) -> ModelConfig:
    return ModelConfig(d_v=cfg["d_v"], d_c=cfg["d_c"], d_e=cfg["d_e"],
                       d_h=d_h if d_h is not None else cfg["d_h"],
                       d_proj=cfg["d_proj"], m_b=cfg["num_bins"],
                       z_min=cfg["z_min"], z_max=cfg["z_max"],
                       sigma_g=cfg["sigma_g"])


def gumbel_config(cfg: dict, simulations: int | None = None) -> GumbelConfig:
    return GumbelConfig(
        simulations=simulations if simulations is not None else cfg["simulations"],
        root_actions=cfg["root_actions"], c_visit=cfg["c_visit"],
        c_scale=cfg["c_scale"], depth_cap=cfg["depth_cap"])


def train_config(cfg: dict, seed: int = 0,
                 family_params: dict | None = None) -> TrainConfig:
    return TrainConfig(
        steps=cfg["training_steps"], batch_size=cfg["batch_size"],
        lr_init=cfg["lr_init"], lr_final=cfg["lr_final"],
        unroll=cfg["unroll_steps"], td_steps=cfg["td_steps"],
        value_target_mode=cfg["value_target_mode"],
        buffer_capacity=cfg["buffer_capacity"], sync_every=cfg["sync_every"],
        episodes_per_sync=cfg["episodes_per_sync"],
        act_node_limit=cfg["act_node_limit"],
        act_time_limit=cfg["act_time_limit"], family=cfg["family"],
        family_params=dict(family_params or {}), seed=seed,
        weights=LossWeights(cfg["lambda_p"], cfg["lambda_v"],
                            cfg["lambda_b"], cfg["lambda_t"]),
        model=model_config(cfg, d_h=cfg["train_d_h"]),
        search=GumbelConfig(simulations=cfg["act_simulations"],
                            root_actions=cfg["act_root_actions"],
                            c_visit=cfg["c_visit"], c_scale=cfg["c_scale"],
                            depth_cap=cfg["depth_cap"]))
