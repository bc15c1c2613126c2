"""Latent model of branch-and-bound dynamics over bipartite MILP graphs.

Three networks share one parameter store:

* ``represent`` embeds an observation into per-variable / per-constraint /
  per-edge latent vectors of width d_h.
* ``predict`` runs a two-pass graph convolution core and emits branching
  logits, a histogram-coded subtree-size value, and a 2-logit
  branchability score.
* ``dynamics`` maps (latent, branching variable) to the two child latents
  through independent left/right heads, each an action-row embedder, a
  conv pair, and a residual output module.

A linear projector plus small predictor implement the self-supervised
consistency pair (online branch vs stop-gradient target branch).

Everything is built from the autodiff primitive vocabulary; gathers are
one-hot matmuls and scatters are segment sums, so the whole model is
differentiable end to end with no custom gradient rules.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .hlgauss import HlGaussCodec
from .observation import BASE_DC, BASE_DE, BASE_DV, BipartiteObservation


@dataclass(frozen=True)
class ModelConfig:
    d_v: int = BASE_DV
    d_c: int = BASE_DC
    d_e: int = BASE_DE
    d_h: int = 64
    d_proj: int = 16
    m_b: int = 18
    z_min: float = -1.0
    z_max: float = 16.0
    sigma_g: float = 0.75

    def codec(self) -> HlGaussCodec:
        return HlGaussCodec(t_min=self.z_min, t_max=self.z_max,
                            num_bins=self.m_b, sigma=self.sigma_g)

    def validate(self) -> None:
        if self.d_v < BASE_DV or self.d_c < BASE_DC or self.d_e < BASE_DE:
            raise ValueError("latent input dims below base feature counts")
        if self.d_h < 1 or self.d_proj < 1 or self.m_b < 2:
            raise ValueError("bad model dimensions")


@dataclass
class LatentState:
    """Embedding triplet (variables, constraints, edges) plus graph wiring."""

    var: ad.Tensor
    con: ad.Tensor
    edge: ad.Tensor
    edge_rows: np.ndarray
    edge_cols: np.ndarray

    @property
    def n(self) -> int:
        return self.var.data.shape[0]

    @property
    def m(self) -> int:
        return self.con.data.shape[0]


@dataclass
class Prediction:
    policy_logits: ad.Tensor      # (n,)
    value_hist: ad.Tensor         # (m_b,), sums to 1
    branch_logits: ad.Tensor      # (2,), [not-branchable, branchable]


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class BnbModel:
    """Parameter store plus the h / f / g forward passes."""

    def __init__(self, config: ModelConfig | None = None, seed: int = 0):
        self.config = config or ModelConfig()
        self.config.validate()
        self.params: dict[str, ad.Tensor] = {}
        rng = np.random.default_rng([seed, 4242])
        d = self.config.d_h
        self._mlp_init(rng, "ev", self.config.d_v, d, d)
        self._mlp_init(rng, "ec", self.config.d_c, d, d)
        self._mlp_init(rng, "ee", self.config.d_e, d, d)
        for prefix in ("f.vc", "f.cv", "gl.vc", "gl.cv", "gr.vc", "gr.cv"):
            self._conv_init(rng, prefix)
        self._mlp_init(rng, "f.om", d, d, d)
        self._head_init(rng, "f.op", d, 1)
        self._head_init(rng, "f.ov", d, self.config.m_b)
        self._head_init(rng, "f.ob", d, 2)
        for head in ("gl", "gr"):
            self._mlp_init(rng, f"{head}.ea", d, d, d)
            self._mlp_init(rng, f"{head}.ogv", 2 * d, d, d)
            self._mlp_init(rng, f"{head}.ogc", 2 * d, d, d)
        self._head_init(rng, "pj", d, self.config.d_proj)
        self._mlp_init(rng, "pd", self.config.d_proj, self.config.d_proj,
                       self.config.d_proj)

    # -- parameter bookkeeping ------------------------------------------

    def _param(self, name: str, data: np.ndarray) -> None:
        self.params[name] = ad.parameter(data, name)

    def _mlp_init(self, rng, prefix: str, d_in: int, d_mid: int, d_out: int) -> None:
        self._param(f"{prefix}.w1", _glorot(rng, d_in, d_mid))
        self._param(f"{prefix}.b1", np.zeros(d_mid))
        self._param(f"{prefix}.w2", _glorot(rng, d_mid, d_out))
        self._param(f"{prefix}.b2", np.zeros(d_out))

    def _conv_init(self, rng, prefix: str) -> None:
        d = self.config.d_h
        self._param(f"{prefix}.wn", _glorot(rng, d, d))
        self._param(f"{prefix}.bn", np.zeros(d))
        self._param(f"{prefix}.we", _glorot(rng, d, d))
        self._param(f"{prefix}.be", np.zeros(d))
        self._param(f"{prefix}.wu", _glorot(rng, 2 * d, d))
        self._param(f"{prefix}.bu", np.zeros(d))

    def _head_init(self, rng, prefix: str, d_in: int, d_out: int) -> None:
        self._param(f"{prefix}.w", _glorot(rng, d_in, d_out))
        self._param(f"{prefix}.b", np.zeros(d_out))

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self.params) ^ set(state)
        if missing:
            raise ValueError(f"parameter name mismatch: {sorted(missing)[:4]}")
        for k, v in state.items():
            if self.params[k].data.shape != v.shape:
                raise ValueError(f"shape mismatch for {k}")
            self.params[k].data = np.asarray(v, dtype=np.float64).copy()

    def zero_dynamics(self) -> None:
        """Zero everything downstream of the action embedders (test hook)."""
        for k, t in self.params.items():
            if k.startswith(("gl.vc", "gl.cv", "gr.vc", "gr.cv",
                             "gl.ogv", "gl.ogc", "gr.ogv", "gr.ogc")):
                t.data = np.zeros_like(t.data)

    # -- building blocks -------------------------------------------------

    def _mlp(self, x: ad.Tensor, prefix: str, final_relu: bool = True) -> ad.Tensor:
        p = self.params
        h = ad.relu(ad.linear(x, p[f"{prefix}.w1"], p[f"{prefix}.b1"]))
        out = ad.linear(h, p[f"{prefix}.w2"], p[f"{prefix}.b2"])
        return ad.relu(out) if final_relu else out

    def _head(self, x: ad.Tensor, prefix: str) -> ad.Tensor:
        p = self.params
        return ad.linear(x, p[f"{prefix}.w"], p[f"{prefix}.b"])

    def _conv(self, src: ad.Tensor, dst: ad.Tensor, edge: ad.Tensor,
              gather: np.ndarray, scatter_ids: np.ndarray, num_out: int,
              prefix: str) -> ad.Tensor:
        """One directed message pass src -> dst with edge gating."""
        p = self.params
        gated_src = ad.relu(ad.linear(src, p[f"{prefix}.wn"], p[f"{prefix}.bn"]))
        per_edge = ad.matmul(ad.constant(gather), gated_src)
        gate = ad.relu(ad.linear(edge, p[f"{prefix}.we"], p[f"{prefix}.be"]))
        agg = ad.segment_sum(ad.mul(per_edge, gate), scatter_ids, num_out)
        joint = ad.concat([dst, agg], axis=1)
        return ad.relu(ad.linear(joint, p[f"{prefix}.wu"], p[f"{prefix}.bu"]))

    def _conv_pair(self, lat: LatentState, group: str) -> tuple[ad.Tensor, ad.Tensor]:
        """Variable-to-constraint then constraint-to-variable pass."""
        g_cols = _onehot(lat.edge_cols, lat.n)
        g_rows = _onehot(lat.edge_rows, lat.m)
        c2 = self._conv(lat.var, lat.con, lat.edge, g_cols, lat.edge_rows,
                        lat.m, f"{group}.vc")
        v2 = self._conv(c2, lat.var, lat.edge, g_rows, lat.edge_cols,
                        lat.n, f"{group}.cv")
        return v2, c2

    # -- the three networks ----------------------------------------------

    def represent(self, obs: BipartiteObservation) -> LatentState:
        cfg = self.config
        if obs.var_feats.shape[1] != cfg.d_v or obs.con_feats.shape[1] != cfg.d_c \
                or obs.edge_feats.shape[1] != cfg.d_e:
            raise ValueError(
                f"observation dims {obs.var_feats.shape[1]}/{obs.con_feats.shape[1]}/"
                f"{obs.edge_feats.shape[1]} do not match model config "
                f"{cfg.d_v}/{cfg.d_c}/{cfg.d_e}")
        var = self._mlp(ad.constant(obs.var_feats), "ev")
        con = self._mlp(ad.constant(obs.con_feats), "ec")
        edge = self._mlp(ad.constant(obs.edge_feats), "ee")
        return LatentState(var, con, edge,
                           obs.edge_rows.copy(), obs.edge_cols.copy())

    def predict(self, lat: LatentState) -> Prediction:
        v2, _ = self._conv_pair(lat, "f")
        feats = self._mlp(v2, "f.om")
        logits = ad.reshape(self._head(feats, "f.op"), (lat.n,))
        hist = ad.softmax(ad.mean_pool(self._head(feats, "f.ov")), axis=-1)
        blogits = ad.mean_pool(self._head(feats, "f.ob"))
        return Prediction(logits, hist, blogits)

    def dynamics(self, lat: LatentState, action: int) -> tuple[LatentState, LatentState]:
        if not 0 <= action < lat.n:
            raise ValueError(f"action {action} out of range for n={lat.n}")
        return (self._child(lat, action, "gl"), self._child(lat, action, "gr"))

    def _child(self, lat: LatentState, action: int, head: str) -> LatentState:
        n = lat.n
        row = np.zeros((1, n))
        row[0, action] = 1.0
        col = row.reshape(n, 1)
        keep = 1.0 - col
        # replace the chosen variable's embedding with its e_a transform
        picked = ad.matmul(ad.constant(row), lat.var)
        embedded = self._mlp(picked, f"{head}.ea")
        x_var = ad.add(ad.mul(lat.var, ad.constant(keep)),
                       ad.matmul(ad.constant(col), embedded))
        base = LatentState(x_var, lat.con, lat.edge, lat.edge_rows, lat.edge_cols)
        v2, c2 = self._conv_pair(base, head)
        dv = self._mlp(ad.concat([x_var, v2], axis=1), f"{head}.ogv", final_relu=False)
        dc = self._mlp(ad.concat([lat.con, c2], axis=1), f"{head}.ogc", final_relu=False)
        return LatentState(ad.add(x_var, dv), ad.add(lat.con, dc), lat.edge,
                           lat.edge_rows, lat.edge_cols)

    # -- consistency pair --------------------------------------------------

    def project_consistency(self, lat: LatentState) -> ad.Tensor:
        """Target branch: project variable embeddings, flatten, stop gradient."""
        proj = self._head(lat.var, "pj")
        flat = ad.reshape(proj, (lat.n * self.config.d_proj,))
        return ad.stop_gradient(flat)

    def predict_consistency(self, lat: LatentState) -> ad.Tensor:
        """Online branch: projector then predictor, flattened."""
        proj = self._head(lat.var, "pj")
        pred = self._mlp(proj, "pd", final_relu=False)
        return ad.reshape(pred, (lat.n * self.config.d_proj,))

    def consistency_loss(self, online: LatentState, target: LatentState) -> ad.Tensor:
        sim = ad.cosine_similarity(self.predict_consistency(online),
                                   self.project_consistency(target))
        return ad.scale(sim, -1.0)

    # -- numpy conveniences (no grad needed) -------------------------------

    def policy_logits(self, obs: BipartiteObservation) -> np.ndarray:
        return self.predict(self.represent(obs)).policy_logits.data.copy()

    def evaluate(self, lat: LatentState) -> tuple[np.ndarray, float, float]:
        """Predict and decode: (policy logits, scalar value, P[branchable])."""
        out = self.predict(lat)
        value = self.config.codec().decode(out.value_hist.data)
        bl = out.branch_logits.data
        e = np.exp(bl - bl.max())
        p_branch = float(e[1] / e.sum())
        return out.policy_logits.data.copy(), float(value), p_branch


def _onehot(ids: np.ndarray, width: int) -> np.ndarray:
    out = np.zeros((ids.size, width))
    out[np.arange(ids.size), ids] = 1.0
    return out


def save_model(path: str, model: BnbModel, extra_meta: dict | None = None) -> None:
    """Checkpoint with the model config embedded, so loads are self-contained."""
    from .checkpoint import save_checkpoint
    cfg = model.config
    meta = {"d_v": cfg.d_v, "d_c": cfg.d_c, "d_e": cfg.d_e, "d_h": cfg.d_h,
            "d_proj": cfg.d_proj, "m_b": cfg.m_b, "z_min": cfg.z_min,
            "z_max": cfg.z_max, "sigma_g": cfg.sigma_g}
    meta.update(extra_meta or {})
    save_checkpoint(path, model.state_dict(), {k: str(v) for k, v in meta.items()})


def load_model(path: str) -> BnbModel:
    from .checkpoint import load_checkpoint
    params, meta = load_checkpoint(path)
    try:
        cfg = ModelConfig(
            d_v=int(meta["d_v"]), d_c=int(meta["d_c"]), d_e=int(meta["d_e"]),
            d_h=int(meta["d_h"]), d_proj=int(meta["d_proj"]),
            m_b=int(meta["m_b"]), z_min=float(meta["z_min"]),
            z_max=float(meta["z_max"]), sigma_g=float(meta["sigma_g"]))
    except KeyError as exc:
        raise ValueError(f"checkpoint lacks model config entry {exc}") from exc
    model = BnbModel(cfg)
    model.load_state_dict(params)
    return model
