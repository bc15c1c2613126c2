"""Minimal dense-tensor reverse-mode autodiff over a fixed primitive set.

Tensors hold float64 numpy arrays and record the primitive that produced
them, forming an eager acyclic graph. `backward` walks the graph once in
reverse topological order and accumulates gradients into parameter leaves.
Every primitive checks its output for NaN/Inf and raises, so a non-finite
value is caught at the op that produced it rather than at the loss.
"""

from __future__ import annotations

import numpy as np


class NonFiniteError(FloatingPointError):
    """Raised when a primitive produces NaN or Inf."""


def _as_array(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    return a


class Tensor:
    __slots__ = ("data", "grad", "inputs", "vjp", "op", "parameter", "name")

    def __init__(self, data, inputs=(), vjp=None, op="leaf", parameter=False, name=None):
        self.data = _as_array(data)
        self.grad = None
        self.inputs = tuple(inputs)
        self.vjp = vjp  # callable grad_out -> tuple of grads aligned with inputs
        self.op = op
        self.parameter = parameter
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        tag = self.name or self.op
        return f"Tensor({tag}, shape={self.data.shape})"


def parameter(data, name: str) -> Tensor:
    return Tensor(data, parameter=True, name=name)


def constant(data, name=None) -> Tensor:
    return Tensor(data, name=name)


def _make(data, inputs, vjp, op) -> Tensor:
    out = np.asarray(data, dtype=np.float64)
    if not np.all(np.isfinite(out)):
        raise NonFiniteError(f"non-finite output of primitive '{op}'")
    return Tensor(out, inputs=inputs, vjp=vjp, op=op)


# ---------------------------------------------------------------------------
# primitives


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError(f"matmul expects 2-D operands, got {a.data.shape} @ {b.data.shape}")
    out = a.data @ b.data

    def vjp(g):
        return g @ b.data.T, a.data.T @ g

    return _make(out, (a, b), vjp, "matmul")


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ValueError(f"add expects equal shapes, got {a.data.shape} + {b.data.shape}")

    def vjp(g):
        return g, g

    return _make(a.data + b.data, (a, b), vjp, "add")


def broadcast_add(a: Tensor, b: Tensor) -> Tensor:
    """Row-broadcast add: (n,k) + (k,)."""
    if a.data.ndim != 2 or b.data.shape != (a.data.shape[1],):
        raise ValueError(f"broadcast_add expects (n,k)+(k,), got {a.data.shape} + {b.data.shape}")

    def vjp(g):
        return g, g.sum(axis=0)

    return _make(a.data + b.data, (a, b), vjp, "broadcast_add")


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0  # subgradient at 0 defined as 0

    def vjp(g):
        return (g * mask,)

    return _make(np.where(mask, a.data, 0.0), (a,), vjp, "relu")


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - np.max(a.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / np.sum(e, axis=axis, keepdims=True)

    def vjp(g):
        dot = np.sum(g * s, axis=axis, keepdims=True)
        return ((g - dot) * s,)

    return _make(s, (a,), vjp, "softmax")


def log(a: Tensor) -> Tensor:
    with np.errstate(divide="raise", invalid="raise"):
        try:
            out = np.log(a.data)
        except FloatingPointError as exc:
            raise NonFiniteError(f"log of non-positive value: {exc}") from exc

    def vjp(g):
        return (g / a.data,)

    return _make(out, (a,), vjp, "log")


def segment_sum(a: Tensor, segment_ids: np.ndarray, num_segments: int) -> Tensor:
    """Sum rows of a (N,k) array into num_segments groups given by segment_ids."""
    ids = np.asarray(segment_ids, dtype=np.int64)
    if a.data.ndim != 2 or ids.shape != (a.data.shape[0],):
        raise ValueError("segment_sum expects (N,k) data and (N,) ids")
    if ids.size and (ids.min() < 0 or ids.max() >= num_segments):
        raise ValueError("segment id out of range")
    out = np.zeros((num_segments, a.data.shape[1]))
    np.add.at(out, ids, a.data)

    def vjp(g):
        return (g[ids],)

    return _make(out, (a,), vjp, "segment_sum")


def mean_pool(a: Tensor) -> Tensor:
    """Mean over rows: (n,k) -> (k,)."""
    if a.data.ndim != 2:
        raise ValueError("mean_pool expects a 2-D tensor")
    n = a.data.shape[0]

    def vjp(g):
        return (np.tile(g / n, (n, 1)),)

    return _make(a.data.mean(axis=0), (a,), vjp, "mean_pool")


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        return tuple(
            np.take(g, np.arange(offsets[i], offsets[i + 1]), axis=axis)
            for i in range(len(tensors))
        )

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), vjp, "concat")


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise multiply with numpy broadcasting; grads un-broadcast by summation."""
    out = a.data * b.data

    def vjp(g):
        return _unbroadcast(g * b.data, a.data.shape), _unbroadcast(g * a.data, b.data.shape)

    return _make(out, (a, b), vjp, "mul")


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g.reshape(shape)


def cosine_similarity(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 1 or b.data.ndim != 1:
        raise ValueError("cosine_similarity expects 1-D vectors")
    na = np.linalg.norm(a.data)
    nb = np.linalg.norm(b.data)
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine_similarity of a zero vector")
    cos = float(a.data @ b.data) / (na * nb)

    def vjp(g):
        ga = g * (b.data / (na * nb) - cos * a.data / (na * na))
        gb = g * (a.data / (na * nb) - cos * b.data / (nb * nb))
        return ga, gb

    return _make(cos, (a, b), vjp, "cosine_similarity")


def stop_gradient(a: Tensor) -> Tensor:
    def vjp(g):
        return (None,)

    return _make(a.data.copy(), (a,), vjp, "stop_gradient")


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)

    def vjp(g):
        return (g.reshape(a.data.shape),)

    return _make(a.data.reshape(shape), (a,), vjp, "reshape")


# ---------------------------------------------------------------------------
# compositions used throughout the model code (no new primitives)


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    return broadcast_add(matmul(x, w), b)


def reduce_sum(v: Tensor) -> Tensor:
    """Sum of a 1-D vector as a scalar tensor, via matmul with a ones column."""
    if v.data.ndim != 1:
        raise ValueError("reduce_sum expects a 1-D vector")
    ones = constant(np.ones((v.data.shape[0], 1)))
    return reshape(matmul(reshape(v, (1, -1)), ones), ())


def scale(a: Tensor, k: float) -> Tensor:
    return mul(a, constant(np.float64(k)))


# ---------------------------------------------------------------------------
# reverse pass


def _toposort(root: Tensor):
    order, seen, stack = [], set(), [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node.inputs:
            stack.append((parent, False))
    return order  # parents before children


def backward(root: Tensor) -> None:
    """Write d(root)/d(node) into .grad of every node reachable from root.

    Within one call contributions along multiple paths are summed; a second
    call on a new graph overwrites .grad of shared leaves rather than
    accumulating across calls.
    """
    if root.data.shape != ():
        raise ValueError(f"backward seed must be scalar, got shape {root.data.shape}")
    order = _toposort(root)
    grads: dict[int, np.ndarray] = {id(root): np.array(1.0)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        node.grad = np.asarray(g, dtype=np.float64)
        if node.vjp is None:
            continue
        for parent, pg in zip(node.inputs, node.vjp(g)):
            if pg is None:
                continue
            if id(parent) in grads:
                grads[id(parent)] = grads[id(parent)] + pg
            else:
                grads[id(parent)] = pg


def gradients(root: Tensor, params: dict[str, Tensor]) -> dict[str, np.ndarray]:
    """Gradient map of a scalar root w.r.t. named parameter leaves (missing = zero)."""
    for p in params.values():
        p.grad = None  # drop leftovers from earlier graphs
    backward(root)
    out = {}
    for name, p in params.items():
        if p.grad is not None:
            out[name] = p.grad
    return out


def finite_difference_check(build_loss, params: dict[str, Tensor],
                            tolerance: float = 1e-4, step: float = 1e-5):
    """Compare analytic gradients of build_loss(params) against central differences.

    build_loss must construct the graph from scratch from the parameter
    tensors and return a scalar Tensor. Returns a report dict with the
    per-parameter max relative error and an overall pass flag.
    """
    loss = build_loss(params)
    grad_map = gradients(loss, params)
    report = {"per_param": {}, "tolerance": tolerance, "passed": True}
    for name, p in params.items():
        analytic = grad_map.get(name, np.zeros_like(p.data))
        flat = p.data.reshape(-1)
        worst = 0.0
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + step
            up = float(build_loss(params).data)
            flat[idx] = orig - step
            down = float(build_loss(params).data)
            flat[idx] = orig
            fd = (up - down) / (2.0 * step)
            an = float(analytic.reshape(-1)[idx])
            denom = max(abs(fd), abs(an), 1.0)
            worst = max(worst, abs(fd - an) / denom)
        report["per_param"][name] = worst
        if worst > tolerance:
            report["passed"] = False
    return report
