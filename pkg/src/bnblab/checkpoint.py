"""Versioned text checkpoints: parameter name -> shape -> row-major floats.

Values are written as C99 hex floats so save/load round-trips are exact at
the bit level, which the tests rely on.
"""

from __future__ import annotations

import numpy as np

MAGIC = "BNBLAB-CKPT"
VERSION = 1


def save_checkpoint(path, params: dict[str, np.ndarray], meta: dict | None = None) -> None:
    names = sorted(params)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{MAGIC} v{VERSION} {len(names)}\n")
        for key, val in sorted((meta or {}).items()):
            fh.write(f"# meta {key}={val}\n")
        for name in names:
            arr = np.asarray(params[name], dtype=np.float64)
            head = [name, str(arr.ndim)] + [str(d) for d in arr.shape]
            fh.write(" ".join(head) + "\n")
            fh.write(" ".join(float(v).hex() for v in arr.reshape(-1)) + "\n")


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 3 or header[0] != MAGIC or header[1] != f"v{VERSION}":
            raise ValueError(f"not a {MAGIC} v{VERSION} file: {path}")
        count = int(header[2])
        params: dict[str, np.ndarray] = {}
        meta: dict[str, str] = {}
        line = fh.readline()
        while line.startswith("# meta "):
            key, _, val = line[len("# meta "):].rstrip("\n").partition("=")
            meta[key] = val
            line = fh.readline()
        for _ in range(count):
            head = line.split()
            name, ndim = head[0], int(head[1])
            shape = tuple(int(d) for d in head[2:2 + ndim])
            values = [float.fromhex(tok) for tok in fh.readline().split()]
            expect = int(np.prod(shape)) if shape else 1
            if len(values) != expect:
                raise ValueError(f"checkpoint entry '{name}': expected {expect} values, got {len(values)}")
            params[name] = np.array(values, dtype=np.float64).reshape(shape)
            line = fh.readline()
        if len(params) != count:
            raise ValueError("checkpoint truncated")
    return params, meta
