"""Problem data model and the line-based instance file format.

Instances are minimization problems min c.x s.t. Ax <= b, l <= x <= u with
an index set of integer variables. A is stored in COO form. Every instance
carries an integer-feasible witness point so feasibility is guaranteed by
construction and checkable at load time.

File format (UTF-8, '#' starts a comment):
    MILP v1 <n> <m>
    OBJ <c_0> ... <c_{n-1}>
    BOUNDS <l_0> <u_0> ... <l_{n-1}> <u_{n-1}>      (-inf / inf literals)
    INT <i_1> ... <i_k>
    ROW <i> <rhs> <k> <col> <coef> ... (k pairs)     one line per constraint
Metadata (name, family, seed, witness) rides in '# meta key=value' lines.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

INTEGRALITY_TOL = 1e-6


class InstanceError(ValueError):
    pass


@dataclass(eq=False)
class MilpInstance:
    n: int
    m: int
    a_rows: np.ndarray   # (nnz,) int
    a_cols: np.ndarray   # (nnz,) int
    a_vals: np.ndarray   # (nnz,) float
    b: np.ndarray        # (m,)
    c: np.ndarray        # (n,)
    l: np.ndarray        # (n,)
    u: np.ndarray        # (n,)
    integer_idx: np.ndarray  # sorted indices of integer variables
    name: str = "unnamed"
    family: str = "custom"
    seed: int = 0
    witness: np.ndarray | None = None  # integer-feasible point
    _dense: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.a_rows = np.asarray(self.a_rows, dtype=np.int64)
        self.a_cols = np.asarray(self.a_cols, dtype=np.int64)
        self.a_vals = np.asarray(self.a_vals, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        self.c = np.asarray(self.c, dtype=np.float64)
        self.l = np.asarray(self.l, dtype=np.float64)
        self.u = np.asarray(self.u, dtype=np.float64)
        self.integer_idx = np.asarray(sorted(set(int(i) for i in self.integer_idx)), dtype=np.int64)
        if self.witness is not None:
            self.witness = np.asarray(self.witness, dtype=np.float64)
        self.validate()

    def validate(self):
        if self.n < 1 or self.m < 0:
            raise InstanceError("need n >= 1 and m >= 0")
        for arr, size, label in [(self.b, self.m, "b"), (self.c, self.n, "c"),
                                 (self.l, self.n, "l"), (self.u, self.n, "u")]:
            if arr.shape != (size,):
                raise InstanceError(f"{label} has shape {arr.shape}, expected ({size},)")
        if np.any(self.l > self.u):
            j = int(np.argmax(self.l > self.u))
            raise InstanceError(f"bound contradiction l > u at variable {j}")
        if not (self.a_rows.shape == self.a_cols.shape == self.a_vals.shape):
            raise InstanceError("COO arrays disagree in length")
        if not np.all(np.isfinite(self.a_vals)):
            raise InstanceError("non-finite constraint coefficient")
        if not (np.all(np.isfinite(self.b)) and np.all(np.isfinite(self.c))):
            raise InstanceError("non-finite b or c entry")
        if self.a_rows.size:
            if self.a_rows.min() < 0 or self.a_rows.max() >= self.m:
                raise InstanceError("row index out of range")
            if self.a_cols.min() < 0 or self.a_cols.max() >= self.n:
                raise InstanceError("column index out of range")
        if self.integer_idx.size and (self.integer_idx.min() < 0 or self.integer_idx.max() >= self.n):
            raise InstanceError("integer index out of range")
        present = np.zeros(self.m, dtype=bool)
        present[self.a_rows[self.a_vals != 0.0]] = True
        if self.m and not present.all():
            raise InstanceError(f"constraint row {int(np.argmin(present))} has no nonzero")
        if self.witness is not None:
            self.check_point(self.witness)

    def check_point(self, x: np.ndarray, tol: float = 1e-6):
        """Raise unless x is integer-feasible for this instance."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n,):
            raise InstanceError("witness has wrong shape")
        if np.any(x < self.l - tol) or np.any(x > self.u + tol):
            raise InstanceError("witness violates bounds")
        lhs = self.dense_a() @ x
        if np.any(lhs > self.b + tol * (1.0 + np.abs(self.b))):
            raise InstanceError("witness violates a constraint")
        frac = np.abs(x[self.integer_idx] - np.round(x[self.integer_idx]))
        if np.any(frac > INTEGRALITY_TOL):
            raise InstanceError("witness is not integral")

    def dense_a(self) -> np.ndarray:
        if self._dense is None:
            dense = np.zeros((self.m, self.n))
            np.add.at(dense, (self.a_rows, self.a_cols), self.a_vals)
            self._dense = dense
        return self._dense

    @property
    def nnz(self) -> int:
        return int(self.a_vals.size)

    def objective(self, x: np.ndarray) -> float:
        return float(self.c @ np.asarray(x, dtype=np.float64))


def _fmt(v: float) -> str:
    if v == np.inf:
        return "inf"
    if v == -np.inf:
        return "-inf"
    return repr(float(v))


def _parse_float(tok: str, lineno: int) -> float:
    tok = tok.strip()
    if tok == "inf":
        return np.inf
    if tok == "-inf":
        return -np.inf
    try:
        return float(tok)
    except ValueError as exc:
        raise InstanceError(f"line {lineno}: bad float {tok!r}") from exc


def write_instance(inst: MilpInstance, path) -> None:
    rows: dict[int, list[tuple[int, float]]] = {i: [] for i in range(inst.m)}
    for r, cidx, v in zip(inst.a_rows, inst.a_cols, inst.a_vals):
        rows[int(r)].append((int(cidx), float(v)))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"MILP v1 {inst.n} {inst.m}\n")
        fh.write(f"# meta name={inst.name}\n")
        fh.write(f"# meta family={inst.family}\n")
        fh.write(f"# meta seed={inst.seed}\n")
        if inst.witness is not None:
            fh.write("# meta witness=" + ",".join(_fmt(v) for v in inst.witness) + "\n")
        fh.write("OBJ " + " ".join(_fmt(v) for v in inst.c) + "\n")
        pairs = " ".join(f"{_fmt(lo)} {_fmt(hi)}" for lo, hi in zip(inst.l, inst.u))
        fh.write("BOUNDS " + pairs + "\n")
        fh.write("INT" + "".join(f" {i}" for i in inst.integer_idx) + "\n")
        for i in range(inst.m):
            entries = sorted(rows[i])
            flat = " ".join(f"{cidx} {_fmt(v)}" for cidx, v in entries)
            fh.write(f"ROW {i} {_fmt(inst.b[i])} {len(entries)} {flat}\n".rstrip() + "\n")


def read_instance(path) -> MilpInstance:
    meta: dict[str, str] = {}
    header = None
    c = l = u = None
    int_idx: list[int] = []
    seen_int = False
    row_data: dict[int, tuple[float, list[tuple[int, float]]]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if line.startswith("# meta "):
                key, _, val = line[len("# meta "):].partition("=")
                meta[key.strip()] = val
                continue
            if not line or line.startswith("#"):
                continue
            toks = line.split()
            if header is None:
                if len(toks) != 4 or toks[0] != "MILP" or toks[1] != "v1":
                    raise InstanceError(f"line {lineno}: expected header 'MILP v1 n m'")
                header = (int(toks[2]), int(toks[3]))
                continue
            n, m = header
            kind = toks[0]
            if kind == "OBJ":
                if len(toks) != n + 1:
                    raise InstanceError(f"line {lineno}: OBJ expects {n} values")
                c = np.array([_parse_float(t, lineno) for t in toks[1:]])
            elif kind == "BOUNDS":
                if len(toks) != 2 * n + 1:
                    raise InstanceError(f"line {lineno}: BOUNDS expects {n} pairs")
                vals = [_parse_float(t, lineno) for t in toks[1:]]
                l = np.array(vals[0::2])
                u = np.array(vals[1::2])
            elif kind == "INT":
                int_idx = [int(t) for t in toks[1:]]
                seen_int = True
            elif kind == "ROW":
                if len(toks) < 4:
                    raise InstanceError(f"line {lineno}: short ROW line")
                i = int(toks[1])
                rhs = _parse_float(toks[2], lineno)
                k = int(toks[3])
                if len(toks) != 4 + 2 * k:
                    raise InstanceError(f"line {lineno}: ROW {i} expects {k} (col,coef) pairs")
                entries = []
                for p in range(k):
                    cidx = int(toks[4 + 2 * p])
                    coef = _parse_float(toks[5 + 2 * p], lineno)
                    entries.append((cidx, coef))
                if i in row_data:
                    raise InstanceError(f"line {lineno}: duplicate ROW {i}")
                row_data[i] = (rhs, entries)
            else:
                raise InstanceError(f"line {lineno}: unknown record {kind!r}")
    if header is None:
        raise InstanceError("missing header")
    n, m = header
    if c is None or l is None or u is None or not seen_int:
        raise InstanceError("missing OBJ, BOUNDS, or INT section")
    if set(row_data) != set(range(m)):
        raise InstanceError(f"expected rows 0..{m-1}, got {sorted(row_data)}")
    a_rows, a_cols, a_vals, b = [], [], [], np.zeros(m)
    for i in range(m):
        rhs, entries = row_data[i]
        b[i] = rhs
        for cidx, coef in entries:
            a_rows.append(i)
            a_cols.append(cidx)
            a_vals.append(coef)
    witness = None
    if "witness" in meta:
        witness = np.array([_parse_float(t, 0) for t in meta["witness"].split(",")])
    return MilpInstance(
        n=n, m=m,
        a_rows=np.array(a_rows, dtype=np.int64), a_cols=np.array(a_cols, dtype=np.int64),
        a_vals=np.array(a_vals), b=b, c=c, l=l, u=u, integer_idx=np.array(int_idx, dtype=np.int64),
        name=meta.get("name", "unnamed"), family=meta.get("family", "custom"),
        seed=int(meta.get("seed", "0")), witness=witness,
    )
