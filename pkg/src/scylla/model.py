"""Problem data: raw MIP instances, the canonical ``Ax >= b`` form and the
sparse matrix that every algorithm reaches the constraint data through.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from scylla.errors import InfeasibleInstanceError, InstanceError

INF = np.inf

# Row senses as written in MPS files; "R" is a ranged row rhs <= a.x <= rhs + range.
SENSES = ("G", "L", "E", "R")


@dataclass
class Variable:
    name: str
    lower: float = 0.0
    upper: float = INF
    is_integer: bool = False
    objective: float = 0.0


@dataclass
class Row:
    name: str
    sense: str
    coefficients: list[tuple[int, float]] = field(default_factory=list)
    rhs: float = 0.0
    range: float | None = None


@dataclass
class Instance:
    """A MIP exactly as read from file."""

    name: str
    variables: list[Variable] = field(default_factory=list)
    rows: list[Row] = field(default_factory=list)
    objective_sense: str = "min"
    objective_constant: float = 0.0

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    def validate(self) -> None:
        """Raise :class:`InstanceError` if a structural invariant is broken."""
        n = len(self.variables)
        if self.objective_sense not in ("min", "max"):
            raise InstanceError(f"unknown objective sense {self.objective_sense!r}")
        for row in self.rows:
            if row.sense not in SENSES:
                raise InstanceError(f"row {row.name!r}: unknown sense {row.sense!r}")
            if row.sense == "R" and (row.range is None or not np.isfinite(row.range)):
                raise InstanceError(f"row {row.name!r}: ranged row needs a finite range")
            for j, _ in row.coefficients:
                if not 0 <= j < n:
                    raise InstanceError(f"row {row.name!r}: variable index {j} out of range")

    def row_activity(self, x: Sequence[float]) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.array([sum(a * x[j] for j, a in row.coefficients) for row in self.rows])

    def objective_value(self, x: Sequence[float]) -> float:
        x = np.asarray(x, dtype=float)
        c = np.array([v.objective for v in self.variables])
        return float(c @ x) + self.objective_constant

    def max_violation(self, x: Sequence[float], int_tol: float = 1e-6) -> float:
        """Worst violation of rows, bounds and integrality at ``x``.

        Row violations are relative, ``viol / (1 + |rhs|)``, the same
        convention :func:`scylla.propagate.check_mip_feasible` uses.
        """
        x = np.asarray(x, dtype=float)
        worst = 0.0
        for act, row in zip(self.row_activity(x), self.rows):
            lo, hi = row_limits(row)
            if act < lo:
                worst = max(worst, (lo - act) / (1.0 + abs(lo)))
            if act > hi:
                worst = max(worst, (act - hi) / (1.0 + abs(hi)))
        for xj, var in zip(x, self.variables):
            worst = max(worst, var.lower - xj, xj - var.upper)
            if var.is_integer:
                worst = max(worst, abs(xj - np.round(xj)))
        return float(worst)


def row_limits(row: Row) -> tuple[float, float]:
    """Return ``(lo, hi)`` with ``lo <= a.x <= hi`` for any row sense."""
    if row.sense == "G":
        return row.rhs, INF
    if row.sense == "L":
        return -INF, row.rhs
    if row.sense == "E":
        return row.rhs, row.rhs
    return row.rhs, row.rhs + row.range


class SparseMatrix:
    """Immutable sparse matrix with both row- and column-oriented storage.

    Products run in a fixed left-to-right order along each stored row of
    ``A`` (for ``A @ v``) or of ``A.T`` (for ``A.T @ w``), so results are
    bit-reproducible.
    """

    def __init__(self, rows, cols, vals, shape: tuple[int, int]):
        m, n = int(shape[0]), int(shape[1])
        coo = sp.coo_matrix(
            (np.asarray(vals, dtype=float), (np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64))),
            shape=(m, n),
        )
        csr = coo.tocsr()  # sums duplicates
        csr.eliminate_zeros()
        csr.sort_indices()
        csc = csr.tocsc()
        csc.sort_indices()
        self._csr = csr
        self._csc = csc
        for arr in (csr.data, csr.indices, csr.indptr, csc.data, csc.indices, csc.indptr):
            arr.setflags(write=False)
        self.shape = (m, n)

    @classmethod
    def from_dense(cls, dense) -> "SparseMatrix":
        dense = np.atleast_2d(np.asarray(dense, dtype=float))
        r, c = np.nonzero(dense)
        return cls(r, c, dense[r, c], dense.shape)

    @classmethod
    def from_scipy(cls, mat) -> "SparseMatrix":
        coo = sp.coo_matrix(mat)
        return cls(coo.row, coo.col, coo.data, coo.shape)

    @property
    def n_rows(self) -> int:
        return self.shape[0]

    @property
    def n_cols(self) -> int:
        return self.shape[1]

    @property
    def nnz(self) -> int:
        return int(self._csr.nnz)

    def matvec(self, v) -> np.ndarray:
        v = np.ascontiguousarray(v, dtype=float)
        if v.shape != (self.shape[1],):
            raise ValueError(f"matvec: expected vector of length {self.shape[1]}, got shape {v.shape}")
        return np.asarray(self._csr @ v, dtype=float)

    def rmatvec(self, w) -> np.ndarray:
        w = np.ascontiguousarray(w, dtype=float)
        if w.shape != (self.shape[0],):
            raise ValueError(f"matvec_transpose: expected vector of length {self.shape[0]}, got shape {w.shape}")
        # the transpose of a CSC matrix is a CSR view of A.T (no copy)
        return np.asarray(self._csc.T @ w, dtype=float)

    # Element-level access. Not used by the first-order LP solver.

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        c = self._csr
        s, e = c.indptr[i], c.indptr[i + 1]
        return c.indices[s:e], c.data[s:e]

    def col(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        c = self._csc
        s, e = c.indptr[j], c.indptr[j + 1]
        return c.indices[s:e], c.data[s:e]

    @property
    def csr(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(indptr, indices, data)`` of the row-oriented view."""
        return self._csr.indptr, self._csr.indices, self._csr.data

    @property
    def csc(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self._csc.indptr, self._csc.indices, self._csc.data

    def triplets(self, by: str = "row") -> list[tuple[int, int, float]]:
        if by == "row":
            coo = self._csr.tocoo()
            return list(zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist()))
        out = []
        indptr, indices, data = self.csc
        for j in range(self.shape[1]):
            for p in range(indptr[j], indptr[j + 1]):
                out.append((int(indices[p]), j, float(data[p])))
        return sorted(out)

    def to_scipy(self) -> sp.csr_matrix:
        return self._csr.copy()

    def to_dense(self) -> np.ndarray:
        return self._csr.toarray()

    def __repr__(self) -> str:
        return f"SparseMatrix(shape={self.shape}, nnz={self.nnz})"


def matvec(A: SparseMatrix, v) -> np.ndarray:
    return A.matvec(v)


def matvec_transpose(A: SparseMatrix, w) -> np.ndarray:
    return A.rmatvec(w)


def operator_norm_estimate(A: SparseMatrix, iters: int = 50, seed: int = 0) -> float:
    """Power-iteration estimate of the spectral norm of ``A``.

    Returns ``||A v||`` for the final unit iterate ``v``, which never
    exceeds the true norm.
    """
    m, n = A.shape
    if m == 0 or n == 0:
        return 0.0
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        w = A.rmatvec(A.matvec(v))
        nw = np.linalg.norm(w)
        if nw == 0.0:
            break
        v = w / nw
    est = float(np.linalg.norm(A.matvec(v)))
    return est


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class StandardForm:
    """``min c.x + const  s.t.  A x >= b,  lower <= x <= upper,  x_I integer``.

    ``column_map[j]`` is the Instance variable behind column ``j``;
    ``fixed_values`` holds Instance variables removed by :func:`cleanup`.
    """

    c: np.ndarray
    A: SparseMatrix
    b: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    integer: np.ndarray
    objective_constant: float = 0.0
    objective_sense_flipped: bool = False
    var_names: tuple[str, ...] = ()
    column_map: np.ndarray | None = None
    row_names: tuple[str, ...] = ()
    n_source_vars: int | None = None
    fixed_values: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("c", "b", "lower", "upper"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))
        integer = np.array(sorted(set(int(j) for j in self.integer)), dtype=np.int64)
        integer.setflags(write=False)
        object.__setattr__(self, "integer", integer)
        n = self.c.shape[0]
        cmap = np.arange(n) if self.column_map is None else np.asarray(self.column_map, dtype=np.int64)
        cmap.setflags(write=False)
        object.__setattr__(self, "column_map", cmap)
        if self.n_source_vars is None:
            object.__setattr__(self, "n_source_vars", n)
        if not self.var_names:
            object.__setattr__(self, "var_names", tuple(f"x{j}" for j in range(n)))
        m = self.b.shape[0]
        if self.A.shape != (m, n):
            raise ValueError(f"A has shape {self.A.shape}, expected {(m, n)}")
        if self.lower.shape != (n,) or self.upper.shape != (n,):
            raise ValueError("bound vectors must have one entry per column")
        if len(self.integer) and (self.integer[0] < 0 or self.integer[-1] >= n):
            raise ValueError("integer index out of range")

    @property
    def n(self) -> int:
        return self.c.shape[0]

    @property
    def m(self) -> int:
        return self.b.shape[0]

    @property
    def is_integer(self) -> np.ndarray:
        mask = np.zeros(self.n, dtype=bool)
        mask[self.integer] = True
        return mask

    def objective(self, x) -> float:
        """Objective of ``x`` in the source sense, constant included."""
        val = float(self.c @ np.asarray(x, dtype=float)) + self.objective_constant
        return -val if self.objective_sense_flipped else val

    def to_source_space(self, x) -> np.ndarray:
        """Expand a column vector to one value per Instance variable."""
        out = np.zeros(self.n_source_vars)
        for j, v in self.fixed_values.items():
            out[j] = v
        out[self.column_map] = np.asarray(x, dtype=float)
        return out


def to_standard_form(inst: Instance) -> StandardForm:
    """Rewrite every row as ``>=`` and every objective as minimisation."""
    inst.validate()
    n = inst.n_vars
    lower = np.array([v.lower for v in inst.variables], dtype=float)
    upper = np.array([v.upper for v in inst.variables], dtype=float)
    bad = np.nonzero(lower > upper)[0]
    if len(bad):
        v = inst.variables[bad[0]]
        raise InfeasibleInstanceError(f"variable {v.name!r} has lower bound {v.lower} > upper bound {v.upper}")
    flip = inst.objective_sense == "max"
    sign = -1.0 if flip else 1.0
    c = sign * np.array([v.objective for v in inst.variables], dtype=float)

    rows, cols, vals, b, names = [], [], [], [], []

    def emit(coefs, scale, rhs, name):
        i = len(b)
        for j, a in coefs:
            rows.append(i)
            cols.append(j)
            vals.append(scale * a)
        b.append(scale * rhs)
        names.append(name)

    for row in inst.rows:
        lo, hi = row_limits(row)
        if row.sense == "G":
            emit(row.coefficients, 1.0, lo, row.name)
        elif row.sense == "L":
            emit(row.coefficients, -1.0, hi, row.name)
        else:
            emit(row.coefficients, 1.0, lo, row.name + "#lo")
            emit(row.coefficients, -1.0, hi, row.name + "#hi")

    A = SparseMatrix(rows, cols, vals, (len(b), n))
    return StandardForm(
        c=c,
        A=A,
        b=np.array(b, dtype=float),
        lower=lower,
        upper=upper,
        integer=[j for j, v in enumerate(inst.variables) if v.is_integer],
        objective_constant=sign * inst.objective_constant,
        objective_sense_flipped=flip,
        var_names=tuple(v.name for v in inst.variables),
        row_names=tuple(names),
        n_source_vars=n,
    )


def cleanup(sf: StandardForm, tol: float = 1e-9) -> StandardForm:
    """Trivial presolve: turn single-entry rows into bounds, round integer
    bounds inward, substitute out fixed columns, drop rows left without
    entries.

    Raises :class:`InfeasibleInstanceError` when a dropped row is violated
    or a domain becomes empty.
    """
    lower = sf.lower.copy()
    upper = sf.upper.copy()
    indptr, indices, data = sf.A.csr
    singleton = np.diff(indptr) == 1
    for i in np.nonzero(singleton)[0]:
        j, a = int(indices[indptr[i]]), float(data[indptr[i]])
        if a > 0:
            lower[j] = max(lower[j], sf.b[i] / a)
        else:
            upper[j] = min(upper[j], sf.b[i] / a)
    is_int = sf.is_integer
    lower[is_int] = np.ceil(lower[is_int] - tol)
    upper[is_int] = np.floor(upper[is_int] + tol)
    bad = np.nonzero(lower > upper + tol * (1.0 + np.abs(upper)))[0]
    if len(bad):
        kind = "integer domain" if is_int[bad[0]] else "domain"
        raise InfeasibleInstanceError(f"variable {sf.var_names[bad[0]]!r} has an empty {kind}")
    upper = np.maximum(upper, lower)

    fixed = lower == upper
    keep = np.nonzero(~fixed)[0]
    xfix = np.where(fixed, lower, 0.0)
    b = sf.b - sf.A.matvec(xfix)
    const = sf.objective_constant + float(sf.c @ xfix)

    coo = sf.A.to_scipy()[:, keep].tocsr()
    nnz_per_row = np.diff(coo.indptr)
    empty = (nnz_per_row == 0) | singleton
    violated = (nnz_per_row == 0) & (b > tol * (1.0 + np.abs(b)))
    if violated.any():
        i = int(np.nonzero(violated)[0][0])
        raise InfeasibleInstanceError(f"row {sf.row_names[i] if sf.row_names else i!r} cannot be satisfied")
    keep_rows = np.nonzero(~empty)[0]
    A = SparseMatrix.from_scipy(coo[keep_rows])

    new_index = -np.ones(sf.n, dtype=np.int64)
    new_index[keep] = np.arange(len(keep))
    fixed_values = dict(sf.fixed_values)
    for j in np.nonzero(fixed)[0]:
        fixed_values[int(sf.column_map[j])] = float(lower[j])
    return StandardForm(
        c=sf.c[keep],
        A=A,
        b=b[keep_rows],
        lower=lower[keep],
        upper=upper[keep],
        integer=[int(new_index[j]) for j in sf.integer if new_index[j] >= 0],
        objective_constant=const,
        objective_sense_flipped=sf.objective_sense_flipped,
        var_names=tuple(sf.var_names[j] for j in keep),
        column_map=sf.column_map[keep],
        row_names=tuple(sf.row_names[i] for i in keep_rows) if sf.row_names else (),
        n_source_vars=sf.n_source_vars,
        fixed_values=fixed_values,
    )
