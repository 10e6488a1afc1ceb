"""Activity-based domain propagation and fix-and-propagate rounding."""

from __future__ import annotations

from collections import deque

import numpy as np

from scylla.model import StandardForm

INT_TOL = 1e-6
CONFLICT_TOL = 1e-6
FIX_ORDERS = ("fractionality", "random", "index")


def _contributions(vals, lo, up):
    """Per-entry max and min contributions ``a_j * x_j`` to a row activity.

    Infinite contributions come back as +/-inf.
    """
    with np.errstate(invalid="ignore"):
        cmax = np.where(vals > 0, vals * up, vals * lo)
        cmin = np.where(vals > 0, vals * lo, vals * up)
    return cmax, cmin


class Domains:
    """Working bounds plus cached row activity bounds.

    Activities are kept as a finite part and a count of infinite
    contributions, per row: ``max_fin/max_inf`` and ``min_fin/min_inf``.
    Every bound change is recorded on a trail so a propagation wave can be
    undone with :meth:`rollback`.
    """

    def __init__(self, sf: StandardForm, lower=None, upper=None):
        self.sf = sf
        self.lower = np.array(sf.lower if lower is None else lower, dtype=float)
        self.upper = np.array(sf.upper if upper is None else upper, dtype=float)
        self.is_int = sf.is_integer
        self.lower[self.is_int] = np.ceil(self.lower[self.is_int] - INT_TOL)
        self.upper[self.is_int] = np.floor(self.upper[self.is_int] + INT_TOL)
        self.ignored_rows: set[int] = set()
        self._trail: list[tuple[int, float, float]] = []
        self.recompute_activities()

    @property
    def fixed(self) -> np.ndarray:
        return self.lower == self.upper

    def recompute_activities(self) -> None:
        m = self.sf.m
        self.max_fin = np.zeros(m)
        self.max_inf = np.zeros(m, dtype=np.int64)
        self.min_fin = np.zeros(m)
        self.min_inf = np.zeros(m, dtype=np.int64)
        for i in range(m):
            self.max_fin[i], self.max_inf[i], self.min_fin[i], self.min_inf[i] = self._row_activity(i)

    def _row_activity(self, i):
        cols, vals = self.sf.A.row(i)
        cmax, cmin = _contributions(vals, self.lower[cols], self.upper[cols])
        fmax = np.isfinite(cmax)
        fmin = np.isfinite(cmin)
        return cmax[fmax].sum(), int((~fmax).sum()), cmin[fmin].sum(), int((~fmin).sum())

    def max_activity(self, i: int) -> float:
        return np.inf if self.max_inf[i] else float(self.max_fin[i])

    def min_activity(self, i: int) -> float:
        return -np.inf if self.min_inf[i] else float(self.min_fin[i])

    def set_bounds(self, j: int, lo: float, up: float, record: bool = True) -> None:
        old_lo, old_up = self.lower[j], self.upper[j]
        if lo == old_lo and up == old_up:
            return
        if record:
            self._trail.append((j, old_lo, old_up))
        rows, vals = self.sf.A.col(j)
        old_max, old_min = _contributions(vals, old_lo, old_up)
        self.lower[j], self.upper[j] = lo, up
        new_max, new_min = _contributions(vals, lo, up)
        self._shift(rows, old_max, new_max, self.max_fin, self.max_inf)
        self._shift(rows, old_min, new_min, self.min_fin, self.min_inf)

    @staticmethod
    def _shift(rows, old, new, fin, ninf):
        of, nf = np.isfinite(old), np.isfinite(new)
        fin[rows] += np.where(nf, new, 0.0) - np.where(of, old, 0.0)
        ninf[rows] += (~nf).astype(np.int64) - (~of).astype(np.int64)

    def mark(self) -> int:
        return len(self._trail)

    def rollback(self, mark: int) -> None:
        while len(self._trail) > mark:
            j, lo, up = self._trail.pop()
            self.set_bounds(j, lo, up, record=False)


def _row_tightenings(i: int, doms: Domains, sf: StandardForm):
    """Candidate bound changes implied by row ``i``.

    Returns ``(changes, conflict)`` with ``changes`` a list of
    ``(j, new_lower, new_upper)``.
    """
    if doms.max_inf[i] >= 2:
        return [], False
    b = sf.b[i]
    if doms.min_inf[i] == 0 and doms.min_fin[i] >= b:
        return [], False  # redundant
    cols, vals = sf.A.row(i)
    lo, up = doms.lower[cols], doms.upper[cols]
    cmax, _ = _contributions(vals, lo, up)
    inf = ~np.isfinite(cmax)
    fin_sum = cmax[~inf].sum()
    n_inf = int(inf.sum())
    if n_inf == 0:
        if fin_sum < b - CONFLICT_TOL * max(1.0, abs(b)):
            return [], True
        resid = fin_sum - cmax
    else:
        # only the single infinite contributor can be bounded
        resid = np.where(inf, fin_sum, np.inf)
    with np.errstate(invalid="ignore", divide="ignore"):
        bound = (b - resid) / vals
    ok = np.isfinite(bound)
    changes = []
    is_int = doms.is_int[cols]
    for p in np.nonzero(ok)[0]:
        j = int(cols[p])
        nb = float(bound[p])
        l, u = float(lo[p]), float(up[p])
        if vals[p] > 0:
            if is_int[p]:
                nb = float(np.ceil(nb - INT_TOL))
                if nb <= l:
                    continue
            elif nb <= l + 1e-9 * max(1.0, abs(l)):
                continue
            if nb > u + CONFLICT_TOL:
                return [], True
            changes.append((j, min(nb, u), u))
        else:
            if is_int[p]:
                nb = float(np.floor(nb + INT_TOL))
                if nb >= u:
                    continue
            elif nb >= u - 1e-9 * max(1.0, abs(u)):
                continue
            if nb < l - CONFLICT_TOL:
                return [], True
            changes.append((j, l, max(nb, l)))
    return changes, False


def propagate_row(row: int, doms: Domains, sf: StandardForm) -> tuple[int, bool]:
    """Tighten variable bounds from ``a.x >= b`` for one row.

    Returns ``(number of tightenings, conflict)``. On conflict nothing is
    changed.
    """
    changes, conflict = _row_tightenings(row, doms, sf)
    if conflict:
        return 0, True
    for j, lo, up in changes:
        doms.set_bounds(j, lo, up)
    return len(changes), False


def propagate(doms: Domains, sf: StandardForm, rows, budget: int | None = None) -> int | None:
    """Propagate ``rows`` and everything they touch to a fixpoint.

    Returns the index of a row that would empty a domain, or ``None``.
    Stops early after ``budget`` row evaluations (default ``10 * m``).
    """
    budget = 10 * sf.m if budget is None else budget
    queue = deque()
    queued = set()
    for i in rows:
        i = int(i)
        if i not in queued and i not in doms.ignored_rows:
            queue.append(i)
            queued.add(i)
    evals = 0
    while queue and evals < budget:
        i = queue.popleft()
        queued.discard(i)
        if i in doms.ignored_rows:
            continue
        evals += 1
        changes, conflict = _row_tightenings(i, doms, sf)
        if conflict:
            return i
        for j, lo, up in changes:
            doms.set_bounds(j, lo, up)
            for r in sf.A.col(j)[0]:
                r = int(r)
                if r != i and r not in queued and r not in doms.ignored_rows:
                    queue.append(r)
                    queued.add(r)
    return None


def _propagate_ignoring_conflicts(doms: Domains, sf: StandardForm, rows, budget) -> None:
    """Propagate; whenever a row would empty a domain, undo this wave,
    ignore that row and propagate again."""
    rows = list(rows)
    mark = doms.mark()
    while True:
        bad = propagate(doms, sf, rows, budget)
        if bad is None:
            return
        doms.rollback(mark)
        doms.ignored_rows.add(bad)


def round_half_up(x):
    return np.floor(np.asarray(x, dtype=float) + 0.5)


def fixing_order(x_frac, sf: StandardForm, rng: np.random.Generator, order: str = "fractionality") -> np.ndarray:
    ints = sf.integer
    if order == "index":
        return ints.copy()
    perm = rng.permutation(len(ints))
    if order == "random":
        return ints[perm]
    if order != "fractionality":
        raise ValueError(f"unknown fixing order {order!r}; expected one of {FIX_ORDERS}")
    xi = np.asarray(x_frac, dtype=float)[ints]
    frac = np.abs(xi - round_half_up(xi))[perm]
    return ints[perm[np.argsort(frac, kind="stable")]]


def fix_and_propagate(
    x_frac,
    sf: StandardForm,
    seed=0,
    order: str = "fractionality",
    budget: int | None = None,
) -> np.ndarray:
    """Round ``x_frac`` to a vector that is integral on every integer column.

    Integer variables are fixed one at a time (least fractional first,
    seeded tie-breaks) to the nearest integer in their propagated domain.
    Rows that would empty a domain are ignored from then on. Continuous
    variables end at ``x_frac`` projected onto their final domains. The
    result always lies within the original bounds.
    """
    x_frac = np.asarray(x_frac, dtype=float)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    doms = Domains(sf)
    _propagate_ignoring_conflicts(doms, sf, range(sf.m), budget)
    for j in fixing_order(x_frac, sf, rng, order):
        j = int(j)
        lo, up = doms.lower[j], doms.upper[j]
        if lo == up:
            continue
        target = float(np.clip(round_half_up(x_frac[j]), lo, up))
        doms.set_bounds(j, target, target)
        _propagate_ignoring_conflicts(doms, sf, sf.A.col(j)[0], budget)
    x = np.clip(x_frac, doms.lower, doms.upper)
    ints = sf.integer
    x[ints] = doms.lower[ints]
    return x


def check_mip_feasible(x, sf: StandardForm, feas_tol: float = 1e-6, int_tol: float = 1e-6) -> tuple[bool, float]:
    """Feasibility of ``x`` for rows, bounds and integrality.

    Row violations are measured relative to ``1 + |b_i|``. Returns the flag
    and the worst violation of any kind.
    """
    x = np.asarray(x, dtype=float)
    row_viol = 0.0
    if sf.m:
        row_viol = float(np.max(np.maximum(sf.b - sf.A.matvec(x), 0.0) / (1.0 + np.abs(sf.b))))
    bound_viol = 0.0
    if sf.n:
        bound_viol = float(max(np.max(sf.lower - x), np.max(x - sf.upper), 0.0))
    int_viol = 0.0
    if len(sf.integer):
        xi = x[sf.integer]
        int_viol = float(np.max(np.abs(xi - np.round(xi))))
    ok = row_viol <= feas_tol and bound_viol <= feas_tol and int_viol <= int_tol
    return ok, max(row_viol, bound_viol, int_viol)
