"""Outer loop: approximate LP solve, fix-and-propagate rounding, cycle
handling and the distance-weighted objective update."""

from __future__ import annotations

import hashlib
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from scylla.errors import InfeasibleInstanceError, ScyllaError
from scylla.io import SolutionReport
from scylla.model import Instance, SparseMatrix, StandardForm, cleanup, to_standard_form
from scylla.pdhg import PdhgState, TerminationKind, solve_lp
from scylla.propagate import check_mip_feasible, fix_and_propagate
from scylla.scaling import identity_scaling, ruiz_scale

ALPHA = 0.9
BETA = 0.98
EPS_INITIAL = 0.01
EPS_FLOOR = 1e-8


@dataclass
class PumpParams:
    alpha: float = ALPHA
    beta: float = BETA
    eps0: float = EPS_INITIAL
    eps_floor: float = EPS_FLOOR
    time_limit: float = 600.0
    max_outer: int = 1000
    inner_iterlimit: int = 20_000
    total_inner_budget: int = 2_000_000
    feas_tol: float = 1e-6
    int_tol: float = 1e-6
    fix_order: str = "fractionality"
    scaling: bool = True
    stall_window: int = 1000
    stall_factor: float = 0.1
    adaptive_steps: bool = True
    seed: int = 0

    def validate(self) -> None:
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError(f"alpha must lie in [0, 1), got {self.alpha}")
        if not 0.0 < self.beta <= 1.0:
            raise ValueError(f"beta must lie in (0, 1], got {self.beta}")
        if not self.eps_floor <= self.eps0 < 1.0:
            raise ValueError(f"eps0 must lie in [{self.eps_floor}, 1), got {self.eps0}")
        for name in ("feas_tol", "int_tol", "eps_floor", "time_limit", "stall_factor"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("max_outer", "inner_iterlimit", "total_inner_budget", "stall_window"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")


def advance_tolerance(eps: float, beta: float = BETA, floor: float = EPS_FLOOR) -> float:
    return max(beta * eps, floor)


class RoundingHistory:
    """Rounded vectors seen so far, restricted to the integer columns."""

    def __init__(self):
        self._by_hash: dict[bytes, list[np.ndarray]] = {}
        self.last: np.ndarray | None = None
        self.size = 0

    @staticmethod
    def _key(v: np.ndarray) -> bytes:
        return hashlib.blake2b(np.ascontiguousarray(v, dtype=float).tobytes(), digest_size=16).digest()

    def __contains__(self, v) -> bool:
        v = np.asarray(v, dtype=float)
        return any(np.array_equal(v, w) for w in self._by_hash.get(self._key(v), ()))

    def add(self, v) -> None:
        v = np.array(v, dtype=float)
        self._by_hash.setdefault(self._key(v), []).append(v)
        self.last = v
        self.size += 1

    def __len__(self) -> int:
        return self.size


def detect_cycle(history: RoundingHistory, x_int) -> bool:
    """True iff ``x_int`` (integer coordinates only) was seen before."""
    return np.asarray(x_int, dtype=float) in history


def perturb(x_tilde, x_frac, cycle_length: int, rng: np.random.Generator, sf: StandardForm) -> np.ndarray:
    """Move some integer coordinates of ``x_tilde`` to break a cycle.

    ``cycle_length == 1`` (same vector as last iteration): move the
    ``ceil(|I|/10)`` coordinates farthest from ``x_frac``. Longer cycles:
    move coordinate ``j`` when ``|x_frac_j - x_tilde_j| + max(rho_j, 0) > 0.5``
    with ``rho_j ~ U[-0.3, 0.7]``. Binaries flip; general integers step by
    one toward ``x_frac``. The result always differs from the input unless
    every integer column is fixed.
    """
    x = np.array(x_tilde, dtype=float)
    x_frac = np.asarray(x_frac, dtype=float)
    ints = sf.integer
    if len(ints) == 0:
        return x
    lo, up = sf.lower[ints], sf.upper[ints]
    dist = np.abs(x_frac[ints] - x[ints])

    def moved(mask):
        xi = x[ints].copy()
        binary = (lo == 0) & (up == 1)
        direction = np.sign(x_frac[ints] - xi)
        # no preferred direction: step inward from the bound we sit on
        direction = np.where(direction == 0, np.where(xi < up, 1.0, -1.0), direction)
        new = np.where(binary, 1.0 - xi, xi + direction)
        new = np.clip(new, lo, up)
        xi[mask] = new[mask]
        return xi

    if cycle_length <= 1:
        T = min(max(math.ceil(len(ints) / 10), 1), len(ints))
        pick = np.argsort(-dist, kind="stable")[:T]
        mask = np.zeros(len(ints), dtype=bool)
        mask[pick] = True
        xi = moved(mask)
        if not np.array_equal(xi, x[ints]):
            x[ints] = xi
            return x
    else:
        for _ in range(10):
            rho = rng.uniform(-0.3, 0.7, len(ints))
            xi = moved(dist + np.maximum(rho, 0.0) > 0.5)
            if not np.array_equal(xi, x[ints]):
                x[ints] = xi
                return x
    # force a change on the most fractional movable coordinate
    movable = lo < up
    if movable.any():
        order = np.argsort(-dist, kind="stable")
        p = next(p for p in order if movable[p])
        mask = np.zeros(len(ints), dtype=bool)
        mask[p] = True
        x[ints] = moved(mask)
    return x


def general_integers(sf: StandardForm) -> np.ndarray:
    """Integer columns whose rounded value can sit strictly inside the
    domain, i.e. the ones that may need an l1 auxiliary."""
    ints = sf.integer
    return ints[(sf.upper[ints] - sf.lower[ints]) > 1]


def augment(sf: StandardForm, aux_map: np.ndarray) -> StandardForm:
    """Append one auxiliary column ``d_k`` per entry of ``aux_map`` with rows
    ``d_k - x_g >= -ref`` and ``d_k + x_g >= ref``.

    The right-hand sides start at a placeholder; :func:`update_objective`
    supplies the real ones. ``d_k`` lives in ``[0, u_g - l_g]`` so the rows
    never cut off a point of ``[l, u]``.
    """
    n, m, p = sf.n, sf.m, len(aux_map)
    if p == 0:
        return sf
    rows, cols, vals = [], [], []
    indptr, indices, data = sf.A.csr
    for i in range(m):
        for q in range(indptr[i], indptr[i + 1]):
            rows.append(i)
            cols.append(int(indices[q]))
            vals.append(float(data[q]))
    for k, g in enumerate(aux_map):
        r = m + 2 * k
        rows += [r, r, r + 1, r + 1]
        cols += [int(g), n + k, int(g), n + k]
        vals += [-1.0, 1.0, 1.0, 1.0]
    ref = np.clip(0.0, sf.lower[aux_map], sf.upper[aux_map])
    ref = np.where(np.isfinite(ref), np.round(ref), 0.0)
    b_aux = np.empty(2 * p)
    b_aux[0::2], b_aux[1::2] = -ref, ref
    width = sf.upper[aux_map] - sf.lower[aux_map]
    return StandardForm(
        c=np.concatenate([sf.c, np.zeros(p)]),
        A=SparseMatrix(rows, cols, vals, (m + 2 * p, n + p)),
        b=np.concatenate([sf.b, b_aux]),
        lower=np.concatenate([sf.lower, np.zeros(p)]),
        upper=np.concatenate([sf.upper, width]),
        integer=sf.integer,
        var_names=sf.var_names + tuple(f"_aux_{sf.var_names[g]}" for g in aux_map),
        row_names=(sf.row_names or tuple(f"r{i}" for i in range(m)))
        + tuple(f"_aux{k}{s}" for k in range(p) for s in ("lo", "hi")),
    )


@dataclass
class AugmentedObjective:
    c_hat: np.ndarray
    aux_rhs: np.ndarray
    aux_map: np.ndarray
    weight_original: float
    weight_distance: float
    active_aux: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))


def update_objective(
    c,
    x_tilde,
    K: int,
    sf: StandardForm,
    alpha: float = ALPHA,
    aux_map: np.ndarray | None = None,
) -> AugmentedObjective:
    """``alpha^K sqrt(|I|)/||c|| * c + (1 - alpha^K) * grad Delta(., x_tilde)``.

    Integer columns at a bound of their domain get the linear distance
    term directly; those strictly inside use their auxiliary column
    (``aux_map`` lists which integer columns have one).
    """
    c = np.asarray(c, dtype=float)
    x_tilde = np.asarray(x_tilde, dtype=float)
    aux_map = general_integers(sf) if aux_map is None else np.asarray(aux_map, dtype=np.int64)
    ints = sf.integer
    c_norm = float(np.linalg.norm(c))
    aK = alpha ** K
    w_orig = aK * math.sqrt(len(ints)) / c_norm if c_norm > 0 else 0.0
    w_dist = 1.0 - aK

    grad = np.zeros(sf.n)
    xi, lo, up = x_tilde[ints], sf.lower[ints], sf.upper[ints]
    at_lo = xi == lo
    at_up = ~at_lo & (xi == up)
    grad[ints[at_lo]] = 1.0
    grad[ints[at_up]] = -1.0
    inside = np.zeros(sf.n, dtype=bool)
    inside[ints[~at_lo & ~at_up]] = True
    if inside.any() and not np.isin(np.nonzero(inside)[0], aux_map).all():
        raise ValueError("an interior integer value has no auxiliary column")

    active = inside[aux_map]
    ref = x_tilde[aux_map]
    aux_rhs = np.empty(2 * len(aux_map))
    aux_rhs[0::2], aux_rhs[1::2] = -ref, ref
    c_hat = np.concatenate([w_orig * c + w_dist * grad, np.where(active, w_dist, 0.0)])
    return AugmentedObjective(c_hat, aux_rhs, aux_map, w_orig, w_dist, active)


def l1_distance(x, x_tilde, sf: StandardForm) -> float:
    ints = sf.integer
    return float(np.abs(np.asarray(x)[ints] - np.asarray(x_tilde)[ints]).sum())


@dataclass
class PumpResult:
    status: str
    x: np.ndarray | None
    outer_iterations: int
    inner_iterations: int
    max_violation: float
    found_at: str = ""
    message: str = ""
    weights: list[float] = field(default_factory=list)
    eps_history: list[float] = field(default_factory=list)


def run(
    sf: StandardForm,
    params: PumpParams | None = None,
    on_iteration: Callable[[dict], None] | None = None,
    solve=solve_lp,
) -> PumpResult:
    """Search for a MIP-feasible point of ``sf``.

    Returns the first point that passes the feasibility check, either the
    approximate LP solution itself or its fix-and-propagate rounding.
    ``on_iteration`` receives one record per outer iteration. ``solve`` is
    the LP routine (swappable for instrumentation).
    """
    params = params or PumpParams()
    params.validate()
    t0 = time.monotonic()
    deadline = t0 + params.time_limit
    rng = np.random.default_rng(params.seed)
    n = sf.n
    weights: list[float] = []
    eps_hist: list[float] = []

    if n == 0:
        ok, viol = check_mip_feasible(np.zeros(0), sf, params.feas_tol, params.int_tol)
        return PumpResult("feasible" if ok else "no_solution", np.zeros(0) if ok else None, 0, 0, viol, "trivial")

    aux_map = general_integers(sf)
    sf_aug = augment(sf, aux_map)
    scaled = ruiz_scale(sf_aug) if params.scaling else identity_scaling(sf_aug)
    b_aug = sf_aug.b.copy()
    c_hat = np.concatenate([sf.c, np.zeros(len(aux_map))])
    history = RoundingHistory()
    warm: PdhgState | None = None
    eps = params.eps0
    inner_total = 0
    K = 1
    last_viol = float("inf")

    def finish(status, x, viol, where="", msg=""):
        # K counts the iteration in progress; a limit stop has not started it
        outer = K if status == "feasible" else K - 1
        return PumpResult(status, x, outer, inner_total, viol, where, msg, weights, eps_hist)

    while True:
        if K > params.max_outer:
            return finish("no_solution", None, last_viol, msg="outer iteration limit")
        if time.monotonic() > deadline:
            return finish("no_solution", None, last_viol, msg="time limit")
        budget = min(params.inner_iterlimit, params.total_inner_budget - inner_total)
        if budget < 1:
            return finish("no_solution", None, last_viol, msg="inner iteration budget")
        eps_hist.append(eps)
        problem = scaled.with_rhs(b_aug)
        warm, term = solve(
            problem.sf, scaled.scale_objective(c_hat), warm, eps, budget,
            stall_window=params.stall_window, stall_factor=params.stall_factor,
            adaptive=params.adaptive_steps, deadline=deadline, seed=params.seed,
        )
        inner_total += term.iterations_used
        x_frac = np.clip(scaled.unscale_primal(warm.x)[:n], sf.lower, sf.upper)

        ok, viol = check_mip_feasible(x_frac, sf, params.feas_tol, params.int_tol)
        if ok:
            return finish("feasible", x_frac, viol, "lp")
        x_tilde = fix_and_propagate(x_frac, sf, rng, params.fix_order)
        ok, viol = check_mip_feasible(x_tilde, sf, params.feas_tol, params.int_tol)
        last_viol = viol
        if ok:
            return finish("feasible", x_tilde, viol, "rounding")

        key = x_tilde[sf.integer]
        cycled = detect_cycle(history, key)
        if cycled:
            short = history.last is not None and np.array_equal(history.last, key)
            x_tilde = perturb(x_tilde, x_frac, 1 if short else 2, rng, sf)
        history.add(x_tilde[sf.integer])

        obj = update_objective(sf.c, x_tilde, K, sf, params.alpha, aux_map)
        weights.append(obj.weight_original)
        c_hat = obj.c_hat
        b_aug[sf.m:] = obj.aux_rhs
        if on_iteration is not None:
            on_iteration({
                "K": K,
                "inner_iterations": term.iterations_used,
                "termination": term.kind.value,
                "eps": eps,
                "kkt": term.kkt_residual,
                "distance": l1_distance(x_frac, x_tilde, sf),
                "violation": viol,
                "cycle": bool(cycled),
                "elapsed_s": time.monotonic() - t0,
            })
        eps = advance_tolerance(eps, params.beta, params.eps_floor)
        K += 1


def solve(
    inst: Instance,
    params: PumpParams | None = None,
    on_iteration: Callable[[dict], None] | None = None,
) -> SolutionReport:
    """Run the heuristic on a raw instance and report in its variable space.

    A found point is re-verified against the rows of ``inst`` itself.
    """
    params = params or PumpParams()
    t0 = time.monotonic()

    def report(status, **kw):
        return SolutionReport(inst.name, status, seed=params.seed, wall_time_s=time.monotonic() - t0, **kw)

    try:
        sf = cleanup(to_standard_form(inst))
    except InfeasibleInstanceError as exc:
        return report("no_solution", message=str(exc))
    try:
        res = run(sf, params, on_iteration)
    except ScyllaError as exc:
        return report("error", message=str(exc))
    if res.status != "feasible":
        return report(res.status, outer_iterations=res.outer_iterations, inner_iterations=res.inner_iterations,
                      max_violation=res.max_violation, message=res.message)
    x = sf.to_source_space(res.x)
    viol = inst.max_violation(x)
    tol = max(params.feas_tol, params.int_tol)
    if viol > tol:
        return report("error", outer_iterations=res.outer_iterations, inner_iterations=res.inner_iterations,
                      max_violation=viol, message=f"solution fails re-verification (violation {viol:.3g})")
    return report(
        "feasible",
        objective=inst.objective_value(x),
        assignments=[(v.name, float(xj)) for v, xj in zip(inst.variables, x)],
        outer_iterations=res.outer_iterations,
        inner_iterations=res.inner_iterations,
        max_violation=viol,
    )
