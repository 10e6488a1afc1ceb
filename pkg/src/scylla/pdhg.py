"""Matrix-free approximate LP solver (restarted PDHG).

Solves ``min c.x  s.t.  A x >= b,  l <= x <= u`` through the saddle point

    min_{l <= x <= u} max_{y >= 0}  c.x - y.(A x - b)

touching ``A`` only through ``A.matvec`` and ``A.rmatvec``. Step sizes are
``tau_x = eta / omega`` and ``tau_y = eta * omega``.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, replace
from typing import NamedTuple, Sequence

import numpy as np

from scylla.errors import NumericalError
from scylla.model import StandardForm, operator_norm_estimate

STEP_SAFETY = 0.9
OMEGA_MIN, OMEGA_MAX = 1e-3, 1e3
OMEGA_SMOOTHING = 0.5
RESTART_EVERY = 400
RESTART_FACTOR = 0.5
STALL_WINDOW = 1000
STALL_FACTOR = 0.1
MAX_HALVINGS = 3
MAX_REJECTIONS = 60


class TerminationKind(str, enum.Enum):
    APPROX_OPTIMAL = "ApproxOptimal"
    STALLING = "Stalling"
    ITER_LIMIT = "IterLimit"


@dataclass
class TerminationStatus:
    kind: TerminationKind
    kkt_residual: float
    iterations_used: int


class KktResidual(NamedTuple):
    primal: float
    dual: float
    gap: float
    combined: float


@dataclass
class PdhgState:
    """Primal-dual pair plus everything needed to resume iterating.

    ``x_avg``/``y_avg`` average the ``n_avg`` iterates produced since the
    last restart; with ``n_avg == 0`` they equal ``x``/``y``.
    ``x_restart``/``y_restart`` is the point of the last restart.
    """

    x: np.ndarray
    y: np.ndarray
    x_prev: np.ndarray
    x_avg: np.ndarray
    y_avg: np.ndarray
    eta: float
    omega: float
    k: int = 0
    last_restart_k: int = 0
    best_kkt: float = np.inf
    n_avg: int = 0
    restart_kkt: float = np.inf
    x_restart: np.ndarray | None = None
    y_restart: np.ndarray | None = None
    step_attempts: int = 0

    @property
    def tau_x(self) -> float:
        return self.eta / self.omega

    @property
    def tau_y(self) -> float:
        return self.eta * self.omega

    def copy(self) -> "PdhgState":
        def cp(a):
            return None if a is None else a.copy()

        return replace(
            self, x=cp(self.x), y=cp(self.y), x_prev=cp(self.x_prev), x_avg=cp(self.x_avg),
            y_avg=cp(self.y_avg), x_restart=cp(self.x_restart), y_restart=cp(self.y_restart),
        )


def primal_weight(c_hat, b) -> float:
    w = np.linalg.norm(c_hat) / max(float(np.linalg.norm(b)), 1e-6)
    return float(np.clip(w, OMEGA_MIN, OMEGA_MAX))


def initial_state(sf: StandardForm, c_hat, seed: int = 0, norm_iters: int = 50) -> PdhgState:
    """Cold start at ``proj_[l,u](0)``, ``y = 0``, ``eta = 0.9 / ||A||``."""
    norm = operator_norm_estimate(sf.A, norm_iters, seed)
    eta = STEP_SAFETY / norm if norm > 0 else 1.0
    x = np.clip(np.zeros(sf.n), sf.lower, sf.upper)
    y = np.zeros(sf.m)
    return PdhgState(
        x=x, y=y, x_prev=x.copy(), x_avg=x.copy(), y_avg=y.copy(),
        eta=eta, omega=primal_weight(c_hat, sf.b), x_restart=x.copy(), y_restart=y.copy(),
    )


def _update(x, y, Ax, ATy, eta, omega, c_hat, sf):
    x_new = np.clip(x + (eta / omega) * (ATy - c_hat), sf.lower, sf.upper)
    Ax_new = sf.A.matvec(x_new)
    y_new = np.maximum(y + (eta * omega) * (sf.b - (2.0 * Ax_new - Ax)), 0.0)
    return x_new, y_new, Ax_new


def pdhg_step(state: PdhgState, c_hat, sf: StandardForm) -> PdhgState:
    """One primal and one dual update at the state's current step sizes.

    Returns a new state; the input is left untouched.
    """
    c_hat = np.asarray(c_hat, dtype=float)
    st = state.copy()
    x_new, y_new, _ = _update(st.x, st.y, sf.A.matvec(st.x), sf.A.rmatvec(st.y), st.eta, st.omega, c_hat, sf)
    if not (np.isfinite(x_new).all() and np.isfinite(y_new).all()):
        raise NumericalError(f"non-finite PDHG iterate at k={st.k}")
    st.x_prev, st.x, st.y = st.x, x_new, y_new
    st.n_avg += 1
    st.x_avg += (x_new - st.x_avg) / st.n_avg
    st.y_avg += (y_new - st.y_avg) / st.n_avg
    st.k += 1
    return st


class _Bounds:
    __slots__ = ("lo", "up", "lo_fin", "up_fin", "b_norm")

    def __init__(self, sf: StandardForm):
        self.lo_fin = np.isfinite(sf.lower)
        self.up_fin = np.isfinite(sf.upper)
        self.lo = np.where(self.lo_fin, sf.lower, 0.0)
        self.up = np.where(self.up_fin, sf.upper, 0.0)
        self.b_norm = float(np.linalg.norm(sf.b))


def _kkt(x, y, Ax, ATy, c_hat, c_norm, b, bnd: _Bounds, eps_abs, eps_rel) -> KktResidual:
    primal = float(np.linalg.norm(np.maximum(b - Ax, 0.0)))
    r = c_hat - ATy
    r_pos = np.where(bnd.lo_fin, np.maximum(r, 0.0), 0.0)
    r_neg = np.where(bnd.up_fin, np.minimum(r, 0.0), 0.0)
    # bound multipliers exist only on the side where the bound is finite
    dual = float(np.linalg.norm(r - r_pos - r_neg))
    pobj = float(c_hat @ x)
    dobj = float(b @ y) + float(bnd.lo @ r_pos) + float(bnd.up @ r_neg)
    gap = abs(pobj - dobj)
    combined = max(
        primal / (eps_abs + eps_rel * bnd.b_norm),
        dual / (eps_abs + eps_rel * c_norm),
        gap / (eps_abs + eps_rel * (abs(pobj) + abs(dobj))),
    )
    return KktResidual(primal, dual, gap, combined)


def kkt_residual(x, y, c_hat, sf: StandardForm, eps_abs: float, eps_rel: float) -> KktResidual:
    """Primal residual ``||(b - Ax)+||``, dual residual ``||c - A'y - z||``,
    duality gap, and their combined relative measure.

    ``z`` keeps the part of ``r = c - A'y`` whose sign a finite bound can
    absorb. ``combined <= 1`` iff every residual is within
    ``eps_abs + eps_rel * scale`` with scales ``||b||``, ``||c||`` and
    ``|pobj| + |dobj|``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    c_hat = np.asarray(c_hat, dtype=float)
    return _kkt(
        x, y, sf.A.matvec(x), sf.A.rmatvec(y), c_hat, float(np.linalg.norm(c_hat)),
        sf.b, _Bounds(sf), eps_abs, eps_rel,
    )


def detect_stalling(history: Sequence[float], window: int = STALL_WINDOW, factor: float = STALL_FACTOR) -> bool:
    """True iff the best residual of the last ``window`` entries is not at
    least ``factor`` below the best residual seen before them."""
    if window < 2 or len(history) < window:
        return False
    h = np.asarray(history, dtype=float)
    split = len(h) - window + 1
    return bool(h[split:].min() > (1.0 - factor) * h[:split].min())


class _Solver:
    """Inner loop of :func:`solve_lp`; owns the state and cached products."""

    def __init__(self, sf, c_hat, st: PdhgState, eps, adaptive: bool):
        self.sf, self.c_hat, self.st, self.eps, self.adaptive = sf, c_hat, st, eps, adaptive
        self.bnd = _Bounds(sf)
        self.c_norm = float(np.linalg.norm(c_hat))
        self.Ax = sf.A.matvec(st.x)
        self.ATy = sf.A.rmatvec(st.y)
        self.reset_average()

    def reset_average(self):
        st = self.st
        st.x_avg, st.y_avg, st.n_avg = st.x.copy(), st.y.copy(), 0
        self.Ax_avg, self.ATy_avg = self.Ax.copy(), self.ATy.copy()

    def kkt(self, x, y, Ax, ATy) -> float:
        return _kkt(x, y, Ax, ATy, self.c_hat, self.c_norm, self.sf.b, self.bnd, self.eps, self.eps).combined

    def kkt_exact(self, x, y) -> float:
        A = self.sf.A
        return self.kkt(x, y, A.matvec(x), A.rmatvec(y))

    def step(self):
        st, sf = self.st, self.sf
        eta_next = st.eta
        for _ in range(MAX_REJECTIONS):
            st.step_attempts += 1
            x_new, y_new, Ax_new = _update(st.x, st.y, self.Ax, self.ATy, st.eta, st.omega, self.c_hat, sf)
            if not (np.isfinite(x_new).all() and np.isfinite(y_new).all()):
                raise NumericalError(f"non-finite PDHG iterate at k={st.k}")
            if not self.adaptive:
                break
            dx = x_new - st.x
            dy = y_new - st.y
            inter = abs(float(dy @ (Ax_new - self.Ax)))
            limit = (st.omega * float(dx @ dx) + float(dy @ dy) / st.omega) / (2.0 * inter) if inter > 0 else np.inf
            t = st.step_attempts + 1
            accept = st.eta <= limit
            eta_next = min((1.0 - t ** -0.3) * limit, (1.0 + t ** -0.6) * st.eta)
            if accept:
                break
            st.eta = eta_next
        else:
            raise NumericalError("step size search did not converge")
        ATy_new = sf.A.rmatvec(y_new)
        st.x_prev, st.x, st.y = st.x, x_new, y_new
        self.Ax, self.ATy = Ax_new, ATy_new
        st.eta = eta_next
        st.n_avg += 1
        w = 1.0 / st.n_avg
        st.x_avg += w * (x_new - st.x_avg)
        st.y_avg += w * (y_new - st.y_avg)
        self.Ax_avg += w * (Ax_new - self.Ax_avg)
        self.ATy_avg += w * (ATy_new - self.ATy_avg)
        st.k += 1

    def candidate(self) -> tuple[float, bool]:
        """KKT of the better of average and current iterate; flag is True
        when the average wins."""
        st = self.st
        r_avg = self.kkt(st.x_avg, st.y_avg, self.Ax_avg, self.ATy_avg)
        r_cur = self.kkt(st.x, st.y, self.Ax, self.ATy)
        return (r_avg, True) if r_avg <= r_cur else (r_cur, False)

    def restart(self, kkt: float, use_average: bool, update_weight: bool = True):
        st, A = self.st, self.sf.A
        if use_average and st.n_avg > 0:
            st.x, st.y = st.x_avg.copy(), st.y_avg.copy()
            self.Ax, self.ATy = A.matvec(st.x), A.rmatvec(st.y)
        if update_weight and self.adaptive and st.x_restart is not None:
            dx = float(np.linalg.norm(st.x - st.x_restart))
            dy = float(np.linalg.norm(st.y - st.y_restart))
            if dx > 1e-10 and dy > 1e-10:
                log_w = OMEGA_SMOOTHING * np.log(dy / dx) + (1 - OMEGA_SMOOTHING) * np.log(st.omega)
                st.omega = float(np.clip(np.exp(log_w), OMEGA_MIN, OMEGA_MAX))
        st.x_prev = st.x.copy()
        st.x_restart, st.y_restart = st.x.copy(), st.y.copy()
        st.last_restart_k = st.k
        st.restart_kkt = kkt
        self.reset_average()


def solve_lp(
    sf: StandardForm,
    c_hat,
    warm: PdhgState | None = None,
    eps: float = 1e-4,
    iterlimit: int = 20_000,
    *,
    restart_every: int = RESTART_EVERY,
    restart_factor: float = RESTART_FACTOR,
    stall_window: int = STALL_WINDOW,
    stall_factor: float = STALL_FACTOR,
    adaptive: bool = True,
    deadline: float | None = None,
    seed: int = 0,
) -> tuple[PdhgState, TerminationStatus]:
    """Run PDHG until the candidate iterate is ``eps``-optimal, progress
    stalls, or ``iterlimit`` iterations have been spent.

    The candidate is the better (by KKT residual) of the restart-window
    average and the current iterate. The returned state has been restarted
    to it, so ``state.x``/``state.y`` is the answer and the state is a warm
    start for the next call. ``deadline`` is a ``time.monotonic()`` value;
    running out of time is reported as ``IterLimit``.
    """
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    if iterlimit < 1:
        raise ValueError("iterlimit must be >= 1")
    c_hat = np.asarray(c_hat, dtype=float)
    if c_hat.shape != (sf.n,):
        raise ValueError(f"objective has shape {c_hat.shape}, expected {(sf.n,)}")
    if warm is None:
        st = initial_state(sf, c_hat, seed)
    else:
        if warm.x.shape != (sf.n,) or warm.y.shape != (sf.m,):
            raise ValueError("warm start does not match the problem dimensions")
        st = warm.copy()

    S = _Solver(sf, c_hat, st, eps, adaptive)
    res = S.kkt(st.x, st.y, S.Ax, S.ATy)
    st.best_kkt = res
    if res <= 1.0:
        return st, TerminationStatus(TerminationKind.APPROX_OPTIMAL, res, 0)
    S.restart(res, use_average=False, update_weight=False)
    best = (res, st.x.copy(), st.y.copy())
    history: list[float] = []
    halvings = 0
    it = 0
    while it < iterlimit:
        try:
            S.step()
        except NumericalError:
            halvings += 1
            if halvings > MAX_HALVINGS:
                st.x, st.y = best[1].copy(), best[2].copy()
                S.Ax, S.ATy = sf.A.matvec(st.x), sf.A.rmatvec(st.y)
                S.restart(best[0], use_average=False, update_weight=False)
                return st, TerminationStatus(TerminationKind.STALLING, best[0], it)
            st.eta /= 2.0
            st.x, st.y = st.x_restart.copy(), st.y_restart.copy()
            S.Ax, S.ATy = sf.A.matvec(st.x), sf.A.rmatvec(st.y)
            S.restart(st.restart_kkt, use_average=False, update_weight=False)
            continue
        it += 1
        res, from_avg = S.candidate()
        history.append(res)
        if res < best[0]:
            cx, cy = (st.x_avg, st.y_avg) if from_avg else (st.x, st.y)
            best = (res, cx.copy(), cy.copy())
            st.best_kkt = res
        if res <= 1.0:
            # products of the average are running means; confirm exactly
            cx, cy = (st.x_avg, st.y_avg) if from_avg else (st.x, st.y)
            exact = S.kkt_exact(cx, cy)
            if exact <= 1.0:
                S.restart(exact, use_average=from_avg, update_weight=False)
                return st, TerminationStatus(TerminationKind.APPROX_OPTIMAL, exact, it)
        if st.n_avg >= restart_every or res <= restart_factor * st.restart_kkt:
            S.restart(res, use_average=from_avg)
        if it % 100 == 0:
            if detect_stalling(history, stall_window, stall_factor):
                break
            if deadline is not None and time.monotonic() > deadline:
                break
    kind = TerminationKind.ITER_LIMIT
    if it < iterlimit and detect_stalling(history, stall_window, stall_factor):
        kind = TerminationKind.STALLING
    res, from_avg = S.candidate()
    S.restart(res, use_average=from_avg, update_weight=False)
    return st, TerminationStatus(kind, res, it)
