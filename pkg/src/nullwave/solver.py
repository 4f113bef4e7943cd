"""Time stepping for the first-order reduction in ``(u, p, q)``.

With ``p = u_xi`` and ``q = u_eta`` the equation gives, pointwise,

    [[I - A1 - A2, -A3],        [p_t]   [(I - A1 + A2) p_x - A3 q_x + F]
     [-A2, I - A1 - A3]]    @   [q_t] = [A2 p_x - (I - A1 + A3) q_x + F]

and ``u_t = (p + q) / 2``. The first row is the equation written with
``u_xi_eta = p_eta``, the second with ``u_xi_eta = q_xi``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .grid import FieldState, Grid, QUIET_REL, constraint_defect, dx_op
from .systems import COND_LIMIT, NonlinearSystem

log = logging.getLogger(__name__)

TERMINATIONS = ("completed", "blowup", "cfl_floor", "nonfinite")


class NearSingularError(RuntimeError):
    """The pointwise block matrix lost invertibility (condition above the limit)."""

    def __init__(self, cond: float, index: int):
        super().__init__(f"block matrix condition {cond:.3g} at grid index {index}")
        self.cond = cond
        self.index = index


@dataclass
class StepControl:
    cfl: float = 0.5
    t_max: float = 10.0
    dt_min: float = 1e-9
    blowup_threshold: float | None = None  # default 1e4 * epsilon
    constraint_tol: float = 1e-4
    report_every: int = 10
    dissipation: float = 0.0
    growth_limit: float = 1.05
    resolve_gain: float = 50.0  # blowup fit uses peak samples up to this amplification
    fit_gain: float = 5.0  # and from this amplification on

    def __post_init__(self):
        if not 0.0 < self.cfl <= 1.0:
            raise ValueError(f"cfl must lie in (0, 1], got {self.cfl}")
        if self.t_max <= 0 or self.dt_min <= 0:
            raise ValueError("t_max and dt_min must be positive")
        if self.report_every < 1:
            raise ValueError("report_every must be >= 1")
        if not 1.0 <= self.fit_gain < self.resolve_gain:
            raise ValueError("need 1 <= fit_gain < resolve_gain")
        if not 0.0 <= self.dissipation <= 0.01:
            raise ValueError("dissipation coefficient must lie in [0, 0.01]")


@dataclass
class RunResult:
    termination: str
    t_end: float
    blowup_time_estimate: float | None
    series: list = field(default_factory=list)
    snapshots: dict = field(default_factory=dict)
    final_state: FieldState | None = None
    steps: int = 0
    rejected_steps: int = 0
    boundary_max: float = 0.0
    constraint_max: float = 0.0
    message: str = ""
    peak_history: list = field(default_factory=list)  # (t, max(sup|p|, sup|q|)) per accepted step


def _mv(a: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.einsum("ijx,jx->ix", a, v)


def _filter(f: np.ndarray, sigma: float, h: float) -> np.ndarray:
    out = np.zeros_like(f)
    out[..., 2:-2] = -(sigma / (16.0 * h)) * (
        f[..., :-4] - 4 * f[..., 1:-3] + 6 * f[..., 2:-2] - 4 * f[..., 3:-1] + f[..., 4:])
    return out


def solve_block(sys: NonlinearSystem, u, p, q, px, qx):
    """Pointwise solve for ``(p_t, q_t)``; raises :class:`NearSingularError`."""
    F = sys.source(u, p, q)
    if sys.A1 is None and sys.A2 is None and sys.A3 is None:
        return px + F, -qx + F
    A1 = sys.matrix("A1", u, p, q)
    A2 = sys.matrix("A2", u, p, q)
    A3 = sys.matrix("A3", u, p, q)
    r1 = px - _mv(A1, px) + _mv(A2, px) - _mv(A3, qx) + F
    r2 = _mv(A2, px) - qx + _mv(A1, qx) - _mv(A3, qx) + F
    if sys.n == 1:
        a = 1.0 - A1[0, 0] - A2[0, 0]
        b = -A3[0, 0]
        c = -A2[0, 0]
        d = 1.0 - A1[0, 0] - A3[0, 0]
        det = a * d - b * c
        with np.errstate(divide="ignore", invalid="ignore"):
            cond = (a * a + b * b + c * c + d * d) / np.abs(det)
        _check_cond(cond)
        pt = (d * r1[0] - b * r2[0]) / det
        qt = (a * r2[0] - c * r1[0]) / det
        return pt[None], qt[None]
    n = sys.n
    eye = np.eye(n)[:, :, None]
    top = np.concatenate([eye - A1 - A2, -A3], axis=1)
    bot = np.concatenate([-A2, eye - A1 - A3], axis=1)
    M = np.moveaxis(np.concatenate([top, bot], axis=0), -1, 0)
    Minv = np.linalg.inv(M)
    cond = np.linalg.norm(M, axis=(1, 2)) * np.linalg.norm(Minv, axis=(1, 2))
    _check_cond(cond)
    rhs = np.concatenate([r1, r2], axis=0).T[..., None]
    sol = (Minv @ rhs)[..., 0].T
    return sol[:n], sol[n:]


def _check_cond(cond: np.ndarray) -> None:
    bad = ~np.isfinite(cond) | (cond > COND_LIMIT)
    if np.any(bad):
        idx = int(np.argmax(np.where(np.isfinite(cond), cond, np.inf)))
        raise NearSingularError(float(cond[idx]), idx)


def assemble_rhs(state: FieldState, sys: NonlinearSystem, g: Grid, dissipation: float = 0.0,
                 cache: bool = True):
    """Time derivatives ``(u_t, p_t, q_t)`` of a state.

    The incoming characteristic variable is frozen at each end (``q`` enters
    at ``x_min``, ``p`` at ``x_max``); outgoing ones use one-sided stencils.
    """
    u, p, q = state.u, state.p, state.q
    px = dx_op(p, g)
    qx = dx_op(q, g)
    pt, qt = solve_block(sys, u, p, q, px, qx)
    pt = np.array(pt, dtype=float)
    qt = np.array(qt, dtype=float)
    ut = 0.5 * (p + q)
    if dissipation > 0:
        h = g.dx
        ut = ut + _filter(u, dissipation, h)
        pt += _filter(p, dissipation, h)
        qt += _filter(q, dissipation, h)
    pt[..., -1] = 0.0
    qt[..., 0] = 0.0
    if cache:
        state.pt, state.qt = pt, qt
    return ut, pt, qt


def rk4_step(f: Callable, y: Sequence[np.ndarray], t: float, dt: float, k1=None):
    """Classical RK4 on a tuple of arrays; ``f(t, y)`` returns a tuple."""
    k1 = f(t, y) if k1 is None else k1
    y2 = tuple(a + 0.5 * dt * k for a, k in zip(y, k1))
    k2 = f(t + 0.5 * dt, y2)
    y3 = tuple(a + 0.5 * dt * k for a, k in zip(y, k2))
    k3 = f(t + 0.5 * dt, y3)
    y4 = tuple(a + dt * k for a, k in zip(y, k3))
    k4 = f(t + dt, y4)
    return tuple(a + (dt / 6.0) * (b + 2 * c + 2 * d + e)
                 for a, b, c, d, e in zip(y, k1, k2, k3, k4))


def step(state: FieldState, sys: NonlinearSystem, g: Grid, dt: float,
         dissipation: float = 0.0) -> FieldState:
    """One RK4 step. Reuses the state's cached ``p_t, q_t`` as the first stage."""
    def f(t, y):
        s = FieldState(t, *y)
        return assemble_rhs(s, sys, g, dissipation, cache=False)

    k1 = None
    if state.pt is not None and state.qt is not None and dissipation == 0.0:
        k1 = (0.5 * (state.p + state.q), state.pt, state.qt)
    u, p, q = rk4_step(f, (state.u, state.p, state.q), state.t, dt, k1)
    return FieldState(state.t + dt, u, p, q)


def _peak(state: FieldState) -> float:
    return float(max(np.max(np.abs(state.p)), np.max(np.abs(state.q))))


def extrapolate_blowup(history: list[tuple[float, float]], cap: float | None = None,
                       floor: float | None = None) -> float | None:
    """Zero of a least-squares line through ``(t, 1/peak)`` samples.

    Exact for the ``1/(T - t)`` growth of Riccati-type blowup. Only samples
    with ``floor < peak <= cap`` enter the fit: past a moderate amplification
    the concentrating peak is no longer resolved and the grid values lag,
    while a single pair of samples is dominated by the jitter of the grid
    maximum. With fewer than three samples in the window the last two
    samples are used. Falls back to the last time when the reciprocal is
    not decreasing.
    """
    if not history:
        return None
    kept = [h for h in history if (cap is None or h[1] <= cap) and (floor is None or h[1] > floor)]
    if len(kept) < 3:
        kept = history[-2:]
    if len(kept) < 2:
        return kept[-1][0]
    t = np.array([h[0] for h in kept])
    s = np.array([h[1] for h in kept])
    if np.any(s <= 0) or t[-1] <= t[0]:
        return float(t[-1])
    slope, icpt = np.polyfit(t - t[-1], 1.0 / s, 1)
    if slope >= 0:
        return float(t[-1])
    return float(t[-1] - icpt / slope)


def next_dt(t: float, dt: float, target: float) -> tuple[float, bool]:
    """Step size from ``t`` toward ``target``; lands exactly when within one step."""
    tol = 1e-12 * max(1.0, abs(target))
    if t + dt >= target - tol:
        return target - t, True
    return dt, False


def advance(state: FieldState, sys: NonlinearSystem, g: Grid, target: float, dt: float,
            dissipation: float = 0.0) -> FieldState:
    """Fixed-step integration to ``target`` with the same schedule as :func:`run`."""
    st = state.copy()
    st.pt = st.qt = None
    while st.t < target - 1e-12 * max(1.0, abs(target)):
        h, land = next_dt(st.t, dt, target)
        st = step(st, sys, g, h, dissipation)
        if land:
            st.t = target
    return st


def run(sys: NonlinearSystem, data: FieldState, ctrl: StepControl, g: Grid,
        diag_config=None, epsilon: float | None = None,
        snapshot_times: Sequence[float] = (), progress: Callable | None = None) -> RunResult:
    """Integrate to ``t_max`` or until blowup, CFL floor or non-finite values.

    Steps have ``dt = cfl * dx`` unless a step is rejected because the
    sup-norm grows by more than ``growth_limit`` (or goes non-finite); then
    ``dt`` is halved, and it recovers by doubling once growth is mild.
    """
    # Overflow on the way to blowup is expected; non-finite values are checked explicitly.
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        return _run(sys, data, ctrl, g, diag_config, epsilon, snapshot_times, progress)


def _run(sys, data, ctrl, g, diag_config, epsilon, snapshot_times, progress) -> RunResult:
    from .diagnostics import DiagConfig, EnergyReporter

    reporter = EnergyReporter(sys, g, diag_config or DiagConfig())
    state = data.copy()
    state.pt = state.qt = None
    dt_nominal = ctrl.cfl * g.dx
    dt = dt_nominal
    if epsilon is None:
        epsilon = state.sup_pq()
    threshold = ctrl.blowup_threshold if ctrl.blowup_threshold is not None else 1e4 * epsilon
    quiet = QUIET_REL * epsilon
    pending = sorted(t for t in snapshot_times if 0 <= t <= ctrl.t_max)
    result = RunResult("completed", 0.0, None)

    def snap_if_due(s):
        while pending and abs(s.t - pending[0]) <= 1e-12 * max(1.0, pending[0]):
            result.snapshots[pending.pop(0)] = s.copy()

    if not state.is_finite():
        result.termination = "nonfinite"
        result.final_state = state
        result.message = "initial data not finite"
        return result
    try:
        result.series.append(reporter.report(state))
    except NearSingularError as exc:
        result.termination = "blowup"
        result.blowup_time_estimate = 0.0
        result.message = str(exc)
        result.final_state = state
        return result
    snap_if_due(state)
    sup = state.sup_pq()
    history = result.peak_history
    history.append((state.t, _peak(state)))
    result.boundary_max = state.boundary_level()
    result.constraint_max = constraint_defect(state, g)
    last_reported = 0
    t_end = ctrl.t_max
    last_reject_nonfinite = False

    while state.t < t_end - 1e-12 * t_end:
        target = pending[0] if pending and pending[0] < t_end else t_end
        dt_try, land = next_dt(state.t, dt, target)
        landing = target if land else None
        try:
            new = step(state, sys, g, dt_try, ctrl.dissipation)
        except NearSingularError as exc:
            result.termination = "blowup"
            result.message = str(exc)
            break
        new_sup = new.sup_pq() if new.is_finite() else math.inf
        growth = new_sup / sup if sup > 0 else 1.0
        if not math.isfinite(new_sup) or growth > ctrl.growth_limit:
            last_reject_nonfinite = not math.isfinite(new_sup)
            result.rejected_steps += 1
            dt = 0.5 * dt_try
            if dt < ctrl.dt_min:
                result.termination = "nonfinite" if last_reject_nonfinite else "cfl_floor"
                result.message = f"dt fell below dt_min={ctrl.dt_min}"
                break
            continue
        if landing is not None:
            new.t = landing
        state = new
        sup = new_sup
        history.append((state.t, _peak(state)))
        result.steps += 1
        if dt < dt_nominal and growth < 1.01:
            dt = min(2.0 * dt, dt_nominal)
        result.boundary_max = max(result.boundary_max, state.boundary_level())
        snap_if_due(state)
        if sup > threshold:
            result.termination = "blowup"
            result.message = f"sup|p|+sup|q| = {sup:.3g} exceeded {threshold:.3g}"
            break
        if result.steps % ctrl.report_every == 0:
            try:
                result.series.append(reporter.report(state))
            except NearSingularError as exc:
                result.termination = "blowup"
                result.message = str(exc)
                break
            last_reported = result.steps
            result.constraint_max = max(result.constraint_max, constraint_defect(state, g))
            if progress is not None:
                progress(state.t)

    if result.termination == "completed" and last_reported != result.steps:
        result.series.append(reporter.report(state))
    if result.termination != "completed":
        h0 = history[0][1]
        result.blowup_time_estimate = extrapolate_blowup(history, ctrl.resolve_gain * h0, ctrl.fit_gain * h0)
    if result.boundary_max > quiet and epsilon > 0:
        log.warning("boundary not quiet: %.3g > %.3g", result.boundary_max, quiet)
    result.t_end = state.t
    result.final_state = state
    return result
