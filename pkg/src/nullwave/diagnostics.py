"""Weighted energies, space-time energies and monitored inequalities.

All quantities are evaluated from a :class:`FieldState`. Derivatives up to
third order in ``u`` come from a :class:`DerivativeStack`. The equation
itself supplies the time derivatives: ``G = p_t - D p`` is ``u_xi_eta``, and
its time derivative is taken along the flow.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .grid import FieldState, Grid, dx_op, dxx_compact, integrate_x, l2_norm
from .solver import solve_block
from .systems import NonlinearSystem
from .weights import WeightSet, jb

DIRECTIONAL_STEP = 1e-3  # time-like step for the centered derivative along the flow
LATE_WINDOW = (10.0, 100.0)


@dataclass
class DiagConfig:
    delta: float = 0.5
    temporal: str = "directional"  # or "backward"
    step: float = DIRECTIONAL_STEP

    def __post_init__(self):
        WeightSet(self.delta)
        if self.temporal not in ("directional", "backward"):
            raise ValueError(f"temporal must be 'directional' or 'backward', got {self.temporal!r}")
        if self.step <= 0:
            raise ValueError("step must be positive")


@dataclass
class DerivativeStack:
    """``Z^a p`` and ``Z^a q`` for ``|a| <= 2``, keyed by ``(a1, a2)``.

    ``order`` records the expected truncation order of each entry in ``dx``
    (spatial) or in the temporal step, ``mixed_defect`` the sup difference
    between the two evaluation orders of ``d_xi d_eta p``.
    """

    t: float
    p: dict
    q: dict
    order: dict = field(default_factory=dict)
    mixed_defect: float = 0.0
    Gp: np.ndarray | None = None
    Gq: np.ndarray | None = None


def _gaps(sys: NonlinearSystem, g: Grid, u, p, q):
    """``(p_t - D p, q_t + D q)`` without boundary freezing, plus ``p_t, q_t``."""
    Dp = dx_op(p, g)
    Dq = dx_op(q, g)
    pt, qt = solve_block(sys, u, p, q, Dp, Dq)
    return pt - Dp, qt + Dq, pt, qt


def build_stack(prev: dict | None, cur: FieldState, sys: NonlinearSystem, g: Grid,
                cfg: DiagConfig | None = None) -> DerivativeStack:
    """Derivative stack at ``cur``.

    ``prev`` is only used for ``temporal='backward'``: a dict with keys
    ``t, Gp, Gq`` from the previous report. Without it the backward mode
    falls back to a first-order forward difference along the flow.
    """
    cfg = cfg or DiagConfig()
    u, p, q = cur.u, cur.p, cur.q
    Gp, Gq, pt, qt = _gaps(sys, g, u, p, q)
    ut = 0.5 * (p + q)
    h = cfg.step
    if sys.is_linear:
        Gp_t = np.zeros_like(p)
        Gq_t = np.zeros_like(q)
        t_order = math.inf
    elif cfg.temporal == "directional":
        Gp_a, Gq_a, _, _ = _gaps(sys, g, u + h * ut, p + h * pt, q + h * qt)
        Gp_b, Gq_b, _, _ = _gaps(sys, g, u - h * ut, p - h * pt, q - h * qt)
        Gp_t = (Gp_a - Gp_b) / (2 * h)
        Gq_t = (Gq_a - Gq_b) / (2 * h)
        t_order = 2
    elif prev is not None and cur.t > prev["t"]:
        dt = cur.t - prev["t"]
        Gp_t = (Gp - prev["Gp"]) / dt
        Gq_t = (Gq - prev["Gq"]) / dt
        t_order = 1
    else:
        Gp_a, Gq_a, _, _ = _gaps(sys, g, u + h * ut, p + h * pt, q + h * qt)
        Gp_t = (Gp_a - Gp) / h
        Gq_t = (Gq_a - Gq) / h
        t_order = 1

    D = lambda f: dx_op(f, g)  # noqa: E731
    Dp, Dq = D(p), D(q)
    DDp, DDq = D(Dp), D(Dq)
    Dpt, Dqt = D(pt), D(qt)
    DGp, DGq = D(Gp), D(Gq)
    ptt = Dpt + Gp_t
    qtt = -Dqt + Gq_t

    ps = {
        (0, 0): p,
        (1, 0): pt + Dp,
        (0, 1): Gp,
        (2, 0): ptt + 2 * Dpt + DDp,
        (1, 1): Gp_t + DGp,
        (0, 2): Gp_t - DGp,
    }
    qs = {
        (0, 0): q,
        (1, 0): Gq,
        (0, 1): qt - Dq,
        (2, 0): Gq_t + DGq,
        (1, 1): Gq_t - DGq,
        (0, 2): qtt - 2 * Dqt + DDq,
    }
    sp = g.stencil_order
    order = {(0, 0): math.inf, (1, 0): sp, (0, 1): sp,
             (2, 0): min(sp, t_order), (1, 1): min(sp, t_order), (0, 2): min(sp, t_order)}
    # d_eta(p_xi) evaluated with the compact second difference
    other = ptt - dxx_compact(p, g)
    mixed = float(np.max(np.abs(ps[(1, 1)] - other))) if p.size else 0.0
    return DerivativeStack(cur.t, ps, qs, order, mixed, Gp, Gq)


@dataclass
class EnergyReport:
    t: float
    E1: float = 0.0
    E2: float = 0.0
    E3: float = 0.0
    E3_tilde: float = 0.0
    E_total: float = 0.0
    SE1: float = 0.0
    SE2: float = 0.0
    SE3: float = 0.0
    SE3_tilde: float = 0.0
    SE_total: float = 0.0
    rate1: float = 0.0
    rate2: float = 0.0
    rate3: float = 0.0
    rate3_tilde: float = 0.0
    sup_u: float = 0.0
    sup_wp: float = 0.0
    sup_wq: float = 0.0
    sup_w2: float = 0.0
    ratio_u: float | None = None
    ratio_w: float | None = None
    ratio_2: float | None = None
    ratio_L24: float | None = None
    ratio_L24_SE: float | None = None
    source_L2: float = 0.0
    SL1: float = 0.0
    mixed_defect: float = 0.0
    nonfinite: bool = False

    def as_row(self) -> dict:
        return asdict(self)

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]


def _ratio(num, den):
    return None if den <= 0 else float(num / den)


def _sum_int(g, *terms):
    return float(sum(np.sum(integrate_x(t, g)) for t in terms))


def energy_report(state: FieldState, stack: DerivativeStack, w: WeightSet, g: Grid,
                  accum: EnergyReport | None = None,
                  sys: NonlinearSystem | None = None) -> EnergyReport:
    """Energies at ``state.t``; space-time entries extend ``accum`` by the trapezoid rule."""
    t = state.t
    values = [state.u, state.p, state.q] + list(stack.p.values()) + list(stack.q.values())
    if not all(np.isfinite(v).all() for v in values):
        rep = EnergyReport(t, nonfinite=True)
        for name in EnergyReport.columns()[1:-1]:
            setattr(rep, name, math.nan)
        return rep
    x = g.x
    bx = jb(0.5 * (t + x))
    be = jb(0.5 * (t - x))
    k = 1.0 + w.delta
    wx = bx ** (2 * k)
    we = be ** (2 * k)
    sx = wx * be ** (-k)  # space-time weight on p-terms
    se = we * bx ** (-k)
    P, Q = stack.p, stack.q

    def pair(wp, wq, pkeys, qkeys):
        return _sum_int(g, *[wp * P[a] ** 2 for a in pkeys], *[wq * Q[a] ** 2 for a in qkeys])

    first = ([(1, 0), (0, 1)], [(1, 0), (0, 1)])
    third = ([(2, 0), (1, 1)], [(1, 1), (0, 2)])
    mixed = ([(0, 2)], [(2, 0)])
    rep = EnergyReport(t)
    rep.E1 = pair(wx, we, [(0, 0)], [(0, 0)])
    rep.E2 = pair(wx, we, *first)
    rep.E3 = pair(wx, we, *third)
    rep.E3_tilde = pair(wx, we, *mixed)
    rep.E_total = rep.E1 + rep.E2 + rep.E3
    rep.rate1 = pair(sx, se, [(0, 0)], [(0, 0)])
    rep.rate2 = pair(sx, se, *first)
    rep.rate3 = pair(sx, se, *third)
    rep.rate3_tilde = pair(sx, se, *mixed)

    if sys is not None and not sys.is_linear:
        u, p, q = state.u, state.p, state.q
        A1 = sys.matrix("A1", u, p, q)
        A2 = sys.matrix("A2", u, p, q)
        A3 = sys.matrix("A3", u, p, q)
        G = (np.einsum("ijx,jx->ix", A1, P[(0, 1)]) + np.einsum("ijx,jx->ix", A2, P[(1, 0)])
             + np.einsum("ijx,jx->ix", A3, Q[(0, 1)]) + sys.source(u, p, q))
        rep.source_L2 = l2_norm(G, g)

    if accum is not None:
        dt = t - accum.t
        if dt < 0:
            raise ValueError("reports must be accumulated in increasing time")
        half = 0.5 * dt
        rep.SE1 = accum.SE1 + half * (accum.rate1 + rep.rate1)
        rep.SE2 = accum.SE2 + half * (accum.rate2 + rep.rate2)
        rep.SE3 = accum.SE3 + half * (accum.rate3 + rep.rate3)
        rep.SE3_tilde = accum.SE3_tilde + half * (accum.rate3_tilde + rep.rate3_tilde)
        rep.SL1 = accum.SL1 + half * (accum.source_L2 + rep.source_L2)
    rep.SE_total = rep.SE1 + rep.SE2 + rep.SE3

    rep.sup_u = float(np.max(np.abs(state.u)))
    rep.sup_wp = float(np.max(bx ** k * np.abs(state.p)))
    rep.sup_wq = float(np.max(be ** k * np.abs(state.q)))
    rep.sup_w2 = float(np.max(bx ** k * np.abs(P[(2, 0)] + P[(1, 1)]))
                       + np.max(be ** k * np.abs(Q[(0, 2)] + Q[(1, 1)])))
    rep.ratio_u, rep.ratio_w, rep.ratio_2 = lemma23_ratios(rep)
    rep.ratio_L24, rep.ratio_L24_SE = lemma24_ratio(rep)
    rep.mixed_defect = stack.mixed_defect
    return rep


def lemma23_ratios(rep: EnergyReport):
    """Measured constants of the pointwise bounds; ``None`` when ``E1 == 0``."""
    if not rep.E1 > 0:
        return None, None, None
    r_u = rep.sup_u / math.sqrt(rep.E1)
    r_w = _ratio(rep.sup_wp + rep.sup_wq, math.sqrt(rep.E1) + math.sqrt(rep.E2))
    r_2 = _ratio(rep.sup_w2, math.sqrt(rep.E_total) + math.sqrt(rep.E3_tilde))
    return r_u, r_w, r_2


def lemma24_ratio(rep: EnergyReport):
    """``(E3_tilde / E, SE3_tilde / SE)``, each ``None`` while its denominator vanishes."""
    return _ratio(rep.E3_tilde, rep.E_total), _ratio(rep.SE3_tilde, rep.SE_total)


class EnergyReporter:
    """Owns the space-time accumulators of one run; call :meth:`report` in time order."""

    def __init__(self, sys: NonlinearSystem, g: Grid, cfg: DiagConfig | None = None):
        self.sys = sys
        self.g = g
        self.cfg = cfg or DiagConfig()
        self.w = WeightSet(self.cfg.delta)
        self.last: EnergyReport | None = None
        self._prev: dict | None = None

    def report(self, state: FieldState) -> EnergyReport:
        stack = build_stack(self._prev, state, self.sys, self.g, self.cfg)
        rep = energy_report(state, stack, self.w, self.g, self.last, self.sys)
        self._prev = {"t": state.t, "Gp": stack.Gp, "Gq": stack.Gq}
        self.last = rep
        return rep


def report_state(state: FieldState, sys: NonlinearSystem, g: Grid,
                 cfg: DiagConfig | None = None) -> EnergyReport:
    """Single stand-alone report (no accumulation)."""
    return EnergyReporter(sys, g, cfg).report(state)


def source_decay(series, window=LATE_WINDOW):
    """Least-squares slope of ``log source_L2`` against ``log <t>`` in ``window``, and ``int ||G|| dt``.

    The integral is the trapezoid over all reports. The slope is ``None``
    when fewer than two positive samples fall in the window.
    """
    ts = np.array([r.t for r in series], dtype=float)
    gs = np.array([r.source_L2 for r in series], dtype=float)
    l1 = float(np.trapezoid(gs, ts)) if ts.size > 1 else 0.0
    sel = (ts >= window[0]) & (ts <= window[1]) & (gs > 0)
    if np.count_nonzero(sel) < 2:
        return None, l1
    slope = np.polyfit(np.log(jb(ts[sel])), np.log(gs[sel]), 1)[0]
    return float(slope), l1


def l1_until(series, T: float) -> float:
    """``int_0^T ||G|| dt`` from the report series (trapezoid, truncated at ``T``)."""
    ts = np.array([r.t for r in series], dtype=float)
    gs = np.array([r.source_L2 for r in series], dtype=float)
    if T >= ts[-1]:
        return float(np.trapezoid(gs, ts))
    gT = np.interp(T, ts, gs)
    keep = ts < T
    return float(np.trapezoid(np.append(gs[keep], gT), np.append(ts[keep], T)))


def _resample(f, coord_src, coord_dst):
    return np.array([np.interp(coord_dst, coord_src, row) for row in np.atleast_2d(f)])


def scattering_metric(s1: FieldState, s2: FieldState, g: Grid) -> float:
    """L^2 distance of the xi-profiles of ``p`` and the eta-profiles of ``q`` at two times.

    ``p(t, .)`` is read as a function of ``xi = (t + x)/2`` and ``q`` as a
    function of ``eta = (t - x)/2``, both linearly interpolated onto the
    common range of the two snapshots.
    """
    if not s2.t > s1.t:
        raise ValueError("scattering_metric needs t1 < t2")
    x = g.x
    total = 0.0
    for f1, f2, sign in ((s1.p, s2.p, 1.0), (s1.q, s2.q, -1.0)):
        c1 = 0.5 * (s1.t + sign * x)
        c2 = 0.5 * (s2.t + sign * x)
        if sign < 0:
            c1, c2, f1, f2 = c1[::-1], c2[::-1], f1[..., ::-1], f2[..., ::-1]
        lo, hi = max(c1[0], c2[0]), min(c1[-1], c2[-1])
        if hi - lo < 10 * g.dx:
            raise ValueError(f"insufficient characteristic overlap between t={s1.t} and t={s2.t}")
        n = int(round((hi - lo) / (0.5 * g.dx))) + 1
        c = np.linspace(lo, hi, n)
        d = _resample(f1, c1, c) - _resample(f2, c2, c)
        total += float(np.sum(np.trapezoid(d * d, c, axis=-1)))
    return math.sqrt(total)


def free_flow_defect(s1: FieldState, s2: FieldState, g: Grid, cfl: float = 0.5,
                     free_sys: NonlinearSystem | None = None, stops=()) -> float:
    """L^2 distance at ``t2`` between the solution and the free wave launched from it at ``t1``.

    The free wave is advanced by the same discrete scheme and step schedule
    on the zero system, so the scheme's own dispersion cancels and only the
    nonlinear interaction on ``[t1, t2]`` remains. ``stops`` lists the
    intermediate times at which the run landed exactly (its snapshots).
    Measured in ``d xi`` for ``p`` and ``d eta`` for ``q`` (half the ``dx`` integral).
    """
    from .solver import advance
    if not s2.t > s1.t:
        raise ValueError("free_flow_defect needs t1 < t2")
    free = free_sys or NonlinearSystem("zero", s1.n)
    st = s1
    for target in sorted(t for t in stops if s1.t < t < s2.t) + [s2.t]:
        st = advance(st, free, g, target, cfl * g.dx)
    return math.sqrt(0.5 * (l2_norm(s2.p - st.p, g) ** 2 + l2_norm(s2.q - st.q, g) ** 2))
