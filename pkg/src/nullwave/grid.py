"""Uniform grid, stencils, field storage and initial data.

Coordinates follow the null convention ``xi = (t + x) / 2``,
``eta = (t - x) / 2`` with ``d_xi = d_t + d_x`` and ``d_eta = d_t - d_x``;
``p = u_xi`` and ``q = u_eta``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable

import numpy as np

from .weights import jb

GAUSSIAN_CUT = 1e-14
QUIET_REL = 1e-8  # boundary quietness, relative to the data size epsilon
DOMAIN_MARGIN = 5.0


@dataclass(frozen=True)
class Grid:
    x_min: float
    x_max: float
    nx: int
    stencil_order: int = 2

    def __post_init__(self):
        if self.stencil_order not in (2, 4):
            raise ValueError(f"stencil_order must be 2 or 4, got {self.stencil_order}")
        need = 9 if self.stencil_order == 4 else 5
        if self.nx < need:
            raise ValueError(f"nx must be >= {need} for order-{self.stencil_order} stencils, got {self.nx}")
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.nx - 1)

    @cached_property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.nx)

    def refined(self, factor: int) -> "Grid":
        return replace(self, nx=(self.nx - 1) * factor + 1)

    @classmethod
    def symmetric(cls, half_width: float, dx: float, stencil_order: int = 2) -> "Grid":
        n_half = int(math.ceil(half_width / dx))
        return cls(-n_half * dx, n_half * dx, 2 * n_half + 1, stencil_order)


def dx_op(f: np.ndarray, g: Grid) -> np.ndarray:
    """First x-derivative along the last axis.

    Centered interior stencil of the grid's order with one-sided closures of
    the same order at the ends.
    """
    f = np.asarray(f, dtype=float)
    if f.shape[-1] != g.nx:
        raise ValueError(f"field has {f.shape[-1]} points, grid has {g.nx}")
    h = g.dx
    out = np.empty_like(f)
    # Closures are written in differences so constants differentiate to exactly 0.
    d = lambda i, j: f[..., i] - f[..., j]  # noqa: E731
    if g.stencil_order == 2:
        out[..., 1:-1] = (f[..., 2:] - f[..., :-2]) / (2 * h)
        out[..., 0] = (4 * d(1, 0) - d(2, 0)) / (2 * h)
        out[..., -1] = -(4 * d(-2, -1) - d(-3, -1)) / (2 * h)
        return out
    out[..., 2:-2] = (8 * (f[..., 3:-1] - f[..., 1:-3]) - (f[..., 4:] - f[..., :-4])) / (12 * h)
    out[..., 0] = (48 * d(1, 0) - 36 * d(2, 0) + 16 * d(3, 0) - 3 * d(4, 0)) / (12 * h)
    out[..., 1] = (-3 * d(0, 1) + 18 * d(2, 1) - 6 * d(3, 1) + d(4, 1)) / (12 * h)
    out[..., -1] = -(48 * d(-2, -1) - 36 * d(-3, -1) + 16 * d(-4, -1) - 3 * d(-5, -1)) / (12 * h)
    out[..., -2] = -(-3 * d(-1, -2) + 18 * d(-3, -2) - 6 * d(-4, -2) + d(-5, -2)) / (12 * h)
    return out


def dxx_compact(f: np.ndarray, g: Grid) -> np.ndarray:
    """Compact second derivative; used only as an independent cross-check of ``dx_op(dx_op(.))``."""
    h2 = g.dx ** 2
    out = np.empty_like(f, dtype=float)
    if g.stencil_order == 2:
        out[..., 1:-1] = (f[..., 2:] - 2 * f[..., 1:-1] + f[..., :-2]) / h2
        out[..., 0] = (2 * f[..., 0] - 5 * f[..., 1] + 4 * f[..., 2] - f[..., 3]) / h2
        out[..., -1] = (2 * f[..., -1] - 5 * f[..., -2] + 4 * f[..., -3] - f[..., -4]) / h2
        return out
    out[..., 2:-2] = (-f[..., :-4] + 16 * f[..., 1:-3] - 30 * f[..., 2:-2]
                      + 16 * f[..., 3:-1] - f[..., 4:]) / (12 * h2)
    wide = dx_op(dx_op(f, g), g)
    out[..., :2] = wide[..., :2]
    out[..., -2:] = wide[..., -2:]
    return out


def integrate_x(f: np.ndarray, g: Grid) -> np.ndarray:
    """Trapezoidal integral over the last axis."""
    return np.trapezoid(f, dx=g.dx, axis=-1)


def l2_norm(f: np.ndarray, g: Grid) -> float:
    f = np.asarray(f, dtype=float)
    return float(math.sqrt(max(float(np.sum(integrate_x(f * f, g))), 0.0)))


@dataclass
class FieldState:
    t: float
    u: np.ndarray
    p: np.ndarray
    q: np.ndarray
    pt: np.ndarray | None = None
    qt: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.u.shape[0]

    def copy(self) -> "FieldState":
        return FieldState(
            self.t, self.u.copy(), self.p.copy(), self.q.copy(),
            None if self.pt is None else self.pt.copy(),
            None if self.qt is None else self.qt.copy(),
        )

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.u).all() and np.isfinite(self.p).all()
                    and np.isfinite(self.q).all())

    def sup_pq(self) -> float:
        return float(np.max(np.abs(self.p)) + np.max(np.abs(self.q)))

    def boundary_level(self, width: int = 4) -> float:
        edges = [a[..., :width] for a in (self.u, self.p, self.q)]
        edges += [a[..., -width:] for a in (self.u, self.p, self.q)]
        return float(max(np.max(np.abs(e)) for e in edges))


def constraint_defect(state: FieldState, g: Grid) -> float:
    """``max |D_x u - (p - q) / 2|``; the reduction's compatibility condition."""
    return float(np.max(np.abs(dx_op(state.u, g) - 0.5 * (state.p - state.q))))


# --- initial data ---------------------------------------------------------

@dataclass(frozen=True)
class Profile:
    """Unit-amplitude initial data ``u0`` with analytic derivative and ``u1``."""

    name: str
    u0: Callable[[np.ndarray], np.ndarray]
    du0: Callable[[np.ndarray], np.ndarray]
    u1: Callable[[np.ndarray], np.ndarray]
    radius: Callable[[float], float] = field(repr=False)  # support radius at a relative tolerance


def _gauss(x):
    v = np.exp(-np.square(x))
    return np.where(v < GAUSSIAN_CUT, 0.0, v)


def _dgauss(x):
    return np.where(np.exp(-np.square(x)) < GAUSSIAN_CUT, 0.0, -2.0 * x * np.exp(-np.square(x)))


_GAUSS_R = math.sqrt(-math.log(GAUSSIAN_CUT))
BUMP_R = 4.0


def _bump(x):
    s = np.square(np.asarray(x, dtype=float) / BUMP_R)
    inside = s < 1.0
    out = np.zeros_like(s)
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside]))
    return out


def _dbump(x):
    x = np.asarray(x, dtype=float)
    s = np.square(x / BUMP_R)
    inside = s < 1.0
    out = np.zeros_like(s)
    si = s[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - si)) * (-2.0 * x[inside] / BUMP_R ** 2) / (1.0 - si) ** 2
    return out


def algebraic_profile(power: float) -> Profile:
    """``u0 = <x>^-power``; power-law tails inside the weighted data class for ``power > 1.5 + delta``."""
    return Profile(
        f"algebraic{power:g}",
        lambda x: jb(x) ** (-power),
        lambda x: -power * np.asarray(x) * jb(x) ** (-power - 2.0),
        lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        lambda tol: tol ** (-1.0 / power),
    )


def get_profile(name: str, power: float = 4.0) -> Profile:
    zero = lambda x: np.zeros_like(np.asarray(x, dtype=float))  # noqa: E731
    if name == "gaussian":
        return Profile(name, _gauss, _dgauss, zero, lambda tol: _GAUSS_R)
    if name == "traveling_left":
        # u1 = u0' makes q = u1 - u0' vanish: a pure function of xi.
        return Profile(name, _gauss, _dgauss, _dgauss, lambda tol: _GAUSS_R)
    if name == "bump":
        return Profile(name, _bump, _dbump, zero, lambda tol: BUMP_R)
    if name == "algebraic":
        return algebraic_profile(power)
    raise ValueError(f"unknown profile {name!r}")


PROFILES = ("gaussian", "bump", "traveling_left", "algebraic")


def norm27(u0: np.ndarray, u1: np.ndarray, delta: float, g: Grid) -> float:
    """Weighted data norm: sum of ``||<x>^(1+delta) d_x^l u0||`` (l <= 3) and of u1 (l <= 2)."""
    w = jb(g.x) ** (1.0 + delta)
    total = 0.0
    f = np.asarray(u0, dtype=float)
    for _ in range(4):
        total += l2_norm(w * f, g)
        f = dx_op(f, g)
    f = np.asarray(u1, dtype=float)
    for _ in range(3):
        total += l2_norm(w * f, g)
        f = dx_op(f, g)
    return total


def make_initial_data(profile: str, epsilon: float, delta: float, g: Grid,
                      n: int = 1, power: float = 4.0, t_max: float | None = None,
                      width: float = 1.0):
    """Initial state scaled so that ``norm27 == epsilon``.

    The unit profile is stretched to ``u0(x / width)`` with
    ``u1(x / width) / width``. Every component of ``u`` receives the same
    profile. Returns the state at ``t = 0`` and the achieved norm.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    if width <= 0:
        raise ValueError("width must be positive")
    prof = get_profile(profile, power)
    s = g.x / width
    u0 = prof.u0(s)
    u1 = prof.u1(s) / width
    unit = norm27(u0, u1, delta, g) * math.sqrt(n)
    check_domain(prof, g, unit, t_max or 0.0, width)
    amp = epsilon / unit if epsilon > 0 else 0.0
    u = np.tile(amp * u0, (n, 1))
    du = amp * prof.du0(s) / width
    v = amp * u1
    p = np.tile(v + du, (n, 1))
    q = np.tile(v - du, (n, 1))
    state = FieldState(0.0, u, p, q)
    achieved = norm27(u[0], v, delta, g) * math.sqrt(n)
    return state, achieved


def data_amplitude(profile: str, epsilon: float, delta: float, g: Grid, n: int = 1,
                   power: float = 4.0, width: float = 1.0) -> float:
    """Factor multiplying the unit profile for data of size ``epsilon``."""
    prof = get_profile(profile, power)
    s = g.x / width
    return epsilon / (norm27(prof.u0(s), prof.u1(s) / width, delta, g) * math.sqrt(n))


def check_domain(prof: Profile, g: Grid, unit_norm: float, t_max: float,
                 width: float = 1.0) -> None:
    """Reject domains in which the data (or its light cone up to ``t_max``) reaches the ends."""
    radius = width * prof.radius(QUIET_REL * unit_norm)
    reach = radius + t_max + DOMAIN_MARGIN
    if g.x_max < reach or g.x_min > -reach:
        raise ValueError(
            f"domain [{g.x_min}, {g.x_max}] too small for profile {prof.name}: "
            f"need |x| >= {reach:.2f} (support {radius:.2f} + t_max {t_max} + margin)"
        )


def required_half_width(profile: str, epsilon: float, delta: float, t_max: float,
                        power: float = 4.0, width: float = 1.0, dx: float = 0.05) -> float:
    """Smallest symmetric half-width accepted by :func:`check_domain`."""
    prof = get_profile(profile, power)
    probe = Grid.symmetric(width * 30.0, dx, 2)
    s = probe.x / width
    unit = norm27(prof.u0(s), prof.u1(s) / width, delta, probe)
    return width * prof.radius(QUIET_REL * unit) + t_max + DOMAIN_MARGIN + 1.0
