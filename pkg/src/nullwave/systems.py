"""Nonlinearities of ``u_xi_eta = A1 u_xi_eta + A2 u_xi_xi + A3 u_eta_eta + F``.

Coefficients are callables of ``(u, p, q)`` where each argument has shape
``(n, ...)``; matrices come back with shape ``(n, n, ...)`` and the source
with shape ``(n, ...)``. ``None`` stands for an identically zero term so the
solver can skip it.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

Coef = Optional[Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]]

SLICE_TOL = 1e-10
SYMMETRY_TOL = 1e-12
SCALES = (1.0, 0.5, 0.25, 0.125)
MIN_ORDER = 0.9
COND_LIMIT = 1e8


@dataclass
class NonlinearSystem:
    name: str
    n: int = 1
    A1: Coef = None
    A2: Coef = None
    A3: Coef = None
    F: Coef = None
    claims_null: bool = True
    meta: dict = field(default_factory=dict)

    @property
    def is_linear(self) -> bool:
        return self.A1 is None and self.A2 is None and self.A3 is None and self.F is None

    def matrix(self, which: str, u, p, q) -> np.ndarray:
        fn = getattr(self, which)
        shape = (self.n, self.n) + np.shape(u)[1:]
        if fn is None:
            return np.zeros(shape)
        return np.broadcast_to(np.asarray(fn(u, p, q), dtype=float), shape)

    def source(self, u, p, q) -> np.ndarray:
        if self.F is None:
            return np.zeros(np.shape(u))
        return np.broadcast_to(np.asarray(self.F(u, p, q), dtype=float), np.shape(u))

    def swapped(self) -> "NonlinearSystem":
        """Image under ``x -> -x``: xi and eta exchange, so p <-> q and A2 <-> A3."""
        def flip(fn):
            return None if fn is None else (lambda u, p, q: fn(u, q, p))
        return NonlinearSystem(f"{self.name}_swapped", self.n, flip(self.A1), flip(self.A3),
                               flip(self.A2), flip(self.F), self.claims_null, dict(self.meta))


def _eye(n, like):
    return np.eye(n).reshape((n, n) + (1,) * (like.ndim - 1)) * np.ones(like.shape[1:])


def _diag(v):
    n = v.shape[0]
    out = np.zeros((n, n) + v.shape[1:])
    idx = np.arange(n)
    out[idx, idx] = v
    return out


def catalog(n: int = 1) -> list[NonlinearSystem]:
    """Shipped example systems; ``claims_null`` is the expected classification."""
    return [
        NonlinearSystem("zero", n),
        NonlinearSystem("semi_null", n, F=lambda u, p, q: p * q),
        NonlinearSystem("quasi_null", n,
                        A1=lambda u, p, q: _diag(u), A2=lambda u, p, q: _diag(q),
                        A3=lambda u, p, q: _diag(p), F=lambda u, p, q: p * q),
        NonlinearSystem("riccati", n, F=lambda u, p, q: p * p, claims_null=False),
        NonlinearSystem("general_quad", n, F=lambda u, p, q: p * p + q * q, claims_null=False),
        NonlinearSystem("semi_reducible", n, A1=lambda u, p, q: _diag(u),
                        F=lambda u, p, q: p * q),
    ]


def get_system(name: str, n: int = 1) -> NonlinearSystem:
    for s in catalog(n):
        if s.name == name:
            return s
    known = ", ".join(s.name for s in catalog(n))
    raise KeyError(f"unknown system {name!r}; known: {known}")


def polynomial_system(data: dict) -> NonlinearSystem:
    """Build a system from monomial coefficient lists.

    ``data`` has ``n``, ``name``, optional ``claims_null`` and per-term tables,
    e.g. ``{"F": {"0": [{"coef": 1.0, "p": [1], "q": [1]}]}}`` or, for
    matrices, keys ``"i,j"``. Missing exponent lists mean zero exponents.
    """
    n = int(data.get("n", 1))
    name = str(data.get("name", "polynomial"))

    def monomial_sum(terms):
        parsed = []
        for t in terms:
            exps = [np.asarray(t.get(k, [0] * n), dtype=float).reshape(n) for k in ("u", "p", "q")]
            parsed.append((float(t.get("coef", 1.0)), exps))

        def ev(u, p, q):
            out = 0.0
            for coef, (eu, ep, eq) in parsed:
                val = coef
                for arr, e in ((u, eu), (p, ep), (q, eq)):
                    for k in range(n):
                        if e[k]:
                            val = val * arr[k] ** e[k]
                out = out + val
            return out * np.ones(np.shape(u)[1:])
        return ev

    def build(term, is_matrix):
        table = data.get(term)
        if not table:
            return None
        entries = {}
        for key, terms in table.items():
            idx = tuple(int(v) for v in str(key).split(","))
            if len(idx) != (2 if is_matrix else 1) or any(not 0 <= i < n for i in idx):
                raise ValueError(f"bad index {key!r} for {term}")
            entries[idx] = monomial_sum(terms)

        def ev(u, p, q):
            shape = ((n, n) if is_matrix else (n,)) + np.shape(u)[1:]
            out = np.zeros(shape)
            for idx, fn in entries.items():
                out[idx] = fn(u, p, q)
            return out
        return ev

    system = NonlinearSystem(name, n, build("A1", True), build("A2", True), build("A3", True),
                             build("F", False), bool(data.get("claims_null", True)),
                             {"polynomial": data})
    validate_symmetric(system)
    return system


def _sample_ball(n, radius, n_samples, seed):
    rng = np.random.default_rng(seed)
    return [rng.uniform(-radius, radius, size=(n, n_samples)) for _ in range(3)]


def validate_symmetric(system: NonlinearSystem, radius: float = 0.5, n_samples: int = 100,
                       seed: int = 0) -> float:
    """Raise ``ValueError`` if any A_i is non-symmetric at a sampled point."""
    u, p, q = _sample_ball(system.n, radius, n_samples, seed)
    worst = 0.0
    for which in ("A1", "A2", "A3"):
        m = system.matrix(which, u, p, q)
        worst = max(worst, float(np.max(np.abs(m - np.swapaxes(m, 0, 1)))))
    if worst > SYMMETRY_TOL:
        raise ValueError(f"system {system.name!r} has non-symmetric coefficients ({worst:.3g})")
    return worst


# --- null condition checker ---------------------------------------------------

@dataclass
class CondResult:
    passed: bool
    violation: float
    reason: str = ""


@dataclass
class NullReport:
    system: str
    cond_A1: CondResult
    cond_A2: CondResult
    cond_A3: CondResult
    cond_F: CondResult
    samples_used: int
    radius: float
    seed: int

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions().values())

    def conditions(self) -> dict[str, CondResult]:
        return {"cond_A1": self.cond_A1, "cond_A2": self.cond_A2,
                "cond_A3": self.cond_A3, "cond_F": self.cond_F}

    def failed(self) -> list[str]:
        return [k for k, c in self.conditions().items() if not c.passed]

    def verdict(self) -> str:
        return "PASS" if self.passed else f"FAIL({','.join(self.failed())})"


def _norms(arr: np.ndarray, n_lead: int) -> np.ndarray:
    """Frobenius/Euclidean norm over the leading ``n_lead`` axes."""
    flat = arr.reshape((-1,) + arr.shape[n_lead:])
    return np.sqrt(np.sum(flat * flat, axis=0))


def _slice_test(values: list[np.ndarray], n_lead: int) -> CondResult:
    for v in values:
        if not np.all(np.isfinite(v)):
            return CondResult(False, float("inf"), "non-finite evaluation")
    worst = max(float(np.max(_norms(v, n_lead))) for v in values)
    ok = worst <= SLICE_TOL
    return CondResult(ok, worst, "" if ok else "nonzero on a vanishing slice")


def check_null(system: NonlinearSystem, radius: float = 0.25, n_samples: int = 200,
               seed: int = 0) -> NullReport:
    """Sampled test of the null structure.

    A1 must vanish at the origin and scale at least linearly along rays;
    A2 must vanish on ``q = 0``, A3 on ``p = 0`` and F on both slices.
    """
    if not 0.0 < radius <= 0.5:
        raise ValueError(f"radius must lie in (0, 0.5], got {radius}")
    if n_samples < 100:
        raise ValueError("n_samples must be at least 100")
    n = system.n
    u, p, q = _sample_ball(n, radius, n_samples, seed)
    zero = np.zeros_like(u)

    # A1: zero at the origin and fitted order >= MIN_ORDER along rays.
    a1_origin = system.matrix("A1", zero, zero, zero)
    if not np.all(np.isfinite(a1_origin)):
        cond_a1 = CondResult(False, float("inf"), "non-finite evaluation")
    else:
        at_origin = float(np.max(_norms(a1_origin, 2)))
        scaled = np.stack([_norms(system.matrix("A1", s * u, s * p, s * q), 2) for s in SCALES])
        if not np.all(np.isfinite(scaled)):
            cond_a1 = CondResult(False, float("inf"), "non-finite evaluation")
        else:
            live = np.all(scaled > 1e-14, axis=0)
            if np.any(live):
                logs = np.log(np.asarray(SCALES))
                slopes = np.polyfit(logs, np.log(scaled[:, live]), 1)[0]
                order = float(np.min(slopes))
            else:
                order = float("inf")
            ok = at_origin <= SLICE_TOL and order >= MIN_ORDER
            reason = "" if ok else (f"A1(0)={at_origin:.3g}" if at_origin > SLICE_TOL
                                    else f"fitted order {order:.3g} < {MIN_ORDER}")
            cond_a1 = CondResult(ok, at_origin if at_origin > SLICE_TOL else max(0.0, 1.0 - order), reason)

    cond_a2 = _slice_test([system.matrix("A2", u, p, zero)], 2)
    cond_a3 = _slice_test([system.matrix("A3", u, zero, q)], 2)
    cond_f = _slice_test([system.source(u, p, zero), system.source(u, zero, q)], 1)
    return NullReport(system.name, cond_a1, cond_a2, cond_a3, cond_f, n_samples, radius, seed)


# --- derivative bounds for composite coefficients ----------------------------------

BOUND_NAMES = ("dxi_A1", "deta_A1", "dxi_A2", "deta_A2", "dxi_A3", "deta_A3", "dxi_F", "deta_F")


def sample_jets(n: int, nu0: float, n_samples: int, seed: int, second_scale: float = 1.0):
    """Random (u, p, q) with ``|u|+|p|+|q| <= nu0`` plus second derivatives."""
    rng = np.random.default_rng(seed)
    raw = rng.uniform(-1.0, 1.0, size=(3, n, n_samples))
    size = np.sum(np.abs(raw), axis=(0, 1))
    raw *= nu0 * rng.uniform(0.0, 1.0, n_samples) / size
    u, p, q = raw
    uxx, uxe, uee = rng.uniform(-second_scale, second_scale, size=(3, n, n_samples))
    return dict(u=u, p=p, q=q, uxx=uxx, uxe=uxe, uee=uee)


def check_derivative_bounds(system: NonlinearSystem, jets: dict | None = None, nu0: float = 0.5,
                            n_samples: int = 500, seed: int = 0, h: float = 1e-6) -> dict[str, float]:
    """Largest observed constant C in each first-order chain-rule bound.

    ``d_xi`` of a coefficient is its derivative along the jet direction
    ``(u, p, q) -> (p, u_xixi, u_xieta)`` and ``d_eta`` along
    ``(q, u_xieta, u_etaeta)``, both by centered differences.
    """
    if jets is None:
        jets = sample_jets(system.n, nu0, n_samples, seed)
    u, p, q = jets["u"], jets["p"], jets["q"]
    uxx, uxe, uee = jets["uxx"], jets["uxe"], jets["uee"]
    lead = float(np.max(np.sum(np.abs(u) + np.abs(p) + np.abs(q), axis=0)))
    if lead > nu0 * (1 + 1e-12):
        raise ValueError(f"samples exceed nu0: {lead} > {nu0}")

    dirs = {"xi": (p, uxx, uxe), "eta": (q, uxe, uee)}

    def deriv(which, direction):
        du, dp, dq = dirs[direction]
        if which == "F":
            plus = system.source(u + h * du, p + h * dp, q + h * dq)
            minus = system.source(u - h * du, p - h * dp, q - h * dq)
            n_lead = 1
        else:
            plus = system.matrix(which, u + h * du, p + h * dp, q + h * dq)
            minus = system.matrix(which, u - h * du, p - h * dp, q - h * dq)
            n_lead = 2
        d = (plus - minus) / (2 * h)
        if not np.all(np.isfinite(d)):
            raise FloatingPointError(f"non-finite derivative of {which}")
        return _norms(d, n_lead)

    a = {k: _norms(v, 1) for k, v in dict(p=p, q=q, uxx=uxx, uxe=uxe, uee=uee).items()}
    rhs = {
        "dxi_A1": a["p"] + a["uxx"] + a["uxe"],
        "deta_A1": a["q"] + a["uxe"] + a["uee"],
        "dxi_A2": a["uxe"] + a["q"] * (a["p"] + a["uxx"]),
        "deta_A2": a["q"] + a["uxe"] + a["uee"],
        "dxi_A3": a["p"] + a["uxx"] + a["uxe"],
        "deta_A3": a["uxe"] + a["p"] * (a["q"] + a["uee"]),
        "dxi_F": a["p"] * a["uxe"] + a["q"] * a["uxx"] + a["p"] * a["q"],
        "deta_F": a["q"] * a["uxe"] + a["p"] * a["uee"] + a["p"] * a["q"],
    }
    out = {}
    for name in BOUND_NAMES:
        direction, which = name.split("_")
        lhs = deriv(which, direction[1:])
        # Points where both sides vanish impose nothing; lhs > 0 with rhs == 0 is unbounded.
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(lhs <= 1e-9, 0.0, lhs / rhs[name])
        out[name] = float(np.max(ratio)) if ratio.size else 0.0
    return out


# --- semilinear reduction -------------------------------------------------------

def semilinear_reduce(system: NonlinearSystem, radius: float = 0.25, n_samples: int = 200,
                      seed: int = 0) -> NonlinearSystem:
    """Fold ``A1`` into the source when ``A2 = A3 = 0``: ``F~ = (I - A1)^-1 F``."""
    u, p, q = _sample_ball(system.n, radius, n_samples, seed)
    for which in ("A2", "A3"):
        if getattr(system, which) is not None:
            worst = float(np.max(np.abs(system.matrix(which, u, p, q))))
            if worst > SLICE_TOL:
                raise ValueError(f"{which} is not identically zero (|{which}| = {worst:.3g})")
    if system.A1 is None:
        return NonlinearSystem(system.name, system.n, F=system.F, claims_null=system.claims_null,
                               meta=dict(system.meta))
    lhs = _eye(system.n, u) - system.matrix("A1", u, p, q)
    cond = np.linalg.cond(np.moveaxis(lhs, (0, 1), (-2, -1)))
    if not np.all(np.isfinite(cond)) or np.max(cond) > COND_LIMIT:
        raise ValueError("I - A1 is (near-)singular on the sampled ball")
    a1, f = system.A1, system.F

    def reduced(u, p, q):
        m = _eye(system.n, u) - np.broadcast_to(a1(u, p, q), (system.n, system.n) + np.shape(u)[1:])
        rhs = np.zeros(np.shape(u)) if f is None else np.broadcast_to(f(u, p, q), np.shape(u))
        mm = np.moveaxis(m, (0, 1), (-2, -1))
        sol = np.linalg.solve(mm, np.moveaxis(rhs, 0, -1)[..., None])[..., 0]
        return np.moveaxis(sol, -1, 0)

    return NonlinearSystem(f"{system.name}_reduced", system.n, F=reduced,
                           claims_null=system.claims_null, meta=dict(system.meta))


def system_fingerprint(system: NonlinearSystem, seed: int = 0) -> int:
    """Checksum of sampled coefficient values; used to tag persisted runs."""
    u, p, q = _sample_ball(system.n, 0.2, 16, seed)
    parts = [system.matrix(w, u, p, q) for w in ("A1", "A2", "A3")] + [system.source(u, p, q)]
    return zlib.crc32(b"".join(np.ascontiguousarray(a).tobytes() for a in parts))
