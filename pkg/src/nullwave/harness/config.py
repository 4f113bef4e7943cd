"""Run configuration: dataclasses with a strict TOML round trip."""
from __future__ import annotations

import copy
import math
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import tomli
import tomli_w

from ..diagnostics import DiagConfig
from ..grid import PROFILES, Grid, required_half_width
from ..solver import StepControl
from ..systems import NonlinearSystem, get_system, polynomial_system

OUTPUT_ENV = "NULLWAVE_OUTPUT_ROOT"


@dataclass
class SystemConfig:
    name: str = "semi_null"
    n: int = 1
    polynomial: dict | None = None  # inline monomial tables, see polynomial_system

    def build(self) -> NonlinearSystem:
        if self.polynomial is not None:
            data = dict(self.polynomial)
            data.setdefault("name", self.name)
            data.setdefault("n", self.n)
            return polynomial_system(data)
        return get_system(self.name, self.n)


@dataclass
class GridConfig:
    dx: float = 0.05
    stencil_order: int = 4
    half_width: float | None = None  # auto: data support + light cone + margin
    nx: int | None = None            # overrides dx when given


@dataclass
class DataConfig:
    profile: str = "algebraic"
    epsilon: float = 0.01
    delta: float = 0.5
    power: float = 4.0
    width: float = 2.0


@dataclass
class ControlConfig:
    cfl: float = 0.5
    t_max: float = 10.0
    dt_min: float = 1e-9
    blowup_threshold: float | None = None
    constraint_tol: float = 1e-4
    report_every: int = 10
    dissipation: float = 0.0
    growth_limit: float = 1.05
    resolve_gain: float = 50.0
    fit_gain: float = 5.0

    def step_control(self) -> StepControl:
        return StepControl(**asdict(self))


@dataclass
class OutputConfig:
    dir: str = ""
    snapshot_times: list = field(default_factory=list)
    snapshot_format: str = "npy"


@dataclass
class RunConfig:
    system: SystemConfig = field(default_factory=SystemConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    data: DataConfig = field(default_factory=DataConfig)
    control: ControlConfig = field(default_factory=ControlConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    seed: int = 0

    # -- validation ---------------------------------------------------------
    def validate(self) -> "RunConfig":
        """Check every field without allocating grid arrays; raises ``ValueError``."""
        d, gc, c = self.data, self.grid, self.control
        if d.profile not in PROFILES:
            raise ValueError(f"unknown profile {d.profile!r}; known: {', '.join(PROFILES)}")
        if not d.epsilon >= 0 or not math.isfinite(d.epsilon):
            raise ValueError("epsilon must be finite and nonnegative")
        if d.width <= 0:
            raise ValueError("data width must be positive")
        DiagConfig(d.delta)
        if gc.dx <= 0:
            raise ValueError("dx must be positive")
        if gc.half_width is not None and gc.half_width <= 0:
            raise ValueError("half_width must be positive")
        if self.system.n < 1:
            raise ValueError("system n must be >= 1")
        if self.output.snapshot_format not in ("npy", "csv"):
            raise ValueError("snapshot_format must be 'npy' or 'csv'")
        if any(not 0 <= t <= c.t_max for t in self.output.snapshot_times):
            raise ValueError("snapshot times must lie in [0, t_max]")
        c.step_control()
        if gc.nx is not None:
            Grid(-1.0, 1.0, int(gc.nx), gc.stencil_order)
        else:
            Grid(-1.0, 1.0, 9, gc.stencil_order)
        self.system.build()
        return self

    # -- derived objects ----------------------------------------------------
    def half_width(self) -> float:
        if self.grid.half_width is not None:
            return float(self.grid.half_width)
        d = self.data
        return required_half_width(d.profile, d.epsilon, d.delta, self.control.t_max,
                                   d.power, d.width)

    def build_grid(self) -> Grid:
        hw = self.half_width()
        if self.grid.nx is not None:
            return Grid(-hw, hw, int(self.grid.nx), self.grid.stencil_order)
        return Grid.symmetric(hw, self.grid.dx, self.grid.stencil_order)

    def output_dir(self, override: str | None = None) -> Path:
        raw = override or self.output.dir or f"runs/{self.system.name}"
        path = Path(raw)
        root = os.environ.get(OUTPUT_ENV)
        if root and not path.is_absolute():
            path = Path(root) / path
        return path

    def with_updates(self, **sections) -> "RunConfig":
        """Copy with per-section field updates, e.g. ``data={"epsilon": 0.05}``."""
        new = copy.deepcopy(self)
        for name, updates in sections.items():
            setattr(new, name, replace(getattr(new, name), **updates))
        return new

    # -- serialisation ------------------------------------------------------
    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            val = getattr(self, f.name)
            if hasattr(val, "__dataclass_fields__"):
                out[f.name] = {k: v for k, v in asdict(val).items() if v is not None}
            else:
                out[f.name] = val
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        sections = {"system": SystemConfig, "grid": GridConfig, "data": DataConfig,
                    "control": ControlConfig, "output": OutputConfig}
        unknown = set(raw) - set(sections) - {"seed"}
        if unknown:
            raise ValueError(f"unknown config sections: {sorted(unknown)}")
        kw = {}
        for name, klass in sections.items():
            body = raw.get(name, {})
            if not isinstance(body, dict):
                raise ValueError(f"section [{name}] must be a table")
            allowed = {f.name for f in fields(klass)}
            bad = set(body) - allowed
            if bad:
                raise ValueError(f"unknown keys in [{name}]: {sorted(bad)}")
            try:
                kw[name] = klass(**_coerce(klass, body))
            except (TypeError, ValueError) as exc:
                raise ValueError(f"bad value in [{name}]: {exc}") from exc
        seed = raw.get("seed", 0)
        if not isinstance(seed, int):
            raise ValueError("seed must be an integer")
        return cls(seed=seed, **kw)

    def dumps(self) -> str:
        return tomli_w.dumps(self.to_dict())

    @classmethod
    def loads(cls, text: str) -> "RunConfig":
        try:
            raw = tomli.loads(text)
        except tomli.TOMLDecodeError as exc:
            raise ValueError(f"malformed TOML: {exc}") from exc
        return cls.from_dict(raw)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ValueError(f"cannot read config {path}: {exc}") from exc
        return cls.loads(text)


_FLOATS = {"dx", "half_width", "epsilon", "delta", "power", "width", "cfl", "t_max", "dt_min",
           "blowup_threshold", "constraint_tol", "dissipation", "growth_limit", "resolve_gain",
           "fit_gain"}
_INTS = {"n", "stencil_order", "nx", "report_every"}


def _coerce(klass, body: dict) -> dict:
    out = {}
    for k, v in body.items():
        if k in _FLOATS and isinstance(v, (int, float)) and not isinstance(v, bool):
            v = float(v)
        elif k in _INTS:
            if isinstance(v, bool) or not isinstance(v, int):
                raise ValueError(f"{k} must be an integer")
        elif k == "snapshot_times":
            v = [float(t) for t in v]
        out[k] = v
    return out
