"""Scenario configuration: flat ``key = value`` text with ``#`` comments."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field as dc_field, fields, replace
from pathlib import Path

from .errors import ParseError, ValidationError
from .fields import PRESET_NAMES

EXPERIMENTS = ("trajectories", "line", "blowup_scan", "reconstruct", "weakcheck", "ensemble")
FIELD_NAMES = ("holder", "zero")


@dataclass(frozen=True)
class Scenario:
    experiment: str
    field: str = "holder"
    alpha: float = 1.0
    gamma: float = 4.0
    initial_field: str = "constant_ex"
    sigma: float = 0.0
    T: float = 1.0
    dt: float = 1e-4
    seed: int = 0
    r_min: float = 1e-3
    r_max: float = 1e-1
    n_r: int = 9
    n_theta: int = 16
    line_from: tuple = (-1.0, 0.0, 0.0)
    line_to: tuple = (1.0, 0.0, 0.0)
    refine_len: float = 0.02
    vertex_budget: int = 4000
    snapshots: tuple | None = None
    replicates: int = 16
    phi_center: tuple = (0.5, 0.0, 0.0)
    phi_width: float = 0.1
    name: str = dc_field(default="scenario", compare=False)

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def snapshot_times(self) -> tuple:
        if self.snapshots:
            return self.snapshots
        return tuple(self.T * k / 4.0 for k in (1, 2, 3, 4))

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("name")
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.items()}

    def with_overrides(self, **kw) -> "Scenario":
        kw = {k: v for k, v in kw.items() if v is not None}
        return validate(replace(self, **kw))


CONFIG_KEYS = tuple(f.name for f in fields(Scenario) if f.name != "name")
DEFAULTS = {f.name: f.default for f in fields(Scenario) if f.name not in ("name", "experiment")}

_VECTOR_KEYS = {"line_from", "line_to", "phi_center"}
_INT_KEYS = {"seed", "n_r", "n_theta", "vertex_budget", "replicates"}
_STR_KEYS = {"experiment", "field", "initial_field"}


def _convert(key, raw):
    if key in _STR_KEYS:
        return raw
    if key in _VECTOR_KEYS:
        parts = [float(p) for p in raw.split(",")]
        if len(parts) != 3:
            raise ValueError("expected three comma-separated numbers")
        return tuple(parts)
    if key == "snapshots":
        return tuple(float(p) for p in raw.split(","))
    if key in _INT_KEYS:
        x = float(raw)
        if not x.is_integer():
            raise ValueError("expected an integer")
        return int(x)
    return float(raw)


def parse_text(text, name="scenario") -> Scenario:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError("expected key = value", line=lineno)
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ParseError(f"unknown key; allowed keys are {', '.join(CONFIG_KEYS)}", line=lineno, key=key)
        if key in values:
            raise ParseError("duplicate key", line=lineno, key=key)
        if not raw:
            raise ParseError("missing value", line=lineno, key=key)
        try:
            values[key] = _convert(key, raw)
        except ValueError as exc:
            raise ParseError(f"bad value {raw!r}: {exc}", line=lineno, key=key) from None
    return from_dict(values, name)


def from_dict(values, name="scenario") -> Scenario:
    values = dict(values)
    unknown = set(values) - set(CONFIG_KEYS)
    if unknown:
        raise ParseError(f"unknown keys {sorted(unknown)}")
    if "experiment" not in values:
        raise ValidationError("experiment is required", key="experiment")
    for k in _VECTOR_KEYS | {"snapshots"}:
        if values.get(k) is not None:
            values[k] = tuple(float(x) for x in values[k])
    return validate(Scenario(name=name, **values))


def parse_scenario(path) -> Scenario:
    path = Path(path)
    return parse_text(path.read_text(), name=path.stem)


def _on_grid(t, dt):
    k = t / dt
    return abs(k - round(k)) <= 1e-9 * max(1.0, abs(k))


def validate(s: Scenario) -> Scenario:
    def need(cond, key, msg):
        if not cond:
            raise ValidationError(msg, key=key)

    need(s.experiment in EXPERIMENTS, "experiment", f"experiment must be one of {', '.join(EXPERIMENTS)}")
    need(s.field in FIELD_NAMES, "field", f"field must be one of {', '.join(FIELD_NAMES)}")
    need(0.0 < s.alpha <= 1.0, "alpha", f"alpha ∈ (0,1] required, got {s.alpha}")
    need(s.gamma > 0, "gamma", "gamma must be positive")
    need(s.initial_field in PRESET_NAMES, "initial_field", f"initial_field must be one of {', '.join(PRESET_NAMES)}")
    need(s.sigma >= 0 and math.isfinite(s.sigma), "sigma", "sigma must be >= 0")
    need(s.T > 0 and math.isfinite(s.T), "T", "T must be positive")
    need(s.dt > 0, "dt", "dt must be positive")
    need(_on_grid(s.T, s.dt), "T", f"T/dt must be an integer (T={s.T}, dt={s.dt})")
    need(s.seed >= 0, "seed", "seed must be non-negative")
    need(0 < s.r_min < s.r_max, "r_min", "need 0 < r_min < r_max")
    need(s.n_r >= 2 and s.n_theta >= 2, "n_r", "n_r and n_theta must be >= 2")
    need(any(a != b for a, b in zip(s.line_from, s.line_to)), "line_to", "line_from and line_to must differ")
    need(s.refine_len > 0, "refine_len", "refine_len must be positive")
    need(s.vertex_budget >= 2, "vertex_budget", "vertex_budget must be >= 2")
    need(s.replicates >= 1, "replicates", "replicates must be >= 1")
    need(s.phi_width > 0, "phi_width", "phi_width must be positive")
    if s.snapshots is not None:
        need(len(s.snapshots) > 0, "snapshots", "snapshots must be nonempty")
        for t in s.snapshots:
            need(0 < t <= s.T + 1e-12 and _on_grid(t, s.dt), "snapshots", f"snapshot {t} must lie on the time grid in (0, T]")
    return s


def help_text() -> str:
    lines = ["config keys (defaults):", "  experiment  (required) one of " + ", ".join(EXPERIMENTS)]
    for k, v in DEFAULTS.items():
        if isinstance(v, tuple):
            v = ",".join(f"{x:g}" for x in v)
        elif v is None:
            v = "T/4,T/2,3T/4,T"
        lines.append(f"  {k:<14}{v}")
    return "\n".join(lines)
