"""Run configuration files and built-in initial conditions.

A configuration is a flat list of ``key = value`` lines; ``#`` starts a comment.
Initial conditions are either a built-in name or a list of Fourier terms
``kind:amplitude:mode[:phase]`` separated by commas, each contributing
``amplitude * kind(mode * pi * x + phase)`` with ``kind`` in {sin, cos}.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .grid import Grid
from .potential import DoubleWell
from .stepper import SCHEMES, SchemeParams


class ConfigError(ValueError):
    """Invalid configuration; the message names the key and, when known, the line."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class FourierTerm:
    kind: str
    amplitude: float
    mode: float
    phase: float = 0.0

    def __post_init__(self):
        if self.kind not in ("sin", "cos"):
            raise ValueError(f"term kind must be sin or cos, got {self.kind!r}")
        for name in ("amplitude", "mode", "phase"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"term {name} must be finite")


@dataclass(frozen=True)
class FourierIC:
    """Finite Fourier sum with closed-form derivatives of any order."""

    terms: tuple[FourierTerm, ...]
    name: str | None = None

    def __call__(self, x):
        return self.derivative(x, 0)

    def derivative(self, x, order: int = 0):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for t in self.terms:
            w = t.mode * math.pi
            # d^n/dx^n f(w x + phi) = w^n f(w x + phi + n pi / 2) for f = sin, cos
            f = np.sin if t.kind == "sin" else np.cos
            out = out + t.amplitude * w**order * f(w * x + t.phase + 0.5 * order * math.pi)
        return out

    def describe(self) -> str:
        if self.name:
            return self.name
        return ", ".join(f"{t.kind}:{t.amplitude!r}:{t.mode!r}:{t.phase!r}" for t in self.terms)


BUILTIN_ICS = {
    "example1": FourierIC((FourierTerm("cos", 0.01, 0.5),), "example1"),
    "example2": FourierIC(
        (
            FourierTerm("sin", 0.01, 2.0),
            FourierTerm("cos", 0.001, 4.0),
            FourierTerm("sin", 0.006, 4.0),
            FourierTerm("cos", 0.002, 10.0),
        ),
        "example2",
    ),
    "example3": FourierIC((FourierTerm("sin", 0.05, 2.0),), "example3"),
}


def builtin_ic(name: str, grid: Grid) -> np.ndarray:
    """Sample a named initial condition at the grid nodes."""
    try:
        ic = BUILTIN_ICS[name]
    except KeyError:
        raise KeyError(f"unknown initial condition {name!r}; known: {sorted(BUILTIN_ICS)}") from None
    return ic(grid.x)


def parse_ic(text: str) -> FourierIC:
    text = text.strip()
    if text in BUILTIN_ICS:
        return BUILTIN_ICS[text]
    terms = []
    for raw in re.split(r"\s*,\s*", text):
        parts = raw.split(":")
        if len(parts) not in (3, 4) or parts[0] not in ("sin", "cos"):
            raise ValueError(f"malformed ic term {raw!r}; expected kind:amplitude:mode[:phase]")
        try:
            nums = [float(p) for p in parts[1:]]
        except ValueError:
            raise ValueError(f"malformed ic term {raw!r}; amplitude, mode and phase must be numbers") from None
        terms.append(FourierTerm(parts[0], *nums))
    return FourierIC(tuple(terms))


@dataclass(frozen=True)
class RunConfig:
    L: float
    K: int
    dt: float
    steps: int
    gamma: float
    ic: FourierIC
    scheme: str = "dynamic-central"
    eps_ex: float = 1.0
    q: float = 1.0
    r: float = 1.0
    fp_tol: float = 1e-13
    fp_maxiter: int = 200
    snapshot_stride: int | None = None
    trace_path: str | None = None
    ledger_path: str | None = None
    snapshot_path: str | None = None
    name: str = field(default="run", compare=False)

    @property
    def stride(self) -> int:
        if self.snapshot_stride is not None:
            return self.snapshot_stride
        return max(1, math.ceil(self.steps / 100))

    def grid(self) -> Grid:
        return Grid(self.L, self.K)

    def params(self) -> SchemeParams:
        return SchemeParams(
            grid=self.grid(),
            dt=self.dt,
            gamma=self.gamma,
            eps_ex=self.eps_ex,
            pot=DoubleWell(self.q, self.r),
            scheme=self.scheme,
            fp_tol=self.fp_tol,
            fp_maxiter=self.fp_maxiter,
        )

    def initial_state(self) -> np.ndarray:
        return np.asarray(self.ic(self.grid().x), dtype=float)


_REQUIRED = ("L", "K", "dt", "steps", "gamma", "ic")
_POSITIVE_REAL = ("L", "dt", "gamma", "eps_ex", "q", "r", "fp_tol")
_PATHS = ("trace_path", "ledger_path", "snapshot_path")
_KEYS = set(_REQUIRED) | set(_POSITIVE_REAL) | set(_PATHS) | {
    "scheme",
    "fp_maxiter",
    "snapshot_stride",
}


def _int(value: str, key: str, line: int, minimum: int) -> int:
    try:
        v = float(value)
    except ValueError:
        raise ConfigError(f"{key} must be an integer, got {value!r}", line) from None
    if not v.is_integer():
        raise ConfigError(f"{key} must be an integer, got {value!r}", line)
    if v < minimum:
        raise ConfigError(f"{key} must be >= {minimum}, got {value}", line)
    return int(v)


def parse_config(text: str, name: str = "run") -> RunConfig:
    """Parse and validate configuration text."""
    raw: dict[str, tuple[str, int]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in raw:
            raise ConfigError(f"duplicate key {key!r} (first set on line {raw[key][1]})", lineno)
        if not value:
            raise ConfigError(f"empty value for {key!r}", lineno)
        raw[key] = (value, lineno)
    for key in _REQUIRED:
        if key not in raw:
            raise ConfigError(f"missing required key {key!r}")

    out: dict[str, object] = {"name": name}
    for key, (value, lineno) in raw.items():
        if key in _POSITIVE_REAL:
            try:
                v = float(value)
            except ValueError:
                raise ConfigError(f"{key} must be a number, got {value!r}", lineno) from None
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(f"{key} must be positive and finite, got {value}", lineno)
            out[key] = v
        elif key == "K":
            out[key] = _int(value, key, lineno, 4)
        elif key == "steps":
            out[key] = _int(value, key, lineno, 0)
        elif key in ("fp_maxiter", "snapshot_stride"):
            out[key] = _int(value, key, lineno, 1)
        elif key == "scheme":
            if value not in SCHEMES:
                raise ConfigError(f"scheme must be one of {SCHEMES}, got {value!r}", lineno)
            out[key] = value
        elif key == "ic":
            try:
                out[key] = parse_ic(value)
            except ValueError as exc:
                raise ConfigError(f"ic: {exc}", lineno) from None
        else:
            out[key] = value
    return RunConfig(**out)


def load_config(path) -> RunConfig:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), name=path.stem)
