"""Nonlinear time step by fixed-point iteration, and full-run orchestration.

One step solves, for the new level ``W`` given the old level ``V``::

    (W_k - V_k) / dt = d2 P_k
    P_k = -gamma d2 ((W_k + V_k) / 2) + dF/d(W_k, V_k)

with one of three boundary closures.  Freezing the secant slope at the current
iterate makes the update linear in ``W``; after eliminating ghost values it
reads ``A W = B V + C g(U_m, V)`` with fixed pentadiagonal ``A``, ``B`` and a
tridiagonal ``C``, so each step factorizes nothing new and every iteration is
one banded solve.  The solve is carried out for the increment ``W - V``
(``A (W - V) = (B - A) V + C g``), whose right-hand side is free of the large
boundary entries that appear for big ``eps_ex``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import lapack

from .energy import (
    BoundPack,
    discrete_energy,
    discrete_mass,
    dissipation_rate,
    neumann_energy,
    symmetric_gradient_sum,
    timestep_condition,
)
from .grid import Grid, check_extended, extend, extend_reflect, interior
from .linear import (
    KL,
    KU,
    SingularSystemError,
    StepCoefficients,
    assemble,
    condition_estimate,
    assemble_increment,
    assemble_source,
    banded_matvec,
    factorize,
    solve,
)
from .potential import DoubleWell, difference_quotient

log = logging.getLogger(__name__)

SCHEMES = ("dynamic-central", "dynamic-onesided", "neumann")
_BC_KIND = {"dynamic-central": "dynamic", "dynamic-onesided": "onesided", "neumann": "neumann"}


class StepFailure(RuntimeError):
    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class SimulationError(RuntimeError):
    """A run stopped early; ``trace`` holds everything computed before the failure."""

    def __init__(self, message: str, trace: "SimulationTrace"):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class SchemeParams:
    grid: Grid
    dt: float
    gamma: float
    eps_ex: float = 1.0
    pot: DoubleWell = field(default_factory=DoubleWell)
    scheme: str = "dynamic-central"
    fp_tol: float = 1e-13
    fp_maxiter: int = 200

    def __post_init__(self):
        for name in ("dt", "gamma", "eps_ex", "fp_tol"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive, got {value!r}")
        if self.fp_maxiter < 1:
            raise ValueError(f"fp_maxiter must be >= 1, got {self.fp_maxiter}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.grid.K < 4:
            raise ValueError("the time step needs K >= 4")

    @property
    def coeffs(self) -> StepCoefficients:
        return StepCoefficients.from_params(self.grid.dx, self.dt, self.gamma, self.eps_ex)

    @property
    def bc_kind(self) -> str:
        return _BC_KIND[self.scheme]


@dataclass(frozen=True)
class StepOperators:
    lhs: object  # FactorizedSystem
    increment: np.ndarray
    source: np.ndarray  # tridiagonal, band storage with one sub/super diagonal
    source_dense: np.ndarray | None = None
    # roundoff amplification of one increment solve, relative to |W - V|
    roundoff_gain: float = 0.0

    def apply_source(self, g) -> np.ndarray:
        if self.source_dense is not None:
            return self.source_dense @ g
        return banded_matvec(self.source, g, 1, 1)


# below this size a dense product beats the sliced banded one in numpy
_DENSE_SOURCE_MAX_K = 160
_ROUNDOFF_FACTOR = 4.0


@lru_cache(maxsize=64)
def _operators(K, dx, dt, gamma, eps_ex, bc_kind) -> StepOperators:
    coeffs = StepCoefficients.from_params(dx, dt, gamma, eps_ex)
    source = assemble_source(K, dt / dx**2, bc_kind)
    lhs = factorize(assemble(K, coeffs, bc_kind))
    return StepOperators(
        lhs=lhs,
        increment=assemble_increment(K, coeffs, bc_kind).ab,
        source=source.ab[1:4].copy(),
        source_dense=source.to_dense() if K <= _DENSE_SOURCE_MAX_K else None,
        roundoff_gain=_ROUNDOFF_FACTOR * np.finfo(float).eps * condition_estimate(lhs),
    )


def step_operators(params: SchemeParams) -> StepOperators:
    g = params.grid
    return _operators(g.K, g.dx, params.dt, params.gamma, params.eps_ex, params.bc_kind)


@dataclass(frozen=True)
class StepResult:
    U_next: np.ndarray
    P: np.ndarray
    iterations: int
    residual: float
    contraction_ratio: float


@dataclass(frozen=True)
class StepRecord:
    """Diagnostics of time level ``step``.

    The dissipation fields belong to the step that produced this level and are
    zero for the initial record.
    """

    step: int
    time: float
    mass: float
    energy: float
    neumann_energy: float
    diss_bulk: float
    diss_bulk_sym: float
    diss_b0: float
    diss_bK: float
    U0: float
    UK: float
    min_U: float
    max_U: float
    fp_iters: int
    fp_residual: float = 0.0
    contraction_ratio: float = float("nan")


@dataclass
class SimulationTrace:
    params: SchemeParams
    records: list[StepRecord] = field(default_factory=list)
    snapshots: list[tuple[int, float, np.ndarray]] = field(default_factory=list)
    final_state: np.ndarray | None = None

    @property
    def steps_completed(self) -> int:
        return len(self.records) - 1 if self.records else 0


def _as_extended(U, params: SchemeParams) -> np.ndarray:
    grid = params.grid
    U = np.asarray(U, dtype=float)
    if U.shape == (grid.K + 1,):
        return extend_reflect(U)
    U = check_extended(U, grid)
    if params.scheme == "neumann":
        return extend_reflect(U[1:-1])
    return U


def psi_apply(U_iter, U_n, params: SchemeParams, ops: StepOperators | None = None) -> np.ndarray:
    """One application of the linearised update with the secant slope frozen at ``U_iter``.

    Returns the new node values ``k = 0..K``.  Ghost values of ``U_n`` do not
    enter: the boundary elimination cancels them.
    """
    ops = ops or step_operators(params)
    V = interior(U_n, params.grid)
    U_iter = interior(U_iter, params.grid)
    g = difference_quotient(params.pot, U_iter, V)
    rhs = banded_matvec(ops.increment, V) + ops.apply_source(g)
    return V + solve(ops.lhs, rhs)


def _recover(W, V_ext, g, params: SchemeParams):
    """Ghost values of the new level and the chemical potential on k = -1..K+1."""
    grid = params.grid
    dx, dt, gamma = grid.dx, params.dt, params.gamma
    V = V_ext[1:-1]
    if params.scheme == "dynamic-central":
        c = 4.0 * dx * params.eps_ex / dt
        left = -V_ext[0] + W[1] + V[1] - c * (W[0] - V[0])
        right = -V_ext[-1] + W[-2] + V[-2] - c * (W[-1] - V[-1])
        W_ext = extend(W, left, right)
        avg = 0.5 * (W_ext + V_ext)
        P = -gamma * (avg[2:] - 2.0 * avg[1:-1] + avg[:-2]) / dx**2 + g
        return W_ext, extend_reflect(P)
    if params.scheme == "neumann":
        W_ext = extend_reflect(W)
        avg = 0.5 * (W_ext + extend_reflect(V))
        P = -gamma * (avg[2:] - 2.0 * avg[1:-1] + avg[:-2]) / dx**2 + g
        return W_ext, extend_reflect(P)
    # one-sided closure: P_0 = P_1, P_K = P_{K-1}; ghosts are whatever makes the
    # bulk equations hold at the boundary nodes as well
    avg = 0.5 * (W + V)
    P = np.empty_like(W)
    P[1:-1] = -gamma * (avg[2:] - 2.0 * avg[1:-1] + avg[:-2]) / dx**2 + g[1:-1]
    P[0], P[-1] = P[1], P[-2]
    avg_l = 2.0 * avg[0] - avg[1] + (g[0] - P[0]) * dx**2 / gamma
    avg_r = 2.0 * avg[-1] - avg[-2] + (g[-1] - P[-1]) * dx**2 / gamma
    W_ext = extend(W, 2.0 * avg_l - V_ext[0], 2.0 * avg_r - V_ext[-1])
    P_l = (W[0] - V[0]) * dx**2 / dt - P[1] + 2.0 * P[0]
    P_r = (W[-1] - V[-1]) * dx**2 / dt - P[-2] + 2.0 * P[-1]
    return W_ext, extend(P, P_l, P_r)


def _secant(pot, V):
    """Secant slope ``g(U) = dF/d(U, V)`` for a fixed old level ``V``."""
    if isinstance(pot, DoubleWell):
        # (U + V) (q/4 (U^2 + V^2) - r/2), with the U-independent part hoisted
        c = 0.25 * pot.q
        h = c * V * V - 0.5 * pot.r
        return lambda U: (U + V) * (c * (U * U) + h)
    return lambda U: difference_quotient(pot, U, V)


def step(U_n, params: SchemeParams, ops: StepOperators | None = None) -> StepResult:
    """Advance one time level.

    Iterates the frozen-slope update from ``U_n`` until successive iterates
    differ in the max norm by at most ``fp_tol * max(1, |U_n|)``, or by at
    most the roundoff level ``4 eps cond_1(A) |W - V|`` of the linear solve when
    that is larger (stiff steps cannot resolve increments below it).  Raises
    :class:`StepFailure` after ``fp_maxiter`` iterations.
    """
    ops = ops or step_operators(params)
    V_ext = _as_extended(U_n, params)
    V = V_ext[1:-1]
    secant = _secant(params.pot, V)
    lu, piv = ops.lhs.lu, ops.lhs.piv
    base = banded_matvec(ops.increment, V)
    tol = params.fp_tol * max(1.0, float(np.abs(V).max()))
    U = V
    delta = np.zeros_like(V)
    prev_diff = None
    ratio = 0.0
    diff = float("inf")
    for m in range(1, params.fp_maxiter + 1):
        g = secant(U)
        new_delta, info = lapack.dgbtrs(lu, KL, KU, base + ops.apply_source(g), piv)
        if info != 0:
            raise SingularSystemError(f"banded solve failed (info={info})")
        W = V + new_delta
        diff = float(np.abs(new_delta - delta).max())
        if prev_diff is not None and prev_diff > 100.0 * tol:
            ratio = max(ratio, diff / prev_diff)
        if diff <= tol or (
            diff <= 1e3 * tol and diff <= ops.roundoff_gain * float(np.abs(new_delta).max())
        ):
            W_ext, P = _recover(W, V_ext, g, params)
            return StepResult(U_next=W_ext, P=P, iterations=m, residual=diff, contraction_ratio=ratio)
        if not math.isfinite(diff):
            break
        prev_diff = diff
        U, delta = W, new_delta
    raise StepFailure(
        f"fixed-point iteration did not converge in {m} iterations (last update {diff:.3e})",
        residual=diff,
        iterations=m,
    )


def _record(n, params, U_ext, report=None, P=None, result=None) -> StepRecord:
    grid = params.grid
    u = U_ext[1:-1]
    return StepRecord(
        step=n,
        time=n * params.dt,
        mass=discrete_mass(u, grid),
        energy=discrete_energy(u, grid, params.pot, params.gamma),
        neumann_energy=neumann_energy(U_ext, grid, params.pot, params.gamma),
        diss_bulk=0.0 if report is None else report.bulk_dissipation,
        diss_bulk_sym=0.0 if P is None else symmetric_gradient_sum(P, grid),
        diss_b0=0.0 if report is None else report.boundary_dissipation[0],
        diss_bK=0.0 if report is None else report.boundary_dissipation[1],
        U0=float(u[0]),
        UK=float(u[-1]),
        min_U=float(u.min()),
        max_U=float(u.max()),
        fp_iters=0 if result is None else result.iterations,
        fp_residual=0.0 if result is None else result.residual,
        contraction_ratio=float("nan") if result is None else result.contraction_ratio,
    )


Observer = Callable[[int, np.ndarray, "np.ndarray | None", StepRecord], None]


def run(
    U0,
    params: SchemeParams,
    n_steps: int,
    observers: Sequence[Observer] = (),
    snapshot_stride: int | None = None,
) -> SimulationTrace:
    """Take ``n_steps`` steps from ``U0`` and collect per-level diagnostics.

    ``U0`` may be a node field (ghosts are set by even reflection) or an
    extended field.  Observers are called as ``obs(n, U_ext, P_ext, record)``
    after every level, with ``P_ext = None`` for the initial one.  On a step
    failure a :class:`SimulationError` carrying the partial trace is raised.
    """
    if n_steps < 0:
        raise ValueError("n_steps must be >= 0")
    ops = step_operators(params)
    U = _as_extended(U0, params)
    trace = SimulationTrace(params=params)

    def emit(n, U_ext, P, rec):
        trace.records.append(rec)
        if snapshot_stride and (n % snapshot_stride == 0 or n == n_steps):
            trace.snapshots.append((n, rec.time, U_ext[1:-1].copy()))
        for obs in observers:
            obs(n, U_ext, P, rec)

    emit(0, U, None, _record(0, params, U))
    for n in range(1, n_steps + 1):
        try:
            res = step(U, params, ops)
        except StepFailure as exc:
            trace.final_state = U
            raise SimulationError(f"step {n} failed: {exc}", trace) from exc
        report = dissipation_rate(U, res.U_next, res.P, params)
        U = res.U_next
        emit(n, U, res.P, _record(n, params, U, report, res.P, res))
    trace.final_state = U
    return trace


@dataclass(frozen=True)
class ContractionReport:
    tcon_lhs: float
    observed_ratio: float
    iterations: int


def contraction_margin(U_n, params: SchemeParams, bounds: BoundPack) -> ContractionReport:
    """Left-hand side of the solvability condition next to the ratio seen in practice."""
    cond = timestep_condition(bounds, params.pot, params.gamma, params.dt, params.grid.L)
    res = step(U_n, params)
    return ContractionReport(
        tcon_lhs=cond.lhs, observed_ratio=res.contraction_ratio, iterations=res.iterations
    )


def with_scheme(params: SchemeParams, scheme: str) -> SchemeParams:
    return replace(params, scheme=scheme)
