"""Discrete energies, mass, dissipation ledgers and a priori bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson

from .grid import (
    Grid,
    check_extended,
    dirichlet_seminorm,
    forward_diffs,
    interior,
    trap_sum,
    trap_weights,
)
from .potential import inf_F, max_abs_deriv


@dataclass(frozen=True)
class EnergyReport:
    """Dissipation of one time step, split into its three nonnegative parts.

    ``Jd`` and ``Md`` refer to the state at the end of the step.
    """

    Jd: float
    Md: float
    boundary_dissipation: tuple[float, float]
    bulk_dissipation: float

    @property
    def total(self) -> float:
        """Right-hand side of the discrete dissipation identity (always <= 0)."""
        return -(self.boundary_dissipation[0] + self.boundary_dissipation[1] + self.bulk_dissipation)


@dataclass(frozen=True)
class BoundPack:
    B0: float
    B0_tilde: float
    refined_bound: float | None = None


@dataclass(frozen=True)
class ConditionReport:
    """Sufficient time-step condition for unique solvability.

    ``lhs`` is the left-hand side of the general condition (satisfied iff < 1),
    ``margin = 1 - lhs``.  The ``closed_form_*`` fields hold the double-well
    specialisation in terms of ``q``, ``r`` and ``B0_tilde`` alone.
    """

    lhs: float
    satisfied: bool
    closed_form_lhs: float | None
    closed_form_satisfied: bool | None

    @property
    def margin(self) -> float:
        return 1.0 - self.lhs


def discrete_energy(U, grid: Grid, pot, gamma: float) -> float:
    """``sum_{k<K} (gamma/2)(delta+ U_k)^2 dx + trap_sum(F(U))``; ghosts are ignored."""
    d = forward_diffs(U, grid)
    return float(0.5 * gamma * np.dot(d, d) * grid.dx + trap_sum(pot.F(interior(U, grid)), grid))


def energy_average_form(U, grid: Grid, pot, gamma: float) -> float:
    """Average of the forward- and backward-gradient energies over their natural ranges."""
    u = interior(U, grid)
    d = np.diff(u) / grid.dx
    Fu = pot.F(u)
    plus = np.sum(0.5 * gamma * d**2 + Fu[:-1]) * grid.dx
    minus = np.sum(0.5 * gamma * d**2 + Fu[1:]) * grid.dx
    return float(0.5 * (plus + minus))


def discrete_mass(U, grid: Grid) -> float:
    return trap_sum(U, grid)


def neumann_energy(U, grid: Grid, pot, gamma: float) -> float:
    """Trapezoidal energy with the gradient averaged over both one-sided differences.

    Needs ghost values, so ``U`` must be an extended field.
    """
    U = check_extended(U, grid)
    d = np.diff(U) / grid.dx  # d[j] = delta+ at k = j - 1
    dplus, dminus = d[1:], d[:-1]
    density = 0.5 * gamma * 0.5 * (dplus**2 + dminus**2) + pot.F(U[1:-1])
    return float(np.dot(trap_weights(grid), density))


def symmetric_gradient_sum(P, grid: Grid) -> float:
    """``trap_sum((|delta+ P|^2 + |delta- P|^2) / 2)`` for an extended field."""
    P = check_extended(P, grid)
    d = np.diff(P) / grid.dx
    return float(np.dot(trap_weights(grid), 0.5 * (d[1:] ** 2 + d[:-1] ** 2)))


def dissipation_rate(U_n, U_np1, P, params) -> EnergyReport:
    """Split the energy decay of one step into boundary and bulk parts.

    ``params`` needs ``grid``, ``dt``, ``gamma``, ``eps_ex`` and ``pot``.
    """
    grid = params.grid
    u0 = interior(U_n, grid)
    u1 = interior(U_np1, grid)
    w = params.gamma * params.eps_ex
    b0 = w * ((u1[0] - u0[0]) / params.dt) ** 2
    bK = w * ((u1[-1] - u0[-1]) / params.dt) ** 2
    bulk = dirichlet_seminorm(interior(P, grid), grid) ** 2
    return EnergyReport(
        Jd=discrete_energy(u1, grid, params.pot, params.gamma),
        Md=discrete_mass(u1, grid),
        boundary_dissipation=(float(b0), float(bK)),
        bulk_dissipation=float(bulk),
    )


def energy_ledger(trace) -> np.ndarray:
    """``E_d^(n) - Jd(U^0)`` for every record of a trace.

    Record ``n`` carries the dissipation of the step that produced ``U^(n)``,
    accumulated with the plain left Riemann sum in time.
    """
    dt = trace.params.dt
    recs = trace.records
    if not recs:
        return np.zeros(0)
    J = np.array([r.energy for r in recs])
    diss = np.array([r.diss_b0 + r.diss_bK + r.diss_bulk for r in recs])
    diss[0] = 0.0
    return J + np.cumsum(diss) * dt - J[0]


def neumann_ledger(trace) -> np.ndarray:
    """``A_d^(n) - Jbar_d(U^0)`` using the symmetric bulk term."""
    dt = trace.params.dt
    recs = trace.records
    if not recs:
        return np.zeros(0)
    J = np.array([r.neumann_energy for r in recs])
    diss = np.array([r.diss_bulk_sym for r in recs])
    diss[0] = 0.0
    return J + np.cumsum(diss) * dt - J[0]


def stability_bound(U0, grid: Grid, pot, gamma: float) -> BoundPack:
    """Seminorm bound ``B0`` and sup-norm bound ``B0_tilde`` valid for all time levels."""
    floor = abs(min(inf_F(pot), 0.0))
    J0 = discrete_energy(U0, grid, pot, gamma)
    B0 = math.sqrt(max(2.0 / gamma * (J0 + grid.L * floor), 0.0))
    B0_tilde = abs(discrete_mass(U0, grid)) / grid.L + math.sqrt(grid.L) * B0
    return BoundPack(B0=B0, B0_tilde=B0_tilde)


@dataclass(frozen=True)
class RefinedBound:
    value: float
    C_J: float
    C_M: float
    J_u0: float
    M_u0: float
    A1: float
    A2: float


def _simpson(f, L: float, n: int) -> float:
    x = np.linspace(0.0, L, n + 1)
    return float(simpson(f(x), x=x))


def _integrals(ic, L, pot, gamma, n):
    def G(x):
        u, du = ic.derivative(x, 0), ic.derivative(x, 1)
        return 0.5 * gamma * du**2 + pot.F(u)

    def G_xx(x):
        u, d1, d2, d3 = (ic.derivative(x, i) for i in range(4))
        return gamma * (d2**2 + d1 * d3) + pot.d2F(u) * d1**2 + pot.dF(u) * d2

    return np.array(
        [
            _simpson(G, L, n),
            _simpson(lambda x: ic.derivative(x, 0), L, n),
            _simpson(lambda x: np.abs(G_xx(x)), L, n),
            _simpson(lambda x: np.abs(ic.derivative(x, 2)), L, n),
        ]
    )


def refined_bound(ic, grid: Grid, pot, gamma: float, rtol: float = 1e-6) -> RefinedBound:
    """Sup-norm bound built from the continuous energy and mass of smooth initial data.

    ``ic`` must provide closed-form derivatives through ``ic.derivative(x, order)``
    for orders 0..3.  Integrals use composite Simpson on ``10 K`` panels and are
    doubled until two successive resolutions agree to ``rtol``.
    """
    if not hasattr(ic, "derivative"):
        raise TypeError("refined bound needs an analytic initial condition with derivatives")
    L = grid.L
    n = 10 * grid.K
    prev = _integrals(ic, L, pot, gamma, n)
    for _ in range(12):
        n *= 2
        cur = _integrals(ic, L, pot, gamma, n)
        if np.all(np.abs(cur - prev) <= rtol * (1.0 + np.abs(cur))):
            break
        prev = cur
    else:
        raise RuntimeError("quadrature for the refined bound did not settle")
    J_u0, M_u0, int_Gxx, int_uxx = cur

    xs = np.linspace(0.0, L, 200 * grid.K + 1)
    A1 = float(np.max(np.abs(ic.derivative(xs, 1))))
    A2 = float(np.max(np.abs(ic.derivative(xs, 2))))
    C_J = L**2 * (int_Gxx / 8.0 + 0.5 * gamma * (A1 * A2 + 0.25 * L * A2**2))
    C_M = L**2 / 8.0 * int_uxx
    floor = abs(min(inf_F(pot), 0.0))
    value = (abs(M_u0) + C_M) / L + math.sqrt(max(2.0 * L / gamma * (J_u0 + C_J + L * floor), 0.0))
    return RefinedBound(
        value=float(value),
        C_J=float(C_J),
        C_M=float(C_M),
        J_u0=float(J_u0),
        M_u0=float(M_u0),
        A1=A1,
        A2=A2,
    )


def timestep_condition(bounds: BoundPack, pot, gamma: float, dt: float, L: float) -> ConditionReport:
    radius = 2.0 * bounds.B0_tilde
    m2 = max_abs_deriv(pot, 2, radius)
    m3 = max_abs_deriv(pot, 3, radius)
    root = math.sqrt(dt / (2.0 * gamma))
    lhs = max(1.5 * m2, 0.5 * m2 + 5.0 * math.sqrt(L) * bounds.B0 / 6.0 * m3) * root
    closed = None
    if hasattr(pot, "q") and hasattr(pot, "r"):
        q, r, b2 = pot.q, pot.r, bounds.B0_tilde**2
        closed = max(1.5 * r, 8.5 * q * b2 + 0.5 * r, 12.75 * q * b2 - 0.5 * r) * root
    return ConditionReport(
        lhs=float(lhs),
        satisfied=bool(lhs < 1.0),
        closed_form_lhs=None if closed is None else float(closed),
        closed_form_satisfied=None if closed is None else bool(closed < 1.0),
    )
