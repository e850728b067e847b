"""Bulk potentials and their divided differences.

The scheme never evaluates ``F'`` directly; it uses the secant slope
``dF/d(xi, eta)`` and, in the contraction estimates, the four-point quantity
``Fbar''``.  Both are evaluated at nearly coincident states every step, so the
double well uses cancellation-free polynomial forms.  Other potentials fall back
on the two-branch definitions with a relative switch threshold.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np

#: relative gap below which two arguments are treated as coincident
COINCIDENCE_RTOL = 1e-8


@runtime_checkable
class Potential(Protocol):
    """What the solver needs from a potential ``F``.

    ``inf_F`` must be finite: the a priori bounds use ``min(inf F, 0)``.
    """

    def F(self, s): ...
    def dF(self, s): ...
    def d2F(self, s): ...
    def d3F(self, s): ...
    def d4F(self, s): ...
    def inf_F(self) -> float: ...


@dataclass(frozen=True)
class DoubleWell:
    """``F(s) = (q/4) s**4 - (r/2) s**2``."""

    q: float = 1.0
    r: float = 1.0

    def __post_init__(self):
        if not (self.q > 0 and self.r > 0):
            raise ValueError(f"double well needs q > 0 and r > 0, got q={self.q}, r={self.r}")

    def F(self, s):
        s2 = s * s
        return 0.25 * self.q * s2 * s2 - 0.5 * self.r * s2

    def dF(self, s):
        return self.q * s**3 - self.r * s

    def d2F(self, s):
        return 3.0 * self.q * s * s - self.r

    def d3F(self, s):
        return 6.0 * self.q * s

    def d4F(self, s):
        return 6.0 * self.q + 0.0 * s

    def inf_F(self) -> float:
        return -self.r**2 / (4.0 * self.q)

    def dquot(self, xi, eta):
        # (F(xi) - F(eta)) / (xi - eta) with the division carried out symbolically
        return (xi + eta) * (0.25 * self.q * (xi * xi + eta * eta) - 0.5 * self.r)

    def fbar(self, xi, xit, eta, etat):
        return 0.25 * self.q * (
            2.0 * (xi * xi + xi * xit + xit * xit)
            + (eta + etat) * (xi + xit)
            + eta * eta
            + etat * etat
        ) - self.r

    def max_abs_deriv(self, order: int, radius: float) -> float:
        M = abs(radius)
        if order == 2:
            return max(3.0 * self.q * M * M - self.r, self.r)
        if order == 3:
            return 6.0 * self.q * M
        if order == 4:
            return 6.0 * self.q
        raise ValueError(f"order must be 2, 3 or 4, got {order}")


def _coincident(a, b):
    return np.abs(a - b) <= COINCIDENCE_RTOL * (1.0 + np.abs(a) + np.abs(b))


def eval_F(pot, s):
    return pot.F(s)


def eval_dF(pot, s):
    return pot.dF(s)


def eval_d2F(pot, s):
    return pot.d2F(s)


def eval_d3F(pot, s):
    return pot.d3F(s)


def eval_d4F(pot, s):
    return pot.d4F(s)


def inf_F(pot) -> float:
    value = pot.inf_F()
    if not np.isfinite(value):
        raise ValueError("potential is not bounded below")
    return float(value)


def difference_quotient(pot, xi, eta):
    """Secant slope ``dF/d(xi, eta)``; equals ``F'(eta)`` when ``xi == eta``."""
    if hasattr(pot, "dquot"):
        return pot.dquot(xi, eta)
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    close = _coincident(xi, eta)
    gap = np.where(close, 1.0, xi - eta)
    secant = (pot.F(xi) - pot.F(eta)) / gap
    # second-order Taylor correction keeps the near-coincident branch O(gap**2)
    tangent = pot.dF(eta) + 0.5 * pot.d2F(eta) * (xi - eta)
    out = np.where(close, tangent, secant)
    return out[()] if out.ndim == 0 else out


def _dquot_dxi(pot, xi, eta):
    # partial derivative of dF/d(xi, eta) with respect to xi
    close = _coincident(xi, eta)
    gap = np.where(close, 1.0, xi - eta)
    exact = (pot.dF(xi) * gap - (pot.F(xi) - pot.F(eta))) / gap**2
    return np.where(close, 0.5 * pot.d2F(xi) + pot.d3F(xi) * (xi - eta) / 6.0, exact)


def fbar_second(pot, xi, xit, eta, etat):
    """Four-point quantity ``Fbar''(xi, xit; eta, etat)``.

    Divided difference in the first slot pair of
    ``dF/d(., eta) + dF/d(., etat)``; symmetric in ``eta <-> etat``.
    """
    if hasattr(pot, "fbar"):
        return pot.fbar(xi, xit, eta, etat)
    xi, xit, eta, etat = (np.asarray(a, dtype=float) for a in (xi, xit, eta, etat))
    close = _coincident(xi, xit)
    gap = np.where(close, 1.0, xi - xit)
    num = (difference_quotient(pot, xi, eta) + difference_quotient(pot, xi, etat)) - (
        difference_quotient(pot, xit, eta) + difference_quotient(pot, xit, etat)
    )
    mid = 0.5 * (xi + xit)
    limit = _dquot_dxi(pot, mid, eta) + _dquot_dxi(pot, mid, etat)
    out = np.where(close, limit, num / gap)
    return out[()] if out.ndim == 0 else out


def max_abs_deriv(pot, order: int, radius: float) -> float:
    """``max_{|s| <= radius} |F^(order)(s)|`` for order 2, 3 or 4."""
    if hasattr(pot, "max_abs_deriv"):
        return float(pot.max_abs_deriv(order, radius))
    deriv = {2: pot.d2F, 3: pot.d3F, 4: pot.d4F}.get(order)
    if deriv is None:
        raise ValueError(f"order must be 2, 3 or 4, got {order}")
    s = np.linspace(-abs(radius), abs(radius), 20001)
    return float(np.max(np.abs(deriv(s))))
