"""Per-step pentadiagonal system: assembly, banded LU and nonsingularity checks.

Matrices are held in LAPACK general-band storage with two sub- and two
super-diagonals: ``ab[2 + i - j, j] = A[i, j]``.  Factorization and solves go
through LAPACK ``dgbtrf``/``dgbtrs`` (LU with partial pivoting); pivoting widens
the upper band of the factor to four, which ``dgbtrf`` accounts for itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack
from scipy.sparse.linalg import LinearOperator, onenormest

KL = KU = 2
BC_KINDS = ("dynamic", "neumann", "onesided")


class SingularSystemError(RuntimeError):
    """A zero or non-finite pivot showed up during factorization."""


@dataclass(frozen=True)
class StepCoefficients:
    """``alpha = dt / (4 eps_ex dx)`` and ``beta = gamma dt / (2 dx**4)``."""

    alpha: float
    beta: float

    @classmethod
    def from_params(cls, dx: float, dt: float, gamma: float, eps_ex: float = 1.0):
        return cls(alpha=dt / (4.0 * eps_ex * dx), beta=gamma * dt / (2.0 * dx**4))


@dataclass(frozen=True)
class BandedSystem:
    K: int
    ab: np.ndarray
    bc_kind: str

    @property
    def n(self) -> int:
        return self.K + 1

    def to_dense(self) -> np.ndarray:
        return band_to_dense(self.ab)

    def matvec(self, x) -> np.ndarray:
        return banded_matvec(self.ab, x)


@dataclass(frozen=True)
class FactorizedSystem:
    system: BandedSystem
    lu: np.ndarray
    piv: np.ndarray

    @property
    def pivots(self) -> np.ndarray:
        return self.lu[KL + KU].copy()


def band_to_dense(ab: np.ndarray, kl: int = KL, ku: int = KU) -> np.ndarray:
    n = ab.shape[1]
    A = np.zeros((n, n))
    for d in range(-kl, ku + 1):
        row = ab[ku - d]
        if d >= 0:
            A[np.arange(n - d), np.arange(d, n)] = row[d:]
        else:
            A[np.arange(-d, n), np.arange(n + d)] = row[: n + d]
    return A


def dense_to_band(A: np.ndarray, kl: int = KL, ku: int = KU) -> np.ndarray:
    n = A.shape[0]
    ab = np.zeros((kl + ku + 1, n))
    for d in range(-kl, ku + 1):
        diag = np.diagonal(A, d)
        if d >= 0:
            ab[ku - d, d:] = diag
        else:
            ab[ku - d, : n + d] = diag
    return ab


def banded_matvec(ab: np.ndarray, x, kl: int = KL, ku: int = KU) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    y = ab[ku] * x
    for d in range(1, ku + 1):
        y[: n - d] += ab[ku - d, d:] * x[d:]
    for d in range(1, kl + 1):
        y[d:] += ab[ku + d, : n - d] * x[: n - d]
    return y


def _biharmonic_band(K: int, s: float) -> np.ndarray:
    """Band storage of the pentadiagonal matrix ``M(s)``.

    Interior stencil (1, -4, 6, -4, 1); first row (6 + 2s, -8, 2); second row
    (-4 - s, 7, -4, 1); the last two rows mirror the first two.
    """
    n = K + 1
    ab = np.zeros((KL + KU + 1, n))
    # columns of ab are matrix columns; ab[2 + i - j, j] = M[i, j]
    ab[0, 2:] = 1.0
    ab[1, 1:] = -4.0
    ab[2, :] = 6.0
    ab[3, :-1] = -4.0
    ab[4, :-2] = 1.0
    ab[2, 0] = ab[2, K] = 6.0 + 2.0 * s
    ab[1, 1] = ab[3, K - 1] = -8.0
    ab[0, 2] = ab[4, K - 2] = 2.0
    ab[3, 0] = ab[1, K] = -4.0 - s
    ab[2, 1] = ab[2, K - 1] = 7.0
    return ab


def _onesided_band(K: int, coeffs: StepCoefficients) -> np.ndarray:
    """Band storage of the one-sided operator part (the step matrix minus identity).

    Rows 0 and K discretise the dynamic condition with a one-sided difference;
    rows 1 and K-1 use the even-free closure ``P_0 = P_1``.
    """
    b = coeffs.beta
    a = 2.0 * coeffs.alpha  # dt / (2 eps_ex dx)
    N = np.zeros((K + 1, K + 1))
    N[0, 0:2] = [a, -a]
    N[K, K - 1 : K + 1] = [-a, a]
    N[1, 0:4] = [-b, 3.0 * b, -3.0 * b, b]
    N[K - 1, K - 3 : K + 1] = [b, -3.0 * b, 3.0 * b, -b]
    for k in range(2, K - 1):
        N[k, k - 2 : k + 3] = [b, -4.0 * b, 6.0 * b, -4.0 * b, b]
    return dense_to_band(N)


def assemble(K: int, coeffs: StepCoefficients, bc_kind: str = "dynamic") -> BandedSystem:
    """Matrix acting on the new time level inside one fixed-point update."""
    if K < 4:
        raise ValueError(f"K must be at least 4 so the boundary rows do not overlap, got {K}")
    if bc_kind == "dynamic":
        # beta = 0 (identity) is admitted for testing only
        s = 1.0 / coeffs.alpha if coeffs.beta != 0 else 0.0
        ab = coeffs.beta * _biharmonic_band(K, s)
    elif bc_kind == "neumann":
        ab = coeffs.beta * _biharmonic_band(K, 0.0)
    elif bc_kind == "onesided":
        ab = _onesided_band(K, coeffs)
    else:
        raise ValueError(f"unknown boundary kind {bc_kind!r}; expected one of {BC_KINDS}")
    ab[KU] += 1.0
    return BandedSystem(K=K, ab=ab, bc_kind=bc_kind)


def assemble_increment(K: int, coeffs: StepCoefficients, bc_kind: str = "dynamic") -> BandedSystem:
    """Operator mapping the old level to the right-hand side of the increment system.

    With ``W = V + delta`` the update reads ``A delta = R V + C g``.  For both
    reflected closures ``R = -2 beta M(0)``: the boundary terms in ``1/alpha``
    cancel exactly, which keeps large ``eps_ex`` from amplifying roundoff.
    """
    if bc_kind in ("dynamic", "neumann"):
        ab = -2.0 * coeffs.beta * _biharmonic_band(K, 0.0)
    elif bc_kind == "onesided":
        ab = -2.0 * _onesided_band(K, coeffs)
    else:
        raise ValueError(f"unknown boundary kind {bc_kind!r}")
    return BandedSystem(K=K, ab=ab, bc_kind=bc_kind)


def assemble_source(K: int, scale: float, bc_kind: str = "dynamic") -> BandedSystem:
    """``scale`` times the second-difference matrix that carries the nonlinear term.

    Central and Neumann variants use even reflection at both ends; the one-sided
    variant has no source on the boundary rows and a one-sided first row.
    """
    n = K + 1
    A = np.zeros((n, n))
    for k in range(1, K):
        A[k, k - 1 : k + 2] = [1.0, -2.0, 1.0]
    if bc_kind in ("dynamic", "neumann"):
        A[0, 0:2] = [-2.0, 2.0]
        A[K, K - 1 : K + 1] = [2.0, -2.0]
    elif bc_kind == "onesided":
        A[1, 0:3] = [0.0, -1.0, 1.0]
        A[K - 1, K - 2 : K + 1] = [1.0, -1.0, 0.0]
    else:
        raise ValueError(f"unknown boundary kind {bc_kind!r}")
    return BandedSystem(K=K, ab=dense_to_band(scale * A), bc_kind=bc_kind)


def factorize(system: BandedSystem) -> FactorizedSystem:
    n = system.n
    work = np.zeros((2 * KL + KU + 1, n))
    work[KL:] = system.ab
    lu, piv, info = lapack.dgbtrf(work, KL, KU)
    diag = lu[KL + KU]
    if info != 0 or not np.all(np.isfinite(lu)) or np.any(diag == 0.0):
        raise SingularSystemError(
            f"banded LU broke down (info={info}); the step matrix should be nonsingular"
        )
    return FactorizedSystem(system=system, lu=lu, piv=piv)


def solve(fact: FactorizedSystem, rhs) -> np.ndarray:
    rhs = np.asarray(rhs, dtype=float)
    x, info = lapack.dgbtrs(fact.lu, KL, KU, rhs, fact.piv)
    if info != 0:
        raise SingularSystemError(f"banded solve failed (info={info})")
    return x


def condition_estimate(fact: FactorizedSystem) -> float:
    """Estimate of the 1-norm condition number from the existing LU factors.

    Uses the Hager-Higham estimator with a single probe vector, which involves
    no random sampling, so repeated calls give identical results.
    """
    n = fact.system.n

    def inv(x, trans=0):
        y, info = lapack.dgbtrs(fact.lu, KL, KU, np.asarray(x, dtype=float).ravel(), fact.piv, trans=trans)
        if info != 0:
            raise SingularSystemError(f"banded solve failed (info={info})")
        return y

    op = LinearOperator((n, n), matvec=inv, rmatvec=lambda x: inv(x, 1), dtype=float)
    norm_A = float(np.abs(fact.system.ab).sum(axis=0).max())
    return norm_A * float(onenormest(op, t=1))


def quadratic_form_check(K: int, alpha: float, x) -> tuple[float, float]:
    """Evaluate ``x^T (-Y) x`` directly and through its completed-square expansion.

    ``Y`` is the symmetrised boundary-modified second-difference matrix; both
    values agree and are nonnegative, which is what makes the step matrix
    nonsingular.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (K + 1,):
        raise ValueError(f"expected a vector of length {K + 1}")
    r2 = math.sqrt(2.0)
    Y = np.diag(np.full(K + 1, -2.0)) + np.diag(np.ones(K), 1) + np.diag(np.ones(K), -1)
    Y[0, 0] = Y[K, K] = -2.0 - 1.0 / alpha
    Y[0, 1] = Y[1, 0] = Y[K, K - 1] = Y[K - 1, K] = r2
    direct = float(x @ (-Y) @ x)
    squares = (
        x[0] ** 2 / alpha
        + 2.0 * (x[0] - 0.5 * r2 * x[1]) ** 2
        + float(np.sum(np.diff(x[1:K]) ** 2))
        + 2.0 * (x[K] - 0.5 * r2 * x[K - 1]) ** 2
        + x[K] ** 2 / alpha
    )
    return direct, float(squares)
