"""Difference operators, trapezoidal summation and discrete norms on a uniform 1-D grid.

Node fields have ``K + 1`` entries (k = 0..K).  Extended fields carry one ghost
value on each side and have ``K + 3`` entries (k = -1..K+1); element ``k`` of an
extended field lives at array position ``k + 1``.  The pointwise operators
accept either kind and resolve the offset from the length, so ghost access on a
plain node field is an error rather than a silent clamp.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Grid:
    """Uniform grid on ``[0, L]`` with ``K`` cells."""

    L: float
    K: int

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 2:
            raise ValueError(f"K must be an integer >= 2, got {self.K!r}")
        if not (np.isfinite(self.L) and self.L > 0):
            raise ValueError(f"L must be positive and finite, got {self.L!r}")

    @property
    def dx(self) -> float:
        return self.L / self.K

    @property
    def x(self) -> np.ndarray:
        """Node coordinates ``k * dx`` for k = 0..K."""
        return np.arange(self.K + 1) * self.dx


def _offset(f, grid: Grid) -> int:
    n = len(f)
    if n == grid.K + 1:
        return 0
    if n == grid.K + 3:
        return 1
    raise ValueError(
        f"field of length {n} matches neither K+1={grid.K + 1} nor K+3={grid.K + 3}"
    )


def _at(f, grid: Grid, k: int) -> float:
    j = k + _offset(f, grid)
    if j < 0 or j >= len(f):
        raise IndexError(f"index k={k} outside the stored range of a length-{len(f)} field")
    return f[j]


def diff_forward(f, grid: Grid, k: int) -> float:
    """``(f[k+1] - f[k]) / dx``."""
    return (_at(f, grid, k + 1) - _at(f, grid, k)) / grid.dx


def diff_backward(f, grid: Grid, k: int) -> float:
    """``(f[k] - f[k-1]) / dx``."""
    return (_at(f, grid, k) - _at(f, grid, k - 1)) / grid.dx


def diff_central(f, grid: Grid, k: int) -> float:
    """``(f[k+1] - f[k-1]) / (2 dx)``."""
    return (_at(f, grid, k + 1) - _at(f, grid, k - 1)) / (2.0 * grid.dx)


def diff_second(f, grid: Grid, k: int) -> float:
    """``(f[k+1] - 2 f[k] + f[k-1]) / dx**2``."""
    return (_at(f, grid, k + 1) - 2.0 * _at(f, grid, k) + _at(f, grid, k - 1)) / grid.dx**2


def check_nodes(f, grid: Grid) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape != (grid.K + 1,):
        raise ValueError(f"expected a node field of length {grid.K + 1}, got shape {f.shape}")
    if not np.all(np.isfinite(f)):
        raise ValueError("node field has non-finite entries")
    return f


def check_extended(f, grid: Grid) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape != (grid.K + 3,):
        raise ValueError(f"expected an extended field of length {grid.K + 3}, got shape {f.shape}")
    if not np.all(np.isfinite(f)):
        raise ValueError("extended field has non-finite entries")
    return f


def extend(nodes, left: float, right: float) -> np.ndarray:
    """Attach ghost values at k = -1 and k = K+1."""
    nodes = np.asarray(nodes, dtype=float)
    return np.concatenate(([left], nodes, [right]))


def extend_reflect(nodes) -> np.ndarray:
    """Extended field with even ghosts ``f[-1] = f[1]``, ``f[K+1] = f[K-1]``."""
    nodes = np.asarray(nodes, dtype=float)
    return extend(nodes, nodes[1], nodes[-2])


def interior(f, grid: Grid) -> np.ndarray:
    """Node part (k = 0..K) of either field kind."""
    off = _offset(f, grid)
    return np.asarray(f, dtype=float)[off : off + grid.K + 1]


def trap_weights(grid: Grid) -> np.ndarray:
    w = np.full(grid.K + 1, grid.dx)
    w[0] = w[-1] = 0.5 * grid.dx
    return w


def trap_sum(f, grid: Grid) -> float:
    """Trapezoidal sum ``(f[0]/2 + f[1] + ... + f[K-1] + f[K]/2) * dx``.

    Extended fields are accepted; their ghosts do not contribute.
    """
    f = interior(f, grid)
    return float(grid.dx * (0.5 * f[0] + f[1:-1].sum() + 0.5 * f[-1]))


def forward_diffs(f, grid: Grid) -> np.ndarray:
    """All forward differences over k = 0..K-1 of the node part."""
    return np.diff(interior(f, grid)) / grid.dx


def second_diffs(f, grid: Grid) -> np.ndarray:
    """Second differences at k = 0..K of an extended field."""
    f = check_extended(f, grid)
    return (f[2:] - 2.0 * f[1:-1] + f[:-2]) / grid.dx**2


def central_diffs(f, grid: Grid) -> np.ndarray:
    """Central differences at k = 0..K of an extended field."""
    f = check_extended(f, grid)
    return (f[2:] - f[:-2]) / (2.0 * grid.dx)


def dirichlet_seminorm(f, grid: Grid) -> float:
    """``sqrt(sum_{k<K} (delta+ f_k)**2 dx)``."""
    d = forward_diffs(f, grid)
    return float(np.sqrt(np.dot(d, d) * grid.dx))


def linf_norm(f) -> float:
    return float(np.max(np.abs(np.asarray(f, dtype=float))))
