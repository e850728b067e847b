"""Grid interpolants and self-convergence studies.

A refinement ladder halves ``dx`` and ``dt`` together.  Each level is run to the
final time ``T`` and compared with a reference solution by injection onto the
level's nodes (``K`` doubles, so the reference nodes contain the coarse ones).
The reference is either the finest level of the ladder or an extra run that is
``reference_factor`` times finer than the finest level.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .grid import Grid, check_nodes
from .stepper import SchemeParams, SimulationError, run


class ConvergenceError(RuntimeError):
    """A ladder level failed to reach the final time."""


def interp_space(f, grid: Grid, x):
    """Piecewise-linear interpolant of node values ``f`` evaluated at ``x``."""
    f = check_nodes(f, grid)
    x = np.asarray(x, dtype=float)
    tol = 1e-12 * grid.L
    if np.any(x < -tol) or np.any(x > grid.L + tol):
        raise ValueError(f"x must lie in [0, {grid.L}]")
    out = np.interp(x, grid.x, f)
    return float(out) if out.ndim == 0 else out


def interp_spacetime(U_n, U_np1, grid: Grid, t_n: float, dt: float, x, t):
    """Bilinear interpolant on the space-time cell between levels ``t_n`` and ``t_n + dt``."""
    t = np.asarray(t, dtype=float)
    theta = (t - t_n) / dt
    if np.any(theta < -1e-12) or np.any(theta > 1.0 + 1e-12):
        raise ValueError(f"t must lie in [{t_n}, {t_n + dt}]")
    a = interp_space(U_n, grid, x)
    b = interp_space(U_np1, grid, x)
    out = (1.0 - theta) * a + theta * b
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class RefinementLadder:
    """Levels ``m = 0..levels-1`` with ``K0 * 2**m`` cells and step ``dt0 / 2**m``.

    ``reference_factor = None`` uses the finest level as the reference;
    an integer power of two runs a separate reference that much finer again.
    """

    K0: int
    dt0: float
    levels: int
    T: float
    reference_factor: int | None = None

    def __post_init__(self):
        if self.levels < 2:
            raise ValueError("a ladder needs at least two levels")
        if self.reference_factor is not None:
            f = self.reference_factor
            if f < 2 or f & (f - 1):
                raise ValueError(f"reference_factor must be a power of two >= 2, got {f}")
        self.steps(self.levels - 1 if self.reference_factor is None else self.levels)

    def level(self, m: int) -> tuple[int, float]:
        return self.K0 * 2**m, self.dt0 / 2**m

    def steps(self, m: int) -> int:
        _, dt = self.level(m)
        n = self.T / dt
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise ValueError(f"T = {self.T} is not a whole number of steps of size {dt}")
        return int(round(n))

    def reference(self) -> tuple[int, float, int]:
        """``(K, dt, steps)`` of the reference run."""
        if self.reference_factor is None:
            m = self.levels - 1
            K, dt = self.level(m)
            return K, dt, self.steps(m)
        f = self.reference_factor
        K, dt = self.level(self.levels - 1)
        n = self.steps(self.levels - 1) * f
        return K * f, dt / f, n


@dataclass(frozen=True)
class OrderReport:
    """Errors at the final time and observed orders between neighbouring levels.

    ``orders[m]`` compares levels ``m`` and ``m + 1`` and is ``nan`` when either
    error is at or below ``floor`` (100 times the solver tolerance).
    """

    scheme: str
    K: tuple[int, ...]
    dt: tuple[float, ...]
    errors: tuple[float, ...]
    orders: tuple[float, ...]
    floor: float
    reference_K: int
    monotone: bool

    def finest_order(self) -> float:
        """Order between the two finest levels that both carry a defined error."""
        defined = [p for p in self.orders if math.isfinite(p)]
        return defined[-1] if defined else float("nan")


def _run_level(args):
    params, u0, n_steps = args
    try:
        trace = run(u0(params.grid.x), params, n_steps)
    except SimulationError as exc:
        return None, str(exc)
    return trace.final_state[1:-1], None


def _workers() -> int:
    raw = os.environ.get("CHDBC_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"CHDBC_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


def refine_and_measure(
    ladder: RefinementLadder,
    template: SchemeParams,
    u0,
    scheme: str | None = None,
    workers: int | None = None,
) -> OrderReport:
    """Run every level of ``ladder`` and measure self-convergence at ``T``.

    ``template`` supplies ``L``, ``gamma``, ``eps_ex``, the potential and the
    solver tolerances; ``K`` and ``dt`` come from the ladder.  ``u0`` maps node
    coordinates to initial values (it must be picklable when ``workers > 1``).
    Levels run in a process pool of size ``workers`` (default ``CHDBC_THREADS``
    or 1); results are gathered by level index.
    """
    scheme = scheme or template.scheme
    L = template.grid.L
    jobs = []
    for m in range(ladder.levels):
        K, dt = ladder.level(m)
        p = replace(template, grid=Grid(L, K), dt=dt, scheme=scheme)
        jobs.append((p, u0, ladder.steps(m)))
    if ladder.reference_factor is not None:
        K, dt, n = ladder.reference()
        jobs.append((replace(template, grid=Grid(L, K), dt=dt, scheme=scheme), u0, n))
    if ladder.K0 * 2 ** (ladder.levels - 1) < 8 * ladder.K0:
        raise ValueError("the finest level must be at least 8 times finer than the coarsest")

    workers = _workers() if workers is None else max(1, workers)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            results = list(pool.map(_run_level, jobs))
    else:
        results = [_run_level(job) for job in jobs]
    for (p, _, n), (_, err) in zip(jobs, results):
        if err is not None:
            raise ConvergenceError(f"level K={p.grid.K}, dt={p.dt:g} ({n} steps) failed: {err}")

    finals = [r[0] for r in results]
    ref = finals[-1]
    K_ref = jobs[-1][0].grid.K
    n_cmp = ladder.levels - 1 if ladder.reference_factor is None else ladder.levels
    errors = []
    for m in range(n_cmp):
        K = jobs[m][0].grid.K
        errors.append(float(np.max(np.abs(ref[:: K_ref // K] - finals[m]))))
    floor = 100.0 * template.fp_tol
    orders = []
    for a, b in zip(errors[:-1], errors[1:]):
        orders.append(math.log2(a / b) if a > floor and b > floor else float("nan"))
    monotone = all(b <= a for a, b in zip(errors[:-1], errors[1:]))
    return OrderReport(
        scheme=scheme,
        K=tuple(jobs[m][0].grid.K for m in range(n_cmp)),
        dt=tuple(jobs[m][0].dt for m in range(n_cmp)),
        errors=tuple(errors),
        orders=tuple(orders),
        floor=floor,
        reference_K=K_ref,
        monotone=monotone,
    )
