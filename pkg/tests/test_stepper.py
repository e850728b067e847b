import numpy as np
import pytest

from chdbc.config import builtin_ic
from chdbc.energy import discrete_mass, stability_bound
from chdbc.grid import Grid, extend_reflect
from chdbc.potential import DoubleWell
from chdbc.stepper import (
    SchemeParams,
    SimulationError,
    StepFailure,
    contraction_margin,
    psi_apply,
    run,
    step,
    step_operators,
    with_scheme,
)


def example1_params(K=40, **kw):
    return SchemeParams(grid=Grid(20.0, K), dt=0.02, gamma=2.0, **kw)


def scheme_residuals(V_ext, W_ext, P_ext, params):
    """Residuals of every equation of a step, in terms of ghosts and nodes (extended fields)."""
    dx, dt, gamma, eps = params.grid.dx, params.dt, params.gamma, params.eps_ex
    V, W = V_ext[1:-1], W_ext[1:-1]
    avg = 0.5 * (W_ext + V_ext)
    d2 = lambda f: (f[2:] - 2 * f[1:-1] + f[:-2]) / dx**2  # noqa: E731
    g = 0.25 * params.pot.q * (W + V) * (W * W + V * V) - 0.5 * params.pot.r * (W + V)
    res = []
    if params.scheme == "dynamic-onesided":
        P = P_ext[1:-1]
        res.append((W - V)[1:-1] / dt - d2(P_ext)[1:-1])
        res.append(P[1:-1] - (-gamma * d2(avg)[1:-1] + g[1:-1]))
        res.append([P[0] - P[1], P[-1] - P[-2]])
        res.append([eps * (W[0] - V[0]) / dt - (avg[2] - avg[1]) / dx])
        res.append([eps * (W[-1] - V[-1]) / dt + (avg[-2] - avg[-3]) / dx])
    else:
        res.append((W - V) / dt - d2(P_ext))
        res.append(P_ext[1:-1] - (-gamma * d2(avg) + g))
        res.append([P_ext[0] - P_ext[2], P_ext[-1] - P_ext[-3]])
        if params.scheme == "neumann":
            res.append([W_ext[0] - W_ext[2], W_ext[-1] - W_ext[-3]])
        else:
            res.append([eps * (W[0] - V[0]) / dt - (avg[2] - avg[0]) / (2 * dx)])
            res.append([eps * (W[-1] - V[-1]) / dt + (avg[-1] - avg[-3]) / (2 * dx)])
    return np.concatenate([np.ravel(r) for r in res])


def newton_oracle(V_ext, params, tol=1e-13, maxiter=60):
    """Damped Newton on all ghost and node unknowns of the dynamic or Neumann step.

    The Jacobian comes from complex-step differentiation of the residual.
    """
    n = params.grid.K + 3

    def F(z):
        W, P = z[:n], z[n:]
        dx, dt, gamma, eps = params.grid.dx, params.dt, params.gamma, params.eps_ex
        V = V_ext
        avg = 0.5 * (W + V)
        d2 = lambda f: (f[2:] - 2 * f[1:-1] + f[:-2]) / dx**2  # noqa: E731
        Wn, Vn = W[1:-1], V[1:-1]
        g = 0.25 * params.pot.q * (Wn + Vn) * (Wn * Wn + Vn * Vn) - 0.5 * params.pot.r * (Wn + Vn)
        parts = [(Wn - Vn) / dt - d2(P), P[1:-1] - (-gamma * d2(avg) + g), [P[0] - P[2], P[-1] - P[-3]]]
        if params.scheme == "neumann":
            parts.append([W[0] - W[2], W[-1] - W[-3]])
        else:
            parts.append(
                [
                    eps * (Wn[0] - Vn[0]) / dt - (avg[2] - avg[0]) / (2 * dx),
                    eps * (Wn[-1] - Vn[-1]) / dt + (avg[-1] - avg[-3]) / (2 * dx),
                ]
            )
        return np.concatenate([np.asarray(p, dtype=z.dtype) for p in parts])

    z = np.concatenate([V_ext, np.zeros(n)])
    for _ in range(maxiter):
        r = F(z)
        J = np.empty((2 * n, 2 * n))
        for j in range(2 * n):
            zc = z.astype(complex)
            zc[j] += 1e-30j
            J[:, j] = F(zc).imag / 1e-30
        dz = np.linalg.solve(J, -r)
        t = 1.0
        while np.linalg.norm(F(z + t * dz)) > (1 - 0.5 * t) * np.linalg.norm(r) and t > 1e-4:
            t *= 0.5
        z = z + t * dz
        if np.max(np.abs(dz)) <= tol * max(1.0, np.max(np.abs(z))):
            break
    return z[:n], z[n:]


def test_constant_state_is_fixed():
    params = example1_params(K=8)
    c = 0.3
    res = step(np.full(9, c), params)
    assert res.iterations == 1
    assert np.allclose(res.U_next, c, rtol=0, atol=1e-15)
    assert np.allclose(res.P, DoubleWell().dF(c), rtol=0, atol=1e-14)


def test_first_step_mass_example1():
    params = example1_params()
    U0 = builtin_ic("example1", params.grid)
    res = step(U0, params)
    assert abs(discrete_mass(res.U_next[1:-1], params.grid) - discrete_mass(U0, params.grid)) <= 1e-12


@pytest.mark.parametrize("scheme", ["dynamic-central", "neumann", "dynamic-onesided"])
@pytest.mark.parametrize("eps_ex", [1.0, 1000.0])
def test_scheme_equations_hold(scheme, eps_ex, rng):
    params = SchemeParams(grid=Grid(2.0, 16), dt=0.01, gamma=0.5, eps_ex=eps_ex, scheme=scheme)
    V = extend_reflect(0.4 * rng.normal(size=17))
    res = step(V, params)
    r = scheme_residuals(V if scheme != "neumann" else extend_reflect(V[1:-1]), res.U_next, res.P, params)
    scale = 1.0 + np.max(np.abs(res.P)) / params.grid.dx**2 + eps_ex / params.dt
    assert np.max(np.abs(r)) <= 1e-9 * scale


@pytest.mark.parametrize("K", [4, 6])
@pytest.mark.parametrize("scheme", ["dynamic-central", "neumann"])
def test_against_dense_newton(K, scheme, rng):
    worst_U = worst_P = 0.0
    for trial in range(25):
        dt = 10 ** rng.uniform(-3, -1)
        params = SchemeParams(
            grid=Grid(rng.uniform(0.5, 3.0), K),
            dt=dt,
            gamma=rng.uniform(0.2, 2.0),
            eps_ex=10 ** rng.uniform(-1, 2),
            scheme=scheme,
        )
        V = extend_reflect(0.5 * rng.normal(size=K + 1))
        if scheme == "dynamic-central":
            V[0] += 0.1 * rng.normal()
            V[-1] += 0.1 * rng.normal()
        res = step(V, params)
        W_ref, P_ref = newton_oracle(V if scheme != "neumann" else extend_reflect(V[1:-1]), params)
        worst_U = max(worst_U, np.max(np.abs(res.U_next - W_ref)))
        worst_P = max(worst_P, np.max(np.abs(res.P - P_ref)) / (1 + np.max(np.abs(P_ref))))
    assert worst_U <= 1e-9
    assert worst_P <= 1e-9


def test_psi_apply_fixed_point_contract(rng):
    params = example1_params(K=16)
    V = extend_reflect(0.2 * rng.normal(size=17))
    res = step(V, params)
    W = res.U_next[1:-1]
    again = psi_apply(W, V, params)
    assert np.max(np.abs(again - W)) <= 10 * params.fp_tol
    # from the old level one application is already a linear step, not a no-op
    assert np.max(np.abs(psi_apply(V, V, params) - V[1:-1])) > 0


def test_eps_ex_only_changes_alpha():
    p1 = example1_params(K=10)
    p2 = example1_params(K=10, eps_ex=7.0)
    assert p2.coeffs.alpha == pytest.approx(p1.coeffs.alpha / 7.0)
    assert p2.coeffs.beta == p1.coeffs.beta
    # the Neumann scheme ignores eps_ex altogether
    n1, n2 = with_scheme(p1, "neumann"), with_scheme(p2, "neumann")
    U = np.cos(np.linspace(0, np.pi, 11))
    assert np.array_equal(step(U, n1).U_next, step(U, n2).U_next)


def test_determinism():
    params = example1_params()
    U0 = builtin_ic("example1", params.grid)
    a = run(U0, params, 30).final_state
    b = run(U0, params, 30).final_state
    assert np.array_equal(a, b)


def test_zero_steps():
    params = example1_params()
    U0 = builtin_ic("example1", params.grid)
    trace = run(U0, params, 0, snapshot_stride=1)
    assert trace.steps_completed == 0 and len(trace.records) == 1
    assert np.array_equal(trace.final_state[1:-1], U0)
    assert len(trace.snapshots) == 1
    with pytest.raises(ValueError):
        run(U0, params, -1)


def test_observers_and_snapshots():
    params = example1_params(K=8)
    seen = []
    trace = run(np.cos(params.grid.x), params, 5, observers=[lambda n, U, P, rec: seen.append((n, P is None))],
                snapshot_stride=2)
    assert seen == [(0, True)] + [(n, False) for n in range(1, 6)]
    assert [s[0] for s in trace.snapshots] == [0, 2, 4, 5]


def test_failure_keeps_partial_trace():
    params = example1_params(K=8, fp_maxiter=1)
    with pytest.raises(StepFailure):
        step(np.cos(params.grid.x), params)
    with pytest.raises(SimulationError) as info:
        run(np.cos(params.grid.x), params, 10)
    assert info.value.trace.steps_completed == 0
    assert len(info.value.trace.records) == 1


@pytest.mark.parametrize(
    "kw",
    [dict(dt=0.0), dict(gamma=-1.0), dict(eps_ex=float("nan")), dict(fp_maxiter=0), dict(scheme="periodic")],
)
def test_params_validated(kw):
    base = dict(grid=Grid(1.0, 8), dt=0.01, gamma=1.0)
    base.update(kw)
    with pytest.raises(ValueError):
        SchemeParams(**base)


def test_small_grid_rejected():
    with pytest.raises(ValueError):
        SchemeParams(grid=Grid(1.0, 3), dt=0.01, gamma=1.0)


def test_operators_cached():
    params = example1_params(K=12)
    assert step_operators(params) is step_operators(example1_params(K=12))


def test_contraction_margin_reports_both_quantities():
    params = SchemeParams(grid=Grid(1.0, 32), dt=0.01, gamma=2.0)
    U0 = 0.1 * np.cos(np.pi * params.grid.x)
    rep = contraction_margin(U0, params, stability_bound(U0, params.grid, params.pot, params.gamma))
    assert rep.tcon_lhs < 1
    assert 0 <= rep.observed_ratio <= 1
    assert rep.iterations >= 1
