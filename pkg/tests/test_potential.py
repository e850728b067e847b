import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chdbc.potential import (
    DoubleWell,
    Potential,
    difference_quotient,
    eval_d2F,
    eval_d3F,
    eval_d4F,
    eval_dF,
    eval_F,
    fbar_second,
    inf_F,
    max_abs_deriv,
)

from .conftest import ShiftedWell

W = DoubleWell()
reals = st.floats(-3.0, 3.0, allow_nan=False)


def test_protocol():
    assert isinstance(W, Potential)
    assert isinstance(ShiftedWell(), Potential)


def test_values_unit_well():
    assert eval_F(W, 0.0) == 0.0
    assert eval_F(W, 1.0) == -0.25
    assert eval_dF(W, 1.0) == 0.0
    assert eval_d2F(W, 0.0) == -1.0
    assert eval_d3F(W, 2.0) == 12.0
    assert eval_d4F(W, -5.0) == 6.0


def test_derivatives_against_finite_differences():
    pot = DoubleWell(q=1.7, r=0.6)
    s, h = 0.83, 1e-5
    for lo, hi in [(pot.F, pot.dF), (pot.dF, pot.d2F), (pot.d2F, pot.d3F), (pot.d3F, pot.d4F)]:
        fd = (lo(s + h) - lo(s - h)) / (2 * h)
        assert fd == pytest.approx(hi(s), rel=1e-8, abs=1e-8)


@pytest.mark.parametrize("q,r,expected", [(1.0, 1.0, -0.25), (1.0, 2.0, -1.0), (4.0, 2.0, -0.25)])
def test_inf_F(q, r, expected):
    assert inf_F(DoubleWell(q, r)) == expected
    # the infimum is attained at s = sqrt(r/q)
    assert DoubleWell(q, r).F(np.sqrt(r / q)) == pytest.approx(expected, rel=1e-14)


def test_inf_F_unbounded_rejected():
    class Bad(ShiftedWell):
        def inf_F(self):
            return -np.inf

    with pytest.raises(ValueError):
        inf_F(Bad())


@pytest.mark.parametrize("q,r", [(0.0, 1.0), (1.0, 0.0), (-1.0, 1.0)])
def test_double_well_parameters_validated(q, r):
    with pytest.raises(ValueError):
        DoubleWell(q, r)


@pytest.mark.parametrize("pot", [W, ShiftedWell()])
def test_difference_quotient_examples(pot):
    assert difference_quotient(pot, 1.0, 1.0) == pytest.approx(0.0, abs=1e-15)
    assert difference_quotient(pot, 1.0, -1.0) == pytest.approx(0.0, abs=1e-15)
    assert difference_quotient(pot, 2.0, 0.0) == pytest.approx(1.0, rel=1e-14)


def test_difference_quotient_expanded_polynomial():
    q, r = 1.3, 0.7
    pot = DoubleWell(q, r)
    xi, eta = 0.4, -1.1
    expanded = q / 4 * (xi**3 + xi**2 * eta + xi * eta**2 + eta**3) - r / 2 * (xi + eta)
    assert difference_quotient(pot, xi, eta) == pytest.approx(expanded, rel=1e-14)


@pytest.mark.parametrize("pot", [W, ShiftedWell()])
@pytest.mark.parametrize("h", [1e-6, 1e-8])
def test_difference_quotient_continuity(pot, h):
    eta = 0.37
    err = abs(difference_quotient(pot, eta + h, eta) - pot.dF(eta))
    # the secant differs from F'(eta) by F''(eta) h / 2 + O(h^2)
    assert err <= 2.0 * h


@settings(max_examples=300, deadline=None, derandomize=True)
@given(reals, reals)
def test_closed_form_matches_secant(xi, eta):
    if abs(xi - eta) < 1e-3:
        return
    secant = (W.F(xi) - W.F(eta)) / (xi - eta)
    assert difference_quotient(W, xi, eta) == pytest.approx(secant, rel=1e-9, abs=1e-9)


@settings(max_examples=300, deadline=None, derandomize=True)
@given(reals, reals)
def test_generic_branch_matches_closed_form(xi, eta):
    got = difference_quotient(ShiftedWell(), xi, eta)
    assert got == pytest.approx(difference_quotient(W, xi, eta), rel=1e-7, abs=1e-7)


def test_fbar_coincident_is_second_derivative():
    for a in (0.0, 0.5, -1.3):
        assert fbar_second(W, a, a, a, a) == pytest.approx(W.d2F(a), rel=1e-14, abs=1e-14)
        assert fbar_second(ShiftedWell(), a, a, a, a) == pytest.approx(W.d2F(a), rel=1e-6, abs=1e-6)
    assert fbar_second(W, 0.0, 0.0, 0.0, 0.0) == -1.0


def test_fbar_finite_difference_limit():
    # Fbar''(a, a+h; a, a) -> F''(a) as h -> 0; the generic four-point quotient is the oracle
    a, h = 0.6, 1e-4
    slope = lambda x: difference_quotient(W, x, a) + difference_quotient(W, x, a)  # noqa: E731
    fd = (slope(a + h) - slope(a)) / h
    assert fbar_second(W, a + h, a, a, a) == pytest.approx(fd, rel=1e-8)
    assert fbar_second(W, a + h, a, a, a) == pytest.approx(W.d2F(a), abs=1e-3)


@settings(max_examples=300, deadline=None, derandomize=True)
@given(reals, reals, reals, reals)
def test_fbar_symmetric_in_last_pair(a, b, c, d):
    assert fbar_second(W, a, b, c, d) == pytest.approx(fbar_second(W, a, b, d, c), rel=1e-14, abs=1e-14)


@settings(max_examples=300, deadline=None, derandomize=True)
@given(reals, reals, reals, reals)
def test_fbar_generic_matches_closed_form(a, b, c, d):
    got = fbar_second(ShiftedWell(), a, b, c, d)
    assert got == pytest.approx(fbar_second(W, a, b, c, d), rel=1e-6, abs=1e-6)


def test_max_abs_deriv_examples():
    assert max_abs_deriv(W, 2, 0.0) == 1.0
    assert max_abs_deriv(W, 2, 1.0) == 2.0
    for M in (0.0, 0.3, 7.0):
        assert max_abs_deriv(W, 4, M) == 6.0
    assert max_abs_deriv(W, 3, 2.0) == 12.0


@pytest.mark.parametrize("order", [2, 3, 4])
@pytest.mark.parametrize("M", [0.2, 0.5, 1.0, 2.5])
def test_max_abs_deriv_matches_sampling(order, M):
    pot = DoubleWell(q=2.0, r=0.5)
    s = np.linspace(-M, M, 40001)
    f = {2: pot.d2F, 3: pot.d3F, 4: pot.d4F}[order]
    sampled = float(np.max(np.abs(f(s))))
    assert max_abs_deriv(pot, order, M) == pytest.approx(sampled, rel=1e-8)
    assert max_abs_deriv(ShiftedWell(2.0, 0.5), order, M) == pytest.approx(sampled, rel=1e-6)


def test_max_abs_deriv_rejects_order():
    with pytest.raises(ValueError):
        max_abs_deriv(W, 1, 1.0)
    with pytest.raises(ValueError):
        max_abs_deriv(ShiftedWell(), 5, 1.0)


def test_vectorised_evaluation():
    x = np.linspace(-1, 1, 7)
    y = x[::-1]
    assert np.allclose(difference_quotient(W, x, y), [difference_quotient(W, a, b) for a, b in zip(x, y)])
    assert np.allclose(
        difference_quotient(ShiftedWell(), x, y), [difference_quotient(W, a, b) for a, b in zip(x, y)]
    )
