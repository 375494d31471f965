import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from distdrift.quadrature import cell_integrals, cumulative, gauss_panels, integrate


@given(st.lists(st.floats(-5, 5), min_size=4, max_size=4), st.integers(4, 40))
def test_cell_rule_exact_for_cubics(coef, n):
    p = np.polynomial.Polynomial(coef)
    x = np.linspace(-1.0, 2.0, n)
    dx = x[1] - x[0]
    exact = p.integ()(x[1:]) - p.integ()(x[:-1])
    assert np.allclose(cell_integrals(p(x), dx), exact, atol=1e-11 * (1 + np.abs(coef).sum()))


def test_cumulative_is_fourth_order():
    errs = []
    for n in (65, 129, 257):
        x = np.linspace(0, 2, n)
        F = cumulative(np.exp(np.sin(3 * x)), x[1] - x[0])
        k = (n - 1) // 4
        ref = np.array([quad(lambda t: np.exp(np.sin(3 * t)), 0, xi, epsabs=1e-14)[0] for xi in x[::k]])
        errs.append(np.max(np.abs(F[::k] - ref)))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates > 3.7)


@pytest.mark.parametrize("anchor", [0, 7, 20])
def test_cumulative_anchor(anchor):
    x = np.linspace(-1, 1, 21)
    F = cumulative(np.cos(x), x[1] - x[0], anchor)
    assert F[anchor] == 0.0
    assert np.allclose(F, np.sin(x) - np.sin(x[anchor]), atol=1e-6)


@pytest.mark.parametrize("n", [2, 3])
def test_short_grids(n):
    x = np.linspace(0, 1, n)
    assert integrate(x ** 2 if n == 3 else x, x[1] - x[0]) == pytest.approx(1 / 3 if n == 3 else 0.5)


def test_gauss_panels_against_quad():
    a = np.array([0.0, 1.0, -2.0])
    b = np.array([1.0, 3.0, 0.5])
    got = gauss_panels(lambda t: 1.0 / (1.5 + np.sin(4 * t)) ** 2, a, b)
    ref = [quad(lambda t: 1.0 / (1.5 + np.sin(4 * t)) ** 2, lo, hi, epsabs=1e-13)[0] for lo, hi in zip(a, b)]
    assert np.allclose(got, ref, rtol=1e-11)
