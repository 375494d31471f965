import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from distdrift.coefficients import (Analytic, CoefficientField, Const, PiecewiseLinear,
                                    brownian_environment, build_scale, check_wellposedness,
                                    compute_sigma_fn, field_from_dict, invert_scale)
from distdrift.errors import (CoefficientError, OutOfRange, ScaleOverflow,
                              UnsupportedRepresentation)


def test_zero_drift_gives_zero_sigma_fn(brownian):
    _, scale = brownian
    assert np.all(scale.Sigma == 0)
    assert np.allclose(scale.h, scale.grid, atol=1e-15)


def test_linear_beta():
    scale = build_scale(CoefficientField(Const(1.0), Analytic(lambda x: x, lambda x: 1.0 + 0 * x)))
    assert np.allclose(scale.Sigma, 2 * scale.grid, atol=1e-12)
    # h = (1 - exp(-2x)) / 2
    assert np.allclose(scale.h, -np.expm1(-2 * scale.grid) / 2, atol=1e-10)


@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([1 / 64, 1 / 256, 1 / 1024]))
def test_environment_identity(seed, step):
    beta = brownian_environment(seed, step, 2.0)
    scale = compute_sigma_fn(CoefficientField(Const(1.0), beta, grid_step=step))
    assert np.max(np.abs(scale.Sigma - 2 * (beta(scale.grid) - beta(0.0)))) < 1e-12


def test_off_grid_knots_and_variable_sigma():
    knots = np.array([-2.0, -0.3, 0.05, 0.7, 2.0])
    beta = PiecewiseLinear(knots, np.array([0.4, -1.0, 0.2, 1.3, 0.0]))
    sigma = Analytic(lambda x: 1.2 + 0.5 * np.sin(2 * x))
    scale = build_scale(CoefficientField(sigma, beta, grid_step=1 / 128))
    slopes = np.diff(beta.values) / np.diff(knots)

    def ref(x):
        pts = np.concatenate([[0.0], knots[(knots > min(0, x)) & (knots < max(0, x))], [x]])
        pts = np.sort(pts)
        tot = 0.0
        for lo, hi in zip(pts[:-1], pts[1:]):
            s = slopes[np.searchsorted(knots, 0.5 * (lo + hi)) - 1]
            tot += 2 * s * quad(lambda t: 1 / sigma(t) ** 2, lo, hi, epsabs=1e-14)[0]
        return tot if x >= 0 else -tot

    for x in (-1.5, -0.3, 0.01, 0.05, 0.6, 1.9):
        assert scale.Sigma[scale.index_of(round(x * 128) / 128)] == pytest.approx(
            ref(round(x * 128) / 128), abs=1e-10)


def test_analytic_beta_with_variable_sigma():
    sigma = Analytic(lambda x: 1 + 0.3 * np.cos(x))
    beta = Analytic(np.sin, np.cos)
    scale = build_scale(CoefficientField(sigma, beta))
    for j in (100, 2000, 3500):
        x = scale.grid[j]
        ref = quad(lambda t: 2 * np.cos(t) / sigma(t) ** 2, 0, x, epsabs=1e-13)[0]
        assert scale.Sigma[j] == pytest.approx(ref, abs=1e-10)


def test_scale_invariants():
    scale = build_scale(CoefficientField(Analytic(lambda x: 1 + 0.4 * np.sin(3 * x)),
                                         brownian_environment(3, 1 / 1024, 2.0)))
    zero = scale.index_of(0.0)
    assert scale.Sigma[zero] == 0 and scale.h[zero] == 0 and scale.v[zero] == 0
    assert scale.v_prime[zero] == 0
    assert np.all(np.diff(scale.h) > 0)
    assert np.allclose(scale.h_prime, np.exp(-scale.Sigma))
    assert np.all(scale.v >= 0)
    assert np.all(np.diff(scale.v[zero:]) >= 0) and np.all(np.diff(scale.v[:zero + 1]) <= 0)


def test_speed_function_brownian(brownian):
    _, scale = brownian
    assert np.allclose(scale.v, scale.grid ** 2, atol=1e-12)
    assert check_wellposedness(scale, threshold=1.0).verdict == "consistent"


def test_wellposedness_inconclusive_with_strong_drift():
    scale = build_scale(CoefficientField(Const(1.0), Analytic(lambda x: -x * x, lambda x: -2 * x)))
    rep = check_wellposedness(scale, threshold=1e6)
    assert rep.verdict == "inconclusive"
    assert "cannot prove" in rep.caveat


@given(st.floats(0.0, 1.0))
def test_inverse_scale(frac):
    scale = build_scale(CoefficientField(Const(1.0), Analytic(np.sin, np.cos)))
    y = min(scale.h[0] + frac * (scale.h[-1] - scale.h[0]), scale.h[-1])
    x = invert_scale(scale, y)
    assert scale.h_at(x) == pytest.approx(y, abs=1e-11)


def test_inverse_out_of_range(brownian):
    with pytest.raises(OutOfRange):
        invert_scale(brownian[1], 5.0)


@pytest.mark.parametrize("bad", [
    lambda: PiecewiseLinear(np.array([0.0, 1.0]), np.array([1.0, -1.0])),
])
def test_nonpositive_sigma_samples(bad):
    with pytest.raises(CoefficientError):
        CoefficientField(bad(), Const(0.0))


def test_analytic_beta_without_derivative():
    with pytest.raises(UnsupportedRepresentation):
        CoefficientField(Const(1.0), Analytic(np.sin))


def test_raw_samples_need_knots():
    with pytest.raises(UnsupportedRepresentation):
        field_from_dict({"sigma": {"kind": "const", "value": 1.0},
                         "beta": {"kind": "samples", "values": [0, 1]}})


def test_overflow_reported():
    with pytest.raises(ScaleOverflow):
        build_scale(CoefficientField(Const(0.1), Analytic(lambda x: 10 * x, lambda x: 10 + 0 * x)))


def test_field_from_dict_environment_is_deterministic():
    d = {"sigma": {"kind": "const", "value": 1.0}, "beta": {"kind": "brownian-env", "seed": 7}}
    a, b = build_scale(field_from_dict(d)), build_scale(field_from_dict(d))
    assert np.array_equal(a.Sigma, b.Sigma) and np.array_equal(a.h, b.h)
