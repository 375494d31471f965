import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from distdrift.coefficients import Analytic, CoefficientField, build_scale
from distdrift.errors import ContractionNotGuaranteed, IllConditioned
from distdrift.linear import GridFunction
from distdrift.semilinear import (Boundary, Hints, Initial, ManyRoots, NoRoot, SemilinearProblem,
                                  Solution, catalog_problem, check_uniqueness_conditions,
                                  shooting_solution, solve_bvp_picard, solve_bvp_shooting,
                                  solve_semilinear_ivp, strong_residual, to_first_order_system,
                                  transport_to_unit)

from conftest import sup

SIG = lambda x: 1 + 0.3 * np.cos(x)
PI2 = math.pi ** 2


@pytest.fixture(scope="module")
def smooth():
    return build_scale(CoefficientField(Analytic(SIG), Analytic(np.sin, np.cos)))


def _rhs(F):
    def rhs(x, y):
        return [y[1], 2 * (F(x, y[0], y[1]) - np.cos(x) * y[1]) / SIG(x) ** 2]
    return rhs


def test_ivp_against_scipy(smooth):
    F = lambda x, y, z: 0.5 * np.sin(y) + 0.3 * z + x
    prob = SemilinearProblem(F, (0.0, 1.0), Initial(0.5, 0.2, -0.7), Hints(0.5, 0.3))
    u = solve_semilinear_ivp(smooth, prob)
    for span in ((0.5, 1.0), (0.5, 0.0)):
        ref = solve_ivp(_rhs(F), span, [0.2, -0.7], rtol=1e-12, atol=1e-13, dense_output=True)
        xs = np.linspace(*span, 11)
        assert np.max(np.abs(u(xs) - ref.sol(xs)[0])) < 1e-9
        assert np.max(np.abs(u.derivative(xs) - ref.sol(xs)[1])) < 1e-8


def test_ivp_weighted_contraction(smooth):
    prob = catalog_problem("sin-y", {"c": 3.0}, data=Initial(0.0, 1.0, 1.0))
    u = solve_semilinear_ivp(smooth, prob)
    assert u.info["contraction_bound"] < 0.5
    assert all(r <= 0.5 + 1e-9 for r in u.info["weighted_ratios"][:-2])
    assert strong_residual(smooth, prob.F, u, anchor=0.0) < 1e-9


def test_ivp_ill_conditioned(brownian):
    prob = catalog_problem("linear-y", {"c": 1e4}, data=Initial(0.0, 0.0, 1.0))
    with pytest.raises(IllConditioned):
        solve_semilinear_ivp(brownian[1], prob)


def test_no_solution_detected(second_derivative):
    prob = catalog_problem("linear-y", {"c": -PI2}, data=Boundary(0.0, 1.0))
    res = solve_bvp_shooting(second_derivative[1], prob)
    assert isinstance(res, NoRoot)
    assert np.max(np.abs(res.phi_samples[:, 1])) < 1e-7
    assert np.max(np.abs(res.phi_samples[:, 0])) >= 1e6


def test_many_solutions_detected(second_derivative):
    scale = second_derivative[1]
    prob = catalog_problem("linear-y", {"c": -PI2}, data=Boundary(0.0, 0.0))
    res = solve_bvp_shooting(scale, prob)
    assert isinstance(res, ManyRoots) and len(res.x1) >= 2
    for x1 in (-2.0, 0.5, 3.0):
        u = shooting_solution(scale, prob, x1)
        assert sup(u.u - x1 / math.pi * np.sin(math.pi * u.grid)) < 1e-10


def test_shooting_and_picard_agree(brownian):
    scale = brownian[1]
    prob = catalog_problem("sin-y", {"c": 0.5, "d": 1.0}, data=Boundary(0.3, -0.2))
    s = solve_bvp_shooting(scale, prob)
    p = solve_bvp_picard(scale, prob)
    assert isinstance(s, Solution)
    assert sup(s.u.u - p.u) < 1e-7 and sup(s.u.u_prime - p.u_prime) < 1e-7
    assert sup(p.u) > 0.05


def test_picard_gate(brownian):
    prob = catalog_problem("linear-y", {"c": -PI2}, data=Boundary(0.0, 1.0))
    with pytest.raises(ContractionNotGuaranteed) as exc:
        solve_bvp_picard(brownian[1], prob)
    assert exc.value.k == pytest.approx(PI2)


def test_picard_forced_beyond_gate(brownian):
    # k = 1.5 fails the gate but the iteration still contracts in practice
    prob = catalog_problem("affine", {"c0": 1.0, "cy": -1.5}, data=Boundary(0.0, 0.0))
    u = solve_bvp_picard(brownian[1], prob, force=True)
    s = solve_bvp_shooting(brownian[1], prob)
    assert sup(u.u - s.u.u) < 1e-7


@settings(max_examples=15)
@given(st.floats(0.0, 5.0), st.floats(-3, 3), st.floats(-2, 2), st.floats(-2, 2))
def test_monotone_problems_have_one_solution(cy, c0, A, B):
    scale = build_scale(CoefficientField(Analytic(SIG), Analytic(np.sin, np.cos), grid_step=1 / 256))
    prob = catalog_problem("affine", {"c0": c0, "cy": cy}, data=Boundary(A, B))
    res = solve_bvp_shooting(scale, prob, min_points=1025)
    assert isinstance(res, Solution)
    assert res.u.u[0] == A and res.u.u[-1] == B


def test_transport_commutes(smooth):
    F = lambda x, y, z: 0.4 * np.sin(y) + 0.2 * z - x
    prob = SemilinearProblem(F, (-0.5, 1.5), Boundary(1.0, -1.0), Hints(0.4, 0.2))
    direct = solve_bvp_shooting(smooth, prob, normalize=False)
    mapped = solve_bvp_shooting(smooth, prob, normalize=True)
    assert isinstance(direct, Solution) and isinstance(mapped, Solution)
    assert mapped.u.grid[0] == -0.5 and mapped.u.grid[-1] == 1.5
    assert sup(direct.u.u - mapped.u.u) < 1e-8
    assert sup(direct.u.u_prime - mapped.u.u_prime) < 1e-7
    assert mapped.x1 == pytest.approx(direct.x1, abs=1e-7)


def test_transport_scales_coefficients(smooth):
    prob = SemilinearProblem(lambda x, y, z: z, (-0.5, 1.5), Boundary(0, 0), Hints(0.0, 1.0))
    unit, tprob = transport_to_unit(smooth, prob)
    assert tprob.hints.k_z == pytest.approx(0.5)
    s = np.array([0.0, 0.25, 1.0])
    assert np.allclose(unit.sigma_fn(s), SIG(-0.5 + 2 * s) / 2)
    j = unit.index_of(1.0)
    assert unit.Sigma[j] == pytest.approx(np.interp(1.5, smooth.grid, smooth.Sigma)
                                          - np.interp(-0.5, smooth.grid, smooth.Sigma), abs=1e-9)


def test_first_order_system(smooth):
    prob = catalog_problem("sin-y", {"c": 0.5, "d": 1.0}, data=Boundary(0.3, -0.2))
    u = solve_bvp_picard(smooth, prob)
    system = to_first_order_system(smooth, prob)
    assert system.residual(u) < 1e-9
    u.u_prime[len(u.grid) // 2:] += 1e-3
    assert system.residual(u) > 1e-5


def test_conditions_report():
    sin = check_uniqueness_conditions(catalog_problem("sin-y", {"c": 0.5}))
    assert sin.a_mono == pytest.approx(-0.5, abs=1e-6) and not sin.monotone
    assert sin.bounded and sin.route_b and "not a proof" in sin.label
    aff = check_uniqueness_conditions(catalog_problem("affine", {"cy": 2.0, "cz": 1.0}))
    assert aff.monotone and not aff.bounded and aff.linear_growth and aff.route_a
    assert aff.gamma == pytest.approx(1.0 - 4.0, abs=1e-6)
    assert aff.uniqueness_class_gamma_nonpositive
    tz = check_uniqueness_conditions(catalog_problem("tanh-z", {"c": 0.7}))
    assert tz.b_lipschitz_z == pytest.approx(0.7, rel=1e-3)
    bad = check_uniqueness_conditions(
        catalog_problem("affine", {"cy": 2.0}, hints=Hints(k_y=1.0)))
    assert bad.hints_consistent["k_y"] is False


def test_kernel_route(brownian):
    rep = check_uniqueness_conditions(catalog_problem("sin-y", {"c": 0.5}), brownian[1])
    assert rep.kernel_bound == pytest.approx(1.0) and rep.route_c


def test_rejects_non_vectorized_F():
    with pytest.raises(ValueError):
        SemilinearProblem(lambda x, y, z: 1.0)


def test_sine_family_system_residual(second_derivative):
    scale = second_derivative[1]
    prob = catalog_problem("linear-y", {"c": -PI2}, data=Boundary(0.0, 0.0))
    g = scale.grid[scale.restrict(0.0, 1.0)]
    for eta in (0.5, 2.0):
        u = GridFunction(g, eta * np.sin(math.pi * g), eta * math.pi * np.cos(math.pi * g))
        assert to_first_order_system(scale, prob).residual(u) < 1e-9
