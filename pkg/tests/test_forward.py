import math

import numpy as np
import pytest

from distdrift.coefficients import (Analytic, CoefficientField, Const, brownian_environment,
                                    build_scale)
from distdrift.errors import OutOfRange, RangeExceeded, Unsupported
from distdrift.forward import (SimConfig, bracket_ratio, check_inside, compare_exit_to_gamma,
                               estimate_exp_moment, exit_stats, exp_moment_exit_closed_form,
                               martingale_sums, richardson, simulate_paths, write_summary_csv)
from distdrift.linear import gamma_function
from distdrift.rng import normals


@pytest.fixture(scope="module")
def environment():
    coeffs = CoefficientField(Const(1.0), brownian_environment(7, 1 / 1024, 2.0))
    return coeffs, build_scale(coeffs)


def test_brownian_increments_are_the_normals(brownian):
    cfg = SimConfig(1e-3, 50, seed=9)
    ens = simulate_paths(brownian[1], 0.4, cfg)
    ch = next(ens.iter_chunks())
    for q in range(ch.paths.size):
        X, dM, dQ = ch.path(q)
        n = dM.size
        z = normals(9, int(ch.paths[q]), 0, n)
        assert np.allclose(dM[:-1], math.sqrt(1e-3) * z[:-1], rtol=1e-13, atol=0)
        assert np.allclose(X[1:-1], 0.4 + np.cumsum(dM[:-1]), atol=1e-12)
        assert np.all(dQ[:-1] == 1e-3)
        assert X[-1] in (0.0, 1.0)
        assert ens.tau[q] == pytest.approx((n - 1 + ens.theta[q]) * 1e-3)


def test_variance_of_free_motion(brownian):
    ens = simulate_paths(brownian[1], 0.0, SimConfig(1e-3, 20000, seed=2, t_max=0.1,
                                                     interval=(-1.5, 1.5)))
    x = ens.states_at(0.1)
    se = 0.1 * math.sqrt(2 / x.size)
    assert abs(x.var() - 0.1) < 5 * se
    assert abs(x.mean()) < 5 * math.sqrt(0.1 / x.size)


def test_start_on_boundary(brownian):
    ens = simulate_paths(brownian[1], 0.0, SimConfig(1e-3, 10))
    assert np.all(ens.tau == 0) and np.all(ens.n_steps == 0) and np.all(ens.exit_side == -1)
    with pytest.raises(OutOfRange):
        simulate_paths(brownian[1], 1.5, SimConfig(1e-3, 10))


def test_exit_side_is_harmonic(environment):
    scale = environment[1]
    x0 = 0.3
    ens = simulate_paths(scale, x0, SimConfig(1e-4, 20000, seed=4))
    p_hi = (ens.exit_side == 1).mean()
    target = (scale.h_at(x0) - scale.h_at(0.0)) / (scale.h_at(1.0) - scale.h_at(0.0))
    assert abs(p_hi - target) < 4 * math.sqrt(target * (1 - target) / ens.n_paths) + 0.01
    check_inside(ens)
    m = martingale_sums(ens)
    assert abs(m.mean()) < 4 * m.std() / math.sqrt(m.size)


def test_environment_exit_time_matches_gamma(environment):
    scale = environment[1]
    cfg = SimConfig(1e-4, 20000, seed=5, t_max=5.0)
    fine = simulate_paths(scale, 0.5, cfg)
    coarse = simulate_paths(scale, 0.5, cfg.coarsened())
    rep = compare_exit_to_gamma(fine, gamma_function(scale), 0.5, coarse)
    assert rep.paired and rep.extrapolated
    assert abs(rep.z) < 4


def test_bracket_ratio_shrinks_with_dt():
    scale = build_scale(CoefficientField(Analytic(lambda x: 1 + 0.3 * np.cos(x)), Analytic(np.sin, np.cos)))
    r = [bracket_ratio(simulate_paths(scale, 0.5, SimConfig(dt, 2000, seed=1))).mean()
         for dt in (1e-3, 1e-4)]
    assert r[1] < r[0]


def test_censoring_decreases_with_horizon(brownian):
    fr = [exit_stats(simulate_paths(brownian[1], 0.5, SimConfig(1e-3, 4000, t_max=T))).censored_fraction
          for T in (0.1, 0.3, 1.0)]
    assert fr[0] > fr[1] > fr[2]
    short = exit_stats(simulate_paths(brownian[1], 0.5, SimConfig(1e-3, 100, t_max=0.01)))
    assert short.degenerate and math.isnan(short.mean)


def test_range_exceeded():
    scale = build_scale(CoefficientField(Const(1.0), Const(0.0), R=1.0))
    with pytest.raises(RangeExceeded):
        simulate_paths(scale, 0.0, SimConfig(1e-2, 200, interval=(-1.0, 1.0), t_max=20))


def test_determinism_and_coupling(brownian):
    cfg = SimConfig(1e-3, 300, seed=8)
    a, b = simulate_paths(brownian[1], 0.5, cfg), simulate_paths(brownian[1], 0.5, cfg)
    assert np.array_equal(a.tau, b.tau)
    c = simulate_paths(brownian[1], 0.5, cfg.coarsened(4))
    assert c.cfg.dt == pytest.approx(4e-3)
    assert np.corrcoef(a.tau, c.tau)[0, 1] > 0.9


def test_config_validation():
    for kw in ({"dt": 0.1, "n_paths": 1}, {"dt": 1e-3, "n_paths": 0},
               {"dt": 1e-3, "n_paths": 1, "seed": -1}, {"dt": 1e-3, "n_paths": 1, "interval": (1, 0)}):
        with pytest.raises(ValueError):
            SimConfig(**kw)


def test_richardson_removes_sqrt_bias():
    dt = 1e-3
    fine = np.full(10, 2.0 + 0.7 * math.sqrt(dt))
    coarse = np.full(10, 2.0 + 0.7 * math.sqrt(2 * dt))
    m, _ = richardson(fine, coarse, 2.0)
    assert m == pytest.approx(2.0, abs=1e-12)


def test_closed_form():
    assert exp_moment_exit_closed_form(0.0, 0, 1, 0.3) == 1.0
    assert exp_moment_exit_closed_form(math.pi ** 2 / 2, 0, 1, 0.5) == math.inf
    s = math.sqrt(0.5)
    assert exp_moment_exit_closed_form(1.0, 0, 1, 0.5) == pytest.approx(1 / math.cos(s))
    # symmetric about the midpoint; decreasing in gamma < 0
    assert exp_moment_exit_closed_form(2.0, 0, 1, 0.2) == pytest.approx(
        exp_moment_exit_closed_form(2.0, 0, 1, 0.8))
    assert exp_moment_exit_closed_form(-3.0, 0, 1, 0.5) < exp_moment_exit_closed_form(-1.0, 0, 1, 0.5) < 1
    with pytest.raises(Unsupported):
        exp_moment_exit_closed_form(1.0, 0, 1, 0.5, CoefficientField(Const(2.0), Const(0.0)))


def test_exp_moment_estimates(brownian):
    ens = simulate_paths(brownian[1], 0.5, SimConfig(1e-3, 2000, seed=3, t_max=2.0))
    one = estimate_exp_moment(ens, 0.0)
    assert one.mean == 1.0 and one.se == 0.0
    lo, hi = estimate_exp_moment(ens, 1.0, 0.05), estimate_exp_moment(ens, 1.0, 2.0)
    assert lo.mean < hi.mean and lo.censored_fraction > hi.censored_fraction
    with pytest.raises(OutOfRange):
        estimate_exp_moment(ens, 1.0, 3.0)


def test_summary_csv(tmp_path, brownian):
    ens = simulate_paths(brownian[1], 0.5, SimConfig(1e-3, 20, seed=1))
    write_summary_csv(ens, tmp_path / "s.csv", ["seed: 1"])
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "# seed: 1" and lines[1] == "path,tau,exit_side,censored,n_steps"
    data = np.loadtxt(tmp_path / "s.csv", delimiter=",", skiprows=2)
    assert np.array_equal(data[:, 1], ens.tau) and np.array_equal(data[:, 4], ens.n_steps)
