import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from distdrift.coefficients import CoefficientField, Const, build_scale

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

CRITERIA = []


@pytest.fixture(scope="session")
def brownian():
    coeffs = CoefficientField(Const(1.0), Const(0.0))
    return coeffs, build_scale(coeffs)


@pytest.fixture(scope="session")
def second_derivative():
    """Scale data for ``L u = u''`` (sigma = sqrt 2, beta = 0)."""
    coeffs = CoefficientField(Const(math.sqrt(2.0)), Const(0.0))
    return coeffs, build_scale(coeffs)


@pytest.fixture
def criterion():
    def record(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        CRITERIA.append((number, line))
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(CRITERIA):
            terminalreporter.write_line(line)


def sup(a):
    return float(np.max(np.abs(a)))
