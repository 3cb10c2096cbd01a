import math

import numpy as np
import pytest

from bpre.environment import EnvironmentModel, IncrementLaw
from bpre.rng import make_rng

# filled by test_acceptance.py, printed once at the end of the run
ACCEPTANCE: dict = {}


@pytest.fixture
def rng():
    return make_rng(12345)


@pytest.fixture
def lf():
    return EnvironmentModel.default()


@pytest.fixture
def unit():
    """Geometric laws with X = +-1: v(x) = floor(x) + 1."""
    return EnvironmentModel("geometric", IncrementLaw.two_point(1.0))


@pytest.fixture
def gauss():
    return EnvironmentModel("geometric", IncrementLaw.gaussian(1.0))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k)):
        ok, line = ACCEPTANCE[key]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {key}: {line}")


def rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


def log2():
    return math.log(2.0)


def np_close(a, b, tol):
    return np.all(np.abs(np.asarray(a) - np.asarray(b)) <= tol)


# reduced sizes that exercise every code path of each experiment in seconds
SMALL = {
    "survival-asymptotics": {"n": [16, 32, 64], "N": 4000},
    "theta-consistency": {"n": [64], "N": 4000, "K": 12, "horizon": 100},
    "growth-law": {"n": [40, 80], "count": 60},
    "tau-min-limit": {"n": [32, 64], "count": 300},
    "walk-limit": {"n": [64], "count": 300},
    "renewal": {"N": 2000, "grid": [0.0, 0.5, 1.0, 2.0], "x": [0.0, 1.0]},
    "validate": {"N": 2000},
}
