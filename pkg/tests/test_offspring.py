import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats as sps

from bpre.environment import EnvironmentModel, IncrementLaw, sample_environment
from bpre.errors import InvalidParameter, PopulationOverflow
from bpre.offspring import (OffspringLaw, eta, g_eval, mean, naive_total_offspring, pgf_eval,
                            prob_one, sample_total_offspring, survival_map, variance, zeta)


def laws():
    # means below ~1e-6 push g = 1/(1-f) - 1/(m(1-s)) past double range
    prob = st.lists(st.floats(0.0, 1.0), min_size=2, max_size=6).filter(lambda v: sum(v) > 0.1)
    return st.one_of(
        st.floats(0.05, 5.0).map(OffspringLaw.poisson),
        st.floats(0.05, 5.0).map(OffspringLaw.geometric),
        st.floats(0.05, 1.0).map(OffspringLaw.binary),
        prob.map(lambda v: OffspringLaw.bounded(np.array(v) / np.sum(v))).filter(
            lambda q: mean(q) > 1e-6),
    )


def brute_pmf(law, ymax=400):
    return np.array([law.pmf(y) for y in range(ymax)])


# ------------------------------------------------------------- examples

def test_mean_examples():
    assert mean(OffspringLaw.poisson(2.5)) == 2.5
    assert mean(OffspringLaw.binary(0.5)) == 1.0
    assert mean(OffspringLaw.bounded([0.25] * 4)) == pytest.approx(1.5, abs=1e-15)


def test_pgf_examples():
    assert pgf_eval(OffspringLaw.binary(0.3), 0.4) == pytest.approx(0.7 + 0.3 * 0.16, abs=1e-15)
    assert pgf_eval(OffspringLaw.poisson(1.0), 0.0) == pytest.approx(math.exp(-1), rel=1e-15)
    assert pgf_eval(OffspringLaw.geometric(1.0), 0.0) == pytest.approx(0.5, rel=1e-15)
    with pytest.raises(InvalidParameter):
        pgf_eval(OffspringLaw.poisson(1.0), 1.5)


def test_survival_map_examples():
    assert survival_map(OffspringLaw.poisson(1.7), 0.0) == 0.0
    assert survival_map(OffspringLaw.binary(0.5), 1.0) == 0.5
    r = 1e-12
    assert survival_map(OffspringLaw.poisson(1.0), r) == pytest.approx(-math.expm1(-r), rel=1e-15)
    # no cancellation far below double epsilon
    assert survival_map(OffspringLaw.geometric(1.3), 1e-300) == pytest.approx(1.3e-300, rel=1e-12)
    with pytest.raises(InvalidParameter):
        survival_map(OffspringLaw.poisson(1.0), -0.1)


def test_eta_examples():
    assert eta(OffspringLaw.poisson(0.3)) == pytest.approx(1.0)
    assert eta(OffspringLaw.geometric(4.0)) == pytest.approx(2.0)
    assert eta(OffspringLaw.bounded([0.0, 1.0])) == 0.0
    with pytest.raises(InvalidParameter):
        eta(OffspringLaw.bounded([1.0]))


def test_zeta_examples():
    q = OffspringLaw.bounded([0.1, 0.2, 0.3, 0.4])
    assert zeta(q, 4) == 0.0
    for law in (OffspringLaw.poisson(1.3), OffspringLaw.geometric(0.8), q):
        assert zeta(law, 0) == pytest.approx(eta(law) + 1 / mean(law), rel=1e-10)
    # sum_{y>=2} y^2 e^-1 / y! = E Y^2 - P{Y=1} = 2 - e^-1
    assert zeta(OffspringLaw.poisson(1.0), 2) == pytest.approx(2 - math.exp(-1), rel=1e-10)


def test_sample_total_examples(rng):
    assert sample_total_offspring(OffspringLaw.poisson(2.0), 0, rng) == 0
    assert sample_total_offspring(OffspringLaw.bounded([0.0, 1.0]), 7, rng) == 7
    assert sample_total_offspring(OffspringLaw.binary(1.0), 5, rng) == 10
    with pytest.raises(PopulationOverflow):
        sample_total_offspring(OffspringLaw.poisson(2.0), 10**18, rng)


def test_sample_environment_examples(rng):
    lat = EnvironmentModel("geometric", IncrementLaw.two_point(1.0))
    env = sample_environment(lat, 0, rng)
    assert env.n == 0 and list(env.partial_sums) == [0.0]
    env = sample_environment(lat, 10**6, rng)
    assert abs(env.increments.mean()) <= 4 / math.sqrt(10**6)
    env = sample_environment(EnvironmentModel("poisson", IncrementLaw.gaussian(0.5)), 10**4, rng)
    assert env.partial_sums[0] == 0 and np.all(np.isfinite(env.partial_sums))
    assert np.allclose(np.diff(env.partial_sums), np.log([mean(q) for q in env.laws]))


def test_binary_model_rejects_large_increments():
    with pytest.raises(InvalidParameter):
        EnvironmentModel("binary", IncrementLaw.two_point(1.0))
    EnvironmentModel("binary", IncrementLaw.two_point(math.log(2)))
    with pytest.raises(InvalidParameter):
        EnvironmentModel("binary", IncrementLaw.gaussian(0.1))


def test_model_json_roundtrip():
    m = EnvironmentModel("bounded", IncrementLaw.two_point(0.3), base=(0.2, 0.3, 0.5))
    back = EnvironmentModel.from_json(m.to_json())
    assert back == m
    assert set(m.to_json()) == {"family", "increment", "seed-policy", "base"}


# ----------------------------------------------------------- properties

@settings(max_examples=150, deadline=None)
@given(laws(), st.floats(1e-6, 1.0))
def test_pgf_and_survival_are_complementary(law, r):
    assert pgf_eval(law, 1.0) == 1.0
    assert survival_map(law, r) + pgf_eval(law, 1.0 - r) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=150, deadline=None)
@given(laws())
def test_zeta2_half_below_eta(law):
    assert zeta(law, 2) / 2 <= eta(law) + 1e-12


@settings(max_examples=100, deadline=None)
@given(laws(), st.floats(0.0, 1.0))
def test_g_between_zero_and_eta(law, s):
    g = g_eval(law, s)
    assert -1e-12 <= g <= eta(law) + 1e-12


@settings(max_examples=60, deadline=None)
@given(laws())
def test_closed_forms_match_pmf(law):
    p = brute_pmf(law)
    y = np.arange(p.size)
    m = float(np.dot(y, p))
    assert mean(law) == pytest.approx(m, rel=1e-9)
    assert eta(law) == pytest.approx(float(np.dot(y * (y - 1), p)) / m**2, rel=1e-8, abs=1e-12)
    assert variance(law) == pytest.approx(float(np.dot(y * y, p)) - m * m, rel=1e-8, abs=1e-12)
    assert prob_one(law) == pytest.approx(p[1], abs=1e-14)
    for s in (0.0, 0.3, 0.9):
        assert pgf_eval(law, s) == pytest.approx(float(np.dot(s ** y, p)), rel=1e-10)


def test_pgf_monotone_convex():
    s = np.linspace(0, 1, 101)
    for law in (OffspringLaw.poisson(1.4), OffspringLaw.geometric(0.6), OffspringLaw.binary(0.4),
                OffspringLaw.bounded([0.3, 0.1, 0.2, 0.4])):
        f = np.array([pgf_eval(law, v) for v in s])
        assert np.all(np.diff(f) >= -1e-15)
        assert np.all(np.diff(f, 2) >= -1e-12)


@pytest.mark.parametrize("law", [OffspringLaw.poisson(1.3), OffspringLaw.geometric(0.9),
                                 OffspringLaw.binary(0.45),
                                 OffspringLaw.bounded([0.3, 0.2, 0.1, 0.4])])
def test_aggregate_sampler(law):
    rng = np.random.default_rng(7)
    z = 50
    agg = np.array([sample_total_offspring(law, z, rng) for _ in range(10**4)])
    naive = np.array([naive_total_offspring(law, z, rng) for _ in range(10**4)])
    assert sps.ks_2samp(agg, naive).pvalue > 0.01
    big = np.array([sample_total_offspring(law, 1000, rng) / 1000 for _ in range(10**5)])
    se = big.std(ddof=1) / math.sqrt(big.size)
    assert abs(big.mean() - mean(law)) <= 4 * se
