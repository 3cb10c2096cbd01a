import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats as sps

from bpre.errors import DegenerateSample, InvalidParameter
from bpre.rng import Sums, chunk_sizes, make_rng, map_chunks, merge_sums, tree_reduce
from bpre.stats import (Estimate, ks_two_sample, loglog_slope, ratio_estimate, weighted_ecdf,
                        wilson_interval)


def wilson_oracle(k, n, z):
    p = k / n
    centre = (p + z * z / (2 * n)) / (1 + z * z / n)
    half = z / (1 + z * z / n) * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
    return centre - half, centre + half


def test_wilson_examples():
    w = wilson_interval(0, 10, 0.95)
    assert w.value == 0 and w.ci_low == 0
    assert wilson_interval(10, 10, 0.95).ci_high == 1
    w = wilson_interval(5, 10, 0.95)
    lo, hi = wilson_oracle(5, 10, 1.959963984540054)
    assert w.ci_low == pytest.approx(lo, abs=1e-12) and w.ci_high == pytest.approx(hi, abs=1e-12)
    assert w.value - w.ci_low == pytest.approx(w.ci_high - w.value, abs=1e-12)
    with pytest.raises(InvalidParameter):
        wilson_interval(0, 0)
    with pytest.raises(InvalidParameter):
        wilson_interval(3, 2)


@pytest.mark.parametrize("p", [0.05, 0.5])
def test_wilson_coverage(p):
    rng = np.random.default_rng(11)
    n, reps = 200, 1000
    k = rng.binomial(n, p, reps)
    cover = np.mean([wilson_interval(int(x), n).contains(p) for x in k])
    assert cover >= 0.95 - 0.02


def test_estimate_invariants():
    with pytest.raises(InvalidParameter):
        Estimate(1.0, 2.0, 3.0, 10, "x")
    with pytest.raises(InvalidParameter):
        Estimate(1.0, 0.0, 3.0, 0, "x")


def test_ks_examples():
    assert ks_two_sample([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]).statistic == 0
    assert ks_two_sample([0.0], [1.0]).statistic == 1
    with pytest.raises(InvalidParameter):
        ks_two_sample([], [1.0])


def test_ks_matches_scipy_unweighted():
    rng = np.random.default_rng(3)
    a, b = rng.normal(size=500), rng.normal(0.1, size=700)
    assert ks_two_sample(a, b).statistic == pytest.approx(sps.ks_2samp(a, b).statistic, abs=1e-12)


def test_ks_null_calibration():
    rng = np.random.default_rng(5)
    passed = 0
    for _ in range(100):
        a = 2 * rng.binomial(10, 0.5, 10**4) - 10
        b = 2 * rng.binomial(10, 0.5, 10**4) - 10
        passed += ks_two_sample(a, b, alpha=0.01).passed
    assert passed >= 98


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=1, max_size=50), st.floats(0.1, 10))
def test_equal_weights_give_plain_ecdf(xs, w):
    u1, f1 = weighted_ecdf(xs)
    u2, f2 = weighted_ecdf(xs, np.full(len(xs), w))
    assert np.array_equal(u1, u2) and np.allclose(f1, f2)
    assert f1[-1] == pytest.approx(1.0)


def test_ks_zero_weight():
    with pytest.raises((InvalidParameter, DegenerateSample)):
        ks_two_sample([1.0, 2.0], [1.0], weights_a=[0.0, 0.0])


def test_loglog_examples():
    n = np.array([4.0, 16, 64, 256])
    s, se = loglog_slope(n, n**-0.5)
    assert s == pytest.approx(-0.5, abs=1e-12) and se == pytest.approx(0, abs=1e-12)
    assert loglog_slope(n, 3 * n)[0] == pytest.approx(1.0, abs=1e-12)
    y = n**-0.5 * (1 + 0.01 * (-1.0) ** np.arange(4))
    assert abs(loglog_slope(n, y)[0] + 0.5) < 0.02
    with pytest.raises(InvalidParameter):
        loglog_slope([1, 2], [1, 2])
    with pytest.raises(InvalidParameter):
        loglog_slope([1, 2, 3], [1, 0, 2])


def test_ratio_estimate_delta_and_bootstrap():
    rng = np.random.default_rng(2)
    den = rng.random(4000) < 0.3
    num = den * rng.random(4000)
    d = ratio_estimate(num, den)
    b = ratio_estimate(num, den, method="bootstrap", rng=make_rng(1))
    assert d.value == pytest.approx(b.value)
    assert d.contains(0.5) and b.contains(0.5)
    assert (b.ci_high - b.ci_low) == pytest.approx(d.ci_high - d.ci_low, rel=0.25)
    with pytest.raises(DegenerateSample):
        ratio_estimate([1.0, 2.0], [0.0, 0.0])


def test_chunks_are_thread_independent():
    f = lambda size, g: g.normal(size=size).sum()
    a = map_chunks(f, 100_000, make_rng(9), 8192, threads=1)
    b = map_chunks(f, 100_000, make_rng(9), 8192, threads=3)
    assert a == b
    assert chunk_sizes(10, 4) == [4, 4, 2]


def test_sums_merge_matches_direct():
    x = np.random.default_rng(4).normal(size=1001)
    parts = [Sums.of(x[i:i + 100]) for i in range(0, x.size, 100)]
    s = merge_sums(parts)
    assert s.mean == pytest.approx(x.mean(), rel=1e-12)
    assert s.variance == pytest.approx(x.var(ddof=1), rel=1e-10)
    assert tree_reduce([1, 2, 3, 4, 5], lambda a, b: a + b) == 15
