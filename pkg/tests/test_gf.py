import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bpre.environment import (EnvironmentModel, EnvironmentPath, IncrementLaw,
                              sample_environment)
from bpre.errors import WrongFamily
from bpre.gf import (agresti_lower_bound, jirina_residual, jirina_sides, lf_survival_exact,
                     lf_ultimate_survival, quenched_bound, survival_given_env,
                     survival_profile)
from bpre.offspring import OffspringLaw, g_eval


# ------------------------------------------------ exact enumeration oracle

def _convolve(a, b):
    out = [Fraction(0)] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        if x:
            for j, y in enumerate(b):
                out[i + j] += x * y
    return out


def _power(q, z):
    out = [Fraction(1)]
    for _ in range(z):
        out = _convolve(out, q)
    return out


def exact_generation_law(laws, z0=1):
    """Exact law of Z_n given the environment, by enumerating every family tree."""
    dist = {z0: Fraction(1)}
    for q in laws:
        nxt = {}
        for z, pz in dist.items():
            for y, py in enumerate(_power(q, z)):
                if py:
                    nxt[y] = nxt.get(y, 0) + pz * py
        dist = nxt
    return dist


def exact_survival(laws, s=Fraction(0)):
    dist = exact_generation_law(laws)
    return 1 - sum(p * s**z for z, p in dist.items())


rational_law = st.lists(st.integers(0, 6), min_size=2, max_size=4).filter(
    lambda c: sum(c) > 0 and sum(i * v for i, v in enumerate(c)) > 0).map(
    lambda c: [Fraction(v, sum(c)) for v in c])


@settings(max_examples=60, deadline=None)
@given(st.lists(rational_law, min_size=1, max_size=3), st.sampled_from([0, 1, 2, 3]))
def test_recursion_matches_tree_enumeration(laws, s4):
    s = Fraction(s4, 4)
    env = EnvironmentPath.from_laws([OffspringLaw.bounded([float(p) for p in q]) for q in laws])
    want = float(exact_survival(laws, s))
    got = survival_given_env(env, 0, float(s))
    assert abs(got - want) <= 1e-12 * max(want, 1e-300) or abs(got - want) <= 1e-15
    # later starting points are the same computation on a shorter environment
    for k in range(1, len(laws) + 1):
        want_k = float(exact_survival(laws[k:], s))
        assert survival_given_env(env, k, float(s)) == pytest.approx(want_k, rel=1e-12, abs=1e-15)


# ------------------------------------------------------------- examples

def test_survival_examples():
    two = OffspringLaw.bounded([0.0, 0.0, 1.0])
    env = EnvironmentPath.from_laws([two] * 5)
    assert all(survival_given_env(env, k) == 1.0 for k in range(6))
    dead = EnvironmentPath.from_laws([OffspringLaw.bounded([1.0, 0.0])])
    assert survival_given_env(dead, 0) == 0.0
    half = EnvironmentPath.from_laws([OffspringLaw.binary(0.5)] * 2)
    assert survival_given_env(half, 0) == pytest.approx(3 / 8, abs=1e-15)


def test_profile_invariants(lf, rng):
    env = sample_environment(lf, 60, rng)
    prof = survival_profile(env)
    assert prof.r[-1] == 1.0 and np.all((prof.r >= 0) & (prof.r <= 1))
    # r_{0,n} is nonincreasing in n
    r0 = [survival_given_env(env.sub(0, n)) for n in range(1, 61)]
    assert np.all(np.diff(r0) <= 1e-15)


def test_g_examples():
    assert g_eval(OffspringLaw.poisson(1.7), 1.0) == pytest.approx(0.5)
    for s in (0.0, 0.3, 0.9, 1.0):
        assert g_eval(OffspringLaw.geometric(0.6), s) == pytest.approx(1.0, abs=1e-12)
    p = 0.35
    assert g_eval(OffspringLaw.binary(p), 0.0) == pytest.approx(1 / (2 * p), rel=1e-12)


def test_jirina_examples(rng):
    env = EnvironmentPath.from_laws([OffspringLaw.poisson(1.3)])
    assert jirina_residual(env, 0, 0.2) <= 4e-16
    pois = sample_environment(EnvironmentModel("poisson", IncrementLaw.two_point(0.4)), 20, rng)
    assert jirina_residual(pois, 0, 0.5) <= 1e-10
    lfenv = sample_environment(EnvironmentModel.default(), 30, rng)
    lhs, rhs = jirina_sides(lfenv, 0, 0.0)
    S = lfenv.partial_sums
    closed = math.exp(-S[-1]) + float(np.sum(np.exp(-S[:-1])))
    assert abs(lhs - rhs) / lhs <= 1e-10 and rhs == pytest.approx(closed, rel=1e-12)


def test_agresti_examples(rng):
    two = EnvironmentPath.from_laws([OffspringLaw.bounded([0.0, 0.0, 1.0])] * 4)
    assert agresti_lower_bound(two, 0, 0.0) <= 1.0
    lfenv = sample_environment(EnvironmentModel.default(), 40, rng)
    b = agresti_lower_bound(lfenv, 0, 0.0)
    assert 0 < b <= lf_survival_exact(lfenv)


@settings(max_examples=80, deadline=None)
@given(st.sampled_from(["poisson", "geometric", "binary", "bounded"]),
       st.integers(1, 60), st.floats(0.0, 0.999), st.integers(0, 10**6))
def test_identities_on_random_environments(fam, n, s, seed):
    c = math.log(2) if fam == "binary" else 0.5
    base = (0.3, 0.2, 0.2, 0.3) if fam == "bounded" else None
    model = EnvironmentModel(fam, IncrementLaw.two_point(c), base=base)
    g = np.random.default_rng(seed)
    env = sample_environment(model, n, g)
    k = int(g.integers(0, n))
    assert jirina_residual(env, k, s) <= 1e-9
    assert agresti_lower_bound(env, k, s) <= survival_given_env(env, k, s) * (1 + 1e-12)
    # quenched bound P{Z_n > 0 | env} <= exp(min S)
    assert survival_given_env(env) <= quenched_bound(env) * (1 + 1e-12)


def test_lf_examples():
    env = EnvironmentPath.from_laws([OffspringLaw.geometric(1.0)])
    assert lf_survival_exact(env) == pytest.approx(0.5, abs=1e-15)
    for n in (1, 5, 50):
        env = EnvironmentPath.from_laws([OffspringLaw.geometric(1.0)] * n)
        assert lf_survival_exact(env) == pytest.approx(1 / (1 + n), rel=1e-14)
    with pytest.raises(WrongFamily):
        lf_survival_exact(EnvironmentPath.from_laws([OffspringLaw.poisson(1.0)]))


def test_lf_matches_recursion(rng):
    worst = 0.0
    for _ in range(300):
        env = sample_environment(EnvironmentModel.default(), int(rng.integers(1, 501)), rng)
        for k in (0, env.n // 2):
            a, b = survival_given_env(env, k), lf_survival_exact(env, k)
            worst = max(worst, abs(a - b) / b)
    assert worst <= 1e-12


def test_lf_horizon_monotone_and_limit():
    # a path with positive drift so the infinite series converges quickly
    model = EnvironmentModel("geometric", IncrementLaw.two_point(1.0))
    x = np.where(np.arange(400) % 3 == 2, -1.0, 1.0)
    env = EnvironmentPath.from_increments(model, x)
    vals = [lf_survival_exact(env, 0, h) for h in range(1, 401)]
    assert np.all(np.diff(vals) <= 1e-15 * np.asarray(vals[1:]))
    ult = lf_ultimate_survival(env)
    assert ult.converged
    assert vals[-1] == pytest.approx(ult.value, rel=1e-12)
    assert lf_survival_exact(env, 0, math.inf) == ult.value
    assert ult.value <= vals[-1] * (1 + 1e-12)
