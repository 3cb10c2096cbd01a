import itertools
import math
from fractions import Fraction

import numpy as np
import pytest

from bpre import _ladder
from bpre.conditioned import (_chain_signs, _ultimate_per_env, _ultimate_pool,
                              eta_series_partial_sums, first_prospective_candidate,
                              jagers_partial_sums, plus_expectation, sample_plus,
                              sample_plus_chain, sample_walk_given_Ln, sample_walks_given_Ln,
                              tanaka_ladder_check, theta_ratio, theta_series,
                              wplus_and_ultimate_survival)
from bpre.environment import EnvironmentBatch, EnvironmentModel, EnvironmentPath, IncrementLaw
from bpre.errors import BudgetExceeded, ExcessCensoring, InsufficientK
from bpre.gf import survival_batch
from bpre.rng import integer_seed, make_rng
from bpre.stats import ks_two_sample, mean_estimate, wilson_interval

LOG2 = math.log(2.0)
DOUBLE = EnvironmentModel("binary", IncrementLaw.constant(LOG2))
Z4 = 0.99994  # two-sided level of a 4-sigma normal interval


def _acceptance(model, n, attempts, rng):
    """Exact accepted/attempted counts: ask for more than the budget allows."""
    with pytest.raises(BudgetExceeded) as info:
        sample_walks_given_Ln(model, n, 10**9, rng, budget=attempts, round_size=4096)
    part = info.value.partial
    return part["accepted"], part["attempts"]


@pytest.mark.parametrize("n", [1, 2])
def test_acceptance_rate_is_one_half(unit, rng, n):
    # +- walk: S_1 >= 0 forces a first up-step, and after it S_2 >= 0 either way
    acc, att = _acceptance(unit, n, 40_000, rng)
    assert att == 40_000
    assert wilson_interval(acc, att, Z4).contains(0.5)


def test_accepted_paths_stay_nonnegative(unit, gauss, rng):
    for model in (unit, gauss):
        batch, attempts = sample_walks_given_Ln(model, 50, 500, rng)
        assert batch.size == 500 and attempts >= 500
        assert batch.partial_sums[:, 1:].min() >= 0
    env, attempts = sample_walk_given_Ln(unit, 30, rng)
    assert env.n == 30 and attempts >= 1 and env.partial_sums.min() >= 0


def test_budget_exceeded_reports_counts(unit, rng):
    with pytest.raises(BudgetExceeded) as info:
        sample_walks_given_Ln(unit, 400, 10**6, rng, budget=1000, round_size=500)
    assert info.value.partial["attempts"] == 1000


@pytest.mark.parametrize("n", [1, 5, 40])
def test_weighted_total_mass_is_one(unit, rng, n):
    est = plus_expectation(unit, lambda S: np.ones(S.shape[0]), 0, n, 100_000, rng)
    assert est.within(1.0, 4.0)


def test_first_step_is_up_under_plus(unit, rng):
    # P+(0, {1}) = P{X = 1} v(1) / v(0) = 1
    up = plus_expectation(unit, lambda S: S[:, 1] == 1, 1, 1, 100_000, rng)
    total = plus_expectation(unit, lambda S: np.ones(S.shape[0]), 1, 1, 100_000, make_rng(7))
    assert up.within(1.0, 4.0) and total.within(1.0, 4.0)
    down = plus_expectation(unit, lambda S: S[:, 1] == -1, 1, 1, 10_000, rng)
    assert down.value == 0.0


def _exact_plus_s3():
    """E+ S_3 from the chain j -> j+1 w.p. (j+2)/(2(j+1))."""
    dist = {0: Fraction(1)}
    for _ in range(3):
        nxt = {}
        for j, p in dist.items():
            up = Fraction(j + 2, 2 * (j + 1))
            nxt[j + 1] = nxt.get(j + 1, 0) + p * up
            if j > 0:
                nxt[j - 1] = nxt.get(j - 1, 0) + p * (1 - up)
        dist = nxt
    return sum(j * p for j, p in dist.items())


@pytest.mark.parametrize("n", [64, 256])
def test_weighted_and_conditional_agree(unit, rng, n):
    target = float(_exact_plus_s3())
    assert target == 2.0
    Y = lambda S: S[:, 3]
    w = plus_expectation(unit, Y, 3, n, 100_000, rng, mode="weighted")
    c = plus_expectation(unit, Y, 3, n, 20_000, rng, mode="conditional")
    se = math.hypot(w.stderr, c.stderr)
    assert abs(w.value - c.value) <= 4 * se
    assert w.within(target, 4.0)


def test_h_transform_one_step_kernel(unit, rng):
    # from state 1: P+(1, {2}) = (1/2) v(2) / v(1) = 3/4, P+(1, {0}) = 1/4
    batch = sample_plus_chain(unit, 4, 40_000, rng)
    assert np.all(batch.partial_sums[:, 1] == 1)
    ups = int(np.sum(batch.partial_sums[:, 2] == 2))
    assert wilson_interval(ups, 40_000, Z4).contains(0.75)
    # conditioning on a long nonnegative stretch gives the same kernel in the limit
    cond = sample_plus(unit, 2, 20_000, rng, method="conditional", factor=200)
    ups = int(np.sum(cond.partial_sums[:, 2] == 2))
    assert wilson_interval(ups, 20_000, Z4).contains(0.75)


def test_chain_matches_conditional_law(unit, rng):
    chain = sample_plus_chain(unit, 10, 20_000, rng).partial_sums[:, -1]
    cond = sample_plus(unit, 10, 20_000, rng, method="conditional", factor=40).partial_sums[:, -1]
    assert ks_two_sample(chain, cond, alpha=0.001).passed


def test_first_prospective_candidate():
    S = np.array([[0, -1, 1, 0, 2, 3], [0, 1, 2, 3, 4, 5], [0, 2, 1, 3, 0, 4]], dtype=float)
    assert first_prospective_candidate(S).tolist() == [1, 1, 4]


def test_first_ascent_enumeration(unit, rng):
    res = tanaka_ladder_check(unit, 256, 64, 20_000, rng, max_censoring=0.05)
    assert np.all(res.nu >= 1)
    assert set(np.unique(res.s_iota)) <= {0.0, 1.0}
    assert np.all((res.s_iota == 1) == (res.iota == 1))
    ones = int(np.sum(res.iota == 1))
    assert wilson_interval(ones, 20_000, Z4).contains(0.5)
    assert 0 <= res.censoring < 0.05


def test_tanaka_laws_agree(unit, rng):
    res = tanaka_ladder_check(unit, 2048, 512, 20_000, rng)
    assert res.censoring < 0.01
    assert res.passed, (res.ks_time, res.ks_height)


def test_excess_censoring(unit, rng):
    with pytest.raises(ExcessCensoring):
        tanaka_ladder_check(unit, 16, 1, 2000, rng)


def test_post_nu_increments_restart(unit, rng):
    """After nu the path is again a P+ path and is independent of nu."""
    n, w = 512, 128
    S = sample_plus_chain(unit, n, 20_000, rng).partial_sums
    k = first_prospective_candidate(S)
    rows = np.arange(S.shape[0])
    v = lambda x: np.floor(x) + 1.0
    weight = v(S[:, -1] - S[rows, k]) / v(S[:, -1]) * (k + 2 <= n - w)
    keep = weight > 0
    k, weight = k[keep], weight[keep]
    step1 = S[keep][np.arange(k.size), k + 1] - S[keep][np.arange(k.size), k]
    step2 = S[keep][np.arange(k.size), k + 2] - S[keep][np.arange(k.size), k]
    assert np.all(step1 == 1)
    share = float(np.sum(weight * (step2 == 2)) / weight.sum())
    n_eff = weight.sum() ** 2 / np.sum(weight ** 2)
    assert abs(share - 0.75) <= 4 * math.sqrt(0.75 * 0.25 / n_eff)
    # independence: the law of the second step does not depend on nu
    early, late = k <= np.median(k), k > np.median(k)
    ks = ks_two_sample(step2[early], step2[late], weight[early], weight[late])
    assert ks.passed


def test_eta_series_lf(lf, rng):
    env, _ = sample_walk_given_Ln(lf, 200, rng)
    diag = eta_series_partial_sums(env, 100)
    assert np.allclose(diag.partial_sums, 2.0 * np.cumsum(np.exp(-env.partial_sums[:100])),
                       rtol=1e-13)


def test_eta_series_without_drift_grows_linearly():
    env = EnvironmentPath.from_increments(EnvironmentModel("geometric", IncrementLaw.constant(0.0)),
                                          np.zeros(500))
    p = eta_series_partial_sums(env, 500).partial_sums
    assert np.allclose(p, 2.0 * np.arange(1, 501))


def test_eta_series_converges_on_conditioned_paths(unit, rng):
    K, count = 1000, 200
    settled = 0
    for i in range(count):
        env, _ = sample_walk_given_Ln(unit, 4 * K, rng)
        settled += eta_series_partial_sums(env, K).last_decade_increment < 0.01
    assert settled >= 0.95 * count


def test_jagers_sums_diverge(lf, rng):
    batch = sample_plus(lf, 2000, 20, rng)
    for i in range(batch.size):
        p = jagers_partial_sums(batch.path(i))
        assert np.all(np.diff(p) > 0)
        # geometric laws with mean in [1/2, 2] have Q({1}) <= 1/4
        assert p[-1] >= 0.75 * 2000


def test_doubling_survives_forever(rng):
    res = wplus_and_ultimate_survival(DOUBLE, 10, 50, rng)
    assert np.allclose(res.w, 1.0, rtol=1e-12)
    assert res.ultimate.value == 1.0
    assert abs(res.ultimate_lower.value - 1.0) < 1e-12
    assert res.alive.value == 1.0


def test_lf_horizon_values_close_in_on_ultimate(lf, rng):
    batch = sample_plus(lf, 800, 2000, rng)
    exact, _, is_exact, _ = _ultimate_per_env(batch, lf, make_rng(3))
    assert is_exact
    gaps = []
    for m in (25, 100, 800):
        sub = EnvironmentBatch(
            batch.family, batch.params[:, :m], batch.increments[:, :m],
            batch.partial_sums[:, :m + 1])
        upper = survival_batch(sub)
        assert np.all(upper >= exact * (1 - 1e-12))
        gaps.append(float(np.mean(upper - exact)))
    # the gap is the chance of dying after m, which shrinks like m^{-1/2}
    assert gaps[0] > gaps[1] > gaps[2] >= 0
    assert gaps[2] < gaps[0] / 3


def test_non_lf_bracket_is_ordered(rng):
    model = EnvironmentModel("poisson", IncrementLaw.two_point(LOG2))
    res = wplus_and_ultimate_survival(model, 100, 500, rng)
    assert not res.exact
    assert np.all(res.per_env_lower <= res.per_env)
    assert res.ultimate_lower.value <= res.ultimate.value


def test_positive_limit_matches_ultimate_survival(lf, rng):
    res = wplus_and_ultimate_survival(lf, 400, 20_000, rng)
    assert res.exact and res.future == "exact"
    positive = wilson_interval(int(np.sum(res.w > 0)), res.w.size, Z4)
    # survival to m exceeds ultimate survival by P+{die after m}, which is O(m^-1/2) small
    se = math.hypot(res.ultimate.stderr, (positive.ci_high - positive.ci_low) / 8)
    assert abs(positive.value - res.ultimate.value) <= 4 * se + 0.02
    assert positive.value >= res.ultimate.value - 4 * se


def _binary_ratio_n2():
    """P{Z_2 > 0} / P{L_2 >= 0} for binary laws with p = e^X / 2, X = +-log 2."""
    p = {1: Fraction(1), -1: Fraction(1, 4)}
    f = lambda q, s: 1 - q + q * s * s
    surv = sum(Fraction(1, 4) * (1 - f(p[a], f(p[b], Fraction(0))))
               for a, b in itertools.product((1, -1), repeat=2))
    return surv / Fraction(1, 2)


def test_theta_ratio_small_n(rng):
    model = EnvironmentModel("binary", IncrementLaw.two_point(LOG2))
    exact = float(_binary_ratio_n2())
    est = theta_ratio(model, 2, 200_000, rng)
    assert est.value > 0 and est.estimate.within(exact, 4.0)


def test_theta_ratio_stabilizes(lf, rng):
    a = theta_ratio(lf, 512, 100_000, rng)
    b = theta_ratio(lf, 1024, 100_000, rng)
    assert a.value > 0 and b.value > 0
    assert abs(a.value / b.value - 1) < 0.15


def test_theta_series_terms(lf):
    seed, m, pool = 2024, 100, 2000
    est = theta_series(lf, 10, m, 2000, make_rng(seed), pool=pool)
    terms = np.asarray(est.diagnostics["terms"])
    p, _, _, _ = _ultimate_pool(lf, m, pool, make_rng(seed).spawn(1)[0])
    assert abs(terms[0] - p.mean()) <= 1e-12 * p.mean()
    assert np.all(terms >= 0) and np.all(np.diff(np.cumsum(terms)) >= 0)
    assert est.value > 0
    assert est.value >= est.diagnostics["truncated"]["value"]


def test_theta_series_insufficient_k(lf, rng):
    with pytest.raises(InsufficientK):
        theta_series(lf, 2, 50, 500, rng, max_last_term=0.01)


def _plus_green_sum(x, c, top=4000):
    """E sum_k e^{-c Y_k} for the P+ chain from x.

    The chain is the h-transform (h(y) = y + 1) of the simple walk killed on
    leaving {0, 1, ...}, whose Green function is 2 min(x+1, y+1), so
    G+(x, y) = 2 min(x+1, y+1) (y+1) / (x+1).
    """
    y = np.arange(top + 1)
    green = 2.0 * np.minimum(x + 1, y + 1) * (y + 1) / (x + 1)
    return float(np.sum(green * np.exp(-c * y)))


def test_green_function_small_cases():
    # from 0 the chain returns to 0 with probability 1/2, so it visits 0 twice on average
    assert _plus_green_sum(0, 50.0) == pytest.approx(2.0)
    assert _plus_green_sum(0, LOG2) == pytest.approx(8.0)


@pytest.mark.parametrize("x", [0, 3, 10])
def test_lattice_future_sum_matches_green_function(rng, x):
    c = LOG2
    draws = _ladder.lattice_plus_tail(integer_seed(rng), np.full(20_000, float(x)), c,
                                      256, 40.0, 10**6)
    est = mean_estimate(draws)
    assert est.within(_plus_green_sum(x, c), 4.0)
