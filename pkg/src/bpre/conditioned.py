"""The walk conditioned to stay nonnegative (the measure P+) and what it feeds.

P+ has density v(S_n) 1{L_n >= 0} on the first n steps. Three samplers:

* ``chain``: exact Markov chain for lattice walks X = +-c, where v(x) = floor(x/c) + 1
  gives the kernel j -> j+1 w.p. (j+2)/(2(j+1)), j -> j-1 w.p. j/(2(j+1));
* ``conditional``: rejection on {L_n >= 0} (exact for the conditional law,
  which approaches P+ on the first k steps as n grows);
* ``weighted``: raw walks carrying the weight v(S_n) 1{L_n >= 0}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import zeta

from . import _ladder
from .branching import DEFAULT_CEILING, _evolve, rb_survival_samples, simulate_on_batch
from .environment import (EnvironmentBatch, EnvironmentModel, EnvironmentPath, _partial_sums,
                          sample_increments)
from .errors import (BudgetExceeded, DegenerateSample, ExcessCensoring, InsufficientK,
                     InvalidParameter)
from .gf import survival_batch
from .offspring import family
from .rng import DEFAULT_CHUNK, Sums, integer_seed, map_chunks, merge_sums, provenance
from .stats import (Estimate, KSResult, ks_two_sample, mean_estimate, normal_estimate,
                    ratio_estimate, wilson_interval)
from .walk import RenewalTable


# ---------------------------------------------------------------- samplers

def _v_function(model: EnvironmentModel, table: RenewalTable | None):
    if table is not None:
        return table
    if model.exact_v(0.0) is not None:
        return model.exact_v
    if model.increment.degenerate and model.increment.params["value"] >= 0:
        return lambda x: np.where(np.asarray(x) < 0, 0.0, 1.0)
    raise InvalidParameter("this model has no closed-form v; pass a RenewalTable")


def _stay_nonnegative(model, n, size, rng):
    """Walks of length n with L_n >= 0 among ``size`` raw attempts (compacted stepping)."""
    alive = np.arange(size)
    y = np.zeros(size)
    cols_x, cols_s, owners = [], [], []
    lattice = model.increment.lattice_step is not None
    k_int = np.zeros(size)
    for _ in range(n):
        if alive.size == 0:
            break
        x, signs = sample_increments(model, alive.size, rng)
        if lattice:
            k_int = k_int + signs
            ok = k_int >= 0
        else:
            y = y + x
            ok = y >= 0
        owners.append(alive)
        cols_x.append(x)
        cols_s.append(signs)
        alive, y, k_int = alive[ok], y[ok], k_int[ok]
    if len(owners) < n:
        alive = alive[:0]
    X = np.empty((alive.size, n))
    G = np.empty((alive.size, n)) if lattice else None
    for j in range(min(n, len(owners))):
        pos = np.searchsorted(owners[j], alive)
        X[:, j] = cols_x[j][pos]
        if lattice:
            G[:, j] = cols_s[j][pos]
    return X, G


def sample_walks_given_Ln(model: EnvironmentModel, n: int, count: int,
                          rng: np.random.Generator, budget: int = 10**7,
                          round_size: int = DEFAULT_CHUNK) -> tuple[EnvironmentBatch, int]:
    """``count`` environments conditioned on min(S_1..S_n) >= 0, and the attempt count."""
    if n < 1 or count < 1:
        raise InvalidParameter("need n, count >= 1")
    xs, gs = [], []
    need, attempts = count, 0
    while need > 0:
        if attempts >= budget:
            raise BudgetExceeded(
                f"rejection budget {budget} exhausted with {count - need} of {count} accepted",
                partial={"attempts": attempts, "accepted": count - need,
                         "acceptance": (count - need) / attempts})
        size = min(round_size, budget - attempts)
        X, G = _stay_nonnegative(model, n, size, rng.spawn(1)[0])
        attempts += size
        X, G = X[:need], (G[:need] if G is not None else None)
        xs.append(X)
        gs.append(G)
        need -= X.shape[0]
    X = np.concatenate(xs)
    G = np.concatenate(gs) if gs[0] is not None else None
    return EnvironmentBatch.from_increments(model, X, G), attempts


def sample_walk_given_Ln(model: EnvironmentModel, n: int, rng: np.random.Generator,
                         budget: int = 10**7) -> tuple[EnvironmentPath, int]:
    """One environment with L_n >= 0 by rejection, and the number of attempts."""
    batch, attempts = sample_walks_given_Ln(model, n, 1, rng, budget, round_size=256)
    return batch.path(0), attempts


def _chain_signs(size, n, rng):
    j = np.zeros(size)
    G = np.empty((size, n))
    for k in range(n):
        up = rng.random(size) * (2.0 * (j + 1.0)) < (j + 2.0)
        G[:, k] = np.where(up, 1.0, -1.0)
        j += G[:, k]
    return G


def _rows(n):
    return max(1, min(DEFAULT_CHUNK, 2_000_000 // max(n, 1)))


def sample_plus_chain(model: EnvironmentModel, n: int, count: int,
                      rng: np.random.Generator) -> EnvironmentBatch:
    """Exact P+ paths of length n for lattice two-point walks."""
    c = model.increment.lattice_step
    if c is None:
        raise InvalidParameter("the exact P+ chain needs a lattice two-point walk")
    G = np.concatenate(map_chunks(lambda size, child: _chain_signs(size, n, child),
                                  count, rng, _rows(n)))
    return EnvironmentBatch.from_increments(model, c * G, G)


def sample_plus(model: EnvironmentModel, n: int, count: int, rng: np.random.Generator,
                method: str | None = None, factor: int = 4) -> EnvironmentBatch:
    """P+ environments of length n: exact chain for lattice walks, otherwise the
    first n steps of walks conditioned on {L_{factor n} >= 0}."""
    if method is None:
        method = "chain" if model.increment.lattice_step is not None else "conditional"
    if method == "chain":
        return sample_plus_chain(model, n, count, rng)
    if method != "conditional":
        raise InvalidParameter(f"unknown P+ sampler {method!r}")
    if model.increment.degenerate:
        if model.increment.params["value"] < 0:
            raise InvalidParameter("a walk drifting to -inf cannot stay nonnegative")
        x = np.full((count, n), model.increment.params["value"])
        return EnvironmentBatch.from_increments(model, x)
    full, _ = sample_walks_given_Ln(model, factor * n, count, rng)
    return full.take(slice(None)) if factor == 1 else EnvironmentBatch(
        full.family, full.params[:, :n], full.increments[:, :n], full.partial_sums[:, :n + 1])


# ------------------------------------------------------------ expectations

def plus_expectation(model: EnvironmentModel, Y: Callable[[np.ndarray], np.ndarray], k: int,
                     n: int, N: int, rng: np.random.Generator, mode: str = "weighted",
                     table: RenewalTable | None = None, level: float = 0.95) -> Estimate:
    """E+ Y for Y a function of the prefix S_0..S_k (passed as an (N, k+1) array).

    ``weighted``: mean over N raw walks of Y v(S_n) 1{L_n >= 0}.
    ``conditional``: mean of Y over N walks accepted on {L_n >= 0}.
    """
    if not 0 <= k <= n or N < 1:
        raise InvalidParameter("need 0 <= k <= n and N >= 1")
    prov = provenance(rng)
    if mode == "conditional":
        batch, _ = sample_walks_given_Ln(model, n, N, rng)
        vals = np.asarray(Y(batch.partial_sums[:, :k + 1]), dtype=float)
        return mean_estimate(vals, "plus-conditional", level, prov)
    if mode != "weighted":
        raise InvalidParameter(f"unknown mode {mode!r}")
    v = _v_function(model, table)

    def work(size, child):
        x, signs = sample_increments(model, (size, n), child)
        S = _partial_sums(x, model, signs)
        w = np.where(S[:, 1:].min(axis=1) >= 0, v(S[:, -1]), 0.0) if n else np.ones(size)
        return Sums.of(w * np.asarray(Y(S[:, :k + 1]), dtype=float)), float(w.sum())

    parts = map_chunks(work, N, rng, _rows(n))
    if sum(p[1] for p in parts) <= 0:
        raise DegenerateSample("no sampled walk stayed nonnegative")
    return mean_estimate(merge_sums([p[0] for p in parts]), "plus-weighted", level, prov)


# ------------------------------------------------------------ Tanaka check

@dataclass(frozen=True)
class TanakaResult:
    """(nu, S_nu) under P+ and (iota, S_iota) under P, both restricted to times <= n - w."""

    nu: np.ndarray
    s_nu: np.ndarray
    nu_weights: np.ndarray
    iota: np.ndarray
    s_iota: np.ndarray
    censoring: float
    ks_time: KSResult
    ks_height: KSResult

    @property
    def passed(self) -> bool:
        return self.ks_time.passed and self.ks_height.passed


def _first_ascent(model, horizon, size, rng):
    """(iota, S_iota) for walks whose first weak ascending epoch is <= horizon."""
    alive = np.arange(size)
    y = np.zeros(size)
    lattice = model.increment.lattice_step is not None
    c = model.increment.lattice_step or 1.0
    k_int = np.zeros(size)
    iota = np.zeros(size, dtype=np.int64)
    s_at = np.full(size, np.nan)
    for k in range(1, horizon + 1):
        if alive.size == 0:
            break
        x, signs = sample_increments(model, alive.size, rng)
        if lattice:
            k_int = k_int + signs
            y = c * k_int
        else:
            y = y + x
        up = y >= 0
        iota[alive[up]] = k
        s_at[alive[up]] = y[up]
        alive, y, k_int = alive[~up], y[~up], k_int[~up]
    done = iota > 0
    return iota[done], s_at[done]


def first_prospective_candidate(S: np.ndarray) -> np.ndarray:
    """Per row, the first m >= 1 with S_m <= min(S_{m+1}..S_n) (last index if none earlier)."""
    future_min = np.minimum.accumulate(S[:, :0:-1], axis=1)[:, ::-1]  # min(S_m..S_n), m >= 1
    nxt = np.concatenate([future_min[:, 1:], np.full((S.shape[0], 1), np.inf)], axis=1)
    ok = S[:, 1:] <= nxt
    return np.argmax(ok, axis=1) + 1


def tanaka_ladder_check(model: EnvironmentModel, n: int, w: int, N: int,
                        rng: np.random.Generator, alpha: float = 0.01,
                        max_censoring: float = 0.01, table: RenewalTable | None = None,
                        method: str | None = None) -> TanakaResult:
    """Compare the law of (nu, S_nu) under P+ with that of (iota, S_iota) under P.

    On a P+ path of length n, the first prospective minimum within the
    horizon, k*, is the true nu exactly when the unseen future never goes
    below S_{k*}; given the path that has P+-probability v(S_n - S_{k*}) / v(S_n).
    Each path gets that factor as a weight (times v(S_n) 1{L_n >= 0} for raw
    walks), and only nu <= n - w is used. The P side uses iota <= n - w.
    Both restricted laws are equal, so the two-sample KS tests on the time
    and on the height should both pass.
    """
    if w < 1 or w >= n:
        raise InvalidParameter("need 1 <= w < n")
    v = _v_function(model, table)
    T = n - w
    if method is None:
        method = "chain" if model.increment.lattice_step is not None else "weighted"
    if method not in ("chain", "weighted"):
        raise InvalidParameter(f"unknown method {method!r}")
    if method == "chain" and model.increment.lattice_step is None:
        raise InvalidParameter("the exact P+ chain needs a lattice two-point walk")

    def work(size, child):
        if method == "chain":
            G = _chain_signs(size, n, child)
            S = _partial_sums(model.increment.lattice_step * G, model, G)
            base = np.ones(size)
        else:
            x, signs = sample_increments(model, (size, n), child)
            S = _partial_sums(x, model, signs)
            base = np.where(S[:, 1:].min(axis=1) >= 0, v(S[:, -1]), 0.0)
            S, base = S[base > 0], base[base > 0]
        k_star = first_prospective_candidate(S)
        s_k = S[np.arange(S.shape[0]), k_star]
        p_future = v(S[:, -1] - s_k) / v(S[:, -1])
        return k_star, s_k, base, base * p_future * (k_star <= T)

    parts = map_chunks(work, N, rng, _rows(n))
    k_star, s_k, base, weight = (np.concatenate([p[i] for p in parts]) for i in range(4))
    if base.sum() <= 0:
        raise DegenerateSample("no sampled walk stayed nonnegative")
    censoring = 1.0 - weight.sum() / base.sum()
    if censoring >= max_censoring:
        raise ExcessCensoring(f"censored mass {censoring:.4f} >= {max_censoring}; raise n or lower w")
    iota, s_iota = _first_ascent(model, T, N, rng.spawn(1)[0])
    keep = weight > 0
    ks_t = ks_two_sample(k_star[keep], iota, weight[keep], None, alpha)
    ks_h = ks_two_sample(s_k[keep], s_iota, weight[keep], None, alpha)
    return TanakaResult(k_star[keep], s_k[keep], weight[keep], iota, s_iota, float(censoring),
                        ks_t, ks_h)


# --------------------------------------------------- series diagnostics

@dataclass(frozen=True)
class SeriesDiagnostic:
    partial_sums: np.ndarray
    last_decade_increment: float


def _last_decade(p):
    K = p.size
    i = max(0, int(math.floor(0.9 * K)) - 1)
    return float((p[-1] - p[i]) / p[-1]) if p[-1] > 0 else 0.0


def eta_series_partial_sums(env: EnvironmentPath, K: int) -> SeriesDiagnostic:
    """Partial sums of sum_{k<K} eta_{k+1} e^{-S_k}; finite in the limit under P+.

    The diagnostic is the relative growth over the last tenth of the terms.
    """
    if not 1 <= K <= env.n:
        raise InvalidParameter("need 1 <= K <= len(env)")
    eta = env.kernels.eta(env.params[:K])
    p = np.cumsum(eta * np.exp(-env.partial_sums[:K]))
    return SeriesDiagnostic(p, _last_decade(p))


def jagers_partial_sums(env: EnvironmentPath) -> np.ndarray:
    """Partial sums of sum_j (1 - Q_j({1})); divergence rules out a.s. stagnation."""
    return np.cumsum(1.0 - env.kernels.prob_one(env.params))


# ------------------------------------------------ W+ and ultimate survival

@dataclass(frozen=True)
class WPlusResult:
    """Draws of e^{-S_m} Z_m on P+ environments and the ultimate-survival estimate.

    For geometric laws ``ultimate`` is exact given each environment when the
    future beyond m can be drawn exactly (``future == "exact"``: lattice or
    constant increments); otherwise the series is cut at m and
    ``max_last_term`` (largest relative size of the last term kept) is only a
    rough diagnostic. For other laws the value is only
    bracketed: ``ultimate_lower`` uses the minorant (sum eta e^{-S})^{-1} and
    ``ultimate`` is the horizon-m survival probability, an upper bound.
    """

    w: np.ndarray
    ultimate: Estimate
    ultimate_lower: Estimate | None
    alive: Estimate
    per_env: np.ndarray
    per_env_lower: np.ndarray | None
    exact: bool
    max_last_term: float = 0.0
    future: str = "exact"


def _future_sum(model: EnvironmentModel, S_m: np.ndarray, rng) -> np.ndarray | None:
    """Draws of sum_{j >= m} e^{-S_j} given S_m, for the P+ future after step m.

    Exact for lattice walks (path decomposition of the P+ chain) and for
    constant increments; None when no exact sampler exists.
    """
    inc = model.increment
    if inc.degenerate:
        d = inc.params["value"]
        if d <= 0:
            return np.full(S_m.shape, np.inf)
        return np.exp(-S_m) / -np.expm1(-d)
    c = inc.lattice_step
    if c is None:
        return None
    start = np.rint(S_m / c)
    return _ladder.lattice_plus_tail(integer_seed(rng), start, c, 256, 40.0, 10**6)


def _ultimate_per_env(batch: EnvironmentBatch, model: EnvironmentModel, rng):
    """Per P+ environment: (value or upper bound, lower bound or None, exact flag, info).

    Geometric laws: p = (sum_{j>=0} e^{-S_j})^{-1}, exact when the future
    beyond m can be drawn exactly, else truncated at m (biased upward by
    O(m^{-1/2}), since the conditioned walk keeps revisiting low levels).
    Other laws: upper = survival to m, lower = (sum eta_{j+1} e^{-S_j})^{-1}
    with the unseen terms bounded by max(eta) times the future sum.
    """
    S = batch.partial_sums
    R = _future_sum(model, S[:, -1], rng)
    info = {"future": "exact" if R is not None else "truncated",
            "last_term": float(np.max(np.exp(-S[:, -2]) / np.sum(np.exp(-S[:, :-1]), axis=1)))}
    R0 = np.zeros(S.shape[0]) if R is None else R
    if batch.family == "geometric":
        # e^{-S_m} is part of the future sum
        p = 1.0 / (np.sum(np.exp(-S[:, :-1]), axis=1) + R0)
        return p, None, R is not None, info
    upper = survival_batch(batch)
    kern = family(batch.family)
    eta = kern.eta(batch.params)
    if model.increment.kind == "two_point":
        c = model.increment.lattice_step
        eta_max = float(np.max(kern.eta(model.params_from_increments(np.array([-c, c])))))
    else:
        eta_max = float(np.max(eta)) if eta.size else 0.0
    lower = 1.0 / (np.sum(eta * np.exp(-S[:, :-1]), axis=1) + eta_max * R0)
    return upper, np.minimum(lower, upper), False, info


def _ultimate_pool(model, m, count, rng, method=None):
    """Per-environment ultimate-survival values for ``count`` P+ environments of length m."""
    def work(size, child):
        env = sample_plus(model, m, size, child, method)
        return _ultimate_per_env(env, model, child)

    parts = map_chunks(work, count, rng, _rows(m))
    p = np.concatenate([q[0] for q in parts])
    lower = None if parts[0][1] is None else np.concatenate([q[1] for q in parts])
    info = {"future": parts[0][3]["future"],
            "last_term": max(q[3]["last_term"] for q in parts)}
    return p, lower, parts[0][2], info


def wplus_and_ultimate_survival(model: EnvironmentModel, m: int, N: int,
                                rng: np.random.Generator, z0: int = 1,
                                ceiling: float = DEFAULT_CEILING,
                                method: str | None = None) -> WPlusResult:
    """e^{-S_m} Z_m under P+ and P+{Z_k > 0 for all k}, from N environments of length m."""
    if m < 1 or N < 1:
        raise InvalidParameter("need m, N >= 1")
    prov = provenance(rng)
    env = sample_plus(model, m, N, rng, method)
    p, lower, exact, info = _ultimate_per_env(env, model, rng.spawn(1)[0])
    if z0 != 1:
        p = -np.expm1(z0 * np.log1p(-p))
        if lower is not None:
            lower = -np.expm1(z0 * np.log1p(-lower))
    # one quenched population per environment
    z, log_z = simulate_on_batch(env, z0, rng.spawn(1)[0], ceiling)
    w = np.where(z > 0, np.exp(log_z - env.partial_sums[:, -1]), 0.0)
    alive = int(np.sum(z > 0))
    ult = mean_estimate(p, "ultimate-lf" if exact else "ultimate-upper", provenance=prov)
    low = mean_estimate(lower, "ultimate-minorant", provenance=prov) if lower is not None else None
    return WPlusResult(w, ult, low, wilson_interval(alive, N, provenance=prov), p, lower,
                       exact, info["last_term"], info["future"])


# ------------------------------------------------------------------- theta

@dataclass(frozen=True)
class ThetaEstimate:
    """theta with its interval; ``lower`` is set when only a bracket is available."""

    method: str
    estimate: Estimate
    inputs: dict
    diagnostics: dict = field(default_factory=dict)
    lower: Estimate | None = None

    @property
    def value(self) -> float:
        return self.estimate.value

    @property
    def ci(self) -> tuple[float, float]:
        return self.estimate.ci_low, self.estimate.ci_high

    def to_dict(self) -> dict:
        out = {"method": self.method, "estimate": self.estimate.to_dict(),
               "inputs": self.inputs, "diagnostics": self.diagnostics}
        if self.lower is not None:
            out["lower"] = self.lower.to_dict()
        return out


def theta_ratio(model: EnvironmentModel, n: int, N: int, rng: np.random.Generator,
                ci: str = "delta", level: float = 0.95, resamples: int = 1000) -> ThetaEstimate:
    """P{Z_n > 0} / P{L_n >= 0} from one environment sample.

    The numerator averages the exact quenched survival probability and the
    denominator the indicator of L_n >= 0 over the same environments.
    """
    prov = provenance(rng)
    r, ok = rb_survival_samples(model, n, N, rng)
    den = mean_estimate(ok, "indicator")
    if den.ci_low <= 0:
        raise DegenerateSample(f"P(L_n >= 0) interval {den.ci_low, den.ci_high} reaches 0")
    boot_rng = rng.spawn(1)[0] if ci == "bootstrap" else None
    est = ratio_estimate(r, ok, level, ci, boot_rng, resamples, prov)
    num = mean_estimate(r, "rao-blackwell")
    return ThetaEstimate("ratio", est, {"n": n, "N": N},
                         {"survival": num.to_dict(), "min_nonnegative": den.to_dict()})


def theta_series(model: EnvironmentModel, K: int, m: int, N: int, rng: np.random.Generator,
                 pool: int | None = None, ceiling: float = DEFAULT_CEILING,
                 level: float = 0.95, max_last_term: float = 0.1,
                 tail_correction: bool = True) -> ThetaEstimate:
    """theta = sum_{k>=0} E[P+_{Z_k}(survive forever); tau_k = k] from the terms k <= K.

    P+_z(survive forever) = 1 - E+(1 - p(Pi))^z with p(Pi) the one-ancestor
    probability, averaged over a pool of P+ environments of length m. The
    events {tau_k = k} come from N plain (environment, population) runs.

    The terms decay only like k^{-3/2}, so the plain truncated sum misses a
    tail of relative size about 2 K * term_K. With ``tail_correction`` the tail
    is extrapolated from the terms in (K/2, K]; the plain truncated sum is
    kept in ``diagnostics["truncated"]``.
    """
    if K < 0 or m < 1 or N < 1:
        raise InvalidParameter("need K >= 0, m >= 1, N >= 1")
    prov = provenance(rng)
    pool = N if pool is None else pool
    p, lower, exact, info = _ultimate_pool(model, m, pool, rng.spawn(1)[0])

    # runs: record Z_k at every strict new minimum of S (tau_k = k), k = 1..K
    run_rng = rng.spawn(1)[0]
    events_run, events_k, events_z = [np.zeros(N, np.int64)], [np.zeros(N, np.int64)], [np.ones(N)]
    events_run[0] = np.arange(N)
    if K > 0:
        _, records = _evolve(model, K, N, 1, ceiling, run_rng, record=True)
        running_min = np.zeros(N)
        S = np.zeros(N)
        # walks of dead runs are irrelevant: their terms vanish since Z_k = 0
        for k, rec in enumerate(records, start=1):
            # lattice walks are tracked in units of c so ties are exact
            step = rec.signs if rec.signs is not None else rec.x
            S_alive = S[rec.alive] + step
            new_min = S_alive < running_min[rec.alive]
            S[rec.alive] = S_alive
            running_min[rec.alive] = np.minimum(running_min[rec.alive], S_alive)
            hit = new_min & (rec.z > 0)
            events_run.append(rec.alive[hit])
            events_k.append(np.full(int(hit.sum()), k))
            events_z.append(rec.z[hit])
    run_id = np.concatenate(events_run)
    kk = np.concatenate(events_k)
    zz = np.concatenate(events_z)

    # tail beyond K: P{tau_k = k, -S_k <= x} decays like k^{-1-1/alpha}
    # (k^{-3/2} for finite variance); the window (K/2, K] fixes the constant
    # and every event in it also stands in for its share of the unseen tail
    factor = 0.0
    if tail_correction and K >= 8:
        expo = 1.0 + 1.0 / (model.increment.params["alpha"]
                            if model.increment.kind == "pareto" else 2.0)
        window = np.arange(K // 2 + 1, K + 1)
        factor = float(zeta(expo, K + 1) / np.sum(window ** -expo))
    weight = np.where(kk > K // 2, 1.0 + factor, 1.0) if factor else np.ones(kk.size)

    def estimate(probs, tag, wts):
        uz, inv = np.unique(zz, return_inverse=True)
        # (pool, unique z) survival probabilities of z ancestors
        with np.errstate(divide="ignore"):
            mat = -np.expm1(np.outer(np.log1p(-probs), uz))
        phi = mat.mean(axis=0)[inv]
        per_run = np.bincount(run_id, weights=wts * phi, minlength=N)
        terms = np.bincount(kk, weights=phi, minlength=K + 1) / N
        # pool-side fluctuation: the estimator as a function of each pool draw
        per_env = mat @ np.bincount(inv, weights=wts, minlength=uz.size) / N
        se = math.sqrt(per_run.var(ddof=1) / N + per_env.var(ddof=1) / per_env.size)
        return normal_estimate(float(per_run.mean()), se, N, tag, level, prov), terms

    tag = "series-lf" if exact else "series-upper"
    est, terms = estimate(p, tag, weight)
    truncated, _ = estimate(p, tag + "-truncated", np.ones(kk.size))
    partial = np.cumsum(terms)
    last = float(terms[-1] / partial[-1]) if partial[-1] > 0 else 0.0
    diag = {"terms": terms.tolist(), "last_term_ratio": last, "pool": pool,
            "exact_ultimate": exact, "ultimate_future": info["future"],
            "ultimate_last_term": info["last_term"],
            "truncated": truncated.to_dict(), "tail_factor": factor,
            "tail": est.value - truncated.value}
    if last > max_last_term:
        raise InsufficientK(f"last term is {last:.3g} of the partial sum at K={K}")
    low = None
    if lower is not None:
        low, _ = estimate(lower, "series-minorant", weight)
    return ThetaEstimate("series", est, {"K": K, "m": m, "N": N}, diag, low)
