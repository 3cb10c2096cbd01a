"""Quenched survival probabilities from generating-function compositions.

Everything works with survival probabilities ``r = 1 - f_{k,n}(s)``, never
with extinction probabilities: survival probabilities underflow gracefully,
while extinction probabilities saturate at 1 and lose the signal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .environment import EnvironmentBatch, EnvironmentPath
from .errors import InvalidParameter, WrongFamily
from .offspring import family


@dataclass(frozen=True)
class QuenchedSurvival:
    """r[k] = 1 - f_{k,n}(s): survival to generation n of one individual at k."""

    r: np.ndarray
    s: float

    @property
    def n(self) -> int:
        return self.r.size - 1


def _check_k(env, k):
    if not 0 <= k <= env.n:
        raise InvalidParameter(f"k must lie in [0, {env.n}]")


def _check_s(s, allow_one=True):
    if not 0.0 <= s <= 1.0 or (s == 1.0 and not allow_one):
        raise InvalidParameter("s must lie in [0, 1)")


def survival_profile(env: EnvironmentPath, s: float = 0.0) -> QuenchedSurvival:
    """All r_{k,n}, k = 0..n, from one backward sweep."""
    _check_s(s)
    kern = env.kernels
    n = env.n
    r = np.empty(n + 1)
    r[n] = 1.0 - s
    cur = np.asarray(1.0 - s)
    for j in range(n - 1, -1, -1):
        cur = kern.survival(env.params[j], cur)
        r[j] = cur
    return QuenchedSurvival(r, s)


def survival_given_env(env: EnvironmentPath, k: int = 0, s: float = 0.0) -> float:
    """1 - f_{k,n}(s) by the backward recursion r <- 1 - f_j(1 - r)."""
    _check_k(env, k)
    _check_s(s)
    kern = env.kernels
    cur = np.asarray(1.0 - s)
    for j in range(env.n - 1, k - 1, -1):
        cur = kern.survival(env.params[j], cur)
    return float(cur)


def survival_batch(batch: EnvironmentBatch, s: float = 0.0) -> np.ndarray:
    """r_{0,n} for every environment of a batch (vectorized over the batch)."""
    _check_s(s)
    kern = family(batch.family)
    cur = np.full(batch.size, 1.0 - s)
    for j in range(batch.n - 1, -1, -1):
        cur = kern.survival(batch.params[:, j], cur)
    return cur


def jirina_sides(env: EnvironmentPath, k: int = 0, s: float = 0.0) -> tuple[float, float]:
    """Both sides of 1/(1 - f_{k,n}(s)) = e^{-(S_n-S_k)}/(1-s)
    + sum_{j=k}^{n-1} g_{j+1}(f_{j+1,n}(s)) e^{-(S_j-S_k)}."""
    _check_s(s, allow_one=False)
    if not 0 <= k < env.n:
        raise InvalidParameter("need 0 <= k < n")
    prof = survival_profile(env, s)
    S = env.partial_sums
    lhs = 1.0 / prof.r[k]
    j = np.arange(k, env.n)
    g = env.kernels.g(env.params[k:], prof.r[j + 1])
    rhs = math.exp(-(S[env.n] - S[k])) / (1.0 - s) + float(
        np.sum(g * np.exp(-(S[j] - S[k]))))
    return lhs, rhs


def jirina_residual(env: EnvironmentPath, k: int = 0, s: float = 0.0) -> float:
    """Relative residual |LHS - RHS| / |LHS| of the Jirina identity."""
    lhs, rhs = jirina_sides(env, k, s)
    return abs(lhs - rhs) / abs(lhs)


def agresti_lower_bound(env: EnvironmentPath, k: int = 0, s: float = 0.0) -> float:
    """(e^{-(S_n-S_k)}/(1-s) + sum_{j=k}^{n-1} eta_{j+1} e^{-(S_j-S_k)})^{-1}
    <= 1 - f_{k,n}(s)."""
    _check_s(s, allow_one=False)
    _check_k(env, k)
    S = env.partial_sums
    j = np.arange(k, env.n)
    eta = env.kernels.eta(env.params[k:])
    denom = math.exp(-(S[env.n] - S[k])) / (1.0 - s) + float(np.sum(eta * np.exp(-(S[j] - S[k]))))
    return 1.0 / denom


def _require_lf(env):
    if env.family != "geometric":
        raise WrongFamily("closed form needs linear-fractional (geometric) laws")


def lf_survival_exact(env: EnvironmentPath, k: int = 0, horizon: int | float | None = None,
                      s: float = 0.0) -> float:
    """Closed-form 1 - f_{k,n}(s) for geometric environments.

    With constant g = eta/2 = 1 the Jirina identity is explicit:
    (e^{-(S_n-S_k)}/(1-s) + sum_{j=k}^{n-1} e^{-(S_j-S_k)})^{-1}.
    ``horizon=math.inf`` returns the ultimate-survival form (see
    :func:`lf_ultimate_survival`).
    """
    _require_lf(env)
    if horizon is not None and math.isinf(horizon):
        return lf_ultimate_survival(env, k).value
    n = env.n if horizon is None else int(horizon)
    if not 0 <= k <= n <= env.n:
        raise InvalidParameter("need 0 <= k <= horizon <= len(env)")
    _check_s(s, allow_one=False)
    S = env.partial_sums
    j = np.arange(k, n)
    denom = math.exp(-(S[n] - S[k])) / (1.0 - s) + float(np.sum(np.exp(-(S[j] - S[k]))))
    return 1.0 / denom


@dataclass(frozen=True)
class UltimateSurvival:
    """Infinite-horizon LF survival with its truncation diagnostics.

    ``tail_bound`` bounds the relative contribution of the unused terms of
    the supplied path: (remaining terms) * e^{-(post-truncation min)} / partial sum.
    """

    value: float
    partial_sum: float
    truncated_at: int
    tail_bound: float
    converged: bool


def lf_ultimate_survival(env: EnvironmentPath, k: int = 0) -> UltimateSurvival:
    """(sum_{j>=k} (eta_{j+1}/2) e^{-(S_j-S_k)})^{-1} from a long geometric path."""
    _require_lf(env)
    _check_k(env, k)
    S = env.partial_sums[k:env.n] - env.partial_sums[k]
    if S.size == 0:
        raise InvalidParameter("need at least one step after k")
    terms = np.exp(-S)
    partial = np.cumsum(terms)
    running_min = np.minimum.accumulate(S)
    stop = np.nonzero((terms < 1e-16 * partial) & (S > running_min + 10.0))[0]
    J = int(stop[0]) if stop.size else S.size - 1
    rest = S[J + 1:]
    if rest.size:
        tail = rest.size * math.exp(-float(rest.min())) / partial[J]
    else:
        tail = 0.0
    return UltimateSurvival(1.0 / partial[J], float(partial[J]), J + k, float(tail),
                            bool(stop.size))


def ultimate_survival_batch(S: np.ndarray, eta: np.ndarray) -> np.ndarray:
    """(sum_{j<n} eta_{j+1} e^{-S_j})^{-1} per row of partial sums S (N, n+1).

    For geometric laws pass ``eta / 2`` (= 1) to get the exact LF value; with
    the full eta it is the Agresti-type minorant of ultimate survival.
    """
    return 1.0 / np.sum(eta * np.exp(-S[:, :-1]), axis=1)


def quenched_bound(env: EnvironmentPath, z0: int = 1) -> float:
    """z0 * exp(min_{m<=n} S_m), an upper bound for P{Z_n > 0 | Pi}."""
    return z0 * math.exp(float(env.partial_sums.min()))
