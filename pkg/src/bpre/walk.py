"""Fluctuation statistics of the associated random walk S.

Minima, the first argmin, ladder epochs, prospective minima, the renewal
function v of the strict descending ladder heights, the Spitzer constant and
the slowly varying correction l(n).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import _ladder
from .environment import EnvironmentModel, EnvironmentPath, sample_increments, _partial_sums
from .errors import BudgetExceeded, InsufficientHorizon, InvalidParameter
from .rng import DEFAULT_CHUNK, Sums, integer_seed, map_chunks, merge_sums, provenance
from .stats import Estimate, normal_estimate


def _as_sums(path) -> np.ndarray:
    s = path.partial_sums if isinstance(path, EnvironmentPath) else np.asarray(path, dtype=float)
    if s.ndim != 1 or s.size == 0:
        raise InvalidParameter("a walk path needs at least S_0")
    return s


@dataclass(frozen=True)
class FluctuationSummary:
    L_n: float
    tau_n: int
    ladder_epochs: np.ndarray
    ladder_heights: np.ndarray
    iota: int | None
    S_iota: float | None

    @property
    def min_with_origin(self) -> float:
        """min(S_0..S_n) = L_n ^ 0."""
        return min(self.L_n, 0.0)


def fluctuation_summary(path) -> FluctuationSummary:
    """Minimum, first argmin, strict descending ladder points and first weak ascent.

    ``L_n`` is +inf for the empty walk (n = 0).
    """
    S = _as_sums(path)
    tail = S[1:]
    L = float(tail.min()) if tail.size else math.inf
    tau = int(np.argmin(S))
    prev_min = np.minimum.accumulate(S)[:-1]
    epochs = np.nonzero(tail < prev_min)[0] + 1
    up = np.nonzero(tail >= 0)[0]
    iota = int(up[0]) + 1 if up.size else None
    return FluctuationSummary(L, tau, epochs, S[epochs].copy(), iota,
                              float(S[iota]) if iota is not None else None)


def prospective_minima(path, w: int) -> tuple[np.ndarray, np.ndarray]:
    """Times m >= 1 with S_{m+i} >= S_m for 1 <= i <= min(w, n - m).

    The true condition involves the whole future; ``censored`` marks the
    indices whose window was cut short by the horizon (n - m < w).
    """
    if w < 1:
        raise InvalidParameter("lookahead w must be >= 1")
    S = _as_sums(path)
    n = S.size - 1
    if n == 0:
        return np.zeros(0, dtype=int), np.zeros(0, dtype=bool)
    # min(S_{m+1}..S_{m+w}) with +inf past the horizon, for m = 1..n
    padded = np.concatenate([S, np.full(w, np.inf)])
    win = np.lib.stride_tricks.sliding_window_view(padded, w)[2:n + 2]
    m = np.arange(1, n + 1)
    idx = m[S[1:] <= win.min(axis=1)]
    return idx, (n - idx) < w


@dataclass(frozen=True)
class RenewalTable:
    """Estimated renewal function on a grid, with linear extrapolation to the right."""

    grid: np.ndarray
    v_hat: np.ndarray
    stderr: np.ndarray
    slope: float
    exact: bool
    method: str = "ladder"
    n_walks: int = 0
    model: EnvironmentModel | None = None

    def _interp(self, x, vals):
        x = np.asarray(x, dtype=float)
        g = self.grid
        out = np.interp(x, g, vals)
        return np.where(x > g[-1], vals[-1], out)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.exact and self.model is not None:
            return self.model.exact_v(x)
        g = self.grid
        out = self._interp(x, self.v_hat) + np.where(x > g[-1], self.slope * (x - g[-1]), 0.0)
        return np.where(x < 0, 0.0, out)

    def stderr_at(self, x):
        x = np.asarray(x, dtype=float)
        if self.exact:
            return np.zeros_like(x)
        return np.where(x < 0, 0.0, self._interp(x, self.stderr))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["x", "v_hat", "stderr", "exact_flag"])
            for x, v, se in zip(self.grid, self.v_hat, self.stderr):
                wr.writerow([repr(float(x)), repr(float(v)), repr(float(se)), int(self.exact)])


def _decade_slope(grid, v):
    """Slope over the last tenth of the grid range (at least the last two points)."""
    g_hi = grid[-1]
    cut = grid[0] + 0.9 * (g_hi - grid[0])
    cand = np.nonzero(grid <= cut)[0]
    i = int(cand[-1]) if cand.size and cand[-1] < grid.size - 1 else grid.size - 2
    if i < 0 or grid[-1] == grid[i]:
        return 0.0
    return float((v[-1] - v[i]) / (grid[-1] - grid[i]))


_KIND_CODES = {"two_point": _ladder.KIND_TWO_POINT, "gaussian": _ladder.KIND_GAUSSIAN,
               "pareto": _ladder.KIND_PARETO}


def _kernel_args(model: EnvironmentModel):
    inc = model.increment
    p = inc.params
    if inc.kind == "two_point":
        return _ladder.KIND_TWO_POINT, p["c"], 0.0
    if inc.kind == "gaussian":
        return _ladder.KIND_GAUSSIAN, p["sigma"], 0.0
    return _ladder.KIND_PARETO, p["alpha"], p["scale"]


def estimate_renewal_v(model: EnvironmentModel, grid, N: int, rng: np.random.Generator,
                       method: str = "ladder", eps: float = 1e-13,
                       max_ops: int = 10**7, chunk: int = DEFAULT_CHUNK,
                       force_simulation: bool = False) -> RenewalTable:
    """Renewal function v(x) = 1 + sum_i P{S_{gamma_i} >= -x} on ``grid``.

    ``method="ladder"`` counts strict descending ladder heights >= -x.
    ``method="tau"`` uses the time-reversed form v(x) = sum_k P{-S_k <= x, tau_k = k},
    i.e. one plus the mean number of visits to [-x, 0) strictly before the
    first weak ascending ladder epoch. Lattice two-point walks get the exact
    closed form unless ``force_simulation``.

    Gaussian walks are simulated with Brownian-bridge block skipping (bias
    below ``eps`` per skipped block). Each walk may use at most ``max_ops``
    kernel operations; exceeding it raises BudgetExceeded.
    """
    model.require_walk()
    if method not in ("ladder", "tau"):
        raise InvalidParameter(f"unknown renewal method {method!r}")
    grid = np.union1d(np.asarray(grid, dtype=float), [0.0])
    pos = grid[grid >= 0]
    if model.increment.lattice_step is not None and not force_simulation:
        v = model.exact_v(grid)
        return RenewalTable(grid, v, np.zeros_like(v), 1.0 / model.increment.lattice_step,
                            True, "exact", 0, model)
    if N < 2:
        raise InvalidParameter("need N >= 2 walks")
    depth = float(pos[-1])
    kind, a, b = _kernel_args(model)
    kern = _ladder.ladder_heights if method == "ladder" else _ladder.pre_ascent_visits

    def work(size, child):
        vals, owner, status = kern(integer_seed(child), size, kind, a, b, depth, eps,
                                   max_ops, 3.0, 4.0)
        if status:
            raise BudgetExceeded(
                f"walk exceeded {max_ops} operations before reaching depth {depth}",
                partial={"walks_done": status - 1})
        # first grid index with x >= -value; the count applies to that and all larger x
        col = np.searchsorted(pos, -vals, side="left")
        counts = np.zeros((size, pos.size + 1))
        np.add.at(counts, (owner.astype(np.int64), col), 1.0)
        c = np.cumsum(counts[:, :-1], axis=1) + 1.0
        return [Sums.of(c[:, j]) for j in range(pos.size)]

    parts = map_chunks(work, N, rng, chunk)
    cols = [merge_sums([p[j] for p in parts]) for j in range(pos.size)]
    v_pos = np.array([s.mean for s in cols])
    se_pos = np.array([s.stderr for s in cols])
    v = np.zeros_like(grid)
    se = np.zeros_like(grid)
    v[grid >= 0] = v_pos
    se[grid >= 0] = se_pos
    return RenewalTable(grid, v, se, _decade_slope(pos, v_pos), False, method, N, model)


def check_harmonicity(table: RenewalTable, model: EnvironmentModel, x: float, N: int,
                      rng: np.random.Generator) -> Estimate:
    """Estimate of E v(x + X) - v(x); zero when v is harmonic for the killed walk.

    Two-point laws are averaged exactly over both atoms. Otherwise X is
    sampled N times; the reported standard error adds the Monte Carlo error
    over X and the table's own standard errors.
    """
    if x < 0:
        raise InvalidParameter("harmonicity is checked at x >= 0")
    inc = model.increment
    if inc.kind == "two_point":
        c = inc.params["c"]
        val = 0.5 * (table(x + c) + table(x - c)) - table(x)
        se = math.sqrt(0.25 * (table.stderr_at(x + c) ** 2 + table.stderr_at(x - c) ** 2)
                       + table.stderr_at(x) ** 2)
        return normal_estimate(float(val), se, max(N, 1), "harmonicity-exact",
                               provenance=provenance(rng))
    X = inc.sample(rng, N)
    vals = table(x + X)
    mc = Sums.of(vals)
    se_tab = math.sqrt(float(table.stderr_at(x)) ** 2 + float(np.mean(table.stderr_at(x + X) ** 2)))
    se = math.sqrt(mc.stderr ** 2 + se_tab ** 2)
    return normal_estimate(mc.mean - float(table(x)), se, N, "harmonicity-mc",
                           provenance=provenance(rng))


@dataclass(frozen=True)
class SpitzerEstimate:
    rho_hat: float
    probabilities: np.ndarray
    n: int
    N: int
    estimate: Estimate

    def contains(self, rho: float) -> bool:
        return self.estimate.contains(rho)


def estimate_rho(model: EnvironmentModel, n: int, N: int, rng: np.random.Generator,
                 level: float = 0.95) -> SpitzerEstimate:
    """Cesaro mean (1/n) sum_{m<=n} P{S_m > 0} with a CLT interval over walks."""
    if n < 1 or N < 1:
        raise InvalidParameter("need n, N >= 1")
    model.require_walk()
    rows = max(1, min(DEFAULT_CHUNK, 4_000_000 // n))

    def work(size, child):
        x, signs = sample_increments(model, (size, n), child)
        S = _partial_sums(x, model, signs)[:, 1:]
        pos = S > 0
        return pos.sum(axis=0).astype(float), Sums.of(pos.mean(axis=1))

    parts = map_chunks(work, N, rng, rows)
    counts = np.sum([p[0] for p in parts], axis=0)
    frac = merge_sums([p[1] for p in parts])
    probs = counts / N
    se = frac.stderr if N > 1 else 0.5
    est = normal_estimate(frac.mean, se, N, "spitzer-cesaro", level, provenance(rng))
    return SpitzerEstimate(frac.mean, probs, n, N, est)


@dataclass(frozen=True)
class SlowlyVarying:
    """l(n) = h(1 - 1/n) / Gamma(rho) with a bound on the truncation error of log h."""

    value: float
    h: float
    log_tail_bound: float
    terms: int

    @property
    def relative_error(self) -> float:
        return math.expm1(self.log_tail_bound) if self.log_tail_bound < 700 else math.inf


def required_terms(n: int) -> int:
    """Series length max(1000, ceil(20 / (1 - s))) for s = 1 - 1/n."""
    return max(1000, 20 * int(n))


def slowly_varying_l(probabilities, rho: float, n: int) -> SlowlyVarying:
    """l(n) from P{S_m >= 0}, m = 1..M, where h(s) = exp(sum_m s^m/m (P{S_m >= 0} - rho)).

    The tail beyond M is bounded by (1 - 1/n)^M / (M/n) times the largest
    |P - rho| seen beyond M/2; InsufficientHorizon when that would move l(n)
    by more than 10%.
    """
    p = np.asarray(probabilities, dtype=float)
    M = p.size
    if M < 2:
        raise InvalidParameter("need probabilities for at least two m")
    if not 0 < rho < 1:
        raise InvalidParameter("rho must lie in (0, 1)")
    if n < 1:
        raise InvalidParameter("n must be >= 1")
    m = np.arange(1, M + 1)
    resid = p - rho
    if n == 1:
        log_h, bound = 0.0, 0.0
    else:
        log_s = math.log1p(-1.0 / n)
        log_h = float(np.sum(np.exp(m * log_s) / m * resid))
        bound = math.exp(M * log_s) * n / M * float(np.max(np.abs(resid[M // 2:])))
    h = math.exp(log_h)
    out = SlowlyVarying(h / math.gamma(rho), h, bound, M)
    if out.relative_error > 0.1:
        raise InsufficientHorizon(
            f"series truncated at M={M} leaves relative error up to {out.relative_error:.3g} "
            f"at n={n}; supply about {required_terms(n)} terms")
    return out
