"""Forward simulation of the quenched branching process and annealed survival."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .environment import (EnvironmentBatch, EnvironmentModel, EnvironmentPath,
                          sample_environment_batch, sample_increments)
from .errors import BudgetExceeded, InvalidParameter
from .offspring import family
from .gf import survival_batch
from .rng import DEFAULT_CHUNK, map_chunks, provenance
from .stats import Estimate, mean_estimate, wilson_interval

DEFAULT_CEILING = 10**6


@dataclass(frozen=True)
class PopulationPath:
    """Z_0..Z_n with log Z and a per-step flag for the log-space aggregate regime.

    ``z`` holds counts as floats (exact integers below the ceiling; above it
    the aggregate value exp(log Z)).
    """

    z: np.ndarray
    log_z: np.ndarray
    approx: np.ndarray
    env: EnvironmentPath

    @property
    def n(self) -> int:
        return self.z.size - 1

    @property
    def z0(self) -> float:
        return float(self.z[0])

    @property
    def survived(self) -> bool:
        return bool(self.z[-1] > 0)

    def to_csv(self, path) -> None:
        mu = conditional_means(self)
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["step", "Z", "mu", "flag"])
            for k in range(self.n + 1):
                wr.writerow([k, repr(float(self.z[k])), repr(float(mu[k])),
                             "aggregate-normal" if self.approx[k] else "exact"])


@dataclass(frozen=True)
class RescaledPath:
    """X_t = Z_{r + floor((n-r) t)} / mu_{r + floor((n-r) t)} on t = 0, 1/(n-r), ..., 1."""

    t: np.ndarray
    values: np.ndarray
    r: int

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["t", "X"])
            for t, x in zip(self.t, self.values):
                wr.writerow([repr(float(t)), repr(float(x))])


def _log(z):
    with np.errstate(divide="ignore"):
        return np.log(z)


def _step(kern, param, x, z, log_z, aggr, ceiling, rng):
    """One generation for a set of runs; returns (z, log_z, aggr_used, aggr_next)."""
    z_new = np.empty_like(z)
    log_new = np.empty_like(log_z)
    exact = ~aggr
    if exact.any():
        z_new[exact] = kern.sample_sum(param[exact], z[exact], rng)
        log_new[exact] = _log(z_new[exact])
    if aggr.any():
        m = np.exp(x[aggr])
        var = kern.eta(param[aggr]) * m * m + m - m * m
        sd = np.sqrt(np.maximum(var, 0.0) / (np.exp(log_z[aggr]) * m * m))
        log_new[aggr] = log_z[aggr] + x[aggr] + sd * rng.standard_normal(int(aggr.sum()))
        z_new[aggr] = np.exp(log_new[aggr])
    log_ceil = math.log(ceiling)
    nxt = log_new > log_ceil
    back = aggr & ~nxt
    if back.any():
        z_new[back] = np.rint(np.exp(log_new[back]))
        log_new[back] = _log(z_new[back])
    return z_new, log_new, aggr.copy(), nxt


@dataclass
class _Record:
    alive: np.ndarray
    x: np.ndarray
    signs: np.ndarray | None
    z: np.ndarray
    log_z: np.ndarray
    flag: np.ndarray


def _evolve(model: EnvironmentModel, n: int, size: int, z0: int, ceiling: float,
            rng: np.random.Generator, record: bool):
    """Run ``size`` independent (environment, population) pairs for n generations.

    Environments are drawn step by step for live runs only. Returns the
    indices alive at n and, if ``record``, the per-step records needed to
    rebuild their full paths.
    """
    kern = model.kernels
    alive = np.arange(size)
    z = np.full(size, float(z0))
    log_z = _log(z)
    aggr = log_z > math.log(ceiling)
    records = []
    if z0 == 0:
        alive = alive[:0]
    steps = 0
    for _ in range(n):
        if alive.size == 0:
            break
        steps += 1
        x, signs = sample_increments(model, alive.size, rng)
        param = model.params_from_increments(x)
        z, log_z, used, aggr = _step(kern, param, x, z, log_z, aggr, ceiling, rng)
        if record:
            records.append(_Record(alive, x, signs, z, log_z, used))
        keep = z > 0
        alive, z, log_z, aggr = alive[keep], z[keep], log_z[keep], aggr[keep]
    if steps < n:
        alive = alive[:0]
    return alive, records


def _rebuild(model, n, z0, idx, records):
    """Full environments and populations for runs ``idx`` (all alive at n)."""
    k = idx.size
    x = np.empty((k, n))
    signs = np.empty((k, n)) if model.increment.lattice_step is not None else None
    z = np.empty((k, n + 1))
    lz = np.empty((k, n + 1))
    fl = np.zeros((k, n + 1), dtype=bool)
    z[:, 0] = z0
    lz[:, 0] = math.log(z0) if z0 > 0 else -math.inf
    for j, rec in enumerate(records):
        pos = np.searchsorted(rec.alive, idx)
        x[:, j] = rec.x[pos]
        if signs is not None:
            signs[:, j] = rec.signs[pos]
        z[:, j + 1] = rec.z[pos]
        lz[:, j + 1] = rec.log_z[pos]
        fl[:, j + 1] = rec.flag[pos]
    env = EnvironmentBatch.from_increments(model, x, signs)
    return env, z, lz, fl


def simulate_population(env: EnvironmentPath, z0: int, rng: np.random.Generator,
                        ceiling: float = DEFAULT_CEILING) -> PopulationPath:
    """Z_0 = z0 and Z_k = sum of Z_{k-1} i.i.d. draws from Q_k.

    Above ``ceiling`` the process continues in log space,
    log Z_k = log Z_{k-1} + X_k + N(0, sigma^2(Q_k) / (Z_{k-1} m(Q_k)^2)),
    and those steps are flagged.
    """
    if z0 < 0:
        raise InvalidParameter("z0 must be >= 0")
    kern = env.kernels
    n = env.n
    z = np.zeros(n + 1)
    lz = np.full(n + 1, -math.inf)
    fl = np.zeros(n + 1, dtype=bool)
    z[0] = z0
    lz[0] = _log(float(z0))
    cur_z = np.array([float(z0)])
    cur_l = np.array([lz[0]])
    aggr = cur_l > math.log(ceiling)
    for k in range(n):
        if cur_z[0] == 0:
            break
        param = env.params[k:k + 1]
        x = env.increments[k:k + 1]
        cur_z, cur_l, used, aggr = _step(kern, param, x, cur_z, cur_l, aggr, ceiling, rng)
        z[k + 1], lz[k + 1], fl[k + 1] = cur_z[0], cur_l[0], used[0]
    return PopulationPath(z, lz, fl, env)


def simulate_population_batch(env: EnvironmentPath, z0: int, runs: int,
                              rng: np.random.Generator,
                              ceiling: float = DEFAULT_CEILING) -> np.ndarray:
    """Z_0..Z_n for ``runs`` independent populations in the same environment, shape (runs, n+1)."""
    if z0 < 0 or runs < 1:
        raise InvalidParameter("need z0 >= 0 and runs >= 1")
    kern = env.kernels
    z = np.zeros((runs, env.n + 1))
    z[:, 0] = z0
    alive = np.arange(runs) if z0 > 0 else np.arange(0)
    cur_z = np.full(alive.size, float(z0))
    cur_l = _log(cur_z)
    aggr = cur_l > math.log(ceiling)
    for k in range(env.n):
        if alive.size == 0:
            break
        param = np.repeat(env.params[k:k + 1], alive.size, axis=0)
        x = np.full(alive.size, env.increments[k])
        cur_z, cur_l, _, aggr = _step(kern, param, x, cur_z, cur_l, aggr, ceiling, rng)
        z[alive, k + 1] = cur_z
        keep = cur_z > 0
        alive, cur_z, cur_l, aggr = alive[keep], cur_z[keep], cur_l[keep], aggr[keep]
    return z


def simulate_on_batch(batch: EnvironmentBatch, z0: int, rng: np.random.Generator,
                      ceiling: float = DEFAULT_CEILING) -> tuple[np.ndarray, np.ndarray]:
    """One population per environment row; returns (Z_n, log Z_n) per row."""
    if z0 < 0:
        raise InvalidParameter("need z0 >= 0")
    kern = family(batch.family)
    z_end = np.zeros(batch.size)
    log_end = np.full(batch.size, -np.inf)
    alive = np.arange(batch.size) if z0 > 0 else np.arange(0)
    cur_z = np.full(alive.size, float(z0))
    cur_l = _log(cur_z)
    aggr = cur_l > math.log(ceiling)
    for k in range(batch.n):
        if alive.size == 0:
            break
        cur_z, cur_l, _, aggr = _step(kern, batch.params[alive, k], batch.increments[alive, k],
                                      cur_z, cur_l, aggr, ceiling, rng)
        keep = cur_z > 0
        alive, cur_z, cur_l, aggr = alive[keep], cur_z[keep], cur_l[keep], aggr[keep]
    z_end[alive] = cur_z
    log_end[alive] = cur_l
    return z_end, log_end


def conditional_means(path: PopulationPath) -> np.ndarray:
    """mu_k = Z_0 e^{S_k}."""
    return path.z0 * np.exp(path.env.partial_sums)


def rescaled_path(path: PopulationPath, r: int) -> RescaledPath:
    """Z_k / mu_k for k = r..n, computed in log space to survive large S."""
    n = path.n
    if not 0 <= r <= n:
        raise InvalidParameter("need 0 <= r <= n")
    if path.z0 < 1:
        raise InvalidParameter("rescaling needs Z_0 >= 1")
    k = np.arange(r, n + 1)
    log_mu = math.log(path.z0) + path.env.partial_sums[k]
    vals = np.exp(path.log_z[k] - log_mu)
    t = np.linspace(0.0, 1.0, n - r + 1) if n > r else np.zeros(1)
    return RescaledPath(t, vals, r)


def rb_survival_samples(model: EnvironmentModel, n: int, N: int, rng: np.random.Generator,
                        z0: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Per-environment quenched survival P{Z_n > 0 | Pi} and the indicator of L_n >= 0.

    Both come from the same environments, which is what a correlated ratio needs.
    """
    rows = max(1, min(DEFAULT_CHUNK, 4_000_000 // max(n, 1)))

    def work(size, child):
        batch = sample_environment_batch(model, size, n, child)
        r = survival_batch(batch)
        if z0 != 1:
            r = -np.expm1(z0 * np.log1p(-r))
        ok = batch.partial_sums[:, 1:].min(axis=1) >= 0 if n else np.ones(size, bool)
        return r, ok.astype(float)

    parts = map_chunks(work, N, rng, rows)
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def estimate_survival(model: EnvironmentModel, n: int, N: int, rng: np.random.Generator,
                      mode: str = "rao_blackwell", z0: int = 1,
                      ceiling: float = DEFAULT_CEILING, level: float = 0.95) -> Estimate:
    """Annealed P{Z_n > 0}.

    ``naive``: fraction of simulated populations alive at n (Wilson interval).
    ``rao_blackwell``: mean over environments of the exact quenched survival
    probability, which has the same expectation and lower variance.
    """
    if n < 1 or N < 1:
        raise InvalidParameter("need n, N >= 1")
    prov = provenance(rng)
    if mode == "rao_blackwell":
        r, _ = rb_survival_samples(model, n, N, rng, z0)
        return mean_estimate(r, "rao-blackwell", level, prov)
    if mode != "naive":
        raise InvalidParameter(f"unknown survival mode {mode!r}")

    def work(size, child):
        alive, _ = _evolve(model, n, size, z0, ceiling, child, record=False)
        return alive.size

    alive = sum(map_chunks(work, N, rng))
    return wilson_interval(alive, N, level, prov)


@dataclass(frozen=True)
class ConditionedBatch:
    """Accepted (environment, population) pairs with Z_n > 0 and the attempt count."""

    env: EnvironmentBatch
    z: np.ndarray
    log_z: np.ndarray
    approx: np.ndarray
    attempts: int

    @property
    def size(self) -> int:
        return self.env.size

    @property
    def rejections(self) -> int:
        return self.attempts - self.size

    def path(self, i: int) -> PopulationPath:
        return PopulationPath(self.z[i], self.log_z[i], self.approx[i], self.env.path(i))


@dataclass(frozen=True)
class ConditionedSample:
    env: EnvironmentPath
    population: PopulationPath
    rejections: int


def sample_conditioned_batch(model: EnvironmentModel, n: int, count: int,
                             rng: np.random.Generator, z0: int = 1,
                             ceiling: float = DEFAULT_CEILING, budget: int = 10**7,
                             round_size: int = DEFAULT_CHUNK) -> ConditionedBatch:
    """``count`` pairs drawn by plain rejection on {Z_n > 0}.

    Attempts run in fixed-size rounds, each with its own spawned stream; the
    first ``count`` survivors in (round, index) order are kept, so the output
    depends only on the seed.
    """
    if n < 1 or count < 1:
        raise InvalidParameter("need n, count >= 1")
    got = []
    need = count
    attempts = 0
    while need > 0:
        if attempts >= budget:
            acc = (count - need) / max(attempts, 1)
            raise BudgetExceeded(
                f"rejection budget {budget} exhausted with {count - need} of {count} accepted",
                partial={"attempts": attempts, "accepted": count - need, "acceptance": acc})
        size = min(round_size, budget - attempts)
        child = rng.spawn(1)[0]
        alive, records = _evolve(model, n, size, z0, ceiling, child, record=True)
        if alive.size > need:
            alive = alive[:need]
            attempts += int(alive[-1]) + 1
        else:
            attempts += size
        if alive.size:
            got.append(_rebuild(model, n, z0, alive, records))
            need -= alive.size
    env = EnvironmentBatch(model.family, *(np.concatenate([getattr(g[0], f) for g in got])
                                           for f in ("params", "increments", "partial_sums")))
    return ConditionedBatch(env, np.concatenate([g[1] for g in got]),
                            np.concatenate([g[2] for g in got]),
                            np.concatenate([g[3] for g in got]), attempts)


def sample_conditioned_on_survival(model: EnvironmentModel, n: int, rng: np.random.Generator,
                                   z0: int = 1, ceiling: float = DEFAULT_CEILING,
                                   budget: int = 10**7,
                                   round_size: int = 1024) -> ConditionedSample:
    """One (environment, population) pair given Z_n > 0, plus the number of rejections."""
    b = sample_conditioned_batch(model, n, 1, rng, z0, ceiling, budget, round_size)
    p = b.path(0)
    return ConditionedSample(p.env, p, b.rejections)
