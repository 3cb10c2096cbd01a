"""Shared statistical utilities: estimates with intervals, weighted ECDFs,
two-sample KS, log-log slopes and a ratio bootstrap."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats as sps

from .errors import DegenerateSample, InvalidParameter
from .rng import Sums


@dataclass(frozen=True)
class Estimate:
    """Point value with a confidence interval, sample size and RNG provenance."""

    value: float
    ci_low: float
    ci_high: float
    n: int
    method: str
    stderr: float = float("nan")
    level: float = 0.95
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n < 1:
            raise InvalidParameter("an estimate needs N >= 1")
        if not (self.ci_low <= self.value <= self.ci_high):
            raise InvalidParameter(
                f"interval [{self.ci_low}, {self.ci_high}] does not contain {self.value}")

    def contains(self, x: float) -> bool:
        return self.ci_low <= x <= self.ci_high

    def within(self, x: float, sigmas: float = 4.0) -> bool:
        """True when ``x`` lies within ``sigmas`` standard errors of the value."""
        return abs(x - self.value) <= sigmas * self.stderr

    def to_dict(self) -> dict:
        return asdict(self)


def z_value(level: float) -> float:
    if not 0 < level < 1:
        raise InvalidParameter("level must be in (0, 1)")
    return float(sps.norm.ppf(0.5 + level / 2))


def normal_estimate(value: float, stderr: float, n: int, method: str,
                    level: float = 0.95, provenance: dict | None = None) -> Estimate:
    half = z_value(level) * stderr
    return Estimate(float(value), float(value - half), float(value + half), int(n), method,
                    float(stderr), level, provenance or {})


def mean_estimate(values, method: str = "mean", level: float = 0.95,
                  provenance: dict | None = None) -> Estimate:
    s = values if isinstance(values, Sums) else Sums.of(values)
    return normal_estimate(s.mean, s.stderr if s.count > 1 else 0.0, s.count, method, level,
                           provenance)


def wilson_interval(successes: int, trials: int, level: float = 0.95,
                    provenance: dict | None = None) -> Estimate:
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        raise InvalidParameter("wilson_interval needs trials >= 1")
    if not 0 <= successes <= trials:
        raise InvalidParameter("successes must lie in [0, trials]")
    z = z_value(level)
    p = successes / trials
    denom = 1 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z / denom * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials))
    lo = 0.0 if successes == 0 else max(0.0, center - half)
    hi = 1.0 if successes == trials else min(1.0, center + half)
    lo, hi = min(lo, p), max(hi, p)
    return Estimate(p, lo, hi, trials, "wilson", math.sqrt(p * (1 - p) / trials), level,
                    provenance or {})


def effective_size(weights) -> float:
    w = np.asarray(weights, dtype=float)
    s = w.sum()
    if s <= 0:
        raise DegenerateSample("zero total weight")
    return float(s * s / np.dot(w, w))


def weighted_ecdf(values, weights=None):
    """Distinct sorted values and the weighted ECDF evaluated at them."""
    x = np.asarray(values, dtype=float).ravel()
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float).ravel()
    if x.size == 0:
        raise InvalidParameter("empty sample")
    if np.any(w < 0):
        raise InvalidParameter("weights must be nonnegative")
    total = w.sum()
    if total <= 0:
        raise DegenerateSample("zero total weight")
    order = np.argsort(x, kind="stable")
    xs, ws = x[order], w[order]
    uniq, start = np.unique(xs, return_index=True)
    cum = np.cumsum(ws)
    last = np.r_[start[1:], xs.size] - 1
    return uniq, cum[last] / total


def _ecdf_at(values, weights, points):
    uniq, F = weighted_ecdf(values, weights)
    idx = np.searchsorted(uniq, points, side="right") - 1
    return np.where(idx >= 0, F[np.clip(idx, 0, None)], 0.0)


def ks_critical(alpha: float) -> float:
    """Asymptotic two-sample KS coefficient c(alpha) = sqrt(-ln(alpha/2)/2)."""
    return math.sqrt(-0.5 * math.log(alpha / 2))


@dataclass(frozen=True)
class KSResult:
    statistic: float
    threshold: float
    alpha: float
    n_eff_a: float
    n_eff_b: float

    @property
    def passed(self) -> bool:
        return self.statistic <= self.threshold

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d


def ks_two_sample(a, b, weights_a=None, weights_b=None, alpha: float = 0.01) -> KSResult:
    """Sup-distance between two weighted ECDFs with an effective-size threshold.

    With unit weights this is the classical two-sample statistic; the threshold
    ``c(alpha) * sqrt((na + nb) / (na * nb))`` uses effective sizes
    ``(sum w)^2 / sum w^2``.
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    wa = np.ones_like(a) if weights_a is None else np.asarray(weights_a, dtype=float).ravel()
    wb = np.ones_like(b) if weights_b is None else np.asarray(weights_b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise InvalidParameter("both samples must be nonempty")
    pts = np.union1d(a, b)
    d = float(np.max(np.abs(_ecdf_at(a, wa, pts) - _ecdf_at(b, wb, pts))))
    na, nb = effective_size(wa), effective_size(wb)
    thr = ks_critical(alpha) * math.sqrt((na + nb) / (na * nb))
    return KSResult(d, thr, alpha, na, nb)


def loglog_slope(n: Sequence[float], y: Sequence[float]) -> tuple[float, float]:
    """Least-squares slope of log y against log n, with its standard error."""
    n = np.asarray(n, dtype=float)
    y = np.asarray(y, dtype=float)
    if n.size < 3:
        raise InvalidParameter("need at least 3 points")
    if np.unique(n).size != n.size:
        raise InvalidParameter("abscissae must be distinct")
    if np.any(y <= 0) or np.any(n <= 0):
        raise InvalidParameter("log-log fit needs positive values")
    fit = sps.linregress(np.log(n), np.log(y))
    return float(fit.slope), float(fit.stderr)


def ratio_estimate(num, den, level: float = 0.95, method: str = "delta",
                   rng: np.random.Generator | None = None, resamples: int = 1000,
                   provenance: dict | None = None) -> Estimate:
    """Ratio of means of paired per-draw values, with delta-method or bootstrap CI."""
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    n = num.size
    mden = den.mean()
    if mden <= 0:
        raise DegenerateSample("ratio denominator has zero mean")
    r = num.mean() / mden
    resid = num - r * den
    se = float(np.sqrt(resid.var(ddof=1) / n) / mden) if n > 1 else float("inf")
    if method == "delta":
        return normal_estimate(r, se, n, "ratio-delta", level, provenance)
    if method != "bootstrap":
        raise InvalidParameter(f"unknown ratio CI method {method!r}")
    if rng is None:
        raise InvalidParameter("bootstrap needs an rng")
    reps = np.empty(resamples)
    for i in range(resamples):
        idx = rng.integers(0, n, n)
        d = den[idx].mean()
        reps[i] = num[idx].mean() / d if d > 0 else np.nan
    reps = reps[np.isfinite(reps)]
    lo, hi = np.quantile(reps, [(1 - level) / 2, (1 + level) / 2])
    return Estimate(float(r), float(min(lo, r)), float(max(hi, r)), n, "ratio-bootstrap", se,
                    level, provenance or {})
