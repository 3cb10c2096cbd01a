"""Parametric offspring laws and their analytic functionals.

Four families are supported. Each is implemented once as a set of vectorized
kernels operating on a parameter array (mean ``m`` for Poisson and geometric,
``p = P{2 children}`` for binary, a probability vector for bounded laws), so
the same code serves a single :class:`OffspringLaw` and a whole batch of
environments.

All survival-type quantities are computed in the variable ``r = 1 - s``:
``survival(r) = 1 - f(1 - r)`` and ``g(r) = 1/(1 - f(s)) - 1/(m (1 - s))`` are
evaluated without subtracting nearly equal numbers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

from .errors import InvalidParameter, PopulationOverflow

MAX_COUNT = 2**62


def _expm1_plus(u):
    """u + expm1(-u) >= 0, accurate for small u."""
    u = np.asarray(u, dtype=float)
    out = np.empty_like(u)
    small = u < 1e-2
    us = u[small]
    # alternating series u^2/2 - u^3/6 + ...; 8 terms are exact to 1e-17 relative
    term = us * us / 2
    acc = term.copy()
    for k in range(3, 11):
        term = -term * us / k
        acc += term
    out[small] = acc
    ub = u[~small]
    out[~small] = ub + np.expm1(-ub)
    return out


class Poisson:
    name = "poisson"

    @staticmethod
    def check(m):
        if not np.all(np.asarray(m) > 0) or not np.all(np.isfinite(m)):
            raise InvalidParameter("Poisson mean must be finite and > 0")

    @staticmethod
    def mean(m):
        return np.asarray(m, dtype=float)

    @staticmethod
    def pgf(m, s):
        return np.exp(m * (np.asarray(s) - 1.0))

    @staticmethod
    def survival(m, r):
        with np.errstate(invalid="ignore"):
            out = -np.expm1(-m * r)
        return np.where(r == 0, 0.0, out)

    @staticmethod
    def g(m, r):
        r = np.asarray(r, dtype=float)
        u = np.broadcast_to(m * r, np.broadcast(m, r).shape).astype(float)
        pos = u > 0
        out = np.full(u.shape, 0.5)
        up = u[pos]
        phi = -np.expm1(-up)
        out[pos] = _expm1_plus(up) / (phi * up)
        return out

    @staticmethod
    def eta(m):
        return np.ones_like(np.asarray(m, dtype=float))

    @staticmethod
    def zeta(m, a: int):
        # y^2 = y(y-1) + y and the Poisson size-biasing identities
        # E[Y(Y-1); Y >= a] = m^2 P{Y >= a-2},  E[Y; Y >= a] = m P{Y >= a-1}
        m = np.asarray(m, dtype=float)
        tail2 = sps.poisson.sf(a - 3, m) if a >= 2 else np.ones_like(m)
        tail1 = sps.poisson.sf(a - 2, m) if a >= 1 else np.ones_like(m)
        return tail2 + tail1 / m

    @staticmethod
    def prob_one(m):
        return m * np.exp(-m)

    @staticmethod
    def sample_sum(m, z, rng):
        return np.asarray(rng.poisson(m * z), dtype=float)

    @staticmethod
    def from_log_mean(x):
        return np.exp(x)


class Geometric:
    """Geometric law on {0, 1, ...} with mean m: Q{k} = p (1-p)^k, p = 1/(1+m).

    Its pgf 1/(1 + m(1-s)) is linear fractional.
    """

    name = "geometric"

    @staticmethod
    def check(m):
        if not np.all(np.asarray(m) > 0) or not np.all(np.isfinite(m)):
            raise InvalidParameter("geometric mean must be finite and > 0")

    @staticmethod
    def mean(m):
        return np.asarray(m, dtype=float)

    @staticmethod
    def pgf(m, s):
        return 1.0 / (1.0 + m * (1.0 - np.asarray(s)))

    @staticmethod
    def survival(m, r):
        mr = m * np.asarray(r, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = 1.0 / (1.0 + 1.0 / mr)
        return np.where(mr == 0, 0.0, out)

    @staticmethod
    def g(m, r):
        return np.ones(np.broadcast(m, r).shape)

    @staticmethod
    def eta(m):
        return np.full_like(np.asarray(m, dtype=float), 2.0)

    @staticmethod
    def zeta(m, a: int):
        # memorylessness: E[Y^2; Y >= a] = q^a E[(a + Y)^2], E Y^2 = m + 2 m^2
        m = np.asarray(m, dtype=float)
        q = m / (1.0 + m)
        return q**a * (a * a + 2 * a * m + m + 2 * m * m) / (m * m)

    @staticmethod
    def prob_one(m):
        return m / (1.0 + m) ** 2

    @staticmethod
    def sample_sum(m, z, rng):
        m = np.asarray(m, dtype=float)
        z = np.asarray(z, dtype=float)
        out = np.zeros(np.broadcast(m, z).shape)
        m, z = np.broadcast_to(m, out.shape), np.broadcast_to(z, out.shape)
        pos = z > 0
        out[pos] = rng.negative_binomial(z[pos], 1.0 / (1.0 + m[pos]))
        return out

    @staticmethod
    def from_log_mean(x):
        return np.exp(x)


class Binary:
    """Two children with probability p, none otherwise; mean 2p."""

    name = "binary"

    @staticmethod
    def check(p):
        p = np.asarray(p)
        if not np.all((p > 0) & (p <= 1)):
            raise InvalidParameter("binary p must lie in (0, 1] (mean > 0)")

    @staticmethod
    def mean(p):
        return 2.0 * np.asarray(p, dtype=float)

    @staticmethod
    def pgf(p, s):
        s = np.asarray(s)
        return (1.0 - p) + p * s * s

    @staticmethod
    def survival(p, r):
        r = np.asarray(r, dtype=float)
        return p * r * (2.0 - r)

    @staticmethod
    def g(p, r):
        return 1.0 / (2.0 * p * (2.0 - np.asarray(r, dtype=float)))

    @staticmethod
    def eta(p):
        return 1.0 / (2.0 * np.asarray(p, dtype=float))

    @staticmethod
    def zeta(p, a: int):
        p = np.asarray(p, dtype=float)
        return 1.0 / p if a <= 2 else np.zeros_like(p)

    @staticmethod
    def prob_one(p):
        return np.zeros_like(np.asarray(p, dtype=float))

    @staticmethod
    def sample_sum(p, z, rng):
        return 2.0 * rng.binomial(np.asarray(z).astype(np.int64), p)

    @staticmethod
    def from_log_mean(x):
        # exp(log 2) may round above 2
        return np.minimum(np.exp(x) / 2.0, 1.0)


class Bounded:
    """Arbitrary law on {0, ..., a*}; the parameter is the probability vector
    (last axis)."""

    name = "bounded"

    @staticmethod
    def check(q):
        q = np.asarray(q, dtype=float)
        if q.shape[-1] < 1 or np.any(q < 0):
            raise InvalidParameter("bounded law needs a nonnegative probability vector")
        if np.any(np.abs(q.sum(axis=-1) - 1.0) > 1e-12):
            raise InvalidParameter("bounded law probabilities must sum to 1 (tol 1e-12)")
        if np.any(Bounded.mean(q) <= 0):
            raise InvalidParameter("bounded law must have positive mean")

    @staticmethod
    def _y(q):
        return np.arange(np.shape(q)[-1], dtype=float)

    @staticmethod
    def mean(q):
        return np.asarray(q, dtype=float) @ Bounded._y(q)

    @staticmethod
    def pgf(q, s):
        q = np.asarray(q, dtype=float)
        s = np.asarray(s, dtype=float)[..., None]
        return np.sum(q * s ** Bounded._y(q), axis=-1)

    @staticmethod
    def survival(q, r):
        q = np.asarray(q, dtype=float)
        y = Bounded._y(q)
        r = np.asarray(r, dtype=float)[..., None]
        with np.errstate(divide="ignore", invalid="ignore"):
            lg = np.log1p(-r)
            terms = -np.expm1(np.where(y > 0, y * lg, 0.0))
        return np.sum(q * terms, axis=-1)

    @staticmethod
    def _defect(y, r):
        """(1-r)^y - 1 + y r >= 0, elementwise; series when y r is small."""
        yr = y * r
        with np.errstate(divide="ignore", invalid="ignore"):
            direct = np.expm1(np.where(y > 0, y * np.log1p(-np.minimum(r, 1.0)), 0.0)) + yr
        # binomial series sum_{j>=2} C(y,j) (-r)^j, exact for integer y
        ser = np.zeros(np.broadcast(y, r).shape)
        term = np.ones_like(ser)
        rr = np.broadcast_to(r, ser.shape)
        yy = np.broadcast_to(y, ser.shape)
        for j in range(1, int(np.max(y)) + 1 if np.size(y) else 1):
            term = term * (yy - (j - 1)) / j * (-rr)
            if j >= 2:
                ser = ser + term
        return np.where(yr < 0.5, ser, direct)

    @staticmethod
    def g(q, r):
        q = np.asarray(q, dtype=float)
        r = np.asarray(r, dtype=float)
        y = Bounded._y(q)
        m = Bounded.mean(q)
        phi = Bounded.survival(q, r)
        num = np.sum(q * Bounded._defect(y, r[..., None]), axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = num / (phi * m * r)
        return np.where(r == 0, Bounded.eta(q) / 2.0, out)

    @staticmethod
    def eta(q):
        q = np.asarray(q, dtype=float)
        y = Bounded._y(q)
        return (q @ (y * (y - 1))) / Bounded.mean(q) / Bounded.mean(q)

    @staticmethod
    def zeta(q, a: int):
        q = np.asarray(q, dtype=float)
        y = Bounded._y(q)
        w = np.where(y >= a, y * y, 0.0)
        return (q @ w) / Bounded.mean(q) / Bounded.mean(q)

    @staticmethod
    def prob_one(q):
        q = np.asarray(q, dtype=float)
        return q[..., 1] if q.shape[-1] > 1 else np.zeros(q.shape[:-1])

    @staticmethod
    def sample_sum(q, z, rng):
        q = np.asarray(q, dtype=float)
        z = np.asarray(z).astype(np.int64)
        counts = rng.multinomial(z, q)
        return (counts @ Bounded._y(q)).astype(float)

    @staticmethod
    def tilt(base, x, iters: int = 200):
        """Exponential tilts of ``base`` whose means equal exp(x).

        Q_lam{y} ~ base{y} e^{lam y}; lam is found by bisection, vectorized over x.
        """
        base = np.asarray(base, dtype=float)
        y = Bounded._y(base)
        x = np.asarray(x, dtype=float)
        support = y[base > 0]
        lo_m, hi_m = support.min(), support.max()
        target = np.exp(x)
        if np.any(target <= lo_m) or np.any(target >= hi_m):
            raise InvalidParameter(
                f"tilted bounded law needs exp(X) strictly inside ({lo_m}, {hi_m})")
        logb = np.where(base > 0, np.log(np.where(base > 0, base, 1.0)), -np.inf)

        def tilted(lam):
            a = logb + lam[..., None] * y
            a = a - a.max(axis=-1, keepdims=True)
            w = np.exp(a)
            return w / w.sum(axis=-1, keepdims=True)

        lo = np.full(x.shape, -60.0)
        hi = np.full(x.shape, 60.0)
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            up = tilted(mid) @ y < target
            lo = np.where(up, mid, lo)
            hi = np.where(up, hi, mid)
            if np.all(hi - lo < 1e-15 * np.maximum(1.0, np.abs(mid))):
                break
        q = tilted(0.5 * (lo + hi))
        q[..., -1] = 1.0 - q[..., :-1].sum(axis=-1)
        return np.clip(q, 0.0, 1.0)


FAMILIES = {f.name: f for f in (Poisson, Geometric, Binary, Bounded)}


def family(name: str):
    try:
        return FAMILIES[name]
    except KeyError:
        raise InvalidParameter(f"unknown offspring family {name!r}") from None


@dataclass(frozen=True)
class OffspringLaw:
    """A reproduction law from one of the supported families.

    ``param`` is the mean for ``poisson``/``geometric``, the probability of two
    children for ``binary`` and a probability tuple over {0..a*} for ``bounded``.
    """

    family: str
    param: float | tuple

    def __post_init__(self):
        fam = family(self.family)
        if self.family == "bounded":
            object.__setattr__(self, "param", tuple(float(v) for v in self.param))
            q = np.asarray(self.param)
            if q.size < 1 or np.any(q < 0) or abs(q.sum() - 1.0) > 1e-12:
                raise InvalidParameter("bounded law probabilities must be >= 0 and sum to 1")
        elif self.family == "binary":
            p = float(self.param)
            if not 0.0 <= p <= 1.0:
                raise InvalidParameter("binary p must lie in [0, 1]")
            object.__setattr__(self, "param", p)
        else:
            fam.check(float(self.param))
            object.__setattr__(self, "param", float(self.param))

    @classmethod
    def poisson(cls, m: float) -> "OffspringLaw":
        return cls("poisson", m)

    @classmethod
    def geometric(cls, m: float) -> "OffspringLaw":
        return cls("geometric", m)

    @classmethod
    def binary(cls, p: float) -> "OffspringLaw":
        return cls("binary", p)

    @classmethod
    def bounded(cls, probs) -> "OffspringLaw":
        return cls("bounded", tuple(probs))

    @property
    def kernels(self):
        return family(self.family)

    @property
    def p(self):
        return np.asarray(self.param, dtype=float)

    def _positive_mean(self):
        if mean(self) <= 0:
            raise InvalidParameter("law has zero mean")

    def pmf(self, y: int) -> float:
        if y < 0:
            return 0.0
        if self.family == "poisson":
            return float(sps.poisson.pmf(y, self.param))
        if self.family == "geometric":
            m = self.param
            return float((1 / (1 + m)) * (m / (1 + m)) ** y)
        if self.family == "binary":
            return {0: 1 - self.param, 2: self.param}.get(y, 0.0)
        return self.param[y] if y < len(self.param) else 0.0


def mean(law: OffspringLaw) -> float:
    return float(law.kernels.mean(law.p))


def pgf_eval(law: OffspringLaw, s: float) -> float:
    if not 0.0 <= s <= 1.0:
        raise InvalidParameter("pgf argument must lie in [0, 1]")
    if s == 1.0:
        return 1.0
    return float(law.kernels.pgf(law.p, s))


def survival_map(law: OffspringLaw, r: float) -> float:
    """1 - f(1 - r), computed without cancellation."""
    if not 0.0 <= r <= 1.0:
        raise InvalidParameter("survival_map argument must lie in [0, 1]")
    return float(law.kernels.survival(law.p, r))


def eta(law: OffspringLaw) -> float:
    """Standardized second factorial moment f''(1) / m^2."""
    law._positive_mean()
    return float(law.kernels.eta(law.p))


def zeta(law: OffspringLaw, a: int) -> float:
    """Standardized truncated second moment sum_{y >= a} y^2 Q{y} / m^2."""
    if a < 0:
        raise InvalidParameter("a must be >= 0")
    law._positive_mean()
    return float(law.kernels.zeta(law.p, int(a)))


def variance(law: OffspringLaw) -> float:
    m = mean(law)
    return eta(law) * m * m + m - m * m


def prob_one(law: OffspringLaw) -> float:
    return float(law.kernels.prob_one(law.p))


def g_eval(law: OffspringLaw, s: float) -> float:
    """g(s) = 1/(1 - f(s)) - 1/(m (1 - s)); the s = 1 value is the limit eta/2."""
    if not 0.0 <= s <= 1.0:
        raise InvalidParameter("g argument must lie in [0, 1]")
    law._positive_mean()
    return float(law.kernels.g(law.p, 1.0 - s))


def g_eval_r(law: OffspringLaw, r: float) -> float:
    """g expressed in r = 1 - s (preferred near s = 1)."""
    law._positive_mean()
    return float(law.kernels.g(law.p, r))


def sample_total_offspring(law: OffspringLaw, parents: int, rng: np.random.Generator) -> int:
    """One draw of xi_1 + ... + xi_parents from the aggregate law."""
    if parents < 0:
        raise InvalidParameter("parents must be >= 0")
    if parents == 0:
        return 0
    m = mean(law)
    if parents * m > MAX_COUNT / 4:
        raise PopulationOverflow(
            f"expected offspring {parents * m:.3g} exceeds the count ceiling",
            partial={"parents": parents, "mean": m})
    out = law.kernels.sample_sum(law.p, np.asarray(parents), rng)
    val = int(np.asarray(out).item())
    if val > MAX_COUNT:
        raise PopulationOverflow("offspring count exceeds the count ceiling",
                                 partial={"parents": parents, "draw": val})
    return val


def naive_total_offspring(law: OffspringLaw, parents: int, rng: np.random.Generator) -> int:
    """Per-individual reference sampler (O(parents)); used to check the aggregate one."""
    if parents == 0:
        return 0
    if law.family == "poisson":
        return int(rng.poisson(law.param, parents).sum())
    if law.family == "geometric":
        return int(rng.geometric(1 / (1 + law.param), parents).sum() - parents)
    if law.family == "binary":
        return int(2 * (rng.random(parents) < law.param).sum())
    q = np.asarray(law.param)
    return int(rng.choice(q.size, size=parents, p=q).sum())
