"""I.i.d. random environments and their associated random walks."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import InvalidParameter
from .offspring import OffspringLaw, family

LOG2 = math.log(2.0)

INCREMENT_KINDS = ("two_point", "gaussian", "pareto", "constant")


@dataclass(frozen=True)
class IncrementLaw:
    """Law of X = log m(Q).

    ``two_point``: +-c with probability 1/2 each; ``gaussian``: N(0, sigma^2);
    ``pareto``: symmetric, |X| Lomax with tail index ``alpha`` and ``scale``;
    ``constant``: X = value a.s. (a degenerate walk, only for fixed-environment
    fixtures; fluctuation estimators reject it).
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in INCREMENT_KINDS:
            raise InvalidParameter(f"unknown increment kind {self.kind!r}")
        p = dict(self.params)
        if self.kind == "two_point":
            p.setdefault("c", 1.0)
            if not p["c"] > 0:
                raise InvalidParameter("two_point needs c > 0")
        elif self.kind == "gaussian":
            p.setdefault("sigma", 1.0)
            if not p["sigma"] > 0:
                raise InvalidParameter("gaussian needs sigma > 0")
        elif self.kind == "pareto":
            p.setdefault("alpha", 1.0)
            p.setdefault("scale", 1.0)
            if not (0 < p["alpha"] < 2) or not p["scale"] > 0:
                raise InvalidParameter("pareto needs alpha in (0, 2) and scale > 0")
        else:
            p.setdefault("value", 0.0)
        object.__setattr__(self, "params", {k: float(v) for k, v in p.items()})

    @classmethod
    def two_point(cls, c: float = 1.0):
        return cls("two_point", {"c": c})

    @classmethod
    def gaussian(cls, sigma: float = 1.0):
        return cls("gaussian", {"sigma": sigma})

    @classmethod
    def pareto(cls, alpha: float, scale: float = 1.0):
        return cls("pareto", {"alpha": alpha, "scale": scale})

    @classmethod
    def constant(cls, value: float):
        return cls("constant", {"value": value})

    @property
    def degenerate(self) -> bool:
        return self.kind == "constant"

    @property
    def symmetric(self) -> bool:
        return self.kind != "constant"

    @property
    def rho(self) -> float | None:
        """Spitzer constant when known analytically (all symmetric laws: 1/2)."""
        return 0.5 if self.symmetric else None

    @property
    def lattice_step(self) -> float | None:
        return self.params["c"] if self.kind == "two_point" else None

    @property
    def sup(self) -> float:
        if self.kind == "two_point":
            return self.params["c"]
        if self.kind == "constant":
            return self.params["value"]
        return math.inf

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        p = self.params
        if self.kind == "two_point":
            return p["c"] * self.sample_signs(rng, size)
        if self.kind == "gaussian":
            return p["sigma"] * rng.standard_normal(size)
        if self.kind == "pareto":
            u = rng.random(size)
            sign = np.where(rng.random(size) < 0.5, -1.0, 1.0)
            return sign * p["scale"] * np.expm1(-np.log1p(-u) / p["alpha"])
        return np.full(size, p["value"])

    @staticmethod
    def sample_signs(rng, size) -> np.ndarray:
        return np.where(rng.random(size) < 0.5, -1.0, 1.0)

    def to_json(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params)}

    @classmethod
    def from_json(cls, obj: dict) -> "IncrementLaw":
        return cls(obj["kind"], dict(obj.get("params", {})))


@dataclass(frozen=True)
class EnvironmentModel:
    """Offspring family + law of X, with the map X -> law parameter.

    Poisson and geometric laws take mean e^X; binary laws take p = e^X / 2
    (so X <= log 2 is required); bounded laws are exponential tilts of
    ``base`` with mean e^X.
    """

    family: str
    increment: IncrementLaw
    base: tuple | None = None
    seed_policy: str = "spawn"

    def __post_init__(self):
        family(self.family)
        if self.family == "binary" and self.increment.sup > LOG2 + 1e-15:
            raise InvalidParameter(
                "binary environments need X <= log 2 almost surely; "
                f"{self.increment.kind} increments can exceed it")
        if self.family == "bounded":
            if self.base is None:
                raise InvalidParameter("bounded environments need a base probability vector")
            object.__setattr__(self, "base", tuple(float(v) for v in self.base))
            OffspringLaw.bounded(self.base)
            if self.increment.kind not in ("two_point", "constant"):
                raise InvalidParameter("bounded environments need bounded increments")
            # validates that the tilts exist
            self.params_from_increments(np.array([-self.increment.sup, self.increment.sup]))

    @classmethod
    def default(cls) -> "EnvironmentModel":
        """Geometric laws with X = +-log 2: every quenched quantity has a closed form."""
        return cls("geometric", IncrementLaw.two_point(LOG2))

    @property
    def kernels(self):
        return family(self.family)

    @property
    def rho(self):
        return self.increment.rho

    def require_walk(self) -> None:
        if self.increment.degenerate:
            raise InvalidParameter("this operation needs a nondegenerate (oscillating) walk")

    def params_from_increments(self, x):
        x = np.asarray(x, dtype=float)
        if self.family == "binary" and np.any(x > LOG2):
            raise InvalidParameter("binary environment sampled X > log 2")
        if self.family == "bounded":
            return family("bounded").tilt(self.base, x)
        return self.kernels.from_log_mean(x)

    def exact_v(self, x):
        """Closed-form renewal function when available (lattice two-point walks)."""
        c = self.increment.lattice_step
        if c is None:
            return None
        x = np.asarray(x, dtype=float)
        k = np.floor(x / c + 1e-9)
        return np.where(x < 0, 0.0, k + 1.0)

    def to_json(self) -> dict:
        out: dict[str, Any] = {"family": self.family, "increment": self.increment.to_json(),
                               "seed-policy": self.seed_policy}
        if self.base is not None:
            out["base"] = list(self.base)
        return out

    @classmethod
    def from_json(cls, obj) -> "EnvironmentModel":
        if isinstance(obj, str):
            obj = json.loads(obj)
        return cls(obj["family"], IncrementLaw.from_json(obj["increment"]),
                   tuple(obj["base"]) if obj.get("base") is not None else None,
                   obj.get("seed-policy", obj.get("seed_policy", "spawn")))


@dataclass(frozen=True)
class EnvironmentPath:
    """Realized environment Q_1..Q_n with increments X_k and partial sums S_0..S_n."""

    family: str
    params: np.ndarray
    increments: np.ndarray
    partial_sums: np.ndarray

    @property
    def n(self) -> int:
        return int(self.increments.shape[-1])

    @property
    def laws(self) -> list[OffspringLaw]:
        if self.family == "bounded":
            return [OffspringLaw.bounded(q) for q in self.params]
        return [OffspringLaw(self.family, float(v)) for v in self.params]

    @property
    def kernels(self):
        return family(self.family)

    @classmethod
    def from_increments(cls, model: EnvironmentModel, x, signs=None) -> "EnvironmentPath":
        x = np.asarray(x, dtype=float)
        params = model.params_from_increments(x)
        return cls(model.family, params, x, _partial_sums(x, model, signs))

    @classmethod
    def from_laws(cls, laws) -> "EnvironmentPath":
        laws = list(laws)
        if not laws:
            raise InvalidParameter("from_laws needs at least one law; use empty() for n = 0")
        fams = {q.family for q in laws}
        if len(fams) != 1:
            raise InvalidParameter("an environment path holds a single family")
        fam = fams.pop()
        if fam == "bounded":
            width = max(len(q.param) for q in laws)
            params = np.zeros((len(laws), width))
            for i, q in enumerate(laws):
                params[i, : len(q.param)] = q.param
        else:
            params = np.array([q.param for q in laws], dtype=float)
        means = family(fam).mean(params)
        with np.errstate(divide="ignore"):
            x = np.log(means)
        return cls(fam, params, x, np.concatenate([[0.0], np.cumsum(x)]))

    @classmethod
    def empty(cls, fam: str = "geometric") -> "EnvironmentPath":
        return cls(fam, np.zeros(0), np.zeros(0), np.zeros(1))

    def sub(self, start: int, stop: int) -> "EnvironmentPath":
        """Steps start+1..stop re-based so that the new S_0 = 0."""
        x = self.increments[start:stop]
        s = self.partial_sums[start:stop + 1] - self.partial_sums[start]
        return EnvironmentPath(self.family, self.params[start:stop], x, s)


@dataclass(frozen=True)
class EnvironmentBatch:
    """N environments of equal length n, stored as (N, n) arrays."""

    family: str
    params: np.ndarray
    increments: np.ndarray
    partial_sums: np.ndarray

    @property
    def size(self) -> int:
        return int(self.increments.shape[0])

    @property
    def n(self) -> int:
        return int(self.increments.shape[1])

    def path(self, i: int) -> EnvironmentPath:
        return EnvironmentPath(self.family, self.params[i], self.increments[i],
                               self.partial_sums[i])

    def take(self, idx) -> "EnvironmentBatch":
        return EnvironmentBatch(self.family, self.params[idx], self.increments[idx],
                                self.partial_sums[idx])

    @classmethod
    def from_increments(cls, model: EnvironmentModel, x, signs=None) -> "EnvironmentBatch":
        x = np.asarray(x, dtype=float)
        params = model.params_from_increments(x)
        return cls(model.family, params, x, _partial_sums(x, model, signs))


def _partial_sums(x, model: EnvironmentModel, signs=None) -> np.ndarray:
    """S_0 = 0, S_k = X_1 + ... + X_k.

    For lattice walks the sums are c * (integer sums), so comparisons such as
    S_k >= 0 are exact.
    """
    c = model.increment.lattice_step
    if c is not None:
        if signs is None:
            signs = np.rint(x / c)
        k = np.cumsum(signs, axis=-1)
        s = c * k
    else:
        s = np.cumsum(x, axis=-1)
    zero = np.zeros(x.shape[:-1] + (1,))
    return np.concatenate([zero, s], axis=-1)


def sample_increments(model: EnvironmentModel, shape, rng: np.random.Generator):
    """Increments and, for lattice walks, their integer signs."""
    if model.increment.kind == "two_point":
        signs = model.increment.sample_signs(rng, shape)
        return model.increment.params["c"] * signs, signs
    return model.increment.sample(rng, shape), None


def sample_environment(model: EnvironmentModel, n: int, rng: np.random.Generator) -> EnvironmentPath:
    """n i.i.d. laws drawn from the model."""
    if n < 0:
        raise InvalidParameter("n must be >= 0")
    if n == 0:
        return EnvironmentPath.empty(model.family)
    x, signs = sample_increments(model, n, rng)
    return EnvironmentPath.from_increments(model, x, signs)


def sample_environment_batch(model: EnvironmentModel, size: int, n: int,
                             rng: np.random.Generator) -> EnvironmentBatch:
    x, signs = sample_increments(model, (size, n), rng)
    return EnvironmentBatch.from_increments(model, x, signs)
