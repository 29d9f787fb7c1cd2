"""Valuation distributions used by the experiments."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from ..equilibrium import ValuationSample
from ..exceptions import ConfigError, NumericalError
from .. import rng as rng_mod

__all__ = [
    "Uniform",
    "TruncLogNormal",
    "Mixture",
    "distribution_from_dict",
    "sample_valuations",
    "lognormal_mixture",
]

MIN_ACCEPTANCE = 1e-3


@dataclass(frozen=True)
class Uniform:
    a: float = 0.0
    b: float = 1.0

    def __post_init__(self):
        if not self.b > self.a:
            raise ConfigError(f"Uniform needs a < b, got ({self.a}, {self.b})")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(self.a, self.b, size=n)

    def to_dict(self):
        return {"kind": "uniform", "a": self.a, "b": self.b}


@dataclass(frozen=True)
class TruncLogNormal:
    """Log-normal ``exp(N(mu, sigma^2))`` conditioned on ``x <= hi``."""

    mu: float
    sigma: float
    hi: float = math.inf

    def __post_init__(self):
        if not self.sigma > 0:
            raise ConfigError("sigma must be positive")
        if not self.hi > 0:
            raise ConfigError("the truncation point must be positive")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        out = np.empty(0)
        drawn = 0
        while out.size < n:
            batch = max(2 * (n - out.size), 1024)
            x = rng.lognormal(self.mu, self.sigma, size=batch)
            drawn += batch
            out = np.concatenate([out, x[x <= self.hi]])
            if drawn >= 10_000 and out.size / drawn < MIN_ACCEPTANCE:
                raise NumericalError(
                    f"truncation acceptance rate {out.size / drawn:.2g} is below {MIN_ACCEPTANCE}"
                )
        return out[:n]

    def to_dict(self):
        return {"kind": "trunc_lognormal", "mu": self.mu, "sigma": self.sigma, "hi": self.hi}


@dataclass(frozen=True)
class Mixture:
    components: Tuple[Tuple[float, object], ...]

    def __post_init__(self):
        comps = tuple((float(w), d) for w, d in self.components)
        if not comps:
            raise ConfigError("a mixture needs at least one component")
        weights = [w for w, _ in comps]
        if any(w < 0 for w in weights) or not math.isclose(sum(weights), 1.0, abs_tol=1e-9):
            raise ConfigError(f"mixture weights must be non-negative and sum to 1, got {weights}")
        object.__setattr__(self, "components", comps)

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for w, _ in self.components])

    def sample_with_labels(self, rng: np.random.Generator, n: int):
        labels = rng.choice(len(self.components), size=n, p=self.weights)
        out = np.empty(n)
        for k, (_, dist) in enumerate(self.components):
            mask = labels == k
            out[mask] = dist.sample(rng, int(mask.sum()))
        return out, labels

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.sample_with_labels(rng, n)[0]

    def to_dict(self):
        return {
            "kind": "mixture",
            "components": [{"weight": w, "dist": d.to_dict()} for w, d in self.components],
        }


def distribution_from_dict(d: dict):
    try:
        kind = d["kind"]
        if kind == "uniform":
            return Uniform(float(d.get("a", 0.0)), float(d.get("b", 1.0)))
        if kind == "trunc_lognormal":
            return TruncLogNormal(float(d["mu"]), float(d["sigma"]), float(d.get("hi", math.inf)))
        if kind == "mixture":
            return Mixture(tuple((c["weight"], distribution_from_dict(c["dist"])) for c in d["components"]))
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed distribution description: {exc}") from exc
    raise ConfigError(f"unknown distribution kind {d.get('kind')!r}")


def sample_valuations(dist, n: int, seed: int) -> ValuationSample:
    """Sorted i.i.d. draws from ``dist`` on the ``"valuations"`` stream of ``seed``."""
    return ValuationSample(dist.sample(rng_mod.generator(seed, "valuations"), n))


def lognormal_mixture() -> Mixture:
    """Equal mixture of two truncated log-normals used in the experiments."""
    return Mixture(
        (
            (0.5, TruncLogNormal(math.log(0.5), 0.8, 1.5)),
            (0.5, TruncLogNormal(math.log(2.0), 0.1, 2.5)),
        )
    )
