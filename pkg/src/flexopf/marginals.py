"""Univariate marginal distributions for uncertainty sources.

Each marginal supplies cdf, ppf (inverse cdf), mean, and std. Sample-based
marginals use a piecewise-linear empirical CDF through the midpoint plotting
positions, which makes ppf(cdf(x)) = x exact on the sample support.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats


class Marginal:
    def cdf(self, x):
        raise NotImplementedError

    def ppf(self, u):
        raise NotImplementedError

    @property
    def mean(self) -> float:
        raise NotImplementedError

    @property
    def std(self) -> float:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class NormalMarginal(Marginal):
    mu: float
    sigma: float

    def cdf(self, x):
        return stats.norm.cdf(x, loc=self.mu, scale=self.sigma)

    def ppf(self, u):
        return stats.norm.ppf(u, loc=self.mu, scale=self.sigma)

    @property
    def mean(self) -> float:
        return self.mu

    @property
    def std(self) -> float:
        return self.sigma

    def to_dict(self) -> dict:
        return {"kind": "normal", "mean": self.mu, "std": self.sigma}


@dataclass(frozen=True)
class UniformMarginal(Marginal):
    lo: float
    hi: float

    def cdf(self, x):
        return np.clip((np.asarray(x, dtype=float) - self.lo) / (self.hi - self.lo), 0.0, 1.0)

    def ppf(self, u):
        return self.lo + np.asarray(u, dtype=float) * (self.hi - self.lo)

    @property
    def mean(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def std(self) -> float:
        return (self.hi - self.lo) / np.sqrt(12.0)

    def to_dict(self) -> dict:
        return {"kind": "uniform", "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class PointMarginal(Marginal):
    """Degenerate point mass; ppf is constant so mean is exact."""

    value: float

    def cdf(self, x):
        return np.where(np.asarray(x, dtype=float) >= self.value, 1.0, 0.0)

    def ppf(self, u):
        return np.full_like(np.asarray(u, dtype=float), self.value)

    @property
    def mean(self) -> float:
        return self.value

    @property
    def std(self) -> float:
        return 0.0

    def to_dict(self) -> dict:
        return {"kind": "point", "value": self.value}


class EmpiricalMarginal(Marginal):
    """Marginal backed by a sorted sample vector."""

    def __init__(self, samples):
        xs = np.sort(np.asarray(samples, dtype=float))
        if xs.size < 2:
            raise ValueError("empirical marginal needs at least 2 samples")
        self._xs = xs
        self._probs = (np.arange(xs.size) + 0.5) / xs.size

    @property
    def samples(self) -> np.ndarray:
        return self._xs

    def cdf(self, x):
        return np.interp(np.asarray(x, dtype=float), self._xs, self._probs,
                         left=0.0, right=1.0)

    def ppf(self, u):
        return np.interp(np.asarray(u, dtype=float), self._probs, self._xs,
                         left=self._xs[0], right=self._xs[-1])

    @property
    def mean(self) -> float:
        return float(self._xs.mean())

    @property
    def std(self) -> float:
        return float(self._xs.std())

    def to_dict(self) -> dict:
        return {"kind": "empirical", "samples": self._xs.tolist()}

    def __eq__(self, other):
        return isinstance(other, EmpiricalMarginal) and np.array_equal(self._xs, other._xs)


def marginal_from_dict(doc: dict) -> Marginal:
    kind = doc.get("kind")
    if kind == "normal":
        return NormalMarginal(float(doc["mean"]), float(doc["std"]))
    if kind == "uniform":
        return UniformMarginal(float(doc["lo"]), float(doc["hi"]))
    if kind == "point":
        return PointMarginal(float(doc["value"]))
    if kind == "empirical":
        return EmpiricalMarginal(doc["samples"])
    raise ValueError(f"unknown marginal kind {kind!r}")
