"""Deterministic logistic growth and univariate fitness measures.

The growth model is dx/dt = r x (1 - x/K) with inoculum x(0) = P, whose
closed form is

    x(t) = K P e^{rt} / (K + P (e^{rt} - 1)).

Fitness of a culture is summarised by the maximum doubling rate
MDR = r / log(2 (K-P) / (K-2P)) (doublings per day), the maximum doubling
potential MDP = log2(K / P) (total doublings to saturation), and their
product, the default fitness score.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Above this value of r*t the closed form is evaluated in terms of e^{-rt}
# to avoid overflow.
_LARGE_RT = 30.0


class InvalidParameterError(ValueError):
    """Raised when growth parameters are non-finite or out of range."""


@dataclass(frozen=True)
class LogisticParams:
    """Deterministic growth triple.

    K: carrying capacity (scaled density, > 0)
    r: intrinsic growth rate (per day, >= 0)
    P: inoculum density (scaled density, > 0)

    P < K is not enforced: raw parameter draws may violate it and the
    fitness measures handle the degenerate cases explicitly.
    """

    K: float
    r: float
    P: float

    def __post_init__(self):
        for name in ("K", "r", "P"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise InvalidParameterError(f"{name} must be finite, got {v}")
        if self.K <= 0:
            raise InvalidParameterError(f"K must be > 0, got {self.K}")
        if self.r < 0:
            raise InvalidParameterError(f"r must be >= 0, got {self.r}")
        if self.P <= 0:
            raise InvalidParameterError(f"P must be > 0, got {self.P}")


@dataclass(frozen=True)
class FitnessScore:
    """Univariate fitness measures; all components are >= 0 and finite."""

    mdr: float
    mdp: float
    product: float


@dataclass(frozen=True)
class GrowthCurve:
    """Time-stamped scaled density observations for one culture."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        y = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", y)
        if t.shape != y.shape or t.ndim != 1:
            raise ValueError("times and values must be equal-length 1-d arrays")
        if t.size and np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        if not np.all(np.isfinite(y)):
            raise ValueError("values must be finite")

    def __len__(self) -> int:
        return self.times.size


def logistic_solution(params: LogisticParams, t):
    """Scaled density at elapsed time t (days since inoculation, t0 = 0).

    Accepts a scalar or array t. Numerically stable for r*t up to ~700:
    for r*t > 30 the expression is rewritten in terms of e^{-rt}.
    """
    K, r, P = params.K, params.r, params.P
    t = np.asarray(t, dtype=float)
    rt = r * t
    # Small-exponent branch: K P e^{rt} / (K + P (e^{rt} - 1)).
    ert = np.exp(np.minimum(rt, _LARGE_RT))
    small = K * P * ert / (K + P * (ert - 1.0))
    # Large-exponent branch: K P / (K e^{-rt} + P (1 - e^{-rt})).
    emrt = np.exp(-rt)
    large = K * P / (K * emrt + P * (1.0 - emrt))
    out = np.where(rt > _LARGE_RT, large, small)
    return float(out) if out.ndim == 0 else out


def logistic_derivative(params: LogisticParams, t):
    """dx/dt of the closed form: r x (1 - x/K)."""
    x = logistic_solution(params, t)
    return params.r * x * (1.0 - x / params.K)


def mdp(params: LogisticParams) -> float:
    """Maximum doubling potential, log2(K/P); 0 for shrinking cultures."""
    if params.K <= params.P:
        return 0.0
    return float(np.log2(params.K / params.P))


def mdr(params: LogisticParams) -> float:
    """Maximum doubling rate, r / log(2(K-P)/(K-2P)); 0 for dead cultures.

    When K <= 2P the log argument is non-positive or infinite, the culture
    is classified dead and the rate is 0 (post-processing rule for
    unidentifiable growth).
    """
    K, r, P = params.K, params.r, params.P
    if K <= 2.0 * P or r == 0.0:
        return 0.0
    return r / math.log(2.0 * (K - P) / (K - 2.0 * P))


def fitness(params: LogisticParams) -> FitnessScore:
    """Fitness score (MDR, MDP, MDR*MDP) with the dead-culture rule applied."""
    rate = mdr(params)
    potential = mdp(params)
    if rate == 0.0:
        return FitnessScore(mdr=0.0, mdp=potential, product=0.0)
    return FitnessScore(mdr=rate, mdp=potential, product=rate * potential)
