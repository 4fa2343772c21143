"""Shared pieces of the hierarchical Gibbs samplers.

All repeat-level distributions are truncated normals; their normalising
constants depend on the mean and precision, so every Metropolis ratio that
moves a mean or precision evaluates the full truncated log-density
(log_ndtr keeps the tail terms exact).

Update families are vectorised over genes/repeats: within a sweep those
blocks are conditionally independent given the population level, so one
elementwise accept/reject step updates a whole family at once. Population
parameters are updated last, sequentially. Draws are deterministic for a
fixed seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr

from ..chain import StuckChainError

_LOG_2PI = math.log(2.0 * math.pi)
_STUCK_LIMIT = 10_000


def norm_logpdf(x, mean, prec):
    """N(mean, prec^-1) log density."""
    return 0.5 * (np.log(prec) - _LOG_2PI) - 0.5 * prec * (x - mean) ** 2


def tn_logpdf_upper(x, mean, prec, bound):
    """Normal(mean, prec^-1) truncated to (-inf, bound]."""
    sd_inv = np.sqrt(prec)
    base = norm_logpdf(x, mean, prec) - log_ndtr((bound - mean) * sd_inv)
    return np.where(x <= bound, base, -np.inf)


def tn_logpdf_lower(x, mean, prec, bound):
    """Normal(mean, prec^-1) truncated to [bound, inf)."""
    sd_inv = np.sqrt(prec)
    base = norm_logpdf(x, mean, prec) - log_ndtr((mean - bound) * sd_inv)
    return np.where(x >= bound, base, -np.inf)


class VectorAdapter:
    """Per-element banded step adaptation for a vectorised update family."""

    def __init__(self, name: str, shape, step: float = 0.5, window: int = 50,
                 band=(0.2, 0.4)):
        self.name = name
        self.steps = np.full(shape, step)
        self.window = window
        self.band = band
        self.accepted = np.zeros(shape, dtype=int)
        self.proposed = np.zeros(shape, dtype=int)
        self.consecutive = np.zeros(shape, dtype=int)
        self.sweeps = 0
        self.frozen = False
        self.final_accepted = 0
        self.final_proposed = 0

    def record(self, accept_mask: np.ndarray, active=None):
        act = np.ones_like(accept_mask, dtype=bool) if active is None else active
        acc = accept_mask & act
        rej = (~accept_mask) & act
        self.consecutive[acc] = 0
        self.consecutive[rej] += 1
        if np.any(self.consecutive >= _STUCK_LIMIT):
            j = int(np.argmax(self.consecutive))
            raise StuckChainError(
                f"{self.name}[{j}]", int(self.consecutive.flat[j]),
                float(self.steps.flat[j]), float("nan"),
            )
        if self.frozen:
            self.final_accepted += int(np.sum(acc))
            self.final_proposed += int(np.sum(act))
            return
        self.accepted[acc] += 1
        self.proposed[act] += 1
        self.sweeps += 1
        if self.sweeps >= self.window:
            with np.errstate(invalid="ignore", divide="ignore"):
                rate = self.accepted / np.maximum(self.proposed, 1)
            self.steps[(rate < self.band[0]) & (self.proposed > 0)] *= 0.7
            self.steps[(rate > self.band[1]) & (self.proposed > 0)] *= 1.4
            np.clip(self.steps, 1e-8, 50.0, out=self.steps)
            self.accepted[:] = 0
            self.proposed[:] = 0
            self.sweeps = 0

    def rate(self) -> float:
        if self.final_proposed == 0:
            return float("nan")
        return self.final_accepted / self.final_proposed


def mh_accept(rng: np.random.Generator, dlog: np.ndarray) -> np.ndarray:
    """Elementwise Metropolis accept; draws one uniform per element."""
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.log(rng.random(np.shape(dlog))) < dlog


@dataclass(frozen=True)
class HierarchySchedule:
    """Sweep schedule for the hierarchical samplers."""

    burn_in: int
    thin: int
    samples: int

    @classmethod
    def desk(cls) -> "HierarchySchedule":
        return cls(burn_in=20_000, thin=20, samples=1000)

    @classmethod
    def paper(cls) -> "HierarchySchedule":
        return cls(burn_in=800_000, thin=100, samples=1000)
