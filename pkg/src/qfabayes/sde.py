"""Forward simulation of stochastic logistic growth by Euler-Maruyama.

Three diffusion variants share the logistic drift r X (1 - X/K):

  SLGM             diffusion sigma * X   (multiplicative environmental noise)
  DEMOGRAPHIC_SQRT diffusion sqrt(r X)            (birth-death discreteness)
  DEMOGRAPHIC_SYM  diffusion sqrt(r X (1 + X/K))

The SLGM is simulated on the log state, where Ito's lemma gives constant
diffusion, dY = (r - sigma^2/2 - (r/K) e^Y) dt + sigma dW, so paths stay
positive by construction. The demographic variants are simulated in raw
space with reflection at a small floor because their diffusion vanishes
at zero.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .growth import GrowthCurve, LogisticParams
from .rng import split_rng

_STATE_CEILING = 1e12
_DEMOGRAPHIC_FLOOR = 1e-12

#: substeps per observation interval used by default (imputation density
#: used throughout the inference modules)
DEFAULT_SUBSTEPS = 15

#: substeps per unit time for "arbitrarily exact" oracle runs
ORACLE_SUBSTEPS_PER_UNIT_TIME = 10_000


class SdeKind(enum.Enum):
    SLGM = "slgm"
    DEMOGRAPHIC_SQRT = "demographic-sqrt"
    DEMOGRAPHIC_SYM = "demographic-sym"


class ErrorKind(enum.Enum):
    NORMAL = "normal"
    LOGNORMAL = "lognormal"


class SimulationDivergedError(RuntimeError):
    """State exceeded the ceiling or became non-finite."""

    def __init__(self, interval: int, t_lo: float, t_hi: float):
        self.interval = interval
        super().__init__(
            f"simulation diverged in grid interval {interval} "
            f"(t in [{t_lo:g}, {t_hi:g}])"
        )


@dataclass(frozen=True)
class SdeParams:
    """Growth triple plus intrinsic (sigma) and measurement (nu) noise scales."""

    growth: LogisticParams
    sigma: float = 0.0
    nu: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.sigma) and self.sigma >= 0):
            raise ValueError(f"sigma must be finite and >= 0, got {self.sigma}")
        if not (math.isfinite(self.nu) and self.nu >= 0):
            raise ValueError(f"nu must be finite and >= 0, got {self.nu}")


@dataclass(frozen=True)
class Trajectory:
    """One simulated path on an observation grid."""

    times: np.ndarray
    values: np.ndarray
    seed: int = 0

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)
        if t.ndim != 1 or v.shape[-1] != t.size:
            raise ValueError("values must have one entry per grid time")
        if np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")


def _drift(x, K, r):
    return r * x * (1.0 - x / K)


def euler_maruyama_ensemble(
    params: SdeParams,
    kind: SdeKind,
    grid,
    substeps: int = DEFAULT_SUBSTEPS,
    n_paths: int = 1,
    seed: int = 0,
) -> np.ndarray:
    """Simulate n_paths trajectories; returns array (n_paths, len(grid)).

    The grid must be strictly increasing with grid[0] >= 0; each interval
    is refined into `substeps` Euler-Maruyama steps. X(0) = P; if
    grid[0] > 0 the path is integrated from 0 to grid[0] first.
    """
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 1:
        raise ValueError("grid must be a non-empty 1-d array")
    if np.any(np.diff(grid) <= 0) or grid[0] < 0:
        raise ValueError("grid must be strictly increasing and non-negative")

    K, r, P = params.growth.K, params.growth.r, params.growth.P
    sigma = params.sigma
    rng = split_rng(seed, "euler-maruyama", kind.value)

    log_space = kind is SdeKind.SLGM
    state = np.full(n_paths, math.log(P) if log_space else P)

    out = np.empty((n_paths, grid.size))
    edges = np.concatenate([[0.0], grid])
    for i in range(grid.size):
        dt = (edges[i + 1] - edges[i]) / substeps
        if dt > 0:
            sqdt = math.sqrt(dt)
            for _ in range(substeps):
                xi = rng.standard_normal(n_paths)
                if log_space:
                    state = state + (
                        (r - 0.5 * sigma * sigma - (r / K) * np.exp(state)) * dt
                        + sigma * sqdt * xi
                    )
                else:
                    x = state
                    if sigma == 0.0:
                        # degenerate zero-noise switch: the demographic
                        # diffusions do not scale with sigma, but sigma = 0
                        # requests a deterministic run for every kind
                        g = 0.0
                    elif kind is SdeKind.DEMOGRAPHIC_SQRT:
                        g = np.sqrt(r * x)
                    else:
                        g = np.sqrt(r * x * (1.0 + x / K))
                    state = x + _drift(x, K, r) * dt + g * sqdt * xi
                    # diffusion vanishes at 0; reflect at a tiny floor so the
                    # next sqrt never sees a negative argument
                    state = _DEMOGRAPHIC_FLOOR + np.abs(state - _DEMOGRAPHIC_FLOOR)
        with np.errstate(over="ignore", invalid="ignore"):
            vals = np.exp(state) if log_space else state
        if not np.all(np.isfinite(vals)) or np.any(np.abs(vals) > _STATE_CEILING):
            raise SimulationDivergedError(i, edges[i], edges[i + 1])
        out[:, i] = vals
    return out


def euler_maruyama(
    params: SdeParams,
    kind: SdeKind,
    grid,
    substeps: int = DEFAULT_SUBSTEPS,
    seed: int = 0,
) -> Trajectory:
    """Simulate a single path on the given observation grid."""
    vals = euler_maruyama_ensemble(
        params, kind, grid, substeps=substeps, n_paths=1, seed=seed
    )
    return Trajectory(times=np.asarray(grid, dtype=float), values=vals[0], seed=seed)


def observe(
    traj: Trajectory, error_kind: ErrorKind, nu: float, seed: int = 0
) -> GrowthCurve:
    """Add measurement error to a trajectory.

    NORMAL:    y = x + N(0, nu^2)
    LOGNORMAL: log y = log x + N(0, nu^2)
    """
    if nu < 0:
        raise ValueError("nu must be >= 0")
    rng = split_rng(seed, "observe", error_kind.value)
    x = traj.values
    if nu == 0:
        y = x.copy()
    elif error_kind is ErrorKind.NORMAL:
        y = x + nu * rng.standard_normal(x.shape)
    else:
        y = np.exp(np.log(x) + nu * rng.standard_normal(x.shape))
    return GrowthCurve(times=traj.times.copy(), values=y)
