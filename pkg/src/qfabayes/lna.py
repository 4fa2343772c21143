"""Closed-form transition densities for three approximate logistic diffusions.

RRTR  log-normal process with time-dependent fertility; on the log state
      the drift integrates to the log-increment of the logistic solution
      minus sigma^2 dt / 2, and the variance grows as sigma^2 dt.
LNAM  linear noise approximation of the log-transformed process: a
      time-varying Ornstein-Uhlenbeck fluctuation around the deterministic
      skeleton v_t = log(a P e^{aT} / (b P (e^{aT} - 1) + a)) with
      a = r - sigma^2/2, b = r/K.
LNAA  linear noise approximation in raw space: Ornstein-Uhlenbeck
      fluctuation around v_t = a P e^{aT} / (b P (e^{aT} - 1) + a) with
      a = r, b = r/K.

Each one-step transition is Gaussian with mean affine in the previous
state, mean = A + B * prev; (A, B, variance) are exposed so that the
marginal-likelihood filter never re-derives model algebra. All formulas
are evaluated in e^{-aT} form so nothing overflows for large a*t.

Time origin is fixed at t0 = 0.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .sde import SdeParams


class ModelKind(enum.Enum):
    RRTR = "rrtr"
    LNAM = "lnam"
    LNAA = "lnaa"


class InvalidRegimeError(ValueError):
    """Raised when sigma^2 >= 2r makes the LNAM skeleton ill-defined."""


@dataclass(frozen=True)
class TransitionMoments:
    """Gaussian one-step transition: mean = A + B * prev, Var = variance.

    mean/variance are on the model's state scale (log-density for
    RRTR/LNAM, density for LNAA). `clamped` records a negative-variance
    floating-point underflow that was clipped to zero.
    """

    mean: float
    variance: float
    A: float
    B: float
    clamped: bool = False


def _coeffs(kind: ModelKind, params: SdeParams) -> tuple[float, float]:
    """(a, b) for the deterministic skeleton of each model."""
    r, K = params.growth.r, params.growth.K
    if kind is ModelKind.LNAM:
        a = r - 0.5 * params.sigma**2
        if a <= 0:
            raise InvalidRegimeError(
                f"sigma^2 = {params.sigma ** 2:g} >= 2r = {2 * r:g}: "
                "log-scale skeleton has no growth"
            )
    else:
        a = r
        if a <= 0:
            raise InvalidRegimeError("r must be > 0")
    return a, r / K


def _skeleton_denom(a: float, b: float, P: float, T):
    """bP(e^{aT} - 1) + a, scaled by e^{-aT}: bP(1 - e^{-aT}) + a e^{-aT}."""
    em = np.exp(-a * np.asarray(T, dtype=float))
    return b * P * (1.0 - em) + a * em


def det_skeleton(kind: ModelKind, params: SdeParams, t):
    """Deterministic skeleton at time t >= 0.

    LNAM returns the log-scale skeleton; RRTR and LNAA return raw density.
    """
    a, b = _coeffs(kind, params)
    P = params.growth.P
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be >= 0")
    d = _skeleton_denom(a, b, P, t)
    if kind is ModelKind.LNAM:
        out = np.log(a * P / d)
    else:
        out = a * P / d
    return float(out) if out.ndim == 0 else out


def _rrtr_terms(params: SdeParams, t_prev, t):
    """(A, B, Xi) arrays for RRTR transitions on the log state."""
    K, r, P = params.growth.K, params.growth.r, params.growth.P
    s2 = params.sigma**2
    Q = K / P - 1.0
    dt = t - t_prev
    # log-increment of the logistic solution between the two times
    ddet = np.log1p(Q * np.exp(-r * t_prev)) - np.log1p(Q * np.exp(-r * t))
    A = ddet - 0.5 * s2 * dt
    B = np.ones_like(A)
    Xi = s2 * dt
    return A, B, Xi


def _lnam_terms(params: SdeParams, t_prev, t):
    """(v_prev, v, B, Xi) arrays for LNAM transitions (log state)."""
    a, b = _coeffs(ModelKind.LNAM, params)
    P = params.growth.P
    s2 = params.sigma**2
    Q = (a / b) / P - 1.0
    dt = t - t_prev
    em_prev = np.exp(-a * t_prev)
    em = np.exp(-a * t)
    d_prev = _skeleton_denom(a, b, P, t_prev)
    d = _skeleton_denom(a, b, P, t)
    v_prev = np.log(a * P / d_prev)
    v = np.log(a * P / d)
    B = np.exp(-a * dt) * (1.0 + Q * em_prev) / (1.0 + Q * em)
    # Q-form variance, multiplied through by e^{-2 a t}
    num = (
        4.0 * Q * (em - np.exp(-a * (t + dt)))
        + 1.0
        - np.exp(-2.0 * a * dt)
        + 2.0 * a * Q * Q * dt * np.exp(-2.0 * a * t)
    )
    Xi = s2 * num / (2.0 * a * (1.0 + Q * em) ** 2)
    return v_prev, v, B, Xi


def _lnaa_terms(params: SdeParams, t_prev, t):
    """(v_prev, v, B, Xi) arrays for LNAA transitions (raw state)."""
    a, b = _coeffs(ModelKind.LNAA, params)
    P = params.growth.P
    s2 = params.sigma**2
    dt = t - t_prev
    d_prev = _skeleton_denom(a, b, P, t_prev)
    d = _skeleton_denom(a, b, P, t)
    v_prev = a * P / d_prev
    v = a * P / d
    B = np.exp(-a * dt) * (d_prev / d) ** 2
    amb = a - b * P
    bracket = (
        b * b * P * P * (1.0 - np.exp(-2.0 * a * dt))
        + 4.0 * b * P * amb * (np.exp(-a * t) - np.exp(-a * (t + dt)))
        + 2.0 * a * dt * amb * amb * np.exp(-2.0 * a * t)
    )
    Xi = 0.5 * s2 * a * P * P * bracket / d**4
    return v_prev, v, B, Xi


def transition_arrays(kind: ModelKind, params: SdeParams, times):
    """(A, B, Xi) for the consecutive transitions along a time grid.

    times must be non-decreasing with times[0] >= 0; entry i describes the
    transition from times[i] to times[i+1], so the arrays have length
    len(times) - 1. Negative variances from floating cancellation are
    clamped to 0.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size < 2:
        raise ValueError("need at least two grid times")
    if np.any(np.diff(times) < 0) or times[0] < 0:
        raise ValueError("times must be non-decreasing and >= 0")
    t_prev, t = times[:-1], times[1:]
    if kind is ModelKind.RRTR:
        A, B, Xi = _rrtr_terms(params, t_prev, t)
    elif kind is ModelKind.LNAM:
        v_prev, v, B, Xi = _lnam_terms(params, t_prev, t)
        A = v - B * v_prev
    else:
        v_prev, v, B, Xi = _lnaa_terms(params, t_prev, t)
        A = v - B * v_prev
    return A, B, np.maximum(Xi, 0.0)


def transition(
    kind: ModelKind, params: SdeParams, prev_state: float, t_prev: float, t: float
) -> TransitionMoments:
    """One-step Gaussian transition moments from (t_prev, prev_state) to t."""
    if not (0.0 <= t_prev <= t):
        raise ValueError("need t >= t_prev >= 0")
    if t == t_prev:
        return TransitionMoments(
            mean=float(prev_state), variance=0.0, A=0.0, B=1.0
        )
    A, B, Xi = transition_arrays(kind, params, np.array([t_prev, t]))
    a, b, xi = float(A[0]), float(B[0]), float(Xi[0])
    clamped = False
    if xi < 0.0 or not math.isfinite(xi):
        xi, clamped = max(xi, 0.0), True
    return TransitionMoments(
        mean=a + b * float(prev_state), variance=xi, A=a, B=b, clamped=clamped
    )


def sample_paths(
    kind: ModelKind,
    params: SdeParams,
    grid,
    n_paths: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Exact forward simulation via the Gaussian transitions.

    Returns raw-density paths of shape (n_paths, len(grid)); log-scale
    models are exponentiated. The transitions are exact, so the grid
    density does not affect the path law.
    """
    grid = np.asarray(grid, dtype=float)
    P = params.growth.P
    log_scale = kind in (ModelKind.RRTR, ModelKind.LNAM)
    state = np.full(n_paths, math.log(P) if log_scale else P)
    times = np.concatenate([[0.0], grid])
    A, B, Xi = transition_arrays(kind, params, times)
    out = np.empty((n_paths, grid.size))
    for i in range(grid.size):
        state = A[i] + B[i] * state + np.sqrt(Xi[i]) * rng.standard_normal(n_paths)
        out[:, i] = np.exp(state) if log_scale else state
    return out
