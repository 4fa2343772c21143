"""Exact marginal log-likelihood for the approximate state-space models.

The latent state follows the Gaussian transitions of the chosen
approximation (mean affine in the previous state) and is observed through
independent Gaussian measurement error, on the matching scale:

  RRTR, LNAM : log y_i = X_i + N(0, nu^2)   (log-scale state)
  LNAA       :     y_i = X_i + N(0, nu^2)   (density-scale state)

A scalar Kalman recursion then integrates the state out exactly.
Initialisation: m0 = P (log P for the log-scale models), C0 = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lna import ModelKind, transition_arrays
from .sde import ErrorKind, SdeParams

_LOG_2PI = math.log(2.0 * math.pi)

_REQUIRED_ERROR = {
    ModelKind.RRTR: ErrorKind.LOGNORMAL,
    ModelKind.LNAM: ErrorKind.LOGNORMAL,
    ModelKind.LNAA: ErrorKind.NORMAL,
}


class ObservationDomainError(ValueError):
    """Non-positive observation under a log-normal error model."""

    def __init__(self, index: int, value: float):
        self.index = index
        super().__init__(
            f"observation {index} = {value:g} is not positive; "
            "log-normal measurement error requires y > 0"
        )


@dataclass(frozen=True)
class StateSpaceSpec:
    """Model kind + measurement error + parameters.

    The error structure must match the intrinsic-noise scale of the model
    (linear-Gaussian structure requirement): log-normal for RRTR/LNAM,
    normal for LNAA.
    """

    kind: ModelKind
    error_kind: ErrorKind
    params: SdeParams

    def __post_init__(self):
        required = _REQUIRED_ERROR[self.kind]
        if self.error_kind is not required:
            raise ValueError(
                f"{self.kind.value} requires {required.value} measurement "
                f"error, got {self.error_kind.value}"
            )


@dataclass(frozen=True)
class FilterState:
    """Posterior state mean/variance at time t, plus the marginal
    log-likelihood accumulated up to and including that observation."""

    m: float
    C: float
    t: float = 0.0
    loglik_accum: float = 0.0


def _initial_state(spec: StateSpaceSpec) -> FilterState:
    P = spec.params.growth.P
    m0 = math.log(P) if spec.error_kind is ErrorKind.LOGNORMAL else P
    return FilterState(m=m0, C=0.0, t=0.0)


def _observations(spec: StateSpaceSpec, curve) -> np.ndarray:
    y = np.asarray(curve.values, dtype=float)
    if spec.error_kind is ErrorKind.LOGNORMAL:
        bad = np.nonzero(y <= 0)[0]
        if bad.size:
            raise ObservationDomainError(int(bad[0]), float(y[bad[0]]))
        return np.log(y)
    return y


def _run_filter(spec: StateSpaceSpec, curve, init: FilterState, collect: bool):
    z = _observations(spec, curve)
    times = np.concatenate([[init.t], np.asarray(curve.times, dtype=float)])
    if np.any(np.diff(times) <= 0):
        raise ValueError("curve times must be strictly increasing (and > t0)")
    A, B, Xi = transition_arrays(spec.kind, spec.params, times)
    nu2 = spec.params.nu**2

    m, C = init.m, init.C
    loglik = 0.0
    ms, Cs = ([], []) if collect else (None, None)
    # scalar recursion in plain floats: the per-step work is tiny and this
    # is the hot path of every likelihood evaluation in the samplers
    for a, b, xi, obs in zip(A.tolist(), B.tolist(), Xi.tolist(), z.tolist()):
        pm = a + b * m
        R = b * b * C + xi
        S = R + nu2
        if S <= 0.0:
            raise ZeroDivisionError(
                "degenerate predictive variance: sigma, nu and dt all zero"
            )
        resid = obs - pm
        loglik -= 0.5 * (_LOG_2PI + math.log(S) + resid * resid / S)
        gain = R / S
        m = pm + gain * resid
        C = R - gain * R
        if collect:
            ms.append(m)
            Cs.append(C)
    return loglik, m, C, ms, Cs


def marginal_loglik(
    spec: StateSpaceSpec, curve, init: FilterState | None = None
) -> float:
    """Marginal log-likelihood of the observations under the state-space model.

    For the log-scale models this is the Gaussian log-density of the
    log-transformed observations (the Jacobian term, constant in the
    parameters, is not included). `init` carries the filter state across a
    split of the curve; by default the filter starts at (P, 0) at t = 0.
    """
    loglik, _, _, _, _ = _run_filter(
        spec, curve, init or _initial_state(spec), collect=False
    )
    return loglik


def filter_states(
    spec: StateSpaceSpec, curve, init: FilterState | None = None
):
    """Posterior state means/variances after each observation.

    Returns (m, C, final_state): arrays of length N and the FilterState at
    the last observation time, suitable for continuing the recursion.
    """
    init = init or _initial_state(spec)
    loglik, m, C, ms, Cs = _run_filter(spec, curve, init, collect=True)
    final = FilterState(m=m, C=C, t=float(curve.times[-1]),
                        loglik_accum=init.loglik_accum + loglik)
    return np.asarray(ms), np.asarray(Cs), final
