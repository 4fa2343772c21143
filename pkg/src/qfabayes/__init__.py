"""Bayesian inference for logistic growth curves and genetic-interaction screens."""

from .growth import (
    FitnessScore,
    GrowthCurve,
    InvalidParameterError,
    LogisticParams,
    fitness,
    logistic_solution,
)
from .lna import InvalidRegimeError, ModelKind, TransitionMoments, det_skeleton, transition
from .kalman import FilterState, StateSpaceSpec, filter_states, marginal_loglik
from .sde import (
    ErrorKind,
    SdeKind,
    SdeParams,
    SimulationDivergedError,
    Trajectory,
    euler_maruyama,
    euler_maruyama_ensemble,
    observe,
)
from .chain import Chain, StuckChainError

__version__ = "0.1.0"

__all__ = [
    "Chain",
    "ErrorKind",
    "FilterState",
    "FitnessScore",
    "GrowthCurve",
    "InvalidParameterError",
    "InvalidRegimeError",
    "LogisticParams",
    "ModelKind",
    "SdeKind",
    "SdeParams",
    "SimulationDivergedError",
    "StateSpaceSpec",
    "StuckChainError",
    "Trajectory",
    "TransitionMoments",
    "det_skeleton",
    "euler_maruyama",
    "euler_maruyama_ensemble",
    "filter_states",
    "fitness",
    "logistic_solution",
    "marginal_loglik",
    "observe",
    "transition",
]
