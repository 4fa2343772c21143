"""Hierarchical Bayesian screen models and their Gibbs samplers."""

from .tdist import sample_trunc0_t3, scaled_t3_cdf, scaled_t3_logpdf, scaled_t3_trunc0_logpdf
from .screen import (
    GeneratedTruth,
    HyperParams,
    InteractionResult,
    KeyingError,
    RepeatSeries,
    ScreenDataset,
    generate_screen,
    write_interaction_csv,
)
from .shm import fit_shm, shm_fitnesses
from .ihm import fit_ihm
from .jhm import JhmVariant, fit_jhm

__all__ = [
    "GeneratedTruth",
    "HyperParams",
    "InteractionResult",
    "JhmVariant",
    "KeyingError",
    "RepeatSeries",
    "ScreenDataset",
    "fit_ihm",
    "fit_jhm",
    "fit_shm",
    "generate_screen",
    "sample_trunc0_t3",
    "scaled_t3_cdf",
    "scaled_t3_logpdf",
    "scaled_t3_trunc0_logpdf",
    "shm_fitnesses",
    "write_interaction_csv",
]
