"""Scaled Student-t distribution with 3 degrees of freedom.

Heavy-tailed gene-level variation is modelled as t3((x - mu)/s) / s where
the scale s is parameterised by a precision, s = precision^(-1/2), matching
the N(mean, precision^[-1]) convention used everywhere else. The density
truncated to [0, inf) is used for strictly-positive quantities.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.stats import t as _student_t

# log of the t3 normalising constant Gamma(2) / (sqrt(3 pi) Gamma(1.5)) = 2/(pi sqrt 3)
_LOG_NORM = math.log(2.0 / (math.pi * math.sqrt(3.0)))


def scaled_t3_logpdf(x, location, scale_precision):
    """Log density of the scaled t with 3 df; scale = scale_precision^(-1/2)."""
    scale_precision = np.asarray(scale_precision, dtype=float)
    if np.any(scale_precision <= 0):
        raise ValueError("scale_precision must be > 0")
    x = np.asarray(x, dtype=float)
    s = scale_precision**-0.5
    u = (x - location) / s
    out = _LOG_NORM - 2.0 * np.log1p(u * u / 3.0) - np.log(s)
    return float(out) if out.ndim == 0 else out


def scaled_t3_cdf(x, location, scale_precision):
    """CDF of the scaled t with 3 df (closed form)."""
    s = np.asarray(scale_precision, dtype=float) ** -0.5
    u = (np.asarray(x, dtype=float) - location) / s
    w = u / math.sqrt(3.0)
    out = 0.5 + (np.arctan(w) + w / (1.0 + w * w)) / math.pi
    return float(out) if out.ndim == 0 else out


def scaled_t3_trunc0_logpdf(x, location, scale_precision):
    """Log density of the scaled t3 truncated to [0, inf), renormalised."""
    x = np.asarray(x, dtype=float)
    base = scaled_t3_logpdf(x, location, scale_precision)
    tail = 1.0 - scaled_t3_cdf(0.0, location, scale_precision)
    out = np.where(x >= 0.0, base - np.log(tail), -np.inf)
    return float(out) if out.ndim == 0 else out


def trunc0_log_normaliser(location, scale_precision):
    """log P(X >= 0) for the untruncated scaled t3: the truncation constant."""
    out = np.log(1.0 - scaled_t3_cdf(0.0, location, scale_precision))
    return float(out) if np.ndim(out) == 0 else out


def sample_trunc0_t3(location, scale_precision, rng: np.random.Generator, size=None):
    """Inverse-CDF draw from the scaled t3 truncated to [0, inf)."""
    location = np.asarray(location, dtype=float)
    s = np.asarray(scale_precision, dtype=float) ** -0.5
    lo = scaled_t3_cdf(0.0, location, scale_precision)
    u = lo + (1.0 - lo) * rng.random(size if size is not None else np.broadcast(location, s).shape or None)
    out = location + s * _student_t.ppf(u, df=3)
    return float(out) if np.ndim(out) == 0 else out
