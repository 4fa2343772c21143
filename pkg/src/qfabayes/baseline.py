"""Frequentist per-gene screen comparison.

Scaled fitnesses (each screen normalised to unit mean), a per-gene linear
model for the query-vs-control contrast, and Benjamini-Hochberg FDR
correction. The per-gene maximum-likelihood fit with a shared variance
reduces exactly to the pooled two-sample t-test, which is what is
implemented.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import t as student_t

SIGNIFICANCE_Q = 0.05


class DegenerateScreenError(ValueError):
    """A screen's grand mean fitness is zero; scaling is undefined."""


@dataclass(frozen=True)
class GeneTestResult:
    gene: str
    gamma_hat: float
    p_value: float
    q_value: float

    @property
    def significant(self) -> bool:
        return self.q_value < SIGNIFICANCE_Q


def scale_fitnesses(fits: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Divide every fitness in a screen by the screen's grand mean."""
    if not fits:
        raise ValueError("empty fitness set")
    values = np.concatenate([np.atleast_1d(np.asarray(v, float)) for v in fits.values()])
    grand = values.mean()
    if grand == 0.0:
        raise DegenerateScreenError("screen grand mean fitness is zero")
    return {g: np.atleast_1d(np.asarray(v, float)) / grand for g, v in fits.items()}


def gene_test(control_reps, query_reps) -> tuple[float, float]:
    """Pooled two-sample t contrast: (gamma_hat, two-sided p-value).

    gamma_hat is mean(query) - mean(control) under the shared-variance
    Normal model. Degenerate zero pooled variance gives p = 1 when the
    means coincide and p = 0 otherwise.
    """
    c = np.asarray(control_reps, dtype=float)
    q = np.asarray(query_reps, dtype=float)
    if c.size < 2 or q.size < 2:
        raise ValueError("need at least 2 repeats per condition")
    gamma_hat = float(q.mean() - c.mean())
    df = c.size + q.size - 2
    pooled = ((c.size - 1) * c.var(ddof=1) + (q.size - 1) * q.var(ddof=1)) / df
    if pooled == 0.0:
        return gamma_hat, 1.0 if gamma_hat == 0.0 else 0.0
    se = math.sqrt(pooled * (1.0 / c.size + 1.0 / q.size))
    t_stat = gamma_hat / se
    p = 2.0 * float(student_t.sf(abs(t_stat), df))
    return gamma_hat, min(p, 1.0)


def benjamini_hochberg(p_values) -> np.ndarray:
    """Step-up FDR q-values, reported in input order and clamped to 1."""
    p = np.asarray(p_values, dtype=float)
    if p.size == 0:
        return p.copy()
    if np.any((p < 0) | (p > 1)) or not np.all(np.isfinite(p)):
        raise ValueError("p-values must lie in [0, 1]")
    m = p.size
    order = np.argsort(p, kind="stable")
    ranked = p[order] * m / np.arange(1, m + 1)
    q_sorted = np.minimum.accumulate(ranked[::-1])[::-1]
    q = np.empty(m)
    q[order] = np.minimum(q_sorted, 1.0)
    return q


def compare_screens(
    control_fits: dict[str, np.ndarray],
    query_fits: dict[str, np.ndarray],
) -> tuple[list[GeneTestResult], list[tuple[str, str]]]:
    """Scaled-fitness gene tests over a whole screen comparison.

    Genes with fewer than 2 repeats in either condition are skipped and
    reported alongside the results.
    """
    scaled_c = scale_fitnesses(control_fits)
    scaled_q = scale_fitnesses(query_fits)
    genes = sorted(set(scaled_c) & set(scaled_q))
    skipped = []
    kept = []
    stats = []
    for g in genes:
        c, q = scaled_c[g], scaled_q[g]
        if c.size < 2 or q.size < 2:
            skipped.append((g, "fewer than 2 repeats in a condition"))
            continue
        kept.append(g)
        stats.append(gene_test(c, q))
    qvals = benjamini_hochberg([p for _, p in stats])
    results = [
        GeneTestResult(gene=g, gamma_hat=gh, p_value=p, q_value=float(qv))
        for g, (gh, p), qv in zip(kept, stats, qvals)
    ]
    return results, skipped
