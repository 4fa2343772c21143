"""Chain convergence diagnostics and list-comparison statistics.

ess                 effective sample size n / (1 + 2 sum rho_k), truncating
                    the autocorrelation sum at the first non-positive lag
heidelberger_welch  Cramer-von-Mises stationarity test on the standardised
                    cumulative sums, with an AR-fit spectral-density
                    estimate at frequency zero
acf                 biased autocorrelation estimator, acf(0) = 1
spearman            Pearson correlation of mid-ranks (ties get average rank)
jaccard             |A & B| / |A | B|
"""

from __future__ import annotations

import math

import numpy as np
from scipy import special
from scipy.stats import rankdata


def acf(x, max_lag: int) -> np.ndarray:
    """Autocorrelations at lags 0..max_lag (biased estimator)."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 2:
        raise ValueError("need at least two samples")
    if max_lag >= n:
        raise ValueError("max_lag must be < len(x)")
    xc = x - x.mean()
    var = np.dot(xc, xc)
    if var == 0.0:
        out = np.zeros(max_lag + 1)
        out[0] = 1.0
        return out
    # full autocovariance via FFT, then normalise by gamma(0)
    nfft = int(2 ** math.ceil(math.log2(2 * n)))
    f = np.fft.rfft(xc, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[: max_lag + 1]
    return acov / acov[0]


def ess(x) -> float:
    """Effective sample size with initial-positive-sequence truncation.

    A constant (degenerate) chain reports 0.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 10:
        raise ValueError("need at least 10 samples")
    if np.std(x) == 0.0:
        return 0.0
    rho = acf(x, min(n - 1, 10 * int(math.sqrt(n))))
    s = 0.0
    for k in range(1, rho.size):
        if rho[k] <= 0.0:
            break
        s += rho[k]
    return float(n / (1.0 + 2.0 * s))


def _ar_spectrum0(x) -> float:
    """Spectral density at frequency zero from a Yule-Walker AR fit.

    Order is chosen by AIC up to ~10 log10(n), as is conventional for this
    estimator; returns sigma_resid^2 / (1 - sum a_i)^2.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    xc = x - x.mean()
    gamma0 = float(np.dot(xc, xc)) / n
    if gamma0 == 0.0:
        return 0.0
    max_order = min(int(10 * math.log10(n)), n // 4)
    acov = acf(xc, max_order) * gamma0

    # Levinson-Durbin recursion, tracking AIC over the order
    best_s0 = gamma0
    best_aic = n * math.log(gamma0) + 2.0
    a = np.zeros(0)
    sig2 = gamma0
    for p in range(1, max_order + 1):
        if sig2 <= 0.0:
            break
        k = (acov[p] - np.dot(a, acov[p - 1:0:-1])) / sig2
        a_new = np.empty(p)
        a_new[: p - 1] = a - k * a[::-1]
        a_new[p - 1] = k
        a = a_new
        sig2 = sig2 * (1.0 - k * k)
        if sig2 <= 0.0:
            break
        aic = n * math.log(sig2) + 2.0 * (p + 1)
        if aic < best_aic:
            denom = 1.0 - float(np.sum(a))
            if denom != 0.0:
                best_aic = aic
                best_s0 = sig2 / denom**2
    return best_s0


def _cramer_von_mises_cdf(q: float) -> float:
    """CDF of the asymptotic Cramer-von-Mises distribution (Bessel series)."""
    if q <= 0.0:
        return 0.0
    total = 0.0
    for k in range(4):
        z = (
            special.gamma(k + 0.5)
            * math.sqrt(4.0 * k + 1.0)
            / (special.gamma(k + 1.0) * math.pi**1.5 * math.sqrt(q))
        )
        u = (4.0 * k + 1.0) ** 2 / (16.0 * q)
        if u > 50.0:
            continue
        total += z * math.exp(-u) * special.kv(0.25, u)
    return min(max(total, 0.0), 1.0)


def heidelberger_welch(x) -> float:
    """Stationarity p-value; NaN flags a degenerate (constant) chain.

    The zero-frequency spectral density is estimated from the second half
    of the chain, the portion presumed stationary under the alternative of
    an initial transient; estimating it from the full chain would let the
    transient inflate the variance and mask itself.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 100:
        raise ValueError("need at least 100 samples")
    if np.std(x) == 0.0:
        return float("nan")
    s0 = _ar_spectrum0(x[n // 2 :])
    if s0 <= 0.0:
        return float("nan")
    csum = np.cumsum(x)
    k = np.arange(1, n + 1)
    bridge = (csum - k * x.mean()) / math.sqrt(n * s0)
    stat = float(np.mean(bridge**2))
    return 1.0 - _cramer_von_mises_cdf(stat)


def spearman(x, y) -> float:
    """Spearman rank correlation in [-1, 1]."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise ValueError("need two equal-length vectors with >= 2 entries")
    rx = rankdata(x)
    ry = rankdata(y)
    sx, sy = rx.std(), ry.std()
    if sx == 0.0 or sy == 0.0:
        raise ValueError("ranks are constant; correlation undefined")
    return float(np.mean((rx - rx.mean()) * (ry - ry.mean())) / (sx * sy))


def jaccard(set_a, set_b) -> float:
    """Jaccard similarity of two sets; two empty sets count as identical."""
    a, b = set(set_a), set(set_b)
    union = a | b
    if not union:
        return 1.0
    return len(a & b) / len(union)


def report(chain, max_lag: int = 50) -> dict:
    """JSON-ready diagnostics report for every parameter of a chain."""
    out = {}
    for name in chain.names:
        col = chain[name]
        degenerate = bool(np.std(col) == 0.0)
        entry = {
            "ess": ess(col),
            "hw_pvalue": None if degenerate else heidelberger_welch(col),
            "acf": acf(col, min(max_lag, col.size - 1)).tolist(),
            "degenerate": degenerate,
        }
        out[name] = entry
    return out
