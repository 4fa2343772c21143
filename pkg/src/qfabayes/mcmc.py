"""Metropolis-within-Gibbs samplers for single growth curves.

fit_sde        marginal-likelihood sampler: the latent state is integrated
               out by the scalar Kalman filter, so each sweep only updates
               the five model parameters (log K, log r, log P,
               log sigma^-2, log nu^-2) by symmetric random-walk
               Metropolis steps.
fit_sde_exact  data-augmentation reference sampler: the latent log-state is
               imputed on a fine grid (Euler-Maruyama transition densities)
               and updated jointly with the parameters. Slow, used as the
               gold standard.

Priors are log-normal on (K, r, P, sigma^-2, nu^-2); the prior on
log sigma^-2 is truncated below 1 so intrinsic noise cannot dominate the
process. Proposal step sizes adapt toward a 20-40% acceptance band during
burn-in and are frozen afterwards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .chain import Chain, StuckChainError
from .growth import GrowthCurve
from .kalman import ObservationDomainError
from .lna import ModelKind, transition_arrays
from .rng import split_rng
from .sde import ErrorKind, SdeParams
from .growth import LogisticParams

_LOG_2PI = math.log(2.0 * math.pi)
_STUCK_LIMIT = 10_000

_DEFAULT_ERROR = {
    ModelKind.RRTR: ErrorKind.LOGNORMAL,
    ModelKind.LNAM: ErrorKind.LOGNORMAL,
    ModelKind.LNAA: ErrorKind.NORMAL,
}

#: sampled coordinates, in sweep order; chain columns are the natural-scale
#: counterparts (K, r, P, sigma, nu)
COORDS = ("log_K", "log_r", "log_sigma_inv2", "log_P", "log_nu_inv2")
PARAM_NAMES = ("K", "r", "P", "sigma", "nu")


@dataclass(frozen=True)
class SdePriors:
    """Normal priors (location mu, precision tau) on the log quantities."""

    mu_K: float = math.log(0.1)
    tau_K: float = 2.0
    mu_r: float = math.log(3.0)
    tau_r: float = 5.0
    mu_P: float = math.log(1e-4)
    tau_P: float = 0.1
    mu_sigma: float = math.log(100.0)
    tau_sigma: float = 0.1
    mu_nu: float = math.log(10_000.0)
    tau_nu: float = 0.1
    #: lower truncation of log sigma^-2
    log_sigma_lower: float = 1.0

    def __post_init__(self):
        for name in ("tau_K", "tau_r", "tau_P", "tau_sigma", "tau_nu"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")

    def locations(self) -> np.ndarray:
        return np.array(
            [self.mu_K, self.mu_r, self.mu_sigma, self.mu_P, self.mu_nu]
        )

    def precisions(self) -> np.ndarray:
        return np.array(
            [self.tau_K, self.tau_r, self.tau_sigma, self.tau_P, self.tau_nu]
        )


@dataclass(frozen=True)
class Schedule:
    """Burn-in length, thinning stride and retained sample count."""

    burn_in: int
    thin: int
    samples: int

    def __post_init__(self):
        if self.burn_in < 0 or self.thin < 1 or self.samples < 1:
            raise ValueError("schedule must be positive")

    @classmethod
    def desk(cls) -> "Schedule":
        return cls(burn_in=50_000, thin=50, samples=1000)

    @classmethod
    def desk_exact(cls) -> "Schedule":
        return cls(burn_in=40_000, thin=40, samples=1000)

    @classmethod
    def paper(cls) -> "Schedule":
        return cls(burn_in=600_000, thin=4000, samples=1000)


@dataclass
class Tuning:
    """Random-walk proposal scales and the adaptation rule."""

    steps: dict = field(default_factory=dict)
    default_step: float = 0.5
    latent_step: float = 0.2
    window: int = 150
    target_low: float = 0.2
    target_high: float = 0.4
    grow: float = 1.4
    shrink: float = 0.7

    def initial_steps(self, names) -> np.ndarray:
        out = np.full(len(names), self.default_step, dtype=float)
        for i, n in enumerate(names):
            if n in self.steps:
                if self.steps[n] <= 0:
                    raise ValueError("proposal step sizes must be > 0")
                out[i] = self.steps[n]
        return out


class _Adapter:
    """Banded multiplicative step-size adaptation, frozen after burn-in."""

    def __init__(self, steps: np.ndarray, tuning: Tuning):
        self.steps = steps.copy()
        self.tuning = tuning
        self.accepted = np.zeros(steps.size, dtype=int)
        self.proposed = np.zeros(steps.size, dtype=int)
        self.consecutive_rejects = np.zeros(steps.size, dtype=int)
        self.frozen = False
        # acceptance bookkeeping for the reported (post-freeze) phase
        self.final_accepted = np.zeros(steps.size, dtype=int)
        self.final_proposed = np.zeros(steps.size, dtype=int)

    def record(self, j: int, accepted: bool):
        self.proposed[j] += 1
        if accepted:
            self.accepted[j] += 1
            self.consecutive_rejects[j] = 0
        else:
            self.consecutive_rejects[j] += 1
        if self.frozen:
            self.final_proposed[j] += 1
            self.final_accepted[j] += int(accepted)
        elif self.proposed[j] >= self.tuning.window:
            rate = self.accepted[j] / self.proposed[j]
            if rate < self.tuning.target_low:
                self.steps[j] *= self.tuning.shrink
            elif rate > self.tuning.target_high:
                self.steps[j] *= self.tuning.grow
            self.steps[j] = min(max(self.steps[j], 1e-8), 50.0)
            self.accepted[j] = 0
            self.proposed[j] = 0

    def check_stuck(self, names, state):
        idx = np.nonzero(self.consecutive_rejects >= _STUCK_LIMIT)[0]
        if idx.size:
            j = int(idx[0])
            raise StuckChainError(
                names[j], int(self.consecutive_rejects[j]),
                float(self.steps[j]), float(state[j]),
            )

    def rates(self, names) -> dict:
        out = {}
        for j, n in enumerate(names):
            tot = self.final_proposed[j]
            out[n] = float(self.final_accepted[j] / tot) if tot else float("nan")
        return out


def _natural_row(x: np.ndarray) -> np.ndarray:
    """(log_K, log_r, u, log_P, w) -> (K, r, P, sigma, nu)."""
    return np.array(
        [
            math.exp(x[0]),
            math.exp(x[1]),
            math.exp(x[3]),
            math.exp(-0.5 * x[2]),
            math.exp(-0.5 * x[4]),
        ]
    )


def _make_marginal_loglik(curve: GrowthCurve, kind: ModelKind, error_kind: ErrorKind):
    """Fast closure evaluating the Kalman marginal log-likelihood."""
    n = len(curve)
    if n == 0:
        return lambda x: 0.0
    times = np.concatenate([[0.0], curve.times])
    if np.any(np.diff(times) <= 0):
        raise ValueError("curve times must be strictly increasing and > 0")
    if error_kind is ErrorKind.LOGNORMAL:
        y = np.asarray(curve.values)
        bad = np.nonzero(y <= 0)[0]
        if bad.size:
            raise ObservationDomainError(int(bad[0]), float(y[bad[0]]))
        z = np.log(y).tolist()
    else:
        z = np.asarray(curve.values, dtype=float).tolist()
    log_scale = error_kind is ErrorKind.LOGNORMAL

    def loglik(x) -> float:
        if np.max(np.abs(x)) > 690.0:
            return -math.inf
        K = math.exp(x[0])
        r = math.exp(x[1])
        sigma = math.exp(-0.5 * x[2])
        P = math.exp(x[3])
        nu2 = math.exp(-x[4])
        if K <= 0 or r <= 0 or P <= 0:
            return -math.inf
        if kind is ModelKind.LNAM and sigma * sigma >= 2.0 * r:
            return -math.inf
        params = SdeParams(growth=LogisticParams(K=K, r=r, P=P), sigma=sigma)
        A, B, Xi = transition_arrays(kind, params, times)
        m = math.log(P) if log_scale else P
        C = 0.0
        ll = 0.0
        for a, b, xi, obs in zip(A.tolist(), B.tolist(), Xi.tolist(), z):
            pm = a + b * m
            R = b * b * C + xi
            S = R + nu2
            if S <= 0.0 or not math.isfinite(S):
                return -math.inf
            resid = obs - pm
            ll -= 0.5 * (_LOG_2PI + math.log(S) + resid * resid / S)
            gain = R / S
            m = pm + gain * resid
            C = R - gain * R
        return ll if math.isfinite(ll) else -math.inf

    return loglik


def _log_prior_term(x: float, mu: float, tau: float) -> float:
    return -0.5 * tau * (x - mu) ** 2


def _run_parameter_sampler(
    loglik,
    priors: SdePriors,
    schedule: Schedule,
    tuning: Tuning,
    rng: np.random.Generator,
    seed: int,
    extra_sigma_nu: int,
) -> Chain:
    """Shared driver for fit_sde (and fit_sde_exact's parameter block is similar
    but interleaves latent updates, so it has its own loop)."""
    mus = priors.locations()
    taus = priors.precisions()
    x = mus.copy()
    x[2] = max(x[2], priors.log_sigma_lower)

    adapter = _Adapter(tuning.initial_steps(COORDS), tuning)
    ll = loglik(x)
    if not math.isfinite(ll):
        raise ValueError("initial state has zero likelihood; check priors/data")

    total = schedule.burn_in + schedule.thin * schedule.samples
    draws = np.empty((schedule.samples, 5))
    kept = 0
    # three extra sigma/nu alternations per sweep improve mixing between the
    # two noise scales
    extra = [(2,), (4,)] * extra_sigma_nu
    update_order = [(0,), (1,), (2,), (3,), (4,)] + extra

    for it in range(total):
        if it == schedule.burn_in:
            adapter.frozen = True
        for (j,) in update_order:
            prop = x[j] + adapter.steps[j] * rng.standard_normal()
            if j == 2 and prop < priors.log_sigma_lower:
                adapter.record(j, False)
                continue
            x_prop = x.copy()
            x_prop[j] = prop
            ll_prop = loglik(x_prop)
            logr = (
                ll_prop
                - ll
                + _log_prior_term(prop, mus[j], taus[j])
                - _log_prior_term(x[j], mus[j], taus[j])
            )
            if math.log(rng.random()) < logr:
                x = x_prop
                ll = ll_prop
                adapter.record(j, True)
            else:
                adapter.record(j, False)
        adapter.check_stuck(COORDS, x)
        if it >= schedule.burn_in and (it - schedule.burn_in + 1) % schedule.thin == 0:
            draws[kept] = _natural_row(x)
            kept += 1
            if kept == schedule.samples:
                break

    return Chain(
        names=list(PARAM_NAMES),
        draws=draws[:kept],
        burn_in=schedule.burn_in,
        thin=schedule.thin,
        seed=seed,
        acceptance=adapter.rates(COORDS),
    )


def fit_sde(
    curve: GrowthCurve,
    kind: ModelKind,
    error_kind: ErrorKind | None = None,
    priors: SdePriors | None = None,
    tuning: Tuning | None = None,
    schedule: Schedule | None = None,
    seed: int = 0,
    extra_sigma_nu: int = 3,
) -> Chain:
    """Posterior sample for one curve under an approximate state-space model.

    The marginal likelihood is evaluated by the Kalman filter, so sweeps
    are cheap; an empty curve yields draws from the prior.
    """
    error_kind = error_kind or _DEFAULT_ERROR[kind]
    priors = priors or SdePriors()
    tuning = tuning or Tuning()
    schedule = schedule or Schedule.desk()
    rng = split_rng(seed, "fit-sde", kind.value, error_kind.value)
    loglik = _make_marginal_loglik(curve, kind, error_kind)
    return _run_parameter_sampler(
        loglik, priors, schedule, tuning, rng, seed, extra_sigma_nu
    )


# ---------------------------------------------------------------------------
# "exact" Euler-Maruyama data-augmentation sampler
# ---------------------------------------------------------------------------


class _AugmentedModel:
    """Latent log-state on a fine grid with Euler-Maruyama transitions."""

    def __init__(self, curve: GrowthCurve, error_kind: ErrorKind, imputed: int):
        if imputed < 1:
            raise ValueError("imputed_per_interval must be >= 1")
        self.error_kind = error_kind
        edges = np.concatenate([[0.0], curve.times])
        grid = [0.0]
        obs_idx = []
        for i in range(len(curve)):
            seg = np.linspace(edges[i], edges[i + 1], imputed + 2)[1:]
            grid.extend(seg.tolist())
            obs_idx.append(len(grid) - 1)
        self.grid = np.asarray(grid)
        self.dts = np.diff(self.grid)
        self.sqdts = np.sqrt(self.dts)
        self.obs_idx = np.asarray(obs_idx, dtype=int)
        y = np.asarray(curve.values, dtype=float)
        if error_kind is ErrorKind.LOGNORMAL:
            bad = np.nonzero(y <= 0)[0]
            if bad.size:
                raise ObservationDomainError(int(bad[0]), float(y[bad[0]]))
            self.z = np.log(y)
        else:
            self.z = y
        # membership masks for the two latent checkerboard classes
        interior = np.arange(1, self.grid.size)
        self.parity = [interior[interior % 2 == 1], interior[interior % 2 == 0]]
        self.is_obs = np.zeros(self.grid.size, dtype=bool)
        self.is_obs[self.obs_idx] = True

    def drift(self, Y, K, r, sigma):
        return r - 0.5 * sigma * sigma - (r / K) * np.exp(Y)

    def transition_logpdf_sum(self, Y, K, r, sigma) -> float:
        mu = Y[:-1] + self.drift(Y[:-1], K, r, sigma) * self.dts
        var = sigma * sigma * self.dts
        resid2 = (Y[1:] - mu) ** 2
        return float(-0.5 * np.sum(_LOG_2PI + np.log(var) + resid2 / var))

    def measurement_logpdf(self, Y, nu) -> np.ndarray:
        pred = Y[self.obs_idx]
        if self.error_kind is ErrorKind.NORMAL:
            pred = np.exp(pred)
        return -0.5 * (_LOG_2PI + 2.0 * math.log(nu) + ((self.z - pred) / nu) ** 2)

    def measurement_logpdf_sum(self, Y, nu) -> float:
        return float(np.sum(self.measurement_logpdf(Y, nu)))

    def innovations(self, Y, K, r, sigma) -> np.ndarray:
        """Standardised Euler-Maruyama increments (iid N(0,1) under the model)."""
        mu = Y[:-1] + self.drift(Y[:-1], K, r, sigma) * self.dts
        return (Y[1:] - mu) / (sigma * self.sqdts)

    def reconstruct(self, xi, K, r, sigma, logP) -> np.ndarray:
        """Rebuild the path from innovations (inverse of `innovations`)."""
        Y = np.empty(self.grid.size)
        y = logP
        Y[0] = y
        c = r - 0.5 * sigma * sigma
        b = r / K
        dts = self.dts.tolist()
        scale = (sigma * self.sqdts).tolist()
        xs = xi.tolist()
        for j in range(len(dts)):
            y = y + (c - b * math.exp(y)) * dts[j] + scale[j] * xs[j]
            Y[j + 1] = y
        return Y


def fit_sde_exact(
    curve: GrowthCurve,
    error_kind: ErrorKind,
    priors: SdePriors | None = None,
    imputed_per_interval: int = 15,
    tuning: Tuning | None = None,
    schedule: Schedule | None = None,
    seed: int = 0,
    extra_sigma_nu: int = 3,
    fixed: dict | None = None,
) -> Chain:
    """Single-site data-augmentation sampler for the exact diffusion.

    Latent states between observations (default 15 per interval) are
    updated in an odd/even checkerboard — each class is conditionally
    independent given the other, so the class is proposed and
    accepted/rejected in one vectorised block. `fixed` pins parameters at
    known values (natural scale, e.g. {"sigma": 1e-6, "nu": 0.005}).
    """
    priors = priors or SdePriors()
    tuning = tuning or Tuning()
    schedule = schedule or Schedule.desk_exact()
    rng = split_rng(seed, "fit-sde-exact", error_kind.value)

    fixed_idx: dict[int, float] = {}
    for name, value in (fixed or {}).items():
        slot = {"K": (0, math.log(value)),
                "r": (1, math.log(value)),
                "sigma": (2, -2.0 * math.log(value)),
                "P": (3, math.log(value)),
                "nu": (4, -2.0 * math.log(value))}[name]
        fixed_idx[slot[0]] = slot[1]

    if len(curve) == 0:
        # no data: parameters are sampled from the prior
        return _run_parameter_sampler(
            lambda x: 0.0, priors, schedule, tuning, rng, seed, extra_sigma_nu
        )

    model = _AugmentedModel(curve, error_kind, imputed_per_interval)
    mus = priors.locations()
    taus = priors.precisions()
    x = mus.copy()
    x[2] = max(x[2], priors.log_sigma_lower)
    for j, v in fixed_idx.items():
        x[j] = v

    def unpack(xv):
        return (
            math.exp(xv[0]),
            math.exp(xv[1]),
            math.exp(-0.5 * xv[2]),
            math.exp(xv[3]),
            math.exp(-0.5 * xv[4]),
        )

    # data-informed start for K, then a self-consistent deterministic path
    if 0 not in fixed_idx:
        x[0] = math.log(float(np.clip(np.max(curve.values), 1e-6, 0.999)))
    K, r, sigma, P, nu = unpack(x)
    from .growth import logistic_solution

    Y = np.log(logistic_solution(LogisticParams(K=K, r=r, P=P), model.grid))
    Y[0] = math.log(P)

    # the non-centered coordinates get their own adapted step sizes
    nc_names = ["nc_" + COORDS[j] for j in (0, 1, 2, 3)]
    adapter = _Adapter(tuning.initial_steps(COORDS), tuning)
    nc_adapter = _Adapter(tuning.initial_steps(nc_names), tuning)
    latent_step = tuning.latent_step
    latent_acc = np.zeros(2, dtype=int)
    latent_tot = np.zeros(2, dtype=int)

    trans_ll = model.transition_logpdf_sum(Y, K, r, sigma)
    meas_ll = model.measurement_logpdf_sum(Y, nu)

    total = schedule.burn_in + schedule.thin * schedule.samples
    draws = np.empty((schedule.samples, 5))
    kept = 0
    extra = [(2,), (4,)] * extra_sigma_nu
    update_order = [(0,), (1,), (2,), (3,), (4,)] + extra

    for it in range(total):
        if it == schedule.burn_in:
            adapter.frozen = True
            nc_adapter.frozen = True
        # --- parameter block, path held fixed (centered)
        for (j,) in update_order:
            if j in fixed_idx:
                continue
            prop = x[j] + adapter.steps[j] * rng.standard_normal()
            if j == 2 and prop < priors.log_sigma_lower:
                adapter.record(j, False)
                continue
            if abs(prop) > 690.0:
                adapter.record(j, False)
                continue
            x_prop = x.copy()
            x_prop[j] = prop
            Kp, rp, sigmap, Pp, nup = unpack(x_prop)
            Yp = Y
            if j == 3:
                Yp = Y.copy()
                Yp[0] = math.log(Pp)
            if j == 4:
                trans_prop = trans_ll
                meas_prop = model.measurement_logpdf_sum(Yp, nup)
            else:
                trans_prop = model.transition_logpdf_sum(Yp, Kp, rp, sigmap)
                meas_prop = meas_ll
            logratio = (
                trans_prop
                + meas_prop
                - trans_ll
                - meas_ll
                + _log_prior_term(prop, mus[j], taus[j])
                - _log_prior_term(x[j], mus[j], taus[j])
            )
            if math.isfinite(logratio) and math.log(rng.random()) < logratio:
                x = x_prop
                K, r, sigma, P, nu = Kp, rp, sigmap, Pp, nup
                Y = Yp
                trans_ll, meas_ll = trans_prop, meas_prop
                adapter.record(j, True)
            else:
                adapter.record(j, False)
        adapter.check_stuck(COORDS, x)

        # --- interweaved non-centered block: the path deforms with the
        # parameter while the standardised innovations stay fixed, so the
        # transition terms cancel from the acceptance ratio exactly
        xi = model.innovations(Y, K, r, sigma)
        for jj, j in enumerate((0, 1, 2, 3)):
            if j in fixed_idx:
                continue
            prop = x[j] + nc_adapter.steps[jj] * rng.standard_normal()
            if j == 2 and prop < priors.log_sigma_lower:
                nc_adapter.record(jj, False)
                continue
            if abs(prop) > 690.0:
                nc_adapter.record(jj, False)
                continue
            x_prop = x.copy()
            x_prop[j] = prop
            Kp, rp, sigmap, Pp, _ = unpack(x_prop)
            Yp = model.reconstruct(xi, Kp, rp, sigmap, math.log(Pp))
            if not np.all(np.isfinite(Yp)):
                nc_adapter.record(jj, False)
                continue
            meas_prop = model.measurement_logpdf_sum(Yp, nu)
            logratio = (
                meas_prop
                - meas_ll
                + _log_prior_term(prop, mus[j], taus[j])
                - _log_prior_term(x[j], mus[j], taus[j])
            )
            if math.isfinite(logratio) and math.log(rng.random()) < logratio:
                x = x_prop
                K, r, sigma, P = Kp, rp, sigmap, Pp
                Y = Yp
                meas_ll = meas_prop
                nc_adapter.record(jj, True)
            else:
                nc_adapter.record(jj, False)
        trans_ll = model.transition_logpdf_sum(Y, K, r, sigma)

        # --- latent checkerboard block
        s2dt = sigma * sigma * model.dts
        for pclass, idx in enumerate(model.parity):
            prop = Y.copy()
            prop[idx] = Y[idx] + latent_step * rng.standard_normal(idx.size)
            dlog = np.zeros(idx.size)
            # incoming transition (idx-1 -> idx): mean is unchanged
            mu_in = Y[idx - 1] + model.drift(Y[idx - 1], K, r, sigma) * model.dts[idx - 1]
            dlog += -0.5 * ((prop[idx] - mu_in) ** 2 - (Y[idx] - mu_in) ** 2) / s2dt[idx - 1]
            # outgoing transition (idx -> idx+1) where it exists
            has_next = idx < Y.size - 1
            nxt = idx[has_next]
            mu_old = Y[nxt] + model.drift(Y[nxt], K, r, sigma) * model.dts[nxt]
            mu_new = prop[nxt] + model.drift(prop[nxt], K, r, sigma) * model.dts[nxt]
            dlog[has_next] += (
                -0.5 * ((Y[nxt + 1] - mu_new) ** 2 - (Y[nxt + 1] - mu_old) ** 2) / s2dt[nxt]
            )
            # measurement where the site is observed
            obs_here = model.is_obs[idx]
            if np.any(obs_here):
                sites = idx[obs_here]
                pos = np.searchsorted(model.obs_idx, sites)
                z = model.z[pos]
                if model.error_kind is ErrorKind.NORMAL:
                    old_pred, new_pred = np.exp(Y[sites]), np.exp(prop[sites])
                else:
                    old_pred, new_pred = Y[sites], prop[sites]
                dlog[obs_here] += (
                    -0.5 * ((z - new_pred) ** 2 - (z - old_pred) ** 2) / (nu * nu)
                )
            accept = np.log(rng.random(idx.size)) < dlog
            Y[idx[accept]] = prop[idx[accept]]
            latent_acc[pclass] += int(np.sum(accept))
            latent_tot[pclass] += idx.size
        if it < schedule.burn_in and (it + 1) % tuning.window == 0:
            rate = latent_acc.sum() / latent_tot.sum()
            if rate < tuning.target_low:
                latent_step *= tuning.shrink
            elif rate > tuning.target_high:
                latent_step *= tuning.grow
            latent_step = min(max(latent_step, 1e-8), 10.0)
            latent_acc[:] = 0
            latent_tot[:] = 0
        if it == schedule.burn_in - 1:
            latent_acc[:] = 0
            latent_tot[:] = 0
        # refresh cached sums (cheap, avoids drift from in-place latent edits)
        trans_ll = model.transition_logpdf_sum(Y, K, r, sigma)
        meas_ll = model.measurement_logpdf_sum(Y, nu)

        if it >= schedule.burn_in and (it - schedule.burn_in + 1) % schedule.thin == 0:
            draws[kept] = _natural_row(x)
            kept += 1
            if kept == schedule.samples:
                break

    acceptance = adapter.rates(COORDS)
    acceptance["latent"] = (
        float(latent_acc.sum() / latent_tot.sum()) if latent_tot.sum() else float("nan")
    )
    return Chain(
        names=list(PARAM_NAMES),
        draws=draws[:kept],
        burn_in=schedule.burn_in,
        thin=schedule.thin,
        seed=seed,
        acceptance=acceptance,
    )
