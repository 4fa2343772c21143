"""Per-screen growth hierarchy: one condition, shared inoculum.

Time courses y_lmn are fit with the deterministic logistic solution; the
three-level hierarchy shares information across repeats of a gene and
across genes. Repeat-level log K is truncated above 0 (scaled densities
cannot exceed 1) and log r above 3.5 (no doubling faster than ~30 min);
gene-level effects are heavy-tailed (scaled t3, truncated positive).
"""

from __future__ import annotations

import math

import numpy as np

from ..chain import Chain
from ..growth import FitnessScore, LogisticParams, fitness
from ..rng import split_rng
from .common import (
    HierarchySchedule,
    VectorAdapter,
    mh_accept,
    norm_logpdf,
    tn_logpdf_lower,
    tn_logpdf_upper,
)
from .screen import CONTROL, HyperParams, ScreenDataset
from .tdist import scaled_t3_logpdf, scaled_t3_trunc0_logpdf

LOG_K_BOUND = 0.0
LOG_R_BOUND = 3.5


class _PaddedCondition:
    """Rectangular tensors for one condition of a screen."""

    def __init__(self, ds: ScreenDataset, condition: int):
        self.genes = sorted(ds.series[condition])
        L = len(self.genes)
        reps = [ds.repeats(condition, g) for g in self.genes]
        M = max((len(r) for r in reps), default=0)
        N = max((len(rep.times) for r in reps for rep in r), default=0)
        self.L, self.M, self.N = L, M, N
        self.t = np.zeros((L, M, N))
        self.y = np.zeros((L, M, N))
        self.obs = np.zeros((L, M, N), dtype=bool)
        self.rep_mask = np.zeros((L, M), dtype=bool)
        self.batch_idx = np.full((L, M), -1, dtype=int)
        batches = ds.batches()
        self.batch_labels = batches
        lookup = {b: i for i, b in enumerate(batches)}
        for l, rlist in enumerate(reps):
            for m, rep in enumerate(rlist):
                n = len(rep.times)
                self.t[l, m, :n] = rep.times
                self.y[l, m, :n] = rep.values
                self.obs[l, m, :n] = True
                self.rep_mask[l, m] = True
                if rep.batch is not None:
                    self.batch_idx[l, m] = lookup[rep.batch]
        self.n_obs_rep = self.obs.sum(axis=2)
        self.n_obs_gene = self.n_obs_rep.sum(axis=1)


def logistic_values(t, K, r, P):
    """Vectorised logistic solution; K, r broadcast against the time axis."""
    rt = r * t
    ert = np.exp(np.minimum(rt, 30.0))
    small = K * P * ert / (K + P * (ert - 1.0))
    emrt = np.exp(-rt)
    large = K * P / (K * emrt + P * (1.0 - emrt))
    return np.where(rt > 30.0, large, small)


def _ssr(data: _PaddedCondition, logK, logr, P):
    x = logistic_values(data.t, np.exp(logK)[..., None], np.exp(logr)[..., None], P)
    resid = np.where(data.obs, data.y - x, 0.0)
    return np.einsum("lmn,lmn->lm", resid, resid)


class ShmSampler:
    """Metropolis-within-Gibbs over the full per-screen hierarchy."""

    def __init__(self, data: _PaddedCondition, hyper: HyperParams,
                 rng: np.random.Generator):
        self.d = data
        self.h = hyper
        self.rng = rng
        L, M = data.L, data.M
        h = hyper
        # population level at prior locations
        self.logKp = h.K_mu
        self.logrp = h.r_mu
        self.logP = h.P_mu
        self.nup = h.nu_mu
        self.tauKp = max(h.tau_K_mu, 0.0)
        self.taurp = h.tau_r_mu
        self.logsigKo = h.eta_K_o
        self.logsigro = h.eta_r_o
        self.logsignu = h.eta_nu
        self.logsigtauK = h.eta_tau_K
        self.logsigtaur = h.eta_tau_r
        # gene / repeat levels started from the data where it exists
        if L:
            ymax = np.where(self.d.obs, self.d.y, 0.0).max(axis=2)
            log_ymax = np.log(np.clip(ymax, 1e-6, 0.95))
            self.logK = np.where(data.rep_mask, log_ymax, h.K_mu)
            self.logK = np.minimum(self.logK, -1e-3)
            self.logr = np.full((L, M), min(h.r_mu, LOG_R_BOUND - 1e-3))
            cnt = data.rep_mask.sum(axis=1)
            sums = np.where(data.rep_mask, log_ymax, 0.0).sum(axis=1)
            self.Ko = np.where(cnt > 0, sums / np.maximum(cnt, 1), h.K_mu)
            self.Ko = np.minimum(self.Ko, -1e-3)
            self.ro = np.full(L, h.r_mu)
            self.logtauK = np.full(L, max(self.tauKp, 0.0))
            self.logtaur = np.full(L, self.taurp)
            ssr0 = _ssr(data, self.logK, self.logr, math.exp(self.logP))
            mean_sq = np.where(
                data.n_obs_gene > 0,
                ssr0.sum(axis=1) / np.maximum(data.n_obs_gene, 1),
                1e-4,
            )
            self.lognu = -np.log(np.maximum(mean_sq, 1e-10))
        else:
            self.logK = np.zeros((0, M))
            self.logr = np.zeros((0, M))
            self.Ko = np.zeros(0)
            self.ro = np.zeros(0)
            self.logtauK = np.zeros(0)
            self.logtaur = np.zeros(0)
            self.lognu = np.zeros(0)
        self.ssr = _ssr(data, self.logK, self.logr, math.exp(self.logP))

        mk = lambda name, shape: VectorAdapter(name, shape, step=0.3)
        self.ad = {
            "K": mk("K", (L, M)),
            "r": mk("r", (L, M)),
            "Ko": mk("K_o", L),
            "ro": mk("r_o", L),
            "nu": mk("nu", L),
            "tauK": mk("tau_K", L),
            "taur": mk("tau_r", L),
        }
        self.scalar_ad = {
            name: VectorAdapter(name, 1, step=0.4)
            for name in (
                "K_p", "r_p", "P", "nu_p", "sig_Ko", "sig_ro", "sig_nu",
                "tau_Kp", "tau_rp", "sig_tauK", "sig_taur",
            )
        }

    # -- vectorised update families ------------------------------------

    def _update_repeats(self):
        d, rng = self.d, self.rng
        if d.L == 0:
            return
        nu = np.exp(self.lognu)[:, None]
        P = math.exp(self.logP)
        for which in ("K", "r"):
            ad = self.ad[which]
            cur = self.logK if which == "K" else self.logr
            bound = LOG_K_BOUND if which == "K" else LOG_R_BOUND
            mean = (self.Ko if which == "K" else self.ro)[:, None]
            prec = np.exp(self.logtauK if which == "K" else self.logtaur)[:, None]
            prop = cur + ad.steps * rng.standard_normal(cur.shape)
            if which == "K":
                ssr_prop = _ssr(d, prop, self.logr, P)
            else:
                ssr_prop = _ssr(d, self.logK, prop, P)
            dlog = (
                -0.5 * nu * (ssr_prop - self.ssr)
                + tn_logpdf_upper(prop, mean, prec, bound)
                - tn_logpdf_upper(cur, mean, prec, bound)
            )
            acc = mh_accept(rng, dlog) & d.rep_mask
            cur[acc] = prop[acc]
            self.ssr[acc] = ssr_prop[acc]
            ad.record(acc, active=d.rep_mask)

    def _update_gene_level(self):
        d, rng = self.d, self.rng
        if d.L == 0:
            return
        mask = d.rep_mask
        # measurement precision nu_l
        ad = self.ad["nu"]
        prop = self.lognu + ad.steps * rng.standard_normal(d.L)
        ssr_gene = self.ssr.sum(axis=1)
        dlog = (
            0.5 * d.n_obs_gene * (prop - self.lognu)
            - 0.5 * (np.exp(prop) - np.exp(self.lognu)) * ssr_gene
            + norm_logpdf(prop, self.nup, math.exp(self.logsignu))
            - norm_logpdf(self.lognu, self.nup, math.exp(self.logsignu))
        )
        acc = mh_accept(rng, dlog)
        self.lognu[acc] = prop[acc]
        ad.record(acc)

        # gene effects K_o, r_o (scaled-t3 prior on the density scale)
        for which in ("Ko", "ro"):
            ad = self.ad[which]
            cur = self.Ko if which == "Ko" else self.ro
            child = self.logK if which == "Ko" else self.logr
            bound = LOG_K_BOUND if which == "Ko" else LOG_R_BOUND
            prec = np.exp(self.logtauK if which == "Ko" else self.logtaur)[:, None]
            loc = math.exp(self.logKp if which == "Ko" else self.logrp)
            sig = math.exp(self.logsigKo if which == "Ko" else self.logsigro)
            prop = cur + ad.steps * rng.standard_normal(d.L)
            dlog = np.sum(
                np.where(
                    mask,
                    tn_logpdf_upper(child, prop[:, None], prec, bound)
                    - tn_logpdf_upper(child, cur[:, None], prec, bound),
                    0.0,
                ),
                axis=1,
            )
            # prior on the gene effect: t3 density of e^x plus the Jacobian
            dlog += (
                scaled_t3_logpdf(np.exp(prop), loc, sig) + prop
                - scaled_t3_logpdf(np.exp(cur), loc, sig) - cur
            )
            acc = mh_accept(rng, dlog)
            cur[acc] = prop[acc]
            ad.record(acc)

        # repeat-level precisions tau
        for which in ("tauK", "taur"):
            ad = self.ad[which]
            cur = self.logtauK if which == "tauK" else self.logtaur
            child = self.logK if which == "tauK" else self.logr
            mean = (self.Ko if which == "tauK" else self.ro)[:, None]
            bound = LOG_K_BOUND if which == "tauK" else LOG_R_BOUND
            pop_mean = self.tauKp if which == "tauK" else self.taurp
            pop_prec = math.exp(self.logsigtauK if which == "tauK" else self.logsigtaur)
            prop = cur + ad.steps * rng.standard_normal(d.L)
            dlog = np.sum(
                np.where(
                    mask,
                    tn_logpdf_upper(child, mean, np.exp(prop)[:, None], bound)
                    - tn_logpdf_upper(child, mean, np.exp(cur)[:, None], bound),
                    0.0,
                ),
                axis=1,
            )
            if which == "tauK":
                # log tau^K is itself truncated non-negative
                dlog += tn_logpdf_lower(prop, pop_mean, pop_prec, 0.0)
                dlog -= tn_logpdf_lower(cur, pop_mean, pop_prec, 0.0)
            else:
                dlog += norm_logpdf(prop, pop_mean, pop_prec)
                dlog -= norm_logpdf(cur, pop_mean, pop_prec)
            acc = mh_accept(rng, dlog)
            cur[acc] = prop[acc]
            ad.record(acc)

    def _scalar_mh(self, name, cur, logpost):
        ad = self.scalar_ad[name]
        prop = cur + float(ad.steps[0]) * self.rng.standard_normal()
        dlog = logpost(prop) - logpost(cur)
        acc = bool(mh_accept(self.rng, np.array([dlog]))[0])
        ad.record(np.array([acc]))
        return prop if acc else cur

    def _update_population(self):
        d, h = self.d, self.h

        def kp_post(v):
            s = norm_logpdf(v, h.K_mu, h.eta_K_p)
            if d.L:
                s += np.sum(scaled_t3_trunc0_logpdf(
                    np.exp(self.Ko), math.exp(v), math.exp(self.logsigKo)))
            return s

        def rp_post(v):
            s = norm_logpdf(v, h.r_mu, h.eta_r_p)
            if d.L:
                s += np.sum(scaled_t3_trunc0_logpdf(
                    np.exp(self.ro), math.exp(v), math.exp(self.logsigro)))
            return s

        def sig_ko_post(v):
            s = norm_logpdf(v, h.eta_K_o, h.psi_K_o)
            if d.L:
                s += np.sum(scaled_t3_trunc0_logpdf(
                    np.exp(self.Ko), math.exp(self.logKp), math.exp(v)))
            return s

        def sig_ro_post(v):
            s = norm_logpdf(v, h.eta_r_o, h.psi_r_o)
            if d.L:
                s += np.sum(scaled_t3_trunc0_logpdf(
                    np.exp(self.ro), math.exp(self.logrp), math.exp(v)))
            return s

        def nup_post(v):
            s = norm_logpdf(v, h.nu_mu, h.eta_nu_p)
            if d.L:
                s += np.sum(norm_logpdf(self.lognu, v, math.exp(self.logsignu)))
            return s

        def signu_post(v):
            s = norm_logpdf(v, h.eta_nu, h.psi_nu)
            if d.L:
                s += np.sum(norm_logpdf(self.lognu, self.nup, math.exp(v)))
            return s

        def taukp_post(v):
            s = norm_logpdf(v, h.tau_K_mu, h.eta_tau_K_p)
            if d.L:
                s += np.sum(tn_logpdf_lower(
                    self.logtauK, v, math.exp(self.logsigtauK), 0.0))
            return s

        def taurp_post(v):
            s = norm_logpdf(v, h.tau_r_mu, h.eta_tau_r_p)
            if d.L:
                s += np.sum(norm_logpdf(self.logtaur, v, math.exp(self.logsigtaur)))
            return s

        def sig_tauk_post(v):
            s = norm_logpdf(v, h.eta_tau_K, h.psi_tau_K)
            if d.L:
                s += np.sum(tn_logpdf_lower(self.logtauK, self.tauKp, math.exp(v), 0.0))
            return s

        def sig_taur_post(v):
            s = norm_logpdf(v, h.eta_tau_r, h.psi_tau_r)
            if d.L:
                s += np.sum(norm_logpdf(self.logtaur, self.taurp, math.exp(v)))
            return s

        self.logKp = self._scalar_mh("K_p", self.logKp, kp_post)
        self.logrp = self._scalar_mh("r_p", self.logrp, rp_post)
        self.logsigKo = self._scalar_mh("sig_Ko", self.logsigKo, sig_ko_post)
        self.logsigro = self._scalar_mh("sig_ro", self.logsigro, sig_ro_post)
        self.nup = self._scalar_mh("nu_p", self.nup, nup_post)
        self.logsignu = self._scalar_mh("sig_nu", self.logsignu, signu_post)
        self.tauKp = self._scalar_mh("tau_Kp", self.tauKp, taukp_post)
        self.taurp = self._scalar_mh("tau_rp", self.taurp, taurp_post)
        self.logsigtauK = self._scalar_mh("sig_tauK", self.logsigtauK, sig_tauk_post)
        self.logsigtaur = self._scalar_mh("sig_taur", self.logsigtaur, sig_taur_post)

        # shared inoculum: full-data likelihood
        if d.L:
            ad = self.scalar_ad["P"]
            prop = self.logP + float(ad.steps[0]) * self.rng.standard_normal()
            ssr_prop = _ssr(d, self.logK, self.logr, math.exp(prop))
            nu = np.exp(self.lognu)[:, None]
            dlog = float(
                np.sum(np.where(d.rep_mask, -0.5 * nu * (ssr_prop - self.ssr), 0.0))
            )
            dlog += norm_logpdf(prop, h.P_mu, h.eta_P) - norm_logpdf(
                self.logP, h.P_mu, h.eta_P
            )
            acc = bool(mh_accept(self.rng, np.array([dlog]))[0])
            if acc:
                self.logP = prop
                self.ssr = ssr_prop
            ad.record(np.array([acc]))
        else:
            self.logP = self._scalar_mh(
                "P", self.logP, lambda v: norm_logpdf(v, h.P_mu, h.eta_P)
            )

    def sweep(self):
        self._update_repeats()
        self._update_gene_level()
        self._update_population()

    def freeze(self):
        for ad in (*self.ad.values(), *self.scalar_ad.values()):
            ad.frozen = True

    # -- chain assembly --------------------------------------------------

    def column_names(self) -> list[str]:
        names = [
            "K_p", "r_p", "P", "nu_p", "tau_K_p", "tau_r_p",
            "sigma_K_o", "sigma_r_o", "sigma_nu", "sigma_tau_K", "sigma_tau_r",
        ]
        for i, g in enumerate(self.d.genes):
            names += [f"K_o[{g}]", f"r_o[{g}]", f"nu[{g}]",
                      f"tau_K[{g}]", f"tau_r[{g}]"]
        for i, g in enumerate(self.d.genes):
            for m in range(self.d.M):
                if self.d.rep_mask[i, m]:
                    names += [f"K[{g},{m}]", f"r[{g},{m}]"]
        return names

    def snapshot(self) -> np.ndarray:
        pop = [
            math.exp(self.logKp), math.exp(self.logrp), math.exp(self.logP),
            self.nup, self.tauKp, self.taurp,
            math.exp(self.logsigKo), math.exp(self.logsigro),
            math.exp(self.logsignu), math.exp(self.logsigtauK),
            math.exp(self.logsigtaur),
        ]
        gene = np.column_stack([
            np.exp(self.Ko), np.exp(self.ro), np.exp(self.lognu),
            np.exp(self.logtauK), np.exp(self.logtaur),
        ]).ravel() if self.d.L else np.zeros(0)
        reps = []
        for i in range(self.d.L):
            for m in range(self.d.M):
                if self.d.rep_mask[i, m]:
                    reps += [math.exp(self.logK[i, m]), math.exp(self.logr[i, m])]
        return np.concatenate([pop, gene, reps])

    def acceptance(self) -> dict:
        out = {k: ad.rate() for k, ad in self.ad.items()}
        out.update({k: ad.rate() for k, ad in self.scalar_ad.items()})
        return out


def fit_shm(
    screen: ScreenDataset,
    hyper: HyperParams | None = None,
    schedule: HierarchySchedule | None = None,
    seed: int = 0,
    condition: int = CONTROL,
    allow_empty: bool = False,
) -> Chain:
    """Fit the growth hierarchy to one condition of a screen.

    An empty gene list is only accepted with allow_empty=True (prior
    recovery); the chain then contains just the population parameters.
    """
    hyper = hyper or HyperParams()
    schedule = schedule or HierarchySchedule.desk()
    data = _PaddedCondition(screen, condition)
    if data.L == 0 and not allow_empty:
        raise ValueError("screen has no genes in the requested condition")
    rng = split_rng(seed, "fit-shm", condition)
    s = ShmSampler(data, hyper, rng)

    total = schedule.burn_in + schedule.thin * schedule.samples
    names = s.column_names()
    draws = np.empty((schedule.samples, len(names)))
    kept = 0
    for it in range(total):
        if it == schedule.burn_in:
            s.freeze()
        s.sweep()
        if it >= schedule.burn_in and (it - schedule.burn_in + 1) % schedule.thin == 0:
            draws[kept] = s.snapshot()
            kept += 1
            if kept == schedule.samples:
                break
    return Chain(
        names=names, draws=draws[:kept], burn_in=schedule.burn_in,
        thin=schedule.thin, seed=seed, acceptance=s.acceptance(),
    )


def shm_fitnesses(chain: Chain) -> dict[str, list[FitnessScore]]:
    """Per-repeat fitness of the posterior-mean (K_lm, r_lm, shared P)."""
    P_hat = chain.mean("P")
    out: dict[str, list[FitnessScore]] = {}
    for name in chain.names:
        if name.startswith("K[") and name.endswith("]"):
            gene, m = name[2:-1].rsplit(",", 1)
            K_hat = chain.mean(name)
            r_hat = chain.mean(f"r[{gene},{m}]")
            out.setdefault(gene, []).append(
                fitness(LogisticParams(K=K_hat, r=r_hat, P=P_hat))
            )
    return out
