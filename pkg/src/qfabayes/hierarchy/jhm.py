"""Joint hierarchical model: growth and genetic interaction in one fit.

Both conditions of a screen comparison share gene effects (K_o, r_o); the
query condition adds a global scaling (alpha for K, beta for r) and a
Bernoulli-indicated interaction term per gene in each growth parameter
(gamma for K, omega for r). Variants:

  batch      adds additive plate effects kappa_b / lambda_b to the
             repeat-level means
  transform  divides the repeat-level K-mean by phi and r-mean by chi
             (power transformation on the density scale), phi, chi > 0
             with Gamma priors centred at 1

Suppressor/enhancer classification of significant genes follows the
r-interaction: mean exp(delta*omega) > 1 is a suppressor.
"""

from __future__ import annotations

import enum
import math

import numpy as np

from ..chain import Chain
from ..growth import LogisticParams, fitness
from ..rng import split_rng
from .common import (
    HierarchySchedule,
    VectorAdapter,
    mh_accept,
    norm_logpdf,
    tn_logpdf_lower,
    tn_logpdf_upper,
)
from .screen import CONTROL, QUERY, HyperParams, InteractionResult, KeyingError, ScreenDataset
from .shm import LOG_K_BOUND, LOG_R_BOUND, logistic_values
from .tdist import sample_trunc0_t3, scaled_t3_logpdf, scaled_t3_trunc0_logpdf


class JhmVariant(enum.Enum):
    NONE = "none"
    BATCH = "batch"
    TRANSFORM = "transform"


def repeat_level_means(
    alpha, beta, Ko, ro, delta, gamma, omega,
    batch_K=0.0, batch_r=0.0, phi=1.0, chi=1.0,
):
    """Repeat-level prior means for (log K, log r), shape (2, L[, M]).

    With delta = 0 the query means are exactly the alpha/beta-shifted
    control gene means.
    """
    inter_K = delta * gamma
    inter_r = delta * omega
    zeros = np.zeros_like(np.asarray(Ko, dtype=float))
    mean_K = np.stack([zeros + Ko, alpha + Ko + inter_K])
    mean_r = np.stack([zeros + ro, beta + ro + inter_r])
    if np.ndim(batch_K):
        mean_K = mean_K[..., None] + batch_K
        mean_r = mean_r[..., None] + batch_r
    return mean_K / phi, mean_r / chi


class _PaddedPair:
    """Rectangular tensors for a screen comparison, genes aligned."""

    def __init__(self, ds: ScreenDataset):
        self.genes = ds.genes
        L = len(self.genes)
        M = 0
        N = 0
        for c in (CONTROL, QUERY):
            for g in self.genes:
                reps = ds.repeats(c, g)
                M = max(M, len(reps))
                N = max(N, max((len(r.times) for r in reps), default=0))
        self.L, self.M, self.N = L, M, N
        self.t = np.zeros((2, L, M, N))
        self.y = np.zeros((2, L, M, N))
        self.obs = np.zeros((2, L, M, N), dtype=bool)
        self.rep_mask = np.zeros((2, L, M), dtype=bool)
        self.batch_idx = np.full((2, L, M), -1, dtype=int)
        self.batch_labels = ds.batches()
        lookup = {b: i for i, b in enumerate(self.batch_labels)}
        for c in (CONTROL, QUERY):
            for l, g in enumerate(self.genes):
                for m, rep in enumerate(ds.repeats(c, g)):
                    n = len(rep.times)
                    self.t[c, l, m, :n] = rep.times
                    self.y[c, l, m, :n] = rep.values
                    self.obs[c, l, m, :n] = True
                    self.rep_mask[c, l, m] = True
                    if rep.batch is not None:
                        self.batch_idx[c, l, m] = lookup[rep.batch]
        self.n_obs_rep = self.obs.sum(axis=3)
        self.n_obs_cl = self.n_obs_rep.sum(axis=2)
        self.n_batches = len(self.batch_labels)


def _pair_ssr(d: _PaddedPair, logK, logr, P):
    x = logistic_values(d.t, np.exp(logK)[..., None], np.exp(logr)[..., None], P)
    resid = np.where(d.obs, d.y - x, 0.0)
    return np.einsum("clmn,clmn->clm", resid, resid)


class JhmSampler:
    def __init__(self, data: _PaddedPair, hyper: HyperParams, variant: JhmVariant,
                 rng: np.random.Generator, fix_transforms: bool = False):
        self.d = data
        self.h = hyper
        self.variant = variant
        self.rng = rng
        self.fix_transforms = fix_transforms
        L, M = data.L, data.M
        h = hyper

        if variant is JhmVariant.BATCH:
            unlabeled = data.rep_mask & (data.batch_idx < 0)
            if np.any(unlabeled):
                c, l, m = (int(v[0]) for v in np.nonzero(unlabeled))
                raise KeyingError(
                    f"batch variant requires a batch label on every repeat; "
                    f"missing for condition {c}, gene {data.genes[l]!r}, repeat {m}"
                )

        # population level
        self.logKp = h.K_mu
        self.logrp = h.r_mu
        self.logP = h.P_mu
        self.nup = h.nu_mu
        self.tauKp = np.full(2, max(h.tau_K_mu, 0.0))
        self.taurp = np.full(2, h.tau_r_mu)
        self.logsigKo = h.eta_K_o
        self.logsigro = h.eta_r_o
        self.logsignu = h.eta_nu
        self.logsigtauK = np.full(2, h.eta_tau_K)
        self.logsigtaur = np.full(2, h.eta_tau_r)
        self.logsiggamma = h.eta_gamma
        self.logsigomega = h.eta_omega
        self.alpha = 0.0
        self.beta = 0.0
        self.kappa = np.zeros(max(data.n_batches, 1))
        self.lam = np.zeros(max(data.n_batches, 1))
        self.logphi = 0.0
        self.logchi = 0.0

        if L:
            ymax = np.where(data.obs, data.y, 0.0).max(axis=3)
            log_ymax = np.log(np.clip(ymax, 1e-6, 0.95))
            self.logK = np.where(data.rep_mask, log_ymax, h.K_mu)
            self.logK = np.minimum(self.logK, -1e-3)
            self.logr = np.full((2, L, M), min(h.r_mu, LOG_R_BOUND - 1e-3))
            cnt = data.rep_mask[CONTROL].sum(axis=1)
            sums = np.where(data.rep_mask[CONTROL], log_ymax[CONTROL], 0.0).sum(axis=1)
            self.Ko = np.where(cnt > 0, sums / np.maximum(cnt, 1), h.K_mu)
            self.ro = np.full(L, h.r_mu)
            self.delta = np.zeros(L, dtype=int)
            self.gamma = np.zeros(L)
            self.omega = np.zeros(L)
            self.logtauK = np.full((2, L), max(h.tau_K_mu, 0.0))
            self.logtaur = np.full((2, L), h.tau_r_mu)
            ssr0 = _pair_ssr(data, self.logK, self.logr, math.exp(self.logP))
            mean_sq = np.where(
                data.n_obs_cl > 0,
                ssr0.sum(axis=2) / np.maximum(data.n_obs_cl, 1),
                1e-4,
            )
            self.lognu = -np.log(np.maximum(mean_sq, 1e-10))
        else:
            self.logK = np.zeros((2, 0, M))
            self.logr = np.zeros((2, 0, M))
            self.Ko = np.zeros(0)
            self.ro = np.zeros(0)
            self.delta = np.zeros(0, dtype=int)
            self.gamma = np.zeros(0)
            self.omega = np.zeros(0)
            self.logtauK = np.zeros((2, 0))
            self.logtaur = np.zeros((2, 0))
            self.lognu = np.zeros((2, 0))
        self.ssr = _pair_ssr(data, self.logK, self.logr, math.exp(self.logP))

        self.ad = {
            "K": VectorAdapter("K", (2, L, M), step=0.3),
            "r": VectorAdapter("r", (2, L, M), step=0.3),
            "Ko": VectorAdapter("K_o", L, step=0.2),
            "ro": VectorAdapter("r_o", L, step=0.2),
            "gamma": VectorAdapter("gamma", L, step=0.3),
            "omega": VectorAdapter("omega", L, step=0.3),
            "nu": VectorAdapter("nu", (2, L), step=0.4),
            "tauK": VectorAdapter("tau_K", (2, L), step=0.4),
            "taur": VectorAdapter("tau_r", (2, L), step=0.4),
            "kappa": VectorAdapter("kappa", max(data.n_batches, 1), step=0.2),
            "lam": VectorAdapter("lambda", max(data.n_batches, 1), step=0.2),
        }
        self.scalar_ad = {
            n: VectorAdapter(n, 1, step=0.3)
            for n in (
                "alpha", "beta", "K_p", "r_p", "P", "nu_p",
                "sig_Ko", "sig_ro", "sig_nu", "sig_gamma", "sig_omega",
                "tau_Kp0", "tau_Kp1", "tau_rp0", "tau_rp1",
                "sig_tauK0", "sig_tauK1", "sig_taur0", "sig_taur1",
                "phi", "chi",
            )
        }

    # -- mean structure ---------------------------------------------------

    def _means(self, alpha=None, beta=None, Ko=None, ro=None, delta=None,
               gamma=None, omega=None, kappa=None, lam=None,
               logphi=None, logchi=None):
        alpha = self.alpha if alpha is None else alpha
        beta = self.beta if beta is None else beta
        Ko = self.Ko if Ko is None else Ko
        ro = self.ro if ro is None else ro
        delta = self.delta if delta is None else delta
        gamma = self.gamma if gamma is None else gamma
        omega = self.omega if omega is None else omega
        kappa = self.kappa if kappa is None else kappa
        lam = self.lam if lam is None else lam
        phi = math.exp(self.logphi if logphi is None else logphi)
        chi = math.exp(self.logchi if logchi is None else logchi)
        if self.variant is JhmVariant.BATCH:
            bk = np.where(self.d.batch_idx >= 0,
                          kappa[np.clip(self.d.batch_idx, 0, None)], 0.0)
            br = np.where(self.d.batch_idx >= 0,
                          lam[np.clip(self.d.batch_idx, 0, None)], 0.0)
        else:
            bk = np.zeros((2, self.d.L, self.d.M))
            br = np.zeros((2, self.d.L, self.d.M))
        if self.variant is not JhmVariant.TRANSFORM:
            phi = chi = 1.0
        return repeat_level_means(
            alpha, beta, Ko, ro, delta, gamma, omega,
            batch_K=bk, batch_r=br, phi=phi, chi=chi,
        )

    def _rep_prior_terms(self, mean_K, mean_r, logtauK=None, logtaur=None):
        """Truncated-normal log densities of (log K, log r), per (c,l,m)."""
        tK = np.exp(self.logtauK if logtauK is None else logtauK)[..., None]
        tr = np.exp(self.logtaur if logtaur is None else logtaur)[..., None]
        a = tn_logpdf_upper(self.logK, mean_K, tK, LOG_K_BOUND)
        b = tn_logpdf_upper(self.logr, mean_r, tr, LOG_R_BOUND)
        return np.where(self.d.rep_mask, a + b, 0.0)

    # -- sweep -------------------------------------------------------------

    def sweep(self):
        d = self.d
        if d.L:
            self._update_repeats()
            self._update_nu()
            self._update_gene_effects()
            self._update_interactions()
            self._update_tau()
        # these reduce to prior sampling when there are no genes
        self._update_condition_scalars()
        if self.variant is JhmVariant.BATCH and d.n_batches:
            self._update_batch()
        if self.variant is JhmVariant.TRANSFORM and not self.fix_transforms:
            self._update_transforms()
        self._update_population()

    def _update_repeats(self):
        d, rng = self.d, self.rng
        nu = np.exp(self.lognu)[..., None]
        P = math.exp(self.logP)
        mean_K, mean_r = self._means()
        for which in ("K", "r"):
            ad = self.ad[which]
            cur = self.logK if which == "K" else self.logr
            bound = LOG_K_BOUND if which == "K" else LOG_R_BOUND
            mean = mean_K if which == "K" else mean_r
            prec = np.exp(self.logtauK if which == "K" else self.logtaur)[..., None]
            prop = cur + ad.steps * rng.standard_normal(cur.shape)
            if which == "K":
                ssr_prop = _pair_ssr(d, prop, self.logr, P)
            else:
                ssr_prop = _pair_ssr(d, self.logK, prop, P)
            dlog = (
                -0.5 * nu * (ssr_prop - self.ssr)
                + tn_logpdf_upper(prop, mean, prec, bound)
                - tn_logpdf_upper(cur, mean, prec, bound)
            )
            acc = mh_accept(rng, dlog) & d.rep_mask
            cur[acc] = prop[acc]
            self.ssr[acc] = ssr_prop[acc]
            ad.record(acc, active=d.rep_mask)

    def _update_nu(self):
        d, rng = self.d, self.rng
        ad = self.ad["nu"]
        prop = self.lognu + ad.steps * rng.standard_normal((2, d.L))
        ssr_cl = self.ssr.sum(axis=2)
        dlog = (
            0.5 * d.n_obs_cl * (prop - self.lognu)
            - 0.5 * (np.exp(prop) - np.exp(self.lognu)) * ssr_cl
            + norm_logpdf(prop, self.nup, math.exp(self.logsignu))
            - norm_logpdf(self.lognu, self.nup, math.exp(self.logsignu))
        )
        active = d.n_obs_cl > 0
        acc = mh_accept(rng, dlog) & active
        self.lognu[acc] = prop[acc]
        ad.record(acc, active=active)

    def _update_gene_effects(self):
        d, rng = self.d, self.rng
        mean_K, mean_r = self._means()
        for which in ("Ko", "ro"):
            ad = self.ad[which]
            cur = self.Ko if which == "Ko" else self.ro
            prop = cur + ad.steps * rng.standard_normal(d.L)
            if which == "Ko":
                pm_K, pm_r = self._means(Ko=prop)
                terms = self._rep_prior_terms(pm_K, mean_r) - self._rep_prior_terms(
                    mean_K, mean_r
                )
                loc = math.exp(self.logKp)
                sig = math.exp(self.logsigKo)
            else:
                pm_K, pm_r = self._means(ro=prop)
                terms = self._rep_prior_terms(mean_K, pm_r) - self._rep_prior_terms(
                    mean_K, mean_r
                )
                loc = math.exp(self.logrp)
                sig = math.exp(self.logsigro)
            dlog = terms.sum(axis=(0, 2))
            dlog += (
                scaled_t3_logpdf(np.exp(prop), loc, sig) + prop
                - scaled_t3_logpdf(np.exp(cur), loc, sig) - cur
            )
            acc = mh_accept(rng, dlog)
            cur[acc] = prop[acc]
            ad.record(acc)

    def _update_interactions(self):
        d, h, rng = self.d, self.h, self.rng
        L = d.L
        # strengths: Metropolis where delta is on, prior refresh where off
        for which in ("gamma", "omega"):
            ad = self.ad[which]
            cur = self.gamma if which == "gamma" else self.omega
            sig = math.exp(self.logsiggamma if which == "gamma" else self.logsigomega)
            mean_K, mean_r = self._means()
            prop = cur + ad.steps * rng.standard_normal(L)
            if which == "gamma":
                pm_K, pm_r = self._means(gamma=prop)
            else:
                pm_K, pm_r = self._means(omega=prop)
            terms = self._rep_prior_terms(pm_K, pm_r) - self._rep_prior_terms(
                mean_K, mean_r
            )
            dlog = terms.sum(axis=(0, 2))
            dlog += (
                scaled_t3_logpdf(np.exp(prop), 1.0, sig) + prop
                - scaled_t3_logpdf(np.exp(cur), 1.0, sig) - cur
            )
            on = self.delta == 1
            acc = mh_accept(rng, dlog) & on
            cur[acc] = prop[acc]
            ad.record(acc, active=on)
            fresh = np.log(sample_trunc0_t3(1.0, sig, rng, size=L))
            cur[~on] = fresh[~on]

        # indicators
        ones = np.ones(L, dtype=int)
        zeros = np.zeros(L, dtype=int)
        on_K, on_r = self._means(delta=ones)
        off_K, off_r = self._means(delta=zeros)
        ll_on = self._rep_prior_terms(on_K, on_r).sum(axis=(0, 2))
        ll_off = self._rep_prior_terms(off_K, off_r).sum(axis=(0, 2))
        logit = math.log(h.p) - math.log1p(-h.p) + ll_on - ll_off
        pr = 1.0 / (1.0 + np.exp(-np.clip(logit, -700, 700)))
        self.delta = (rng.random(L) < pr).astype(int)

    def _update_tau(self):
        d, rng = self.d, self.rng
        mean_K, mean_r = self._means()
        for which in ("tauK", "taur"):
            ad = self.ad[which]
            cur = self.logtauK if which == "tauK" else self.logtaur
            child = self.logK if which == "tauK" else self.logr
            mean = mean_K if which == "tauK" else mean_r
            bound = LOG_K_BOUND if which == "tauK" else LOG_R_BOUND
            pop_mean = (self.tauKp if which == "tauK" else self.taurp)[:, None]
            pop_prec = np.exp(
                self.logsigtauK if which == "tauK" else self.logsigtaur
            )[:, None]
            prop = cur + ad.steps * rng.standard_normal((2, d.L))
            dterm = np.where(
                d.rep_mask,
                tn_logpdf_upper(child, mean, np.exp(prop)[..., None], bound)
                - tn_logpdf_upper(child, mean, np.exp(cur)[..., None], bound),
                0.0,
            ).sum(axis=2)
            if which == "tauK":
                dterm += tn_logpdf_lower(prop, pop_mean, pop_prec, 0.0)
                dterm -= tn_logpdf_lower(cur, pop_mean, pop_prec, 0.0)
            else:
                dterm += norm_logpdf(prop, pop_mean, pop_prec)
                dterm -= norm_logpdf(cur, pop_mean, pop_prec)
            acc = mh_accept(rng, dterm)
            cur[acc] = prop[acc]
            ad.record(acc)

    def _update_condition_scalars(self):
        h = self.h
        for name, attr, mu, prec in (
            ("alpha", "alpha", h.alpha_mu, h.eta_alpha),
            ("beta", "beta", h.beta_mu, h.eta_beta),
        ):
            ad = self.scalar_ad[name]
            cur = getattr(self, attr)
            prop = cur + float(ad.steps[0]) * self.rng.standard_normal()
            mean_K, mean_r = self._means()
            pm_K, pm_r = self._means(**{attr: prop})
            dlog = float(
                (self._rep_prior_terms(pm_K, pm_r)
                 - self._rep_prior_terms(mean_K, mean_r)).sum()
            )
            dlog += norm_logpdf(prop, mu, prec) - norm_logpdf(cur, mu, prec)
            acc = bool(mh_accept(self.rng, np.array([dlog]))[0])
            if acc:
                setattr(self, attr, prop)
            ad.record(np.array([acc]))

    def _update_batch(self):
        d, h, rng = self.d, self.h, self.rng
        flat_batch = d.batch_idx.ravel()
        flat_mask = d.rep_mask.ravel()
        nb = d.n_batches
        for which in ("kappa", "lam"):
            ad = self.ad[which]
            cur = self.kappa if which == "kappa" else self.lam
            prop = cur + ad.steps[:nb] * rng.standard_normal(nb)
            mean_K, mean_r = self._means()
            if which == "kappa":
                pm_K, pm_r = self._means(kappa=prop)
            else:
                pm_K, pm_r = self._means(lam=prop)
            per_rep = (self._rep_prior_terms(pm_K, pm_r)
                       - self._rep_prior_terms(mean_K, mean_r)).ravel()
            dlog = np.bincount(
                flat_batch[flat_mask & (flat_batch >= 0)],
                weights=per_rep[flat_mask & (flat_batch >= 0)],
                minlength=nb,
            )
            mu = h.kappa_p if which == "kappa" else h.lambda_p
            prec = h.eta_kappa if which == "kappa" else h.eta_lambda
            dlog += norm_logpdf(prop, mu, prec) - norm_logpdf(cur[:nb], mu, prec)
            acc_full = np.zeros(cur.shape, dtype=bool)
            acc_full[:nb] = mh_accept(rng, dlog)
            cur[acc_full] = prop[acc_full[:nb]]
            ad.record(acc_full, active=np.arange(cur.size) < nb)

    def _update_transforms(self):
        h = self.h
        for name, attr, shape, scale in (
            ("phi", "logphi", h.phi_shape, h.phi_scale),
            ("chi", "logchi", h.chi_shape, h.chi_scale),
        ):
            ad = self.scalar_ad[name]
            cur = getattr(self, attr)
            prop = cur + float(ad.steps[0]) * self.rng.standard_normal()
            mean_K, mean_r = self._means()
            pm_K, pm_r = self._means(**{attr: prop})
            dlog = float(
                (self._rep_prior_terms(pm_K, pm_r)
                 - self._rep_prior_terms(mean_K, mean_r)).sum()
            )
            # Gamma(shape, scale) prior on exp(x), with Jacobian: shape*x - e^x/scale
            dlog += shape * (prop - cur) - (math.exp(prop) - math.exp(cur)) / scale
            acc = bool(mh_accept(self.rng, np.array([dlog]))[0])
            if acc:
                setattr(self, attr, prop)
            ad.record(np.array([acc]))

    def _scalar_mh(self, name, cur, logpost):
        ad = self.scalar_ad[name]
        prop = cur + float(ad.steps[0]) * self.rng.standard_normal()
        dlog = logpost(prop) - logpost(cur)
        acc = bool(mh_accept(self.rng, np.array([dlog]))[0])
        ad.record(np.array([acc]))
        return prop if acc else cur

    def _update_population(self):
        d, h = self.d, self.h
        L = d.L

        def kp_post(v):
            s = norm_logpdf(v, h.K_mu, h.eta_K_p)
            if L:
                s += np.sum(scaled_t3_trunc0_logpdf(
                    np.exp(self.Ko), math.exp(v), math.exp(self.logsigKo)))
            return s

        def rp_post(v):
            s = norm_logpdf(v, h.r_mu, h.eta_r_p)
            if L:
                s += np.sum(scaled_t3_trunc0_logpdf(
                    np.exp(self.ro), math.exp(v), math.exp(self.logsigro)))
            return s

        def sig_ko_post(v):
            s = norm_logpdf(v, h.eta_K_o, h.psi_K_o)
            if L:
                s += np.sum(scaled_t3_trunc0_logpdf(
                    np.exp(self.Ko), math.exp(self.logKp), math.exp(v)))
            return s

        def sig_ro_post(v):
            s = norm_logpdf(v, h.eta_r_o, h.psi_r_o)
            if L:
                s += np.sum(scaled_t3_trunc0_logpdf(
                    np.exp(self.ro), math.exp(self.logrp), math.exp(v)))
            return s

        def sig_gamma_post(v):
            s = norm_logpdf(v, h.eta_gamma, h.psi_gamma)
            if L:
                s += np.sum(scaled_t3_trunc0_logpdf(np.exp(self.gamma), 1.0,
                                                    math.exp(v)) + self.gamma)
            return s

        def sig_omega_post(v):
            s = norm_logpdf(v, h.eta_omega, h.psi_omega)
            if L:
                s += np.sum(scaled_t3_trunc0_logpdf(np.exp(self.omega), 1.0,
                                                    math.exp(v)) + self.omega)
            return s

        def nup_post(v):
            s = norm_logpdf(v, h.nu_mu, h.eta_nu_p)
            if L:
                s += np.sum(norm_logpdf(self.lognu[d.n_obs_cl > 0], v,
                                        math.exp(self.logsignu)))
            return s

        def signu_post(v):
            s = norm_logpdf(v, h.eta_nu, h.psi_nu)
            if L:
                s += np.sum(norm_logpdf(self.lognu[d.n_obs_cl > 0], self.nup,
                                        math.exp(v)))
            return s

        self.logKp = self._scalar_mh("K_p", self.logKp, kp_post)
        self.logrp = self._scalar_mh("r_p", self.logrp, rp_post)
        self.logsigKo = self._scalar_mh("sig_Ko", self.logsigKo, sig_ko_post)
        self.logsigro = self._scalar_mh("sig_ro", self.logsigro, sig_ro_post)
        self.logsiggamma = self._scalar_mh("sig_gamma", self.logsiggamma, sig_gamma_post)
        self.logsigomega = self._scalar_mh("sig_omega", self.logsigomega, sig_omega_post)
        self.nup = self._scalar_mh("nu_p", self.nup, nup_post)
        self.logsignu = self._scalar_mh("sig_nu", self.logsignu, signu_post)

        for c in (0, 1):
            def taukp_post(v, c=c):
                s = norm_logpdf(v, h.tau_K_mu, h.eta_tau_K_p)
                if L:
                    s += np.sum(tn_logpdf_lower(
                        self.logtauK[c], v, math.exp(self.logsigtauK[c]), 0.0))
                return s

            def taurp_post(v, c=c):
                s = norm_logpdf(v, h.tau_r_mu, h.eta_tau_r_p)
                if L:
                    s += np.sum(norm_logpdf(
                        self.logtaur[c], v, math.exp(self.logsigtaur[c])))
                return s

            def sig_tauk_post(v, c=c):
                s = norm_logpdf(v, h.eta_tau_K, h.psi_tau_K)
                if L:
                    s += np.sum(tn_logpdf_lower(
                        self.logtauK[c], self.tauKp[c], math.exp(v), 0.0))
                return s

            def sig_taur_post(v, c=c):
                s = norm_logpdf(v, h.eta_tau_r, h.psi_tau_r)
                if L:
                    s += np.sum(norm_logpdf(
                        self.logtaur[c], self.taurp[c], math.exp(v)))
                return s

            self.tauKp[c] = self._scalar_mh(f"tau_Kp{c}", self.tauKp[c], taukp_post)
            self.taurp[c] = self._scalar_mh(f"tau_rp{c}", self.taurp[c], taurp_post)
            self.logsigtauK[c] = self._scalar_mh(
                f"sig_tauK{c}", self.logsigtauK[c], sig_tauk_post)
            self.logsigtaur[c] = self._scalar_mh(
                f"sig_taur{c}", self.logsigtaur[c], sig_taur_post)

        if L:
            ad = self.scalar_ad["P"]
            prop = self.logP + float(ad.steps[0]) * self.rng.standard_normal()
            ssr_prop = _pair_ssr(d, self.logK, self.logr, math.exp(prop))
            nu = np.exp(self.lognu)[..., None]
            dlog = float(np.sum(
                np.where(d.rep_mask, -0.5 * nu * (ssr_prop - self.ssr), 0.0)
            ))
            dlog += norm_logpdf(prop, h.P_mu, h.eta_P)
            dlog -= norm_logpdf(self.logP, h.P_mu, h.eta_P)
            acc = bool(mh_accept(self.rng, np.array([dlog]))[0])
            if acc:
                self.logP = prop
                self.ssr = ssr_prop
            ad.record(np.array([acc]))
        else:
            self.logP = self._scalar_mh(
                "P", self.logP, lambda v: norm_logpdf(v, h.P_mu, h.eta_P)
            )

    def freeze(self):
        for ad in (*self.ad.values(), *self.scalar_ad.values()):
            ad.frozen = True

    # -- chain assembly ----------------------------------------------------

    def column_names(self):
        names = [
            "alpha", "beta", "K_p", "r_p", "P", "nu_p",
            "sigma_K_o", "sigma_r_o", "sigma_nu", "sigma_gamma", "sigma_omega",
            "tau_K_p[0]", "tau_K_p[1]", "tau_r_p[0]", "tau_r_p[1]",
            "sigma_tau_K[0]", "sigma_tau_K[1]", "sigma_tau_r[0]", "sigma_tau_r[1]",
        ]
        if self.variant is JhmVariant.TRANSFORM:
            names += ["phi", "chi"]
        if self.variant is JhmVariant.BATCH:
            names += [f"kappa[{b}]" for b in self.d.batch_labels]
            names += [f"lambda[{b}]" for b in self.d.batch_labels]
        for g in self.d.genes:
            names += [f"K_o[{g}]", f"r_o[{g}]", f"delta[{g}]",
                      f"gamma[{g}]", f"omega[{g}]"]
        for c in (0, 1):
            for g in self.d.genes:
                names += [f"nu[{c},{g}]", f"tau_K[{c},{g}]", f"tau_r[{c},{g}]"]
        for c in (0, 1):
            for i, g in enumerate(self.d.genes):
                for m in range(self.d.M):
                    if self.d.rep_mask[c, i, m]:
                        names += [f"K[{c},{g},{m}]", f"r[{c},{g},{m}]"]
        return names

    def snapshot(self):
        pop = [
            self.alpha, self.beta, math.exp(self.logKp), math.exp(self.logrp),
            math.exp(self.logP), self.nup,
            math.exp(self.logsigKo), math.exp(self.logsigro),
            math.exp(self.logsignu), math.exp(self.logsiggamma),
            math.exp(self.logsigomega),
            self.tauKp[0], self.tauKp[1], self.taurp[0], self.taurp[1],
            math.exp(self.logsigtauK[0]), math.exp(self.logsigtauK[1]),
            math.exp(self.logsigtaur[0]), math.exp(self.logsigtaur[1]),
        ]
        if self.variant is JhmVariant.TRANSFORM:
            pop += [math.exp(self.logphi), math.exp(self.logchi)]
        if self.variant is JhmVariant.BATCH:
            pop += list(self.kappa[: self.d.n_batches])
            pop += list(self.lam[: self.d.n_batches])
        parts = [np.asarray(pop)]
        if self.d.L:
            parts.append(np.column_stack([
                np.exp(self.Ko), np.exp(self.ro), self.delta.astype(float),
                np.exp(self.gamma), np.exp(self.omega),
            ]).ravel())
            parts.append(np.stack([
                np.exp(self.lognu), np.exp(self.logtauK), np.exp(self.logtaur),
            ], axis=-1).ravel())
            reps = []
            for c in (0, 1):
                for i in range(self.d.L):
                    for m in range(self.d.M):
                        if self.d.rep_mask[c, i, m]:
                            reps += [math.exp(self.logK[c, i, m]),
                                     math.exp(self.logr[c, i, m])]
            parts.append(np.asarray(reps))
        return np.concatenate(parts)

    def acceptance(self):
        out = {k: ad.rate() for k, ad in self.ad.items()}
        out.update({k: ad.rate() for k, ad in self.scalar_ad.items()})
        return out


def fit_jhm(
    screen: ScreenDataset,
    hyper: HyperParams | None = None,
    variant: JhmVariant = JhmVariant.NONE,
    schedule: HierarchySchedule | None = None,
    seed: int = 0,
    allow_empty: bool = False,
    fix_transforms: bool = False,
) -> tuple[Chain, list[InteractionResult]]:
    """One-stage fit of growth and interaction to a screen comparison.

    fix_transforms freezes phi = chi = 1 in the transform variant
    (degenerate Gamma prior); the sampler then consumes exactly the same
    random stream as the plain model.
    """
    hyper = hyper or HyperParams()
    schedule = schedule or HierarchySchedule.desk()
    data = _PaddedPair(screen)
    if data.L == 0 and not allow_empty:
        raise ValueError("screen has no genes")
    rng = split_rng(seed, "fit-jhm")
    s = JhmSampler(data, hyper, variant, rng, fix_transforms=fix_transforms)

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
    chain = Chain(names=names, draws=draws[:kept], burn_in=schedule.burn_in,
                  thin=schedule.thin, seed=seed, acceptance=s.acceptance())

    results = []
    P_hat = chain.mean("P")
    alpha = chain["alpha"]
    beta = chain["beta"]
    for g in data.genes:
        delta = chain[f"delta[{g}]"]
        gam = np.log(chain[f"gamma[{g}]"])
        om = np.log(chain[f"omega[{g}]"])
        Ko = np.log(chain[f"K_o[{g}]"])
        ro = np.log(chain[f"r_o[{g}]"])
        delta_mean = float(np.mean(delta))
        g_strength = float(np.mean(np.exp(delta * gam)))
        o_strength = float(np.mean(np.exp(delta * om)))
        K_ctrl = float(np.mean(np.exp(Ko)))
        r_ctrl = float(np.mean(np.exp(ro)))
        K_qry = float(np.mean(np.exp(alpha + Ko + delta * gam)))
        r_qry = float(np.mean(np.exp(beta + ro + delta * om)))
        fit_ctrl = fitness(LogisticParams(K=K_ctrl, r=r_ctrl, P=P_hat)).product
        fit_qry = fitness(LogisticParams(K=K_qry, r=r_qry, P=P_hat)).product
        if delta_mean > 0.5:
            label = "suppressor" if o_strength > 1.0 else "enhancer"
        else:
            label = "none"
        results.append(InteractionResult(
            gene=g, delta_mean=delta_mean, gamma_strength=g_strength,
            omega_strength=o_strength, control_fitness=fit_ctrl,
            query_fitness=fit_qry, classification=label,
        ))
    return chain, results
