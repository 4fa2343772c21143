"""Fitness-level interaction model for a two-screen comparison.

Repeat fitnesses F_clm are modelled as Normal around
exp(alpha_c + Z_l + delta_l * gamma_cl): a common gene effect, a
condition-level scaling that absorbs global differences between screens,
and a Bernoulli-indicated interaction term for the query condition.
delta_l is sampled by data augmentation; when delta_l = 0 the strength
gamma_l is refreshed from its prior so the chain stays irreducible over
the product space.
"""

from __future__ import annotations

import math

import numpy as np

from ..chain import Chain
from ..rng import split_rng
from .common import HierarchySchedule, VectorAdapter, mh_accept, norm_logpdf
from .screen import HyperParams, InteractionResult, KeyingError
from .tdist import sample_trunc0_t3, scaled_t3_logpdf, scaled_t3_trunc0_logpdf


class _IhmData:
    """Padded fitness tensors: conditions x genes x repeats."""

    def __init__(self, control: dict, query: dict):
        missing = set(control) ^ set(query)
        if missing:
            raise KeyingError(
                f"fitness sets disagree on genes: {sorted(missing)}"
            )
        self.skipped: list[tuple[str, str]] = []
        genes = []
        for g in sorted(control):
            c = np.asarray(control[g], dtype=float)
            q = np.asarray(query[g], dtype=float)
            if c.size == 0 or q.size == 0:
                side = "control" if c.size == 0 else "query"
                self.skipped.append((g, f"no repeats in {side} condition"))
                continue
            genes.append(g)
        self.genes = genes
        L = len(genes)
        M = max(
            (max(len(np.atleast_1d(control[g])), len(np.atleast_1d(query[g])))
             for g in genes),
            default=0,
        )
        self.L, self.M = L, M
        self.F = np.zeros((2, L, M))
        self.mask = np.zeros((2, L, M), dtype=bool)
        for i, g in enumerate(genes):
            for c, src in ((0, control), (1, query)):
                v = np.atleast_1d(np.asarray(src[g], dtype=float))
                self.F[c, i, : v.size] = v
                self.mask[c, i, : v.size] = True
        self.n_rep = self.mask.sum(axis=2)


class IhmSampler:
    def __init__(self, data: _IhmData, hyper: HyperParams, rng: np.random.Generator):
        self.d = data
        self.h = hyper
        self.rng = rng
        L = data.L
        # population level at prior locations
        self.logZp = hyper.ihm_Z_mu
        self.nup = hyper.ihm_nu_mu
        self.logsigZ = hyper.ihm_eta_Z
        self.logsignu = hyper.ihm_eta_nu
        self.logsiggamma = hyper.ihm_eta_gamma
        self.alpha = 0.0
        if L:
            mean_ctrl = np.where(data.mask[0], data.F[0], 0.0).sum(axis=1) / np.maximum(
                data.n_rep[0], 1
            )
            self.Z = np.log(np.clip(mean_ctrl, 1e-3, None))
            self.delta = np.zeros(L, dtype=int)
            self.gamma = np.zeros(L)
            self.lognu = np.zeros((2, L))
            for c in (0, 1):
                v = np.where(data.mask[c], data.F[c], np.nan)
                sd = np.nanstd(v, axis=1)
                self.lognu[c] = -2.0 * np.log(np.clip(sd, 1e-2, None))
        else:
            self.Z = np.zeros(0)
            self.delta = np.zeros(0, dtype=int)
            self.gamma = np.zeros(0)
            self.lognu = np.zeros((2, 0))

        self.ad = {
            "Z": VectorAdapter("Z", L, step=0.2),
            "gamma": VectorAdapter("gamma", L, step=0.3),
            "nu": VectorAdapter("nu", (2, L), step=0.4),
        }
        self.scalar_ad = {
            n: VectorAdapter(n, 1, step=0.3)
            for n in ("alpha", "Z_p", "nu_p", "sig_Z", "sig_nu", "sig_gamma")
        }

    # fitted means: F_hat[c,l] = exp(alpha_c + Z_l + delta_l * gamma_cl)
    def _log_fhat(self, Z=None, gamma=None, delta=None, alpha=None):
        Z = self.Z if Z is None else Z
        gamma = self.gamma if gamma is None else gamma
        delta = self.delta if delta is None else delta
        alpha = self.alpha if alpha is None else alpha
        return np.stack([Z, alpha + Z + delta * gamma])

    def _loglik_terms(self, log_fhat) -> np.ndarray:
        """Sum over repeats of the Normal log-likelihood, per (c, l)."""
        fhat = np.exp(log_fhat)[..., None]
        nu = np.exp(self.lognu)[..., None]
        t = 0.5 * (self.lognu[..., None] - math.log(2 * math.pi)) - 0.5 * nu * (
            self.d.F - fhat
        ) ** 2
        return np.sum(np.where(self.d.mask, t, 0.0), axis=2)

    def sweep(self):
        d, h, rng = self.d, self.h, self.rng
        L = d.L
        if L:
            cur_ll = self._loglik_terms(self._log_fhat())

            # gene effect Z_l
            ad = self.ad["Z"]
            prop = self.Z + ad.steps * rng.standard_normal(L)
            prop_ll = self._loglik_terms(self._log_fhat(Z=prop))
            dlog = (prop_ll - cur_ll).sum(axis=0)
            sigZ = math.exp(self.logsigZ)
            Zp = math.exp(self.logZp)
            dlog += (
                scaled_t3_logpdf(np.exp(prop), Zp, sigZ) + prop
                - scaled_t3_logpdf(np.exp(self.Z), Zp, sigZ) - self.Z
            )
            acc = mh_accept(rng, dlog)
            self.Z[acc] = prop[acc]
            ad.record(acc)
            cur_ll = self._loglik_terms(self._log_fhat())

            # interaction strengths: Metropolis where delta = 1, prior
            # refresh where delta = 0 (keeps the joint over (delta, gamma))
            ad = self.ad["gamma"]
            siggam = math.exp(self.logsiggamma)
            prop = self.gamma + ad.steps * rng.standard_normal(L)
            prop_ll = self._loglik_terms(self._log_fhat(gamma=prop))
            dlog = (prop_ll - cur_ll)[1]
            dlog += (
                scaled_t3_logpdf(np.exp(prop), 1.0, siggam) + prop
                - scaled_t3_logpdf(np.exp(self.gamma), 1.0, siggam) - self.gamma
            )
            on = self.delta == 1
            acc = mh_accept(rng, dlog) & on
            self.gamma[acc] = prop[acc]
            ad.record(acc, active=on)
            fresh = np.log(sample_trunc0_t3(1.0, siggam, rng, size=L))
            self.gamma[~on] = fresh[~on]
            cur_ll = self._loglik_terms(self._log_fhat())

            # indicator delta_l: Bernoulli(p L1 / (p L1 + (1-p) L0))
            ll_on = self._loglik_terms(self._log_fhat(delta=np.ones(L, dtype=int)))[1]
            ll_off = self._loglik_terms(self._log_fhat(delta=np.zeros(L, dtype=int)))[1]
            logit = math.log(h.ihm_p) - math.log1p(-h.ihm_p) + ll_on - ll_off
            pr = 1.0 / (1.0 + np.exp(-np.clip(logit, -700, 700)))
            self.delta = (rng.random(L) < pr).astype(int)
            cur_ll = self._loglik_terms(self._log_fhat())

            # measurement precisions nu_cl
            ad = self.ad["nu"]
            prop = self.lognu + ad.steps * rng.standard_normal((2, L))
            old = self.lognu.copy()
            self.lognu = prop
            prop_ll = self._loglik_terms(self._log_fhat())
            self.lognu = old
            dlog = prop_ll - cur_ll
            dlog += norm_logpdf(prop, self.nup, math.exp(self.logsignu))
            dlog -= norm_logpdf(self.lognu, self.nup, math.exp(self.logsignu))
            acc = mh_accept(rng, dlog) & (d.n_rep > 0)
            self.lognu[acc] = prop[acc]
            ad.record(acc, active=d.n_rep > 0)
            cur_ll = self._loglik_terms(self._log_fhat())

            # condition scaling alpha_1
            ad = self.scalar_ad["alpha"]
            aprop = self.alpha + float(ad.steps[0]) * rng.standard_normal()
            prop_ll = self._loglik_terms(self._log_fhat(alpha=aprop))
            dlog = float((prop_ll - cur_ll)[1].sum())
            dlog += norm_logpdf(aprop, h.ihm_alpha_mu, h.ihm_eta_alpha)
            dlog -= norm_logpdf(self.alpha, h.ihm_alpha_mu, h.ihm_eta_alpha)
            acc = bool(mh_accept(rng, np.array([dlog]))[0])
            if acc:
                self.alpha = aprop
            ad.record(np.array([acc]))

        # population level
        def zp_post(v):
            s = norm_logpdf(v, h.ihm_Z_mu, h.ihm_eta_Z_p)
            if L:
                s += np.sum(scaled_t3_trunc0_logpdf(
                    np.exp(self.Z), math.exp(v), math.exp(self.logsigZ)))
            return s

        def sigz_post(v):
            s = norm_logpdf(v, h.ihm_eta_Z, h.ihm_psi_Z)
            if L:
                s += np.sum(scaled_t3_trunc0_logpdf(
                    np.exp(self.Z), math.exp(self.logZp), math.exp(v)))
            return s

        def nup_post(v):
            s = norm_logpdf(v, h.ihm_nu_mu, h.ihm_eta_nu_p)
            if L:
                s += np.sum(norm_logpdf(self.lognu[self.d.n_rep > 0], v,
                                        math.exp(self.logsignu)))
            return s

        def signu_post(v):
            s = norm_logpdf(v, h.ihm_eta_nu, h.ihm_psi_nu)
            if L:
                s += np.sum(norm_logpdf(self.lognu[self.d.n_rep > 0], self.nup,
                                        math.exp(v)))
            return s

        def siggam_post(v):
            s = norm_logpdf(v, h.ihm_eta_gamma, h.ihm_psi_gamma)
            if L:
                s += np.sum(
                    scaled_t3_trunc0_logpdf(np.exp(self.gamma), 1.0, math.exp(v))
                    + self.gamma
                )
            return s

        self.logZp = self._scalar_mh("Z_p", self.logZp, zp_post)
        self.logsigZ = self._scalar_mh("sig_Z", self.logsigZ, sigz_post)
        self.nup = self._scalar_mh("nu_p", self.nup, nup_post)
        self.logsignu = self._scalar_mh("sig_nu", self.logsignu, signu_post)
        self.logsiggamma = self._scalar_mh("sig_gamma", self.logsiggamma, siggam_post)
        if not L:
            # alpha has no likelihood terms without genes
            self.alpha = self._scalar_mh(
                "alpha", self.alpha,
                lambda v: norm_logpdf(v, h.ihm_alpha_mu, h.ihm_eta_alpha),
            )

    def _scalar_mh(self, name, cur, logpost):
        ad = self.scalar_ad[name]
        prop = cur + float(ad.steps[0]) * self.rng.standard_normal()
        dlog = logpost(prop) - logpost(cur)
        acc = bool(mh_accept(self.rng, np.array([dlog]))[0])
        ad.record(np.array([acc]))
        return prop if acc else cur

    def freeze(self):
        for ad in (*self.ad.values(), *self.scalar_ad.values()):
            ad.frozen = True

    def column_names(self):
        names = ["alpha", "Z_p", "nu_p", "sigma_Z", "sigma_nu", "sigma_gamma"]
        for g in self.d.genes:
            names += [f"Z[{g}]", f"delta[{g}]", f"gamma[{g}]",
                      f"nu[0,{g}]", f"nu[1,{g}]"]
        return names

    def snapshot(self):
        pop = [self.alpha, math.exp(self.logZp), self.nup,
               math.exp(self.logsigZ), math.exp(self.logsignu),
               math.exp(self.logsiggamma)]
        if not self.d.L:
            return np.asarray(pop)
        gene = np.column_stack([
            np.exp(self.Z), self.delta.astype(float), np.exp(self.gamma),
            np.exp(self.lognu[0]), np.exp(self.lognu[1]),
        ]).ravel()
        return np.concatenate([pop, gene])

    def acceptance(self):
        out = {k: ad.rate() for k, ad in self.ad.items()}
        out.update({k: ad.rate() for k, ad in self.scalar_ad.items()})
        return out


def fit_ihm(
    control_fits: dict,
    query_fits: dict,
    hyper: HyperParams | None = None,
    schedule: HierarchySchedule | None = None,
    seed: int = 0,
    allow_empty: bool = False,
) -> tuple[Chain, list[InteractionResult], list[tuple[str, str]]]:
    """Fit the interaction model to per-gene repeat fitness sets.

    Returns (chain, per-gene results, skipped genes with reasons). The two
    fitness dicts must be keyed by the same gene list; genes with no
    repeats in one condition are skipped and reported.
    """
    hyper = hyper or HyperParams()
    schedule = schedule or HierarchySchedule.desk()
    data = _IhmData(control_fits, query_fits)
    if data.L == 0 and not allow_empty:
        raise ValueError("no genes with repeats in both conditions")
    rng = split_rng(seed, "fit-ihm")
    s = IhmSampler(data, hyper, rng)

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
    for g in data.genes:
        delta = chain[f"delta[{g}]"]
        strength = float(np.mean(np.exp(delta * np.log(chain[f"gamma[{g}]"]))))
        delta_mean = float(np.mean(delta))
        control_fit = float(np.mean(chain[f"Z[{g}]"]))
        query_fit = float(np.mean(
            np.exp(chain["alpha"] + np.log(chain[f"Z[{g}]"])
                   + delta * np.log(chain[f"gamma[{g}]"]))
        ))
        if delta_mean > 0.5:
            label = "suppressor" if strength > 1.0 else "enhancer"
        else:
            label = "none"
        results.append(InteractionResult(
            gene=g, delta_mean=delta_mean, gamma_strength=strength,
            control_fitness=control_fit, query_fitness=query_fit,
            classification=label,
        ))
    return chain, results, data.skipped
