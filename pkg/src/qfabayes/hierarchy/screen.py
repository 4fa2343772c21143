"""Screen datasets, fixed prior hyper-parameters, interaction results.

A screen comparison holds scaled-density time courses indexed by
condition c in {0 (control), 1 (query)}, gene, and repeat. The
hyper-parameter set mirrors the fixed values used for all hierarchical
model fits; every second distribution argument is a precision.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, fields, replace

import numpy as np

from ..growth import LogisticParams, logistic_solution
from ..rng import split_rng
from .tdist import sample_trunc0_t3

CONTROL, QUERY = 0, 1


class KeyingError(KeyError):
    """Gene/batch keys of two inputs do not line up."""


@dataclass(frozen=True)
class RepeatSeries:
    """One repeat time course; batch labels the plate it was grown on."""

    times: np.ndarray
    values: np.ndarray
    batch: str | None = None

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)
        if t.shape != v.shape or t.ndim != 1:
            raise ValueError("times and values must be equal-length vectors")
        if t.size and (np.any(np.diff(t) <= 0) or t[0] < 0):
            raise ValueError("times must be strictly increasing and >= 0")
        if not np.all(np.isfinite(v)):
            raise ValueError("densities must be finite")


class ScreenDataset:
    """(condition, gene, repeat)-indexed growth time courses."""

    def __init__(self, series: dict[int, dict[str, list[RepeatSeries]]]):
        for c in series:
            if c not in (CONTROL, QUERY):
                raise ValueError(f"condition must be 0 or 1, got {c}")
        self.series = {c: dict(series.get(c, {})) for c in (CONTROL, QUERY)}

    @classmethod
    def empty(cls) -> "ScreenDataset":
        return cls({CONTROL: {}, QUERY: {}})

    @property
    def genes(self) -> list[str]:
        names = set(self.series[CONTROL]) | set(self.series[QUERY])
        return sorted(names)

    @property
    def n_observations(self) -> int:
        return sum(
            len(rep.times)
            for cond in self.series.values()
            for reps in cond.values()
            for rep in reps
        )

    def condition(self, c: int) -> "ScreenDataset":
        """Single-condition view (the other condition left empty)."""
        return ScreenDataset({CONTROL: self.series[c]})

    def repeats(self, c: int, gene: str) -> list[RepeatSeries]:
        return self.series[c].get(gene, [])

    def batches(self) -> list[str]:
        labels = {
            rep.batch
            for cond in self.series.values()
            for reps in cond.values()
            for rep in reps
            if rep.batch is not None
        }
        return sorted(labels)

    def relabel(self, mapping: dict[str, str]) -> "ScreenDataset":
        out = {}
        for c, cond in self.series.items():
            out[c] = {mapping.get(g, g): reps for g, reps in cond.items()}
        return ScreenDataset(out)


@dataclass(frozen=True)
class HyperParams:
    """Fixed prior hyper-parameters for the hierarchical models.

    Field names follow the model descriptions; eta_*/psi_*/tau precisions,
    *_mu locations. The ihm_* block configures the fitness-level
    interaction model, which has its own scales.
    """

    # growth hierarchy (screen-level and joint models)
    tau_K_mu: float = 2.20064039227566
    eta_tau_K_p: float = 0.0239817523340161
    eta_K_o: float = -0.79421175992029
    psi_K_o: float = 0.610871036009521
    tau_r_mu: float = 3.64993037268256
    eta_tau_r_p: float = 0.0188443648965434
    eta_r_o: float = 0.468382435659566
    psi_r_o: float = 0.0985295312016232
    eta_nu: float = -0.834166609695065
    psi_nu: float = 0.855886535578262
    K_mu: float = -2.01259579112252
    eta_K_p: float = 0.032182397822033
    r_mu: float = 0.97398228941848
    eta_r_p: float = 0.133208648543871
    nu_mu: float = 19.8220570630669
    eta_nu_p: float = 0.0174869367984725
    P_mu: float = -9.03928728018792
    eta_P: float = 0.469209463148874
    # joint-model interaction block
    alpha_mu: float = 0.0
    eta_alpha: float = 0.25
    beta_mu: float = 0.0
    eta_beta: float = 0.25
    p: float = 0.05
    eta_gamma: float = -0.79421175992029
    psi_gamma: float = 0.610871036009521
    eta_omega: float = 0.468382435659566
    psi_omega: float = 0.0985295312016232
    eta_tau_K: float = 2.20064039227566
    psi_tau_K: float = 0.0239817523340161
    eta_tau_r: float = 3.64993037268256
    psi_tau_r: float = 0.0188443648965434
    # fitness-level interaction model
    ihm_Z_mu: float = 3.65544229414228
    ihm_eta_Z_p: float = 0.697331530063874
    ihm_eta_Z: float = 0.104929506383255
    ihm_psi_Z: float = 0.417096744759774
    ihm_eta_nu: float = 0.101545024587153
    ihm_psi_nu: float = 2.45077729037385
    ihm_nu_mu: float = 2.60267545154548
    ihm_eta_nu_p: float = 0.0503202367841729
    ihm_alpha_mu: float = 0.0
    ihm_eta_alpha: float = 0.309096075088720
    ihm_p: float = 0.05
    ihm_eta_gamma: float = 0.104929506383255
    ihm_psi_gamma: float = 0.417096744759774
    # batch and transformation extensions
    kappa_p: float = 0.0
    eta_kappa: float = 1.166666666666
    lambda_p: float = 0.0
    eta_lambda: float = 1.166666666666
    phi_shape: float = 100.0
    phi_scale: float = 0.01
    chi_shape: float = 100.0
    chi_scale: float = 0.01

    def __post_init__(self):
        if not (0.0 < self.p < 1.0) or not (0.0 < self.ihm_p < 1.0):
            raise ValueError("interaction prior probability must be in (0, 1)")

    def override(self, **kwargs) -> "HyperParams":
        return replace(self, **kwargs)

    @classmethod
    def from_file(cls, path) -> "HyperParams":
        from ..config import read_kv_file

        raw = read_kv_file(path)
        names = {f.name for f in fields(cls)}
        unknown = set(raw) - names
        if unknown:
            raise KeyError(f"unknown hyper-parameter keys: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in raw.items()})


@dataclass(frozen=True)
class InteractionResult:
    """Per-gene interaction evidence and strengths."""

    gene: str
    delta_mean: float
    gamma_strength: float
    control_fitness: float
    query_fitness: float
    classification: str
    omega_strength: float | None = None
    p_value: float | None = None
    q_value: float | None = None

    @property
    def significant(self) -> bool:
        return self.classification in ("suppressor", "enhancer")


_CSV_COLUMNS = (
    "gene",
    "delta_mean",
    "gamma_strength",
    "omega_strength",
    "control_fitness",
    "query_fitness",
    "classification",
)


def write_interaction_csv(results, path, extra_columns=()) -> None:
    """Fitness-plot payload: one row per gene, fixed column order."""
    cols = _CSV_COLUMNS + tuple(extra_columns)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for res in results:
            row = []
            for c in cols:
                v = getattr(res, c)
                row.append("" if v is None else (f"{v:.17g}" if isinstance(v, float) else v))
            w.writerow(row)


def read_interaction_csv(path) -> list[InteractionResult]:
    out = []
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        for row in rd:
            out.append(
                InteractionResult(
                    gene=row["gene"],
                    delta_mean=float(row["delta_mean"]),
                    gamma_strength=float(row["gamma_strength"]),
                    omega_strength=float(row["omega_strength"]) if row.get("omega_strength") else None,
                    control_fitness=float(row["control_fitness"]),
                    query_fitness=float(row["query_fitness"]),
                    classification=row["classification"],
                    p_value=float(row["p_value"]) if row.get("p_value") else None,
                    q_value=float(row["q_value"]) if row.get("q_value") else None,
                )
            )
    return out


# ---------------------------------------------------------------------------
# synthetic screen generator
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GeneratedTruth:
    """Ground truth for one generated gene."""

    planted: bool
    gamma: float
    omega: float
    K_o: float
    r_o: float


def _t3_trunc_scalar(loc, prec, rng):
    return float(sample_trunc0_t3(loc, prec, rng, size=1)[0])


def generate_screen(
    hyper: HyperParams,
    n_genes: int,
    repeats: int,
    planted: dict[str, tuple[float, float]] | None,
    timepoints,
    seed: int = 0,
    alpha: float = -0.1,
    beta: float = -0.05,
    gene_prec_K: float = 400.0,
    gene_prec_r: float = 25.0,
    tau_K: float = 100.0,
    tau_r: float = 200.0,
    nu_precision: float = 1e6,
) -> tuple[ScreenDataset, dict[str, GeneratedTruth]]:
    """Simulate a control/query screen comparison with known interactors.

    Gene- and repeat-level parameters are drawn from the joint-model
    generative structure: truncated scaled-t3 gene effects around the
    population locations (exp of hyper *_mu), truncated normal repeat
    effects, deterministic logistic curves, Normal measurement error.
    `planted` maps gene name -> (gamma, omega) log-scale interaction
    effects; all other genes get delta = 0. Population-level truth values
    sit at the hyper-prior locations; spreads/noise are explicit arguments
    so benchmarks can control difficulty.
    """
    if n_genes < 1 or repeats < 1:
        raise ValueError("need at least one gene and one repeat")
    planted = dict(planted or {})
    genes = [f"gene{i:04d}" for i in range(n_genes)]
    known = set(genes)
    unknown = set(planted) - known
    if unknown:
        raise KeyingError(f"planted genes not in the screen: {sorted(unknown)}")

    rng = split_rng(seed, "generate-screen")
    times = np.asarray(timepoints, dtype=float)

    K_p = math.exp(hyper.K_mu)
    r_p = math.exp(hyper.r_mu)
    P = math.exp(hyper.P_mu)
    nu_sd = nu_precision**-0.5
    sd_K = tau_K**-0.5
    sd_r = tau_r**-0.5

    series: dict[int, dict[str, list[RepeatSeries]]] = {CONTROL: {}, QUERY: {}}
    truth: dict[str, GeneratedTruth] = {}
    for gene in genes:
        K_o = math.log(_t3_trunc_scalar(K_p, gene_prec_K, rng))
        r_o = math.log(_t3_trunc_scalar(r_p, gene_prec_r, rng))
        gam, om = planted.get(gene, (0.0, 0.0))
        truth[gene] = GeneratedTruth(
            planted=gene in planted, gamma=gam, omega=om, K_o=K_o, r_o=r_o
        )
        for c in (CONTROL, QUERY):
            mean_K = K_o + (alpha + gam if c == QUERY else 0.0)
            mean_r = r_o + (beta + om if c == QUERY else 0.0)
            reps = []
            for _ in range(repeats):
                # truncations: log K <= 0 (density scale caps at 1),
                # log r <= 3.5 (no doubling faster than ~30 min)
                lk = mean_K + sd_K * rng.standard_normal()
                while lk > 0.0:
                    lk = mean_K + sd_K * rng.standard_normal()
                lr = mean_r + sd_r * rng.standard_normal()
                while lr > 3.5:
                    lr = mean_r + sd_r * rng.standard_normal()
                params = LogisticParams(K=math.exp(lk), r=math.exp(lr), P=P)
                y = logistic_solution(params, times) + nu_sd * rng.standard_normal(
                    times.size
                )
                reps.append(RepeatSeries(times=times.copy(), values=y))
            series[c].setdefault(gene, []).extend(reps)
    return ScreenDataset(series), truth


def paper_scale_preset(hyper: HyperParams, seed: int = 0):
    """Full-scale screen: 4300 genes, 8 repeats, 10 timepoints over 6 days,
    430 planted interactors. Generation only; fitting at this scale is a
    cluster job, not a desk one."""
    rng = split_rng(seed, "paper-scale-plant-choice")
    genes = [f"gene{i:04d}" for i in range(4300)]
    chosen = rng.choice(4300, size=430, replace=False)
    planted = {genes[i]: (math.log(2.0), math.log(2.0)) for i in chosen}
    return generate_screen(
        hyper,
        n_genes=4300,
        repeats=8,
        planted=planted,
        timepoints=np.linspace(0.6, 6.0, 10),
        seed=seed,
    )
