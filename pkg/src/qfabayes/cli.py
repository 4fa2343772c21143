"""Command-line surface.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import diagnostics as diag
from . import io as qio
from .baseline import compare_screens
from .chain import Chain, StuckChainError
from .config import PRESET_SCHEDULES, load_sde_priors
from .growth import InvalidParameterError, LogisticParams
from .hierarchy import (
    HyperParams,
    InteractionResult,
    JhmVariant,
    KeyingError,
    fit_ihm,
    fit_jhm,
    fit_shm,
    generate_screen,
    shm_fitnesses,
    write_interaction_csv,
)
from .hierarchy.common import HierarchySchedule
from .hierarchy.screen import CONTROL, QUERY, read_interaction_csv
from .kalman import ObservationDomainError
from .lna import InvalidRegimeError, ModelKind
from .mcmc import Schedule, fit_sde, fit_sde_exact
from .sde import (
    ErrorKind,
    SdeKind,
    SdeParams,
    SimulationDivergedError,
    euler_maruyama_ensemble,
    observe,
    Trajectory,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

DATA_ERRORS = (
    qio.SchemaError,
    qio.DataError,
    KeyingError,
    ObservationDomainError,
    FileNotFoundError,
)
NUMERIC_ERRORS = (
    SimulationDivergedError,
    StuckChainError,
    InvalidRegimeError,
    InvalidParameterError,
    ZeroDivisionError,
)

SIMULATE_PRESETS = {
    # forward-trajectory regime used for the spread-over-time comparison
    "fig4nonu": dict(K=0.11, r=4.0, P=5e-5, sigma=0.05, nu=0.0, paths=100,
                     t_end=6.0, points=100),
}


def _threads(args) -> int:
    if getattr(args, "threads", None):
        return max(1, args.threads)
    env = os.environ.get("QFA_INFER_THREADS")
    return max(1, int(env)) if env else 1


def _sde_schedule(args) -> Schedule:
    if args.burn_in is not None or args.thin is not None or args.samples is not None:
        base = PRESET_SCHEDULES[args.schedule]
        return Schedule(
            burn_in=args.burn_in if args.burn_in is not None else base.burn_in,
            thin=args.thin if args.thin is not None else base.thin,
            samples=args.samples if args.samples is not None else base.samples,
        )
    return PRESET_SCHEDULES[args.schedule]


def _hier_schedule(args) -> HierarchySchedule:
    base = (HierarchySchedule.desk() if args.schedule == "desk"
            else HierarchySchedule.paper())
    return HierarchySchedule(
        burn_in=args.burn_in if args.burn_in is not None else base.burn_in,
        thin=args.thin if args.thin is not None else base.thin,
        samples=args.samples if args.samples is not None else base.samples,
    )


def _add_schedule_args(p):
    p.add_argument("--schedule", choices=("desk", "paper"), default="desk")
    p.add_argument("--burn-in", type=int, dest="burn_in")
    p.add_argument("--thin", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--seed", type=int, default=0)


def _cmd_simulate(args) -> int:
    if args.preset:
        cfg = SIMULATE_PRESETS[args.preset]
        K, r, P = cfg["K"], cfg["r"], cfg["P"]
        sigma, nu = cfg["sigma"], cfg["nu"]
        paths, t_end, points = cfg["paths"], cfg["t_end"], cfg["points"]
    else:
        K, r, P = args.K, args.r, args.P
        sigma, nu = args.sigma, args.nu
        paths, t_end, points = args.paths, args.t_end, args.points
    params = SdeParams(growth=LogisticParams(K=K, r=r, P=P), sigma=sigma, nu=nu)
    grid = np.linspace(t_end / points, t_end, points)
    kind = SdeKind(args.kind)
    vals = euler_maruyama_ensemble(
        params, kind, grid, substeps=args.substeps, n_paths=paths, seed=args.seed
    )
    if nu > 0:
        err = ErrorKind(args.error)
        vals = np.stack([
            observe(Trajectory(times=grid, values=v, seed=args.seed), err, nu,
                    seed=args.seed + i).values
            for i, v in enumerate(vals)
        ])
    qio.save_trajectories(grid, vals, args.out)
    print(f"wrote {paths} trajectories x {points} points to {args.out}")
    return EXIT_OK


def _cmd_fit_growth(args) -> int:
    curve = qio.load_curve(args.input)
    priors = load_sde_priors(args.priors)
    schedule = _sde_schedule(args)
    outdir = Path(args.out_dir)
    outdir.mkdir(parents=True, exist_ok=True)

    def one_fit(spec):
        name, model = spec
        if model == "exact-n":
            return name, fit_sde_exact(curve, ErrorKind.NORMAL, priors=priors,
                                       imputed_per_interval=args.imputed,
                                       schedule=schedule, seed=args.seed)
        if model == "exact-l":
            return name, fit_sde_exact(curve, ErrorKind.LOGNORMAL, priors=priors,
                                       imputed_per_interval=args.imputed,
                                       schedule=schedule, seed=args.seed)
        return name, fit_sde(curve, ModelKind(model), priors=priors,
                             schedule=schedule, seed=args.seed)

    jobs = [(m, m) for m in args.model]
    if len(jobs) > 1 and _threads(args) > 1:
        with ThreadPoolExecutor(max_workers=_threads(args)) as pool:
            fits = list(pool.map(one_fit, jobs))
    else:
        fits = [one_fit(j) for j in jobs]
    for name, chain in fits:
        chain.to_csv(outdir / f"chain-{name}.csv")
        chain.summary_json(outdir / f"summary-{name}.json")
        means = {n: chain.mean(n) for n in chain.names}
        print(f"{name}: " + " ".join(f"{k}={v:.6g}" for k, v in means.items()))
    return EXIT_OK


def _load_comparison(args) -> "ScreenDataset":
    exclude = qio.load_exclusion_list(args.exclude) if args.exclude else ()
    cond_map = None
    if args.control_treatment or args.query_treatment:
        cond_map = {}
        if args.control_treatment:
            cond_map[args.control_treatment] = CONTROL
        if args.query_treatment:
            cond_map[args.query_treatment] = QUERY
    ds = qio.load_screen(args.input, condition_labels=cond_map,
                         drop_edges=args.drop_edges, exclude=exclude)
    if args.query:
        q = qio.load_screen(args.query, condition_labels=None,
                            drop_edges=args.drop_edges, exclude=exclude)
        merged = {CONTROL: ds.series[CONTROL], QUERY: q.series[CONTROL]}
        from .hierarchy.screen import ScreenDataset as SD

        ds = SD(merged)
    return ds


def _two_stage(ds, hyper, schedule, seed, threads):
    def fit_cond(c):
        return fit_shm(ds.condition(c), hyper, schedule=schedule,
                       seed=seed + c, condition=CONTROL)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=2) as pool:
            ch_c, ch_q = pool.map(fit_cond, (CONTROL, QUERY))
    else:
        ch_c, ch_q = fit_cond(CONTROL), fit_cond(QUERY)
    fits_c = {g: np.array([f.product for f in lst])
              for g, lst in shm_fitnesses(ch_c).items()}
    fits_q = {g: np.array([f.product for f in lst])
              for g, lst in shm_fitnesses(ch_q).items()}
    chain, results, skipped = fit_ihm(fits_c, fits_q, hyper, schedule=schedule,
                                      seed=seed + 7)
    for gene, reason in skipped:
        print(f"skipped {gene}: {reason}", file=sys.stderr)
    return chain, results


def _cmd_fit_screen(args) -> int:
    ds = _load_comparison(args)
    hyper = HyperParams.from_file(args.hyper) if args.hyper else HyperParams()
    schedule = _hier_schedule(args)
    if args.one_stage:
        variant = JhmVariant.NONE
        if args.batch:
            variant = JhmVariant.BATCH
        if args.transform:
            variant = JhmVariant.TRANSFORM
        chain, results = fit_jhm(ds, hyper, variant=variant, schedule=schedule,
                                 seed=args.seed)
    else:
        if args.batch or args.transform:
            print("batch/transform variants require --one-stage", file=sys.stderr)
            return EXIT_USAGE
        chain, results = _two_stage(ds, hyper, schedule, args.seed, _threads(args))
    write_interaction_csv(results, args.out)
    if args.chain_out:
        chain.to_csv(args.chain_out)
    n_sig = sum(r.significant for r in results)
    print(f"wrote {len(results)} genes ({n_sig} significant) to {args.out}")
    return EXIT_OK


def _cmd_baseline(args) -> int:
    ds = _load_comparison(args)
    from .growth import fitness as _fitness
    from .hierarchy.shm import logistic_values
    from scipy.optimize import least_squares

    # per-repeat least-squares logistic fits; the inoculum density is fixed
    # to the average of preliminary free fits and shared across all genes
    def ls_fit(rep, fixed_P=None):
        t, y = rep.times, rep.values
        K0 = float(np.clip(np.max(y), 1e-3, None))
        P0 = fixed_P if fixed_P is not None else max(K0 / 1000.0, 1e-8)

        def resid(theta):
            K, r = np.exp(theta[:2])
            P = math.exp(theta[2]) if fixed_P is None else fixed_P
            return logistic_values(t, K, r, P) - y

        x0 = np.log([K0, 3.0, P0])[: (3 if fixed_P is None else 2)]
        sol = least_squares(resid, x0=x0, method="lm")
        K, r = np.exp(sol.x[:2])
        P = math.exp(sol.x[2]) if fixed_P is None else fixed_P
        return K, r, P

    all_reps = [rep for c in (CONTROL, QUERY) for g in ds.genes
                for rep in ds.repeats(c, g)]
    P_hat = float(np.median([ls_fit(rep)[2] for rep in all_reps]))
    fits = {}
    for c in (CONTROL, QUERY):
        fits[c] = {
            g: np.array([
                _fitness(LogisticParams(*ls_fit(rep, fixed_P=P_hat))).product
                for rep in ds.repeats(c, g)
            ])
            for g in ds.genes
            if ds.repeats(c, g)
        }
    results, skipped = compare_screens(fits[CONTROL], fits[QUERY])
    for gene, reason in skipped:
        print(f"skipped {gene}: {reason}", file=sys.stderr)
    rows = [
        InteractionResult(
            gene=r.gene,
            delta_mean=float(r.significant),
            gamma_strength=math.exp(r.gamma_hat),
            control_fitness=float(np.mean(fits[CONTROL][r.gene])),
            query_fitness=float(np.mean(fits[QUERY][r.gene])),
            classification=(
                ("suppressor" if r.gamma_hat > 0 else "enhancer")
                if r.significant else "none"
            ),
            p_value=r.p_value,
            q_value=r.q_value,
        )
        for r in results
    ]
    write_interaction_csv(rows, args.out, extra_columns=("p_value", "q_value"))
    print(f"wrote {len(rows)} genes to {args.out}")
    return EXIT_OK


def _cmd_diagnose(args) -> int:
    chain = Chain.from_csv(args.chain)
    report = diag.report(chain, max_lag=args.max_lag)
    with open(args.out, "w") as fh:
        json.dump(report, fh, indent=2)
    print(f"wrote diagnostics for {len(chain.names)} parameters to {args.out}")
    return EXIT_OK


def _cmd_export_plot_data(args) -> int:
    results = read_interaction_csv(args.results)
    with open(args.out, "w") as fh:
        fh.write("gene,control_fitness,query_fitness,classification\n")
        for r in results:
            fh.write(f"{r.gene},{r.control_fitness:.17g},"
                     f"{r.query_fitness:.17g},{r.classification}\n")
    print(f"wrote fitness-plot data for {len(results)} genes to {args.out}")
    return EXIT_OK


def _cmd_generate(args) -> int:
    hyper = HyperParams.from_file(args.hyper) if args.hyper else HyperParams()
    rng_genes = [f"gene{i:04d}" for i in range(args.genes)]
    step = max(1, args.genes // max(args.planted, 1)) if args.planted else 1
    chosen = rng_genes[::step][: args.planted]
    strength = math.log(args.strength)
    planted = {g: (strength, strength) for g in chosen}
    ds, truth = generate_screen(
        hyper, n_genes=args.genes, repeats=args.repeats, planted=planted,
        timepoints=np.linspace(args.t_end / args.points, args.t_end, args.points),
        seed=args.seed,
    )
    qio.save_screen(ds, args.out)
    if args.truth_out:
        with open(args.truth_out, "w") as fh:
            fh.write("gene,planted,gamma,omega\n")
            for g, t in truth.items():
                fh.write(f"{g},{int(t.planted)},{t.gamma:.17g},{t.omega:.17g}\n")
    print(f"wrote screen ({args.genes} genes, {len(chosen)} planted) to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="qfabayes",
        description="Bayesian growth-curve and genetic-interaction inference",
    )
    ap.add_argument("--threads", type=int, help="worker threads "
                    "(QFA_INFER_THREADS is the fallback)")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="forward-simulate growth trajectories")
    p.add_argument("--kind", choices=[k.value for k in SdeKind], default="slgm")
    p.add_argument("--preset", choices=sorted(SIMULATE_PRESETS))
    p.add_argument("--K", type=float, default=0.15)
    p.add_argument("--r", type=float, default=3.0)
    p.add_argument("--P", type=float, default=1e-4)
    p.add_argument("--sigma", type=float, default=0.01)
    p.add_argument("--nu", type=float, default=0.0)
    p.add_argument("--error", choices=[e.value for e in ErrorKind], default="normal")
    p.add_argument("--paths", type=int, default=1)
    p.add_argument("--t-end", type=float, default=6.0, dest="t_end")
    p.add_argument("--points", type=int, default=27)
    p.add_argument("--substeps", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("fit-growth", help="fit state-space models to one curve")
    p.add_argument("--input", required=True, help="CSV with time,value columns")
    p.add_argument("--model", nargs="+", required=True,
                   choices=["rrtr", "lnam", "lnaa", "exact-n", "exact-l"])
    p.add_argument("--priors", help="preset name or key=value file")
    p.add_argument("--imputed", type=int, default=15,
                   help="imputed states per interval (exact models)")
    _add_schedule_args(p)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_fit_growth)

    p = sub.add_parser("fit-screen", help="hierarchical screen comparison")
    p.add_argument("--input", required=True, help="screen TSV (see docs)")
    p.add_argument("--query", help="second TSV holding the query screen")
    p.add_argument("--one-stage", action="store_true",
                   help="joint model (default is the two-stage pipeline)")
    p.add_argument("--batch", action="store_true")
    p.add_argument("--transform", action="store_true")
    p.add_argument("--hyper", help="hyper-parameter key=value file")
    p.add_argument("--exclude", help="gene exclusion list file")
    p.add_argument("--drop-edges", action="store_true", dest="drop_edges")
    p.add_argument("--control-treatment", dest="control_treatment")
    p.add_argument("--query-treatment", dest="query_treatment")
    _add_schedule_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--chain-out", dest="chain_out")
    p.set_defaults(func=_cmd_fit_screen)

    p = sub.add_parser("baseline", help="frequentist per-gene comparison")
    p.add_argument("--input", required=True)
    p.add_argument("--query")
    p.add_argument("--exclude")
    p.add_argument("--drop-edges", action="store_true", dest="drop_edges")
    p.add_argument("--control-treatment", dest="control_treatment")
    p.add_argument("--query-treatment", dest="query_treatment")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_baseline)

    p = sub.add_parser("diagnose", help="chain diagnostics report")
    p.add_argument("--chain", required=True)
    p.add_argument("--max-lag", type=int, default=50, dest="max_lag")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_diagnose)

    p = sub.add_parser("export-plot-data", help="fitness-plot CSV from results")
    p.add_argument("--results", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_export_plot_data)

    p = sub.add_parser("generate", help="synthetic planted screen")
    p.add_argument("--genes", type=int, default=50)
    p.add_argument("--repeats", type=int, default=4)
    p.add_argument("--planted", type=int, default=10)
    p.add_argument("--strength", type=float, default=2.0)
    p.add_argument("--points", type=int, default=10)
    p.add_argument("--t-end", type=float, default=6.0, dest="t_end")
    p.add_argument("--hyper")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--truth-out", dest="truth_out")
    p.set_defaults(func=_cmd_generate)
    return ap


def _splice_config(argv: list[str]) -> list[str]:
    """Expand `--config FILE` into option tokens placed right after the
    subcommand, so explicit command-line flags override file values."""
    if "--config" not in argv:
        return argv
    from .config import read_kv_file

    i = argv.index("--config")
    if i + 1 >= len(argv):
        raise ValueError("--config needs a file path")
    cfg = read_kv_file(argv[i + 1])
    rest = argv[:i] + argv[i + 2:]
    tokens: list[str] = []
    for key, value in cfg.items():
        flag = "--" + key.replace("_", "-")
        if value.lower() in ("true", "false"):
            if value.lower() == "true":
                tokens.append(flag)
        else:
            tokens.append(flag)
            tokens.extend(value.split())
    # insert after the subcommand token (the first non-flag argument)
    for j, tok in enumerate(rest):
        if not tok.startswith("-"):
            return rest[: j + 1] + tokens + rest[j + 1:]
    return rest + tokens


def main(argv=None) -> int:
    ap = build_parser()
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    try:
        argv = _splice_config(argv)
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    except (ValueError, FileNotFoundError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NUMERIC_ERRORS as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
