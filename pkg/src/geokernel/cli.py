"""Command-line front end: simulate, learn, evaluate, study, rho.

Exit codes: 0 success, 2 invalid input (config, files, arguments),
3 numerical failure (integration or solve).

Random streams: trajectory m of a run draws its initial condition from the
generator seeded by (seed, m). Fresh evaluation ICs use (seed, 10**6 + j) and
the transfer run (seed, 2 * 10**6 + j), so they never overlap training data.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time

import numpy as np

from . import config as cfgmod
from . import io
from .basis import n_star, observed_range
from .dynamics import ModelSpec
from .integrate import SimulationError, generate_dataset
from .learn import learn
from .metrics import (ConvergenceExperiment, convergence_study, estimator_model, random_ics,
                      rel_error, rho_empirical, traj_errors)

FRESH_OFFSET = 10**6
TRANSFER_OFFSET = 2 * 10**6

log = logging.getLogger("geokernel")


class UsageError(ValueError):
    pass


def _load_config(args) -> cfgmod.ExperimentConfig:
    if not args.config:
        raise UsageError("--config is required")
    if os.path.exists(args.config):
        cfg = cfgmod.load(args.config)
    elif args.config in cfgmod.shipped_names():
        cfg = cfgmod.parse(cfgmod.shipped(args.config))
    else:
        raise UsageError(f"config {args.config!r} not found (shipped: {cfgmod.shipped_names()})")
    if args.seed is not None:
        cfg.seed = args.seed
    if args.threads is not None:
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        cfg.threads = args.threads
    return cfg


def _check_compatible(cfg, ds):
    if ds.manifold != cfg.manifold:
        raise UsageError("dataset manifold differs from the config")
    if not np.array_equal(ds.types, cfg.model().types(ds.N)):
        raise UsageError("dataset type labels do not match the config type layout")


def _n_table(cfg, ds) -> dict:
    if cfg.n:
        return dict(cfg.n)
    n = n_star(ds.M, ds.L, ds.N, cfg.manifold.dim)
    return {(k, k2): n for k in range(1, cfg.K + 1) for k2 in range(1, cfg.K + 1)}


def _out(args, default):
    return args.out or default


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    t0 = time.perf_counter()
    ds = generate_dataset(cfg.model(), cfg.ic_spec(), cfg.M, cfg.L, cfg.T, cfg.integrator(),
                          cfg.seed, cfg.threads)
    wall = time.perf_counter() - t0
    out = _out(args, "dataset.gkd")
    io.write_dataset(out, ds)
    lo, hi = observed_range(ds)
    print(f"wrote {out}: M={ds.M} L={ds.L} N={ds.N} K={ds.K}")
    print(f"R_min_obs={lo:.6g} R_max_obs={hi:.6g} wall_time_s={wall:.3f}")
    return 0


def cmd_learn(args) -> int:
    cfg = _load_config(args)
    ds = io.read_dataset(args.dataset)
    _check_compatible(cfg, ds)
    res = learn(ds, _n_table(cfg, ds), cfg.degree, K=cfg.K, threads=cfg.threads)
    out = _out(args, "estimator.json")
    # timings stay on stdout so the file is reproducible byte for byte
    extra = {"dataset": os.path.basename(args.dataset),
             "n_out_of_range": [int(s.n_out) for s in res.systems]}
    io.write_json(out, io.estimators_to_dict(ds.manifold, res.estimators, cfg.K,
                                             res.reports, extra))
    for k, rep in enumerate(res.reports, start=1):
        flag = " (rank-deficient: minimum-norm solution)" if rep.flagged else ""
        print(f"type {k}: n={rep.coeffs.size} lambda_min={rep.lambda_min:.6g} "
              f"cond={rep.cond:.6g} residual_loss={rep.residual_loss:.6g}{flag}")
    t = res.timings
    print(f"timings_s: pairwise={t['pairwise']:.3f} assembly={t['assembly']:.3f} "
          f"solve={t['solve']:.3f}")
    print(f"wrote {out}")
    return 0


def _pairs(K):
    return [(k, k2) for k in range(1, K + 1) for k2 in range(1, K + 1)]


def evaluate(cfg, ds, estimators, outdir, threads=None) -> dict:
    """Kernel comparison, rho histograms, L2(rho) errors and trajectory errors."""
    os.makedirs(outdir, exist_ok=True)
    model = cfg.model()
    K = cfg.K
    pairs = _pairs(K)

    # kernel comparison on a grid covering the observed range
    rmax = observed_range(ds)[1]
    r = np.linspace(rmax / cfg.grid, rmax, cfg.grid)
    cols, header = [r], ["r[length]"]
    for k, k2 in pairs:
        e = estimators.get((k, k2))
        cols.append(model.kernels[k - 1, k2 - 1](r))
        cols.append(np.zeros_like(r) if e is None else e(r))
        header += [f"phi_{k}{k2}[1/time]", f"phihat_{k}{k2}[1/time]"]
    io.write_csv(os.path.join(outdir, "kernels.csv"), header, np.column_stack(cols))

    # rho histograms and estimation errors
    hist_rows, err_rows, errors = [], [], {}
    for k, k2 in pairs:
        try:
            mu = rho_empirical(ds, None if K == 1 else (k, k2))
        except ValueError:
            e = estimators.get((k, k2))
            errors[(k, k2)] = (0.0, "absolute") if e is None or not np.any(e.coeffs) else (
                float("nan"), "absolute")
            err_rows.append([f"{k}{k2}", errors[(k, k2)][0], errors[(k, k2)][1]])
            continue
        centers, mass = mu.histogram(cfg.bins)
        hist_rows += [[f"{k}{k2}", c, m] for c, m in zip(centers, mass)]
        val, kind = rel_error(estimators.get((k, k2)), model.kernels[k - 1, k2 - 1], mu, True)
        errors[(k, k2)] = (val, kind)
        err_rows.append([f"{k}{k2}", val, kind])
    io.write_csv(os.path.join(outdir, "rho_hist.csv"),
                 ["pair", "r_center[length]", "mass[probability]"], hist_rows)
    io.write_csv(os.path.join(outdir, "errors.csv"),
                 ["pair", "l2rho_error[dimensionless]", "kind"], err_rows)

    # trajectory errors: training ICs, fresh ICs, and a larger system
    est_model = estimator_model(model, estimators)
    cfg_int = cfg.integrator()
    nic = min(cfg.fresh_ics, ds.M)
    sets = [
        ("training", model, est_model, ds.initial_conditions()[:nic]),
        ("fresh", model, est_model, random_ics(model, cfg.ic_spec(), cfg.fresh_ics, cfg.seed,
                                              FRESH_OFFSET)),
    ]
    if cfg.transfer_N and cfg.transfer_N != cfg.N:
        big = _resized(model, cfg.transfer_N)
        sets.append((f"transfer_N{cfg.transfer_N}", big, _resized(est_model, cfg.transfer_N),
                     random_ics(big, cfg.ic_spec(cfg.transfer_N), cfg.fresh_ics, cfg.seed,
                                TRANSFER_OFFSET)))
    traj_rows, traj = [], {}
    for name, mt, me, ics in sets:
        errs = traj_errors(mt, me, ics, cfg.T, ds.L, cfg_int, threads)
        traj[name] = (float(np.mean(errs)), float(np.std(errs)), int(errs.size))
        traj_rows.append([name, traj[name][0], traj[name][1], traj[name][2]])
    io.write_csv(os.path.join(outdir, "traj_errors.csv"),
                 ["ic_set", "mean[length]", "std[length]", "count"], traj_rows)
    report = {"errors": {f"{k}{k2}": {"value": v, "kind": kd} for (k, k2), (v, kd) in errors.items()},
              "trajectory": {n: {"mean": m, "std": s, "count": c} for n, (m, s, c) in traj.items()}}
    io.write_json(os.path.join(outdir, "report.json"), report)
    return report


def _resized(model: ModelSpec, N: int) -> ModelSpec:
    counts = list(model.type_counts)
    counts[0] = N - sum(counts[1:])
    return ModelSpec(model.manifold, model.kernels, counts)


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    ds = io.read_dataset(args.dataset)
    _check_compatible(cfg, ds)
    man, K, est = io.estimators_from_dict(io.read_json(args.estimator))
    if man != cfg.manifold or K != cfg.K:
        raise UsageError("estimator file does not match the config")
    outdir = _out(args, "evaluation")
    rep = evaluate(cfg, ds, est, outdir, cfg.threads)
    for pair, e in rep["errors"].items():
        print(f"err_{pair} = {e['value']:.6g} ({e['kind']})")
    for name, t in rep["trajectory"].items():
        print(f"traj[{name}] mean={t['mean']:.6g} std={t['std']:.6g} over {t['count']} ICs")
    print(f"wrote {outdir}/")
    return 0


def _int_list(s: str) -> list[int]:
    try:
        return [int(x) for x in s.split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"bad integer list {s!r}") from exc


def cmd_study(args) -> int:
    cfg = _load_config(args)
    if cfg.K != 1:
        raise UsageError("the convergence study supports homogeneous systems")
    M_list = _int_list(args.M)
    if len(M_list) < 3:
        raise UsageError("study needs at least 3 values of M")
    n_rule = None
    if args.fixed_n:
        n_fixed = cfg.n.get((1, 1))
        if n_fixed is None:
            raise UsageError("--fixed-n needs n in the [basis] section")
        n_rule = lambda M: n_fixed  # noqa: E731
    exp = ConvergenceExperiment(cfg.model(), cfg.ic_spec(), cfg.L, cfg.T, cfg.integrator(),
                                cfg.degree[(1, 1)], n_rule, cfg.seed, cfg.M_rho)
    res = convergence_study(exp, M_list, args.repeats, cfg.threads)
    out = _out(args, "study.csv")
    rows = [[M, mean, std, res.slope, res.ci[0], res.ci[1], "|".join(res.flags)]
            for M, mean, std in res.rows()]
    io.write_csv(out, ["M[trajectories]", "rel_error_mean[dimensionless]",
                       "rel_error_std[dimensionless]", "slope[dimensionless]", "ci_low", "ci_high",
                       "flags"], rows)
    print(f"slope={res.slope:.4f} CI=[{res.ci[0]:.4f}, {res.ci[1]:.4f}] "
          f"flags={','.join(res.flags) or 'none'}")
    print(f"wrote {out}")
    return 0


def cmd_rho(args) -> int:
    ds = io.read_dataset(args.dataset)
    pair = tuple(_int_list(args.pair)) if args.pair else None
    if pair is not None and len(pair) != 2:
        raise UsageError("--pair expects k,k2")
    mu = rho_empirical(ds, pair)
    centers, mass = mu.histogram(args.bins)
    out = _out(args, "rho.csv")
    io.write_csv(out, ["r_center[length]", "mass[probability]"], zip(centers, mass))
    lo, hi = mu.support
    print(f"{mu.r.size} samples on [{lo:.6g}, {hi:.6g}]; wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file, or the name of a shipped config")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--threads", type=int, help="worker threads (default: all cores)")
    common.add_argument("--out", help="output file or directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="geokernel", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("simulate", parents=[common], help="generate a GKD1 dataset")
    s.set_defaults(func=cmd_simulate)
    s = sub.add_parser("learn", parents=[common], help="learn kernels from a dataset")
    s.add_argument("dataset")
    s.set_defaults(func=cmd_learn)
    s = sub.add_parser("evaluate", parents=[common], help="errors and CSV exports")
    s.add_argument("dataset")
    s.add_argument("estimator")
    s.set_defaults(func=cmd_evaluate)
    s = sub.add_parser("study", parents=[common], help="convergence rate in M")
    s.add_argument("--M", default="32,128,512", help="comma-separated trajectory counts")
    s.add_argument("--repeats", type=int, default=3)
    s.add_argument("--fixed-n", action="store_true",
                   help="use the config basis size for every M instead of n*(M)")
    s.set_defaults(func=cmd_study)
    s = sub.add_parser("rho", parents=[common], help="histogram of pairwise distances")
    s.add_argument("dataset")
    s.add_argument("--pair", help="type pair k,k2")
    s.add_argument("--bins", type=int, default=200)
    s.set_defaults(func=cmd_rho)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (SimulationError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
