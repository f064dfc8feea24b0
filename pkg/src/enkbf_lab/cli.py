"""Command line entry point ``enkbf-lab``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import warnings

import numpy as np

from . import experiment
from .config import initial_state, model_for, parse_config, write_config_echo
from .diagnostics import time_average, write_diagnostics_csv
from .enkbf import FilterConfig, Scheme, run_filter
from .errors import ConfigError, EnKBFError
from .kbf import controllability_rank, lambda_star, observability_rank, riccati_rhs, stationary_riccati
from .model import LinearModelSpec, as_model_spec
from .seeding import mix_seed
from .truth import simulate_truth


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser():
    parser = argparse.ArgumentParser(prog="enkbf-lab", description="Ensemble Kalman-Bucy filter experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("truth", "simulate a reference path and its observations"),
        ("filter", "run one filter cell and write its diagnostics"),
        ("sweep-epsilon", "epsilon sweep at fixed ensemble size"),
        ("sweep-m", "epsilon sweep for every ensemble size in m_list"),
        ("chaos", "propagation-of-chaos gap versus ensemble size"),
        ("riccati", "stationary Riccati solution of a linear model"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="key = value configuration file")
        p.add_argument("--seed", type=int, help="override master_seed")
        p.add_argument("--out", help="override output_dir")
        p.add_argument("--workers", type=int, default=1, help="worker processes for independent cells")
        if name == "chaos":
            p.add_argument("--m-list", type=_int_list, default=[8, 32, 128, 512])
            p.add_argument("--m-ref", type=int, default=None)
            p.add_argument("--seeds", type=int, default=10)
    return parser


def _load(args):
    cfg = parse_config(args.config)
    changes = {}
    if args.seed is not None:
        changes["master_seed"] = args.seed
    if args.out is not None:
        changes["output_dir"] = args.out
    if args.workers < 1:
        raise ConfigError("--workers must be at least 1", "workers")
    return dataclasses.replace(cfg, **changes) if changes else cfg


def _print_json(obj):
    print(json.dumps(obj, indent=2, sort_keys=True))


def _cmd_truth(cfg, args):
    model = model_for(cfg)
    spec = as_model_spec(model)
    truth = simulate_truth(model, initial_state(cfg, spec.nx), cfg.dt, cfg.n_steps, mix_seed(cfg.master_seed, 0))
    os.makedirs(cfg.output_dir, exist_ok=True)
    path = truth.to_csv(os.path.join(cfg.output_dir, "truth.csv"))
    write_config_echo(cfg, os.path.join(cfg.output_dir, "config.txt"))
    print(path)


def _cmd_filter(cfg, args):
    eps = cfg.epsilon
    model, truth = experiment.cell_truth(cfg, eps, 0)
    spec = as_model_spec(model)
    init = experiment.initial_ensemble(cfg, eps, cfg.m, 0, truth.states[0])
    scheme = Scheme.FULLY_OBSERVED_REGULARIZED if spec.observes_identity else Scheme.GENERAL
    fcfg = FilterConfig(dt=cfg.dt, n_steps=cfg.n_steps, m=cfg.m, scheme=scheme,
                        record_every=cfg.record_every or experiment.DEFAULT_RECORD_EVERY)
    run = run_filter(model, truth, fcfg, init, eps if spec.observes_identity else None)
    os.makedirs(cfg.output_dir, exist_ok=True)
    path = write_diagnostics_csv(run.diags, os.path.join(cfg.output_dir, "diagnostics.csv"))
    write_config_echo(cfg, os.path.join(cfg.output_dir, "config.txt"))
    b = cfg.burn_in_fraction
    _print_json({
        "diagnostics": path,
        "epsilon": eps,
        "m": cfg.m,
        "time_avg_mse": time_average(run.column("e_sq"), b),
        "time_avg_lmax": time_average(run.column("lambda_max"), b),
        "time_avg_lmin": time_average(run.column("lambda_min"), b),
    })


def _fmt_slope(v):
    return "n/a" if v is None else f"{v:.4f}"


def _cmd_sweep(cfg, args, by_m):
    run = experiment.run_m_sweep if by_m else experiment.run_epsilon_sweep
    result = run(cfg, workers=args.workers)
    manifest = experiment.write_results(result, cfg.output_dir)
    for fit in result.fits:
        print(f"M={fit.m}: mse_slope={_fmt_slope(fit.mse_slope)} lmax_slope={_fmt_slope(fit.lmax_slope)} "
              f"lmin_slope={_fmt_slope(fit.lmin_slope)} lmin_slope_trimmed={_fmt_slope(fit.lmin_slope_trimmed)} "
              f"excluded={fit.n_excluded}")
    for path in manifest:
        print(path)


def _cmd_chaos(cfg, args):
    table = experiment.run_chaos(cfg, args.m_list, args.m_ref, args.seeds)
    os.makedirs(cfg.output_dir, exist_ok=True)
    path = experiment.write_chaos_csv(table, os.path.join(cfg.output_dir, "chaos.csv"))
    for row in table:
        if row.failed:
            print(f"M={row.m}: {row.failed} seed(s) failed and were excluded", file=sys.stderr)
    print(path)


def _cmd_riccati(cfg, args):
    model = model_for(cfg)
    if not isinstance(model, LinearModelSpec):
        raise ConfigError("riccati needs model = \"linear\"", "model")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        p_inf = stationary_riccati(model)
    _print_json({
        "p_inf": p_inf.tolist(),
        "residual_norm": float(np.linalg.norm(riccati_rhs(p_inf, model))),
        "lambda_star": lambda_star(p_inf, model),
        "observability_rank": observability_rank(model),
        "controllability_rank": controllability_rank(model),
    })


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args)
        if args.command == "truth":
            _cmd_truth(cfg, args)
        elif args.command == "filter":
            _cmd_filter(cfg, args)
        elif args.command == "sweep-epsilon":
            _cmd_sweep(cfg, args, by_m=False)
        elif args.command == "sweep-m":
            _cmd_sweep(cfg, args, by_m=True)
        elif args.command == "chaos":
            _cmd_chaos(cfg, args)
        else:
            _cmd_riccati(cfg, args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (EnKBFError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
