"""Epsilon and ensemble-size sweeps: cell scheduling, slope fits and result files."""

from __future__ import annotations

import csv
import json
import math
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from .config import ExperimentConfig, format_config, initial_state, model_for
from .diagnostics import loglog_slope, time_average, write_diagnostics_csv
from .enkbf import FilterConfig, Scheme, run_filter
from .ensemble import Ensemble
from .errors import ConfigError, DivergenceError, ExperimentError, RankDeficiencyError
from .meanfield import run_chaos_experiment
from .model import as_model_spec
from .seeding import ENSEMBLE_STREAM, mix_seed, substream
from .truth import simulate_truth

__all__ = [
    "SweepRow",
    "SlopeFit",
    "SweepResult",
    "SWEEP_COLUMNS",
    "DEFAULT_RECORD_EVERY",
    "cell_truth",
    "initial_ensemble",
    "run_cell",
    "run_epsilon_sweep",
    "run_m_sweep",
    "fit_slopes",
    "write_results",
    "run_chaos",
    "write_chaos_csv",
]

SWEEP_COLUMNS = ("epsilon", "m", "seed", "time_avg_mse", "time_avg_lmax", "time_avg_lmin", "diverged")

# Recording stride used for time averages when the config leaves record_every unset.
DEFAULT_RECORD_EVERY = 10

_CELL_FILE = re.compile(r"^cell_eps[-+.\deE]+_m\d+_s\d+\.csv$")


class SweepRow(NamedTuple):
    epsilon: float
    m: int
    seed: int
    time_avg_mse: float
    time_avg_lmax: float
    time_avg_lmin: float
    diverged: bool


@dataclass(frozen=True)
class SlopeFit:
    """Log-log slopes against epsilon of seed-averaged time averages for one ``m``.

    A slope is ``None`` when fewer than two usable points exist. ``lmin_slope``
    is also ``None`` when ``m <= nx``, where the smallest eigenvalue is zero.
    ``lmin_slope_trimmed`` leaves out the largest epsilon.
    """

    m: int
    mse_slope: float | None
    lmax_slope: float | None
    lmin_slope: float | None
    lmin_slope_trimmed: float | None
    n_points: int
    n_excluded: int


@dataclass(frozen=True, eq=False)
class SweepResult:
    config: ExperimentConfig
    rows: tuple
    fits: tuple
    seeds: tuple
    diagnostics: dict | None = None

    @property
    def fitted(self):
        """Fit of the first ensemble size in the sweep."""
        return self.fits[0] if self.fits else None

    def fit_for(self, m):
        for fit in self.fits:
            if fit.m == m:
                return fit
        raise KeyError(m)

    @property
    def n_diverged(self):
        return sum(r.diverged for r in self.rows)


def cell_truth(cfg, epsilon, seed_index):
    """Truth path of one cell; the signal noise depends on the seed index only."""
    model = model_for(cfg, epsilon)
    spec = as_model_spec(model)
    seed = mix_seed(cfg.master_seed, seed_index)
    x0 = initial_state(cfg, spec.nx)
    return model, simulate_truth(model, x0, cfg.dt, cfg.n_steps, seed)


def initial_ensemble(cfg, epsilon, m, seed_index, center):
    """``m`` particles around ``center`` with standard deviation ``init_scale * sqrt(epsilon)``."""
    rng = substream(mix_seed(cfg.master_seed, seed_index), ENSEMBLE_STREAM)
    z = rng.standard_normal((center.size, m))
    return Ensemble(center[:, None] + cfg.init_scale * math.sqrt(epsilon) * z)


def run_cell(cfg, epsilon, m, seed_index, keep_diagnostics=False):
    """Run one (epsilon, m, seed) cell; returns ``(SweepRow, diags or None)``."""
    seed = mix_seed(cfg.master_seed, seed_index)
    model, truth = cell_truth(cfg, epsilon, seed_index)
    if not as_model_spec(model).observes_identity:
        raise ConfigError("sweeps need a fully observed model (H = I)", "H")
    init = initial_ensemble(cfg, epsilon, m, seed_index, truth.states[0])
    fcfg = FilterConfig(
        dt=cfg.dt,
        n_steps=cfg.n_steps,
        m=m,
        scheme=Scheme.FULLY_OBSERVED_REGULARIZED,
        record_every=cfg.record_every or DEFAULT_RECORD_EVERY,
    )
    try:
        run = run_filter(model, truth, fcfg, init, epsilon)
    except (DivergenceError, RankDeficiencyError):
        nan = float("nan")
        return SweepRow(epsilon, m, seed, nan, nan, nan, True), None
    b = cfg.burn_in_fraction
    row = SweepRow(
        epsilon,
        m,
        seed,
        time_average(run.column("e_sq"), b),
        time_average(run.column("lambda_max"), b),
        time_average(run.column("lambda_min"), b),
        False,
    )
    return row, (run.diags if keep_diagnostics else None)


def _cell_task(args):
    return run_cell(*args)


def _run_cells(cfg, m_values, workers, keep_diagnostics):
    cells = sorted(
        ((eps, m, s) for eps in set(cfg.epsilon_list) for m in set(m_values) for s in range(cfg.n_seeds)),
    )
    keep = keep_diagnostics or cfg.record_every is not None
    tasks = [(cfg, eps, m, s, keep) for eps, m, s in cells]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_cell_task, tasks, chunksize=1))
    else:
        results = [_cell_task(t) for t in tasks]
    rows = tuple(r for r, _ in results)
    if rows and all(r.diverged for r in rows):
        raise ExperimentError("every sweep cell diverged")
    diags = {cell: d for cell, (_, d) in zip(cells, results) if d is not None} if keep else None
    nx = as_model_spec(model_for(cfg, cfg.epsilon)).nx
    fits = tuple(fit_slopes(rows, m, nx) for m in sorted(set(m_values)))
    seeds = tuple(mix_seed(cfg.master_seed, s) for s in range(cfg.n_seeds))
    return SweepResult(cfg, rows, fits, seeds, diags)


def run_epsilon_sweep(cfg, workers=1, keep_diagnostics=False):
    """All (epsilon, seed) cells at ensemble size ``cfg.m``.

    Cells are independent; results are sorted by (epsilon, M, seed index) so
    the output does not depend on ``workers``.
    """
    return _run_cells(cfg, [cfg.m], workers, keep_diagnostics)


def run_m_sweep(cfg, workers=1, keep_diagnostics=False):
    """All (epsilon, M, seed) cells for ``M`` in ``cfg.m_list``."""
    if not cfg.m_list:
        raise ConfigError("m_list is required for an ensemble-size sweep", "m_list")
    return _run_cells(cfg, cfg.m_list, workers, keep_diagnostics)


def _slope(xs, ys):
    if len(xs) < 2 or len(set(xs)) < 2:
        return None
    if any(not (y > 0 and math.isfinite(y)) for y in ys):
        return None
    return loglog_slope(xs, ys)[0]


def fit_slopes(rows, m, nx=None):
    """Slopes for ensemble size ``m`` from seed-averaged, non-diverged rows."""
    mine = [r for r in rows if r.m == m]
    by_eps = {}
    for r in mine:
        if not r.diverged:
            by_eps.setdefault(r.epsilon, []).append(r)
    eps = sorted(by_eps)
    mse = [float(np.mean([r.time_avg_mse for r in by_eps[e]])) for e in eps]
    lmax = [float(np.mean([r.time_avg_lmax for r in by_eps[e]])) for e in eps]
    lmin = [float(np.mean([r.time_avg_lmin for r in by_eps[e]])) for e in eps]
    full_rank = nx is None or m > nx
    return SlopeFit(
        m=m,
        mse_slope=_slope(eps, mse),
        lmax_slope=_slope(eps, lmax),
        lmin_slope=_slope(eps, lmin) if full_rank else None,
        lmin_slope_trimmed=_slope(eps[:-1], lmin[:-1]) if full_rank else None,
        n_points=len(eps),
        n_excluded=sum(r.diverged for r in mine),
    )


def _num(v):
    return format(float(v), ".17g")


def _json_safe(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, (tuple, list)):
        return [_json_safe(x) for x in v]
    if isinstance(v, dict):
        return {k: _json_safe(x) for k, x in v.items()}
    return v


def _cell_name(eps, m, s):
    return f"cell_eps{float(eps)!r}_m{m}_s{s}.csv"


def write_results(result, directory):
    """Write ``sweep.csv``, ``summary.json``, ``config.txt`` and per-cell diagnostics.

    Per-cell files go to ``cells/`` and only when the config sets
    ``record_every``; stale cell files from earlier runs are removed. Returns
    the list of written paths.
    """
    cfg = result.config
    manifest = []
    try:
        os.makedirs(directory, exist_ok=True)
        path = os.path.join(directory, "sweep.csv")
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SWEEP_COLUMNS)
            for r in result.rows:
                w.writerow([_num(r.epsilon), r.m, r.seed, _num(r.time_avg_mse), _num(r.time_avg_lmax),
                            _num(r.time_avg_lmin), "true" if r.diverged else "false"])
        manifest.append(path)

        summary = {
            "n_rows": len(result.rows),
            "rows": [r._asdict() for r in result.rows],
            "fits": [asdict(f) for f in result.fits],
            "seeds": list(result.seeds),
            "divergence": {
                "total": result.n_diverged,
                "by_m": {str(m): sum(r.diverged for r in result.rows if r.m == m)
                         for m in sorted({r.m for r in result.rows})},
            },
            "excluded_from_fits": result.n_diverged,
            "config": asdict(cfg),
        }
        path = os.path.join(directory, "summary.json")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(_json_safe(summary), fh, indent=2, sort_keys=True, allow_nan=False)
            fh.write("\n")
        manifest.append(path)

        path = os.path.join(directory, "config.txt")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(format_config(cfg))
        manifest.append(path)

        cell_dir = os.path.join(directory, "cells")
        written = set()
        if cfg.record_every is not None and result.diagnostics:
            os.makedirs(cell_dir, exist_ok=True)
            for (eps, m, s), diags in sorted(result.diagnostics.items()):
                path = write_diagnostics_csv(diags, os.path.join(cell_dir, _cell_name(eps, m, s)))
                manifest.append(path)
                written.add(os.path.basename(path))
        if os.path.isdir(cell_dir):
            for name in os.listdir(cell_dir):
                if _CELL_FILE.match(name) and name not in written:
                    os.remove(os.path.join(cell_dir, name))
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write results: {exc.strerror}", exc.filename) from exc
    return manifest


def run_chaos(cfg, m_list, m_ref=None, n_seeds=10):
    """Propagation-of-chaos table for the configured model.

    The truth uses seed index 0. Initial particles are drawn around the
    initial state with covariance ``init_scale^2 epsilon I``.
    """
    model = model_for(cfg)
    spec = as_model_spec(model)
    x0 = initial_state(cfg, spec.nx)
    truth = simulate_truth(model, x0, cfg.dt, cfg.n_steps, mix_seed(cfg.master_seed, 0))
    fcfg = FilterConfig(dt=cfg.dt, n_steps=cfg.n_steps, m=max(2, min(m_list, default=2)))
    init_cov = cfg.init_scale ** 2 * cfg.epsilon * np.eye(spec.nx)
    return run_chaos_experiment(model, truth, m_list, m_ref, n_seeds, fcfg, init_mean=x0, init_cov=init_cov,
                                master_seed=cfg.master_seed)


def write_chaos_csv(table, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("M", "seeds_used", "mean_gap", "stderr_gap"))
        for row in table:
            w.writerow([row.m, row.seeds_used, _num(row.mean_gap), _num(row.stderr_gap)])
    return path
