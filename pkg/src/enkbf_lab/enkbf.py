"""Deterministic ensemble Kalman-Bucy filter: one-step schemes and the run loop."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .diagnostics import DIAG_COLUMNS, DiagnosticsRow, diagnostics_row
from .ensemble import Ensemble, empirical_stats, pseudo_inverse, symmetrize
from .errors import DivergenceError, InvalidArgumentError, RankDeficiencyError
from .kbf import riccati_rhs
from .model import (
    as_model_spec,
    diffusion_tensor,
    eval_drift_batch,
    eval_forward_batch,
)

__all__ = [
    "Scheme",
    "FilterConfig",
    "FilterRun",
    "V_MAX",
    "enkbf_step_general",
    "enkbf_step_fully_observed",
    "mean_increment",
    "covariance_rhs",
    "run_filter",
]

# Spread above this is treated as blow-up.
V_MAX = 1e12


class Scheme(str, enum.Enum):
    GENERAL = "general"
    FULLY_OBSERVED_REGULARIZED = "fully_observed_regularized"


@dataclass(frozen=True)
class FilterConfig:
    dt: float
    n_steps: int
    m: int
    scheme: Scheme = Scheme.GENERAL
    pinv_rel_tol: float = 1e-12
    record_every: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise InvalidArgumentError("dt must be positive")
        if self.n_steps < 0:
            raise InvalidArgumentError("n_steps must be non-negative")
        if self.m < 2:
            raise InvalidArgumentError("ensemble size must be at least 2")
        if self.record_every < 1:
            raise InvalidArgumentError("record_every must be >= 1")
        object.__setattr__(self, "scheme", Scheme(self.scheme))


@dataclass(frozen=True, eq=False)
class FilterRun:
    """Recorded output of one filter run.

    ``diags`` is an ``(n_records, 7)`` array with columns :data:`DIAG_COLUMNS`.
    """

    times: np.ndarray
    means: np.ndarray
    diags: np.ndarray
    final_ensemble: Ensemble

    def column(self, name):
        return self.diags[:, DIAG_COLUMNS.index(name)]

    def rows(self):
        return [DiagnosticsRow(*map(float, r)) for r in self.diags]


def _check_output(x, step):
    if not np.all(np.isfinite(x)):
        raise DivergenceError("EnKBF step produced non-finite particles", step=step)


def _particles(ens):
    return ens.particles if isinstance(ens, Ensemble) else np.asarray(ens, dtype=float)


def enkbf_step_general(ens, model, dy, dt, pinv_rel_tol=1e-12, *, stats=None, step=None):
    """One Euler step of the deterministic EnKBF with the unregularized gain.

    Each particle moves by ``dt f(X) + dt D P^+ (X - mean)
    - 1/2 Q R^{-1} (dt h(X) + dt h_mean - 2 dy)``.
    """
    model = as_model_spec(model)
    x = _particles(ens)
    dy = np.asarray(dy, dtype=float).reshape(-1)
    if dy.shape != (model.ny,):
        raise InvalidArgumentError(f"dy must have length {model.ny}")
    if not dt > 0:
        raise InvalidArgumentError("dt must be positive")
    if stats is None:
        stats = empirical_stats(x, model)
    dev = x - stats.mean[:, None]
    dpp = diffusion_tensor(model) @ pseudo_inverse(stats.cov, pinv_rel_tol)
    innov = dt * eval_forward_batch(model, x) + (dt * stats.h_mean - 2.0 * dy)[:, None]
    gain = stats.cross_cov @ model.obs_cov_inv
    out = x + dt * eval_drift_batch(model, x) + dt * (dpp @ dev) - 0.5 * (gain @ innov)
    _check_output(out, step)
    return Ensemble(out, t=getattr(ens, "t", 0.0) + dt)


def enkbf_step_fully_observed(ens, model, epsilon, dy, dt, pinv_rel_tol=1e-12, *, stats=None, step=None):
    """One step of the regularized scheme for ``h(x) = x``, ``R = epsilon I``.

    The gain is ``P (P + (epsilon/dt) I)^{-1}`` applied to
    ``X + mean - 2 dy/dt``; it tends to ``(dt/epsilon) P`` as ``dt -> 0``.
    """
    model = as_model_spec(model)
    if not model.observes_identity:
        raise InvalidArgumentError("the fully observed scheme needs h(x) = x")
    if not epsilon > 0:
        raise InvalidArgumentError("epsilon must be positive")
    if not dt > 0:
        raise InvalidArgumentError("dt must be positive")
    x = _particles(ens)
    dy = np.asarray(dy, dtype=float).reshape(-1)
    if dy.shape != (model.nx,):
        raise InvalidArgumentError(f"dy must have length {model.nx}")
    if stats is None:
        stats = empirical_stats(x, model)
    p = stats.cov
    dev = x - stats.mean[:, None]
    dpp = diffusion_tensor(model) @ pseudo_inverse(p, pinv_rel_tol)
    # P and (P + cI)^{-1} commute, so the gain is a plain solve.
    gain = np.linalg.solve(p + (epsilon / dt) * np.eye(model.nx), p)
    innov = x + (stats.mean - 2.0 * dy / dt)[:, None]
    out = x + dt * eval_drift_batch(model, x) + dt * (dpp @ dev) - 0.5 * (gain @ innov)
    _check_output(out, step)
    return Ensemble(out, t=getattr(ens, "t", 0.0) + dt)


def mean_increment(ens, model, dy, dt):
    """Euler increment of the ensemble mean, ``dt f_mean - Q R^{-1} (dt h_mean - dy)``."""
    model = as_model_spec(model)
    x = _particles(ens)
    stats = empirical_stats(x, model)
    f_mean = eval_drift_batch(model, x).mean(axis=1)
    dy = np.asarray(dy, dtype=float).reshape(-1)
    return dt * f_mean - stats.cross_cov @ model.obs_cov_inv @ (dt * stats.h_mean - dy)


def covariance_rhs(stats, linear, pinv_rel_tol=1e-12):
    """Continuous-time covariance drift of a linear EnKBF with invertible ``P``.

    Coincides with the Kalman-Bucy Riccati right-hand side.
    """
    lam = np.linalg.eigvalsh(stats.cov)
    if lam[0] <= pinv_rel_tol * lam[-1] or lam[-1] <= 0:
        raise RankDeficiencyError("ensemble covariance is singular")
    return riccati_rhs(stats.cov, linear)


def _run_compiled(model, truth, cfg, x, epsilon):
    n_rec = cfg.n_steps // cfg.record_every + 1
    diags = np.empty((n_rec, len(DIAG_COLUMNS)))
    means = np.empty((n_rec, model.nx))
    status, step, rec = _kernels.fully_observed_loop(
        model.drift_kernel,
        x,
        np.ascontiguousarray(truth.states),
        np.ascontiguousarray(truth.obs_increments[: cfg.n_steps]),
        cfg.dt,
        float(epsilon),
        np.ascontiguousarray(diffusion_tensor(model)),
        cfg.pinv_rel_tol,
        cfg.record_every,
        V_MAX,
        diags,
        means,
    )
    if status != _kernels.STATUS_OK:
        raise DivergenceError("ensemble spread is non-finite or exceeds the blow-up threshold", step=step)
    return diags[:rec], means[:rec], x


def run_filter(model, truth, cfg, init, epsilon=None, *, compiled=True):
    """Assimilate every increment of ``truth`` and record diagnostics.

    Rows are recorded at steps ``0, record_every, 2 record_every, ...``
    against ``truth.states``. For the regularized scheme ``epsilon`` defaults
    to ``R[0, 0]``. Models carrying a ``drift_kernel`` run the fully observed
    scheme through the compiled loop unless ``compiled`` is false.

    Raises :class:`DivergenceError` with the failing step on blow-up.
    """
    spec = as_model_spec(model)
    if not np.isclose(truth.dt, cfg.dt, rtol=1e-12, atol=0.0):
        raise InvalidArgumentError(f"truth.dt={truth.dt} differs from cfg.dt={cfg.dt}")
    if truth.n_steps < cfg.n_steps:
        raise InvalidArgumentError("truth path is shorter than cfg.n_steps")
    if init.m != cfg.m:
        raise InvalidArgumentError(f"initial ensemble has {init.m} particles, cfg.m={cfg.m}")
    fully = cfg.scheme is Scheme.FULLY_OBSERVED_REGULARIZED
    if fully:
        if not spec.observes_identity:
            raise InvalidArgumentError("the fully observed scheme needs h(x) = x")
        if epsilon is None:
            epsilon = float(spec.obs_cov[0, 0])

    x = np.array(init.particles, dtype=float, order="C")
    if fully and compiled and spec.drift_kernel is not None:
        diags, means, x = _run_compiled(spec, truth, cfg, x, epsilon)
    else:
        diags, means = [], []
        for n in range(cfg.n_steps + 1):
            stats = empirical_stats(x, spec)
            if not np.isfinite(stats.v) or stats.v > V_MAX:
                raise DivergenceError("ensemble spread is non-finite or exceeds the blow-up threshold", step=n)
            if n % cfg.record_every == 0:
                diags.append(diagnostics_row(n * cfg.dt, truth.states[n], stats))
                means.append(stats.mean)
            if n == cfg.n_steps:
                break
            dy = truth.obs_increments[n]
            if fully:
                x = enkbf_step_fully_observed(x, spec, epsilon, dy, cfg.dt, cfg.pinv_rel_tol,
                                              stats=stats, step=n).particles
            else:
                x = enkbf_step_general(x, spec, dy, cfg.dt, cfg.pinv_rel_tol,
                                       stats=stats, step=n).particles
        diags = np.array(diags, dtype=float).reshape(-1, len(DIAG_COLUMNS))
        means = np.array(means, dtype=float).reshape(-1, spec.nx)
    return FilterRun(
        times=diags[:, 0].copy(),
        means=means,
        diags=diags,
        final_ensemble=Ensemble(x, t=init.t + cfg.n_steps * cfg.dt),
    )
