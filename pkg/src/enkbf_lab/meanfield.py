"""Mean-field (McKean-Vlasov) particles and the propagation-of-chaos experiment.

Mean-field particles follow the EnKBF particle equation but take their mean
and covariance from an external source (the law of the limit process)
instead of from each other. For linear models that law is Gaussian with
Kalman-Bucy moments. For nonlinear models it is approximated by a large
reference ensemble evolved by the EnKBF itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .ensemble import Ensemble, empirical_stats
from .enkbf import enkbf_step_general
from .errors import DivergenceError, EnKBFError, InvalidArgumentError, RankDeficiencyError
from .kbf import GaussianBelief, kbf_trajectory
from .model import LinearModelSpec, as_model_spec, diffusion_tensor, eval_drift_batch, eval_forward_batch
from .seeding import ENSEMBLE_STREAM, REFERENCE_STREAM, mix_seed, substream
from .truth import sqrt_psd

__all__ = [
    "Moments",
    "MomentSource",
    "ChaosRow",
    "meanfield_step",
    "run_chaos_experiment",
    "check_meanfield_condition",
    "MIN_REF_RATIO",
]

# A jumbo reference ensemble must be at least this many times larger than M.
MIN_REF_RATIO = 8


class Moments(NamedTuple):
    mean: np.ndarray
    cov: np.ndarray
    h_mean: np.ndarray
    cross_cov: np.ndarray


@dataclass(frozen=True, eq=False)
class MomentSource:
    """Where mean-field particles get their moments from.

    ``kind`` is ``"linear_exact"`` (Kalman-Bucy belief trajectory) or
    ``"jumbo_ensemble"`` (reference ensemble of size ``m_ref``).
    """

    kind: str
    model: object
    belief: GaussianBelief | None = None
    reference: Ensemble | None = None
    pinv_rel_tol: float = 1e-12

    @classmethod
    def linear_exact(cls, linear, belief):
        if not isinstance(linear, LinearModelSpec):
            raise InvalidArgumentError("linear_exact moments need a LinearModelSpec")
        return cls("linear_exact", linear, belief=belief)

    @classmethod
    def jumbo_ensemble(cls, model, reference, m=None, pinv_rel_tol=1e-12):
        if m is not None and reference.m < MIN_REF_RATIO * m:
            raise InvalidArgumentError(
                f"reference ensemble of {reference.m} is smaller than {MIN_REF_RATIO} x M = {MIN_REF_RATIO * m}"
            )
        return cls("jumbo_ensemble", model, reference=reference, pinv_rel_tol=pinv_rel_tol)

    def iter_moments(self, obs_increments, dt, n_steps=None):
        """Yield :class:`Moments` at grid times ``0 .. n_steps``."""
        dys = np.asarray(obs_increments, dtype=float)
        n_steps = dys.shape[0] if n_steps is None else int(n_steps)
        if self.kind == "linear_exact":
            h = self.model.h_matrix
            means, covs = kbf_trajectory(self.belief, self.model, dys[:n_steps], dt)
            for mean, cov in zip(means, covs):
                yield Moments(mean, cov, h @ mean, cov @ h.T)
        elif self.kind == "jumbo_ensemble":
            spec = as_model_spec(self.model)
            x = self.reference.particles
            for n in range(n_steps + 1):
                stats = empirical_stats(x, spec)
                yield Moments(stats.mean, stats.cov, stats.h_mean, stats.cross_cov)
                if n < n_steps:
                    x = enkbf_step_general(x, spec, dys[n], dt, self.pinv_rel_tol, stats=stats, step=n).particles
        else:
            raise InvalidArgumentError(f"unknown moment source {self.kind!r}")


def meanfield_step(particles, moments, model, dy, dt):
    """One Euler step of mean-field particles driven by externally supplied moments."""
    spec = as_model_spec(model)
    x = particles.particles if isinstance(particles, Ensemble) else np.asarray(particles, dtype=float)
    mean, cov, h_mean, cross = (np.asarray(a, dtype=float) for a in moments)
    cov = np.atleast_2d(cov)
    lam = np.linalg.eigvalsh(cov)
    if lam[-1] <= 0 or lam[0] <= 1e-12 * lam[-1]:
        raise RankDeficiencyError("mean-field covariance is singular")
    dy = np.asarray(dy, dtype=float).reshape(-1)
    dev = x - mean[:, None]
    spread = diffusion_tensor(spec) @ np.linalg.solve(cov, dev)
    innov = dt * eval_forward_batch(spec, x) + (dt * h_mean - 2.0 * dy)[:, None]
    out = x + dt * eval_drift_batch(spec, x) + dt * spread - 0.5 * (np.atleast_2d(cross) @ spec.obs_cov_inv @ innov)
    if not np.all(np.isfinite(out)):
        raise DivergenceError("mean-field step produced non-finite particles")
    return Ensemble(out, t=getattr(particles, "t", 0.0) + dt)


class ChaosRow(NamedTuple):
    m: int
    seeds_used: int
    mean_gap: float
    stderr_gap: float
    failed: int


def _draw(mean, root, m, rng):
    return mean[:, None] + root @ rng.standard_normal((mean.size, m))


def run_chaos_experiment(model, truth, m_list, m_ref, n_seeds, cfg, *, init_mean=None,
                         init_cov=None, master_seed=0, moments="auto"):
    """Coupled EnKBF / mean-field runs and their terminal L2 gap per ensemble size.

    For every ``M`` and seed, ``M`` particles drawn from ``N(init_mean,
    init_cov)`` start both an EnKBF and a mean-field system, which then see
    the same observation increments. The gap at the final time is
    ``(1/M) sum_i |X_i - Xhat_i|^2``. ``moments`` is ``"linear_exact"``,
    ``"jumbo_ensemble"`` or ``"auto"`` (exact for linear models).

    Seeds whose run raises are left out and counted in ``failed``.
    """
    m_list = [int(m) for m in m_list]
    if any(m < 2 for m in m_list):
        raise InvalidArgumentError("every M must be at least 2")
    spec = as_model_spec(model)
    if moments == "auto":
        moments = "linear_exact" if isinstance(model, LinearModelSpec) else "jumbo_ensemble"
    if moments == "jumbo_ensemble":
        if m_ref is None or (m_list and int(m_ref) < MIN_REF_RATIO * max(m_list)):
            raise InvalidArgumentError(f"m_ref must be at least {MIN_REF_RATIO} x max(M)")
    init_mean = truth.states[0] if init_mean is None else np.asarray(init_mean, dtype=float).reshape(-1)
    init_cov = np.eye(spec.nx) if init_cov is None else np.atleast_2d(np.asarray(init_cov, dtype=float))
    root = sqrt_psd(init_cov)
    dys = truth.obs_increments[: cfg.n_steps]

    exact = None
    if moments == "linear_exact":
        source = MomentSource.linear_exact(model, GaussianBelief(init_mean, init_cov))
        exact = list(source.iter_moments(dys, cfg.dt, cfg.n_steps))

    table = []
    for m in m_list:
        gaps, failed = [], 0
        for s in range(int(n_seeds)):
            seed = mix_seed(master_seed, s)
            x = _draw(init_mean, root, m, substream(seed, ENSEMBLE_STREAM))
            xh = x.copy()
            if exact is None:
                ref = Ensemble(_draw(init_mean, root, int(m_ref), substream(seed, REFERENCE_STREAM)))
                stream = MomentSource.jumbo_ensemble(model, ref, m, cfg.pinv_rel_tol).iter_moments(
                    dys, cfg.dt, cfg.n_steps)
            else:
                stream = iter(exact)
            try:
                for n in range(cfg.n_steps):
                    mom = next(stream)
                    x = enkbf_step_general(x, spec, dys[n], cfg.dt, cfg.pinv_rel_tol, step=n).particles
                    xh = meanfield_step(xh, mom, spec, dys[n], cfg.dt).particles
            except EnKBFError:
                failed += 1
                continue
            gaps.append(float(np.mean(np.sum((x - xh) ** 2, axis=0))))
        if gaps:
            g = np.asarray(gaps)
            se = float(g.std(ddof=1) / math.sqrt(g.size)) if g.size > 1 else float("nan")
            table.append(ChaosRow(m, g.size, float(g.mean()), se, failed))
        elif n_seeds:
            table.append(ChaosRow(m, 0, float("nan"), float("nan"), failed))
    return table


def check_meanfield_condition(model, f_lip, h_lip, c4=1.0):
    """Sufficient condition for an invertible mean-field covariance, and the ``kappa_-`` level.

    The condition is ``f_lip^2 < 2 lambda_min(D) |R^{-1}|_F h_lip^2``;
    ``kappa_-`` needs the caller's bound ``c4`` on the mean-field variance.
    Returns ``(holds, kappa_minus)``.
    """
    spec = as_model_spec(model)
    lam_min_d = float(np.linalg.eigvalsh(diffusion_tensor(spec))[0])
    rinv = float(np.linalg.norm(spec.obs_cov_inv))
    num = 2.0 * lam_min_d * rinv * h_lip ** 2 - f_lip ** 2
    kappa = num / (2.0 * rinv ** 2 * h_lip ** 4 * c4) if h_lip > 0 and c4 > 0 else float("nan")
    return bool(num > 0), kappa
