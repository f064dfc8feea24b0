"""Particle ensembles and their empirical moments."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .model import as_model_spec, eval_forward_batch

__all__ = [
    "Ensemble",
    "EmpiricalStats",
    "empirical_stats",
    "pseudo_inverse",
    "frobenius_norm",
    "symmetrize",
]


def symmetrize(m):
    return 0.5 * (m + m.T)


@dataclass(frozen=True, eq=False)
class Ensemble:
    """``M`` particles stored column-wise in an ``(nx, M)`` array."""

    particles: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        x = np.asarray(self.particles, dtype=float)
        if x.ndim == 1:
            x = x.reshape(1, -1)
        if x.ndim != 2 or x.shape[1] < 2:
            raise InvalidArgumentError(f"an ensemble needs at least 2 particles, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise InvalidArgumentError("ensemble has non-finite entries")
        object.__setattr__(self, "particles", x)

    @property
    def m(self):
        return self.particles.shape[1]

    @property
    def nx(self):
        return self.particles.shape[0]


@dataclass(frozen=True)
class EmpiricalStats:
    mean: np.ndarray
    cov: np.ndarray
    h_mean: np.ndarray
    cross_cov: np.ndarray
    v: float
    m: int


def empirical_stats(ens, model):
    """Mean, covariance, forward-map mean and cross-covariance of an ensemble.

    Second moments use the ``1/(M-1)`` normalization; the covariance is
    symmetrized. ``v`` is the summed squared deviation from the mean, divided
    by ``M - 1``.
    """
    model = as_model_spec(model)
    x = ens.particles if isinstance(ens, Ensemble) else np.asarray(ens, dtype=float)
    m = x.shape[1]
    if m < 2:
        raise InvalidArgumentError("empirical moments need M >= 2")
    mean = x.mean(axis=1)
    dev = x - mean[:, None]
    cov = symmetrize(dev @ dev.T / (m - 1))
    if model.observes_identity:
        h_mean, cross = mean.copy(), cov.copy()
    else:
        hx = eval_forward_batch(model, x)
        h_mean = hx.mean(axis=1)
        cross = dev @ (hx - h_mean[:, None]).T / (m - 1)
    v = float(np.sum(dev * dev) / (m - 1))
    return EmpiricalStats(mean=mean, cov=cov, h_mean=h_mean, cross_cov=cross, v=v, m=m)


def pseudo_inverse(p, rel_tol=1e-12):
    """Moore-Penrose inverse of a symmetric PSD matrix by eigendecomposition.

    Eigenvalues at or below ``rel_tol * lambda_max`` are mapped to zero.
    """
    p = np.atleast_2d(np.asarray(p, dtype=float))
    if not 0.0 < rel_tol < 1.0:
        raise InvalidArgumentError("rel_tol must lie in (0, 1)")
    scale = frobenius_norm(p)
    if np.abs(p - p.T).max(initial=0.0) > 1e-10 * scale:
        raise InvalidArgumentError("pseudo_inverse expects a symmetric matrix")
    lam, u = np.linalg.eigh(symmetrize(p))
    lmax = lam.max(initial=0.0)
    inv = np.zeros_like(lam)
    keep = lam > rel_tol * lmax
    inv[keep] = 1.0 / lam[keep]
    return symmetrize((u * inv) @ u.T)


def frobenius_norm(m):
    """Frobenius norm, rescaled by the largest entry so tiny matrices do not underflow."""
    m = np.asarray(m, dtype=float)
    scale = np.abs(m).max(initial=0.0)
    if scale == 0.0 or not np.isfinite(scale):
        return float(scale)
    return float(scale * np.sqrt(np.sum(np.square(m / scale))))
