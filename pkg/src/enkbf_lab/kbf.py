"""Kalman-Bucy reference filter for linear-Gaussian problems.

The covariance obeys the matrix Riccati equation

    dP/dt = A P + P A^T + 2D - P H^T R^{-1} H P.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError, InvalidArgumentError, NoConvergenceError
from .model import LinearModelSpec

__all__ = [
    "GaussianBelief",
    "riccati_rhs",
    "integrate_riccati",
    "stationary_riccati",
    "kbf_mean_step",
    "kbf_trajectory",
    "observability_rank",
    "controllability_rank",
    "lambda_star",
]


def _check_linear(linear):
    if not isinstance(linear, LinearModelSpec):
        raise InvalidArgumentError("a LinearModelSpec is required")
    return linear


def _sym(p):
    return 0.5 * (p + p.T)


@dataclass(frozen=True, eq=False)
class GaussianBelief:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        cov = np.asarray(self.cov, dtype=float).reshape(mean.size, mean.size)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", _sym(cov))


def _info_matrix(linear):
    h = linear.h_matrix
    return h.T @ linear.obs_cov_inv @ h


def riccati_rhs(p, linear):
    """Right-hand side of the Riccati equation, symmetrized."""
    linear = _check_linear(linear)
    p = np.asarray(p, dtype=float).reshape(linear.nx, linear.nx)
    a = linear.a_matrix
    out = a @ p + p @ a.T + 2.0 * linear.diffusion - p @ _info_matrix(linear) @ p
    return _sym(out)


def integrate_riccati(p0, linear, dt, n_steps):
    """Classical RK4 integration of the Riccati equation on a uniform grid.

    Returns an ``(n_steps + 1, nx, nx)`` array including ``p0``.
    """
    linear = _check_linear(linear)
    if not dt > 0:
        raise InvalidArgumentError("dt must be positive")
    p = _sym(np.asarray(p0, dtype=float).reshape(linear.nx, linear.nx))
    out = np.empty((int(n_steps) + 1, linear.nx, linear.nx))
    out[0] = p
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(int(n_steps)):
            k1 = riccati_rhs(p, linear)
            k2 = riccati_rhs(p + 0.5 * dt * k1, linear)
            k3 = riccati_rhs(p + 0.5 * dt * k2, linear)
            k4 = riccati_rhs(p + dt * k3, linear)
            p = _sym(p + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
            if not np.all(np.isfinite(p)):
                raise DivergenceError("Riccati solution became non-finite", step=n)
            out[n + 1] = p
    return out


def stationary_riccati(linear, tol=1e-12, max_iter=200_000):
    """Stationary Riccati solution by integrating from ``P = I`` until the residual vanishes.

    Stops once ``|rhs(P)|_F <= tol (1 + |P|_F)``. The step is re-chosen every
    iteration from the spectral norms of the closed-loop matrix
    ``A - P H^T R^{-1} H``, of ``P H^T R^{-1} H`` and of ``A`` so RK4 stays
    well inside its stability region.
    Warns when ``(A, H)`` is not observable or ``(A, C)`` not controllable.
    """
    linear = _check_linear(linear)
    nx = linear.nx
    if observability_rank(linear) < nx or controllability_rank(linear) < nx:
        warnings.warn("(A, H) unobservable or (A, C) uncontrollable: P_inf may not be unique",
                      RuntimeWarning, stacklevel=2)
    info = _info_matrix(linear)
    info_norm = np.linalg.norm(info, 2)
    a_norm = np.linalg.norm(linear.a_matrix, 2)
    p = np.eye(nx)
    safety = 0.5
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(int(max_iter)):
            k1 = riccati_rhs(p, linear)
            if np.linalg.norm(k1) <= tol * (1.0 + np.linalg.norm(p)):
                return p
            scale = max(2.0 * np.linalg.norm(linear.a_matrix - p @ info, 2),
                        np.linalg.norm(p, 2) * info_norm, a_norm, 1e-3)
            h = safety / scale
            k2 = riccati_rhs(p + 0.5 * h * k1, linear)
            k3 = riccati_rhs(p + 0.5 * h * k2, linear)
            k4 = riccati_rhs(p + h * k3, linear)
            nxt = _sym(p + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
            if not np.all(np.isfinite(nxt)):
                safety *= 0.5
                continue
            p = nxt
    raise NoConvergenceError(f"Riccati integration did not reach stationarity in {max_iter} steps")


def lambda_star(p_inf, linear):
    """Smallest ``-Re(eig)`` of the closed-loop matrix ``A - P_inf H^T R^{-1} H``."""
    linear = _check_linear(linear)
    closed = linear.a_matrix - np.asarray(p_inf, dtype=float) @ _info_matrix(linear)
    return float(np.min(-np.linalg.eigvals(closed).real))


def kbf_mean_step(belief, linear, dy, dt):
    """Euler step of the Kalman-Bucy mean and covariance.

    The covariance takes an Euler step of the Riccati equation so that
    comparisons with the EnKBF share its time discretization.
    """
    linear = _check_linear(linear)
    if not dt > 0:
        raise InvalidArgumentError("dt must be positive")
    h = linear.h_matrix
    if not np.any(h):
        raise InvalidArgumentError("H must not be identically zero")
    dy = np.asarray(dy, dtype=float).reshape(-1)
    if dy.shape != (linear.ny,):
        raise InvalidArgumentError(f"dy must have length {linear.ny}")
    mean, cov = belief.mean, belief.cov
    if mean.shape != (linear.nx,):
        raise InvalidArgumentError(f"belief mean must have length {linear.nx}")
    gain = cov @ h.T @ linear.obs_cov_inv
    new_mean = mean + dt * (linear.a_matrix @ mean + linear.b_vector) - gain @ (dt * (h @ mean) - dy)
    new_cov = cov + dt * riccati_rhs(cov, linear)
    return GaussianBelief(new_mean, new_cov)


def kbf_trajectory(belief, linear, obs_increments, dt):
    """Beliefs at every grid time: ``(means (n+1, nx), covs (n+1, nx, nx))``."""
    dys = np.atleast_2d(np.asarray(obs_increments, dtype=float))
    n = 0 if dys.size == 0 else dys.shape[0]
    means = np.empty((n + 1, linear.nx))
    covs = np.empty((n + 1, linear.nx, linear.nx))
    means[0], covs[0] = belief.mean, belief.cov
    for k in range(n):
        belief = kbf_mean_step(belief, linear, dys[k], dt)
        means[k + 1], covs[k + 1] = belief.mean, belief.cov
    return means, covs


def _numerical_rank(m):
    s = np.linalg.svd(m, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > 1e-10 * s[0]))


def observability_rank(linear):
    """Rank of ``[H; H A; ...; H A^{nx-1}]``."""
    linear = _check_linear(linear)
    blocks, block = [], linear.h_matrix
    for _ in range(linear.nx):
        blocks.append(block)
        block = block @ linear.a_matrix
    return _numerical_rank(np.vstack(blocks))


def controllability_rank(linear):
    """Rank of ``[C, A C, ..., A^{nx-1} C]``."""
    linear = _check_linear(linear)
    blocks, block = [], linear.diffusion_factor
    for _ in range(linear.nx):
        blocks.append(block)
        block = linear.a_matrix @ block
    return _numerical_rank(np.hstack(blocks))
