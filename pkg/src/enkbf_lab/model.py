"""Filtering problems: drift, diffusion factor, forward map and noise covariance.

A problem is

    dX = f(X) dt + sqrt(2) C dW,        dY = h(X) dt + R^{1/2} dB,

with constant diffusion tensor ``D = C C^T``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numba
import numpy as np

from .errors import InvalidArgumentError

__all__ = [
    "ModelSpec",
    "LinearModelSpec",
    "as_model_spec",
    "eval_drift",
    "eval_drift_batch",
    "eval_forward",
    "eval_forward_batch",
    "diffusion_tensor",
    "lorenz63_model",
    "linear_model",
    "LORENZ_SIGMA",
    "LORENZ_RHO",
    "LORENZ_BETA",
]

LORENZ_SIGMA = 10.0
LORENZ_RHO = 28.0
LORENZ_BETA = 8.0 / 3.0


def _check_cov(r, name="obs_cov"):
    r = np.atleast_2d(np.asarray(r, dtype=float))
    if r.shape[0] != r.shape[1]:
        raise InvalidArgumentError(f"{name} must be square, got shape {r.shape}")
    if not np.all(np.isfinite(r)):
        raise InvalidArgumentError(f"{name} has non-finite entries")
    if not np.allclose(r, r.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(r).max())):
        raise InvalidArgumentError(f"{name} must be symmetric")
    r = 0.5 * (r + r.T)
    if np.linalg.eigvalsh(r).min() <= 0.0:
        raise InvalidArgumentError(f"{name} must be strictly positive definite")
    return r


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """A continuous-time filtering problem.

    ``drift`` and ``forward_map`` take a state vector of length ``nx``. When
    ``vectorized`` is true they also accept an ``(nx, M)`` array of particles
    (one particle per column) and map it column-wise.

    ``forward_matrix`` is set when the forward map is linear, ``h(x) = H x``;
    it lets batch evaluation skip the Python callable. ``drift_kernel`` is an
    optional numba-compiled ``kernel(x, out)`` writing ``f(x)`` into ``out``;
    models that provide it get the compiled filter loop.
    """

    nx: int
    ny: int
    nw: int
    drift: Callable[[np.ndarray], np.ndarray]
    diffusion_factor: np.ndarray
    forward_map: Callable[[np.ndarray], np.ndarray]
    obs_cov: np.ndarray
    name: str = "custom"
    vectorized: bool = False
    forward_matrix: Optional[np.ndarray] = None
    drift_kernel: Optional[Callable] = field(default=None, repr=False)

    def __post_init__(self):
        for attr in ("nx", "ny", "nw"):
            if int(getattr(self, attr)) < 1:
                raise InvalidArgumentError(f"{attr} must be a positive integer")
        c = np.atleast_2d(np.asarray(self.diffusion_factor, dtype=float))
        if c.shape != (self.nx, self.nw):
            raise InvalidArgumentError(
                f"diffusion_factor must be {self.nx}x{self.nw}, got {c.shape}"
            )
        r = _check_cov(self.obs_cov)
        if r.shape != (self.ny, self.ny):
            raise InvalidArgumentError(f"obs_cov must be {self.ny}x{self.ny}")
        c.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "diffusion_factor", c)
        object.__setattr__(self, "obs_cov", r)
        if self.forward_matrix is not None:
            h = np.atleast_2d(np.asarray(self.forward_matrix, dtype=float))
            if h.shape != (self.ny, self.nx):
                raise InvalidArgumentError("forward_matrix must be ny x nx")
            h.setflags(write=False)
            object.__setattr__(self, "forward_matrix", h)

    @property
    def obs_cov_inv(self):
        inv = self.__dict__.get("_obs_cov_inv")
        if inv is None:
            inv = np.linalg.inv(self.obs_cov)
            inv = 0.5 * (inv + inv.T)
            inv.setflags(write=False)
            self.__dict__["_obs_cov_inv"] = inv
        return inv

    @property
    def observes_identity(self):
        """True when ``h(x) = x``."""
        h = self.forward_matrix
        return h is not None and h.shape[0] == h.shape[1] and np.array_equal(h, np.eye(self.nx))

    def with_obs_cov(self, obs_cov):
        """Copy of this model with a different observation noise covariance."""
        return ModelSpec(
            nx=self.nx,
            ny=self.ny,
            nw=self.nw,
            drift=self.drift,
            diffusion_factor=self.diffusion_factor,
            forward_map=self.forward_map,
            obs_cov=obs_cov,
            name=self.name,
            vectorized=self.vectorized,
            forward_matrix=self.forward_matrix,
            drift_kernel=self.drift_kernel,
        )


@dataclass(frozen=True, eq=False)
class LinearModelSpec:
    """Linear-Gaussian problem ``f(x) = A x + b``, ``h(x) = H x``."""

    a_matrix: np.ndarray
    b_vector: np.ndarray
    h_matrix: np.ndarray
    diffusion_factor: np.ndarray
    obs_cov: np.ndarray

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a_matrix, dtype=float))
        nx = a.shape[0]
        if a.shape != (nx, nx):
            raise InvalidArgumentError(f"A must be square, got {a.shape}")
        b = np.asarray(self.b_vector, dtype=float).reshape(-1)
        if b.shape != (nx,):
            raise InvalidArgumentError(f"b must have length {nx}")
        h = np.atleast_2d(np.asarray(self.h_matrix, dtype=float))
        if h.shape[1] != nx:
            raise InvalidArgumentError(f"H must have {nx} columns, got {h.shape}")
        c = np.asarray(self.diffusion_factor, dtype=float)
        c = c.reshape(nx, -1) if c.ndim < 2 else c
        if c.shape[0] != nx:
            raise InvalidArgumentError(f"C must have {nx} rows, got {c.shape}")
        r = _check_cov(self.obs_cov)
        if r.shape[0] != h.shape[0]:
            raise InvalidArgumentError("R must be ny x ny with ny = rows of H")
        for name, arr in (("a_matrix", a), ("b_vector", b), ("h_matrix", h),
                          ("diffusion_factor", c), ("obs_cov", r)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def nx(self):
        return self.a_matrix.shape[0]

    @property
    def ny(self):
        return self.h_matrix.shape[0]

    @property
    def nw(self):
        return self.diffusion_factor.shape[1]

    @property
    def diffusion(self):
        return _symmetrized_outer(self.diffusion_factor)

    @property
    def obs_cov_inv(self):
        return self.to_model().obs_cov_inv

    def to_model(self):
        """The equivalent :class:`ModelSpec` (cached)."""
        spec = self.__dict__.get("_spec")
        if spec is None:
            a, b, h = self.a_matrix, self.b_vector, self.h_matrix

            def drift(x):
                x = np.asarray(x, dtype=float)
                return a @ x + (b if x.ndim == 1 else b[:, None])

            def forward(x):
                return h @ np.asarray(x, dtype=float)

            spec = ModelSpec(
                nx=self.nx,
                ny=self.ny,
                nw=self.nw,
                drift=drift,
                diffusion_factor=self.diffusion_factor,
                forward_map=forward,
                obs_cov=self.obs_cov,
                name="linear",
                vectorized=True,
                forward_matrix=h,
            )
            self.__dict__["_spec"] = spec
        return spec

    def with_obs_cov(self, obs_cov):
        return LinearModelSpec(self.a_matrix, self.b_vector, self.h_matrix,
                               self.diffusion_factor, obs_cov)


def linear_model(a, b=None, h=None, c=None, r=None):
    """Build a :class:`LinearModelSpec`; ``b`` defaults to 0, ``h``, ``c``, ``r`` to identities."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    nx = a.shape[0]
    b = np.zeros(nx) if b is None else b
    h = np.eye(nx) if h is None else np.atleast_2d(np.asarray(h, dtype=float))
    c = np.eye(nx) if c is None else c
    r = np.eye(h.shape[0]) if r is None else r
    return LinearModelSpec(a, b, h, c, r)


def as_model_spec(model):
    """Accept either model type and return a :class:`ModelSpec`."""
    if isinstance(model, LinearModelSpec):
        return model.to_model()
    if isinstance(model, ModelSpec):
        return model
    raise InvalidArgumentError(f"expected a model specification, got {type(model).__name__}")


def _check_state(model, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (model.nx,):
        raise InvalidArgumentError(f"state must have length {model.nx}, got shape {x.shape}")
    return x


def eval_drift(model, x):
    """Return ``f(x)`` for a single state vector."""
    model = as_model_spec(model)
    x = _check_state(model, x)
    return np.asarray(model.drift(x), dtype=float).reshape(model.nx)


def eval_forward(model, x):
    """Return ``h(x)`` for a single state vector."""
    model = as_model_spec(model)
    x = _check_state(model, x)
    if model.forward_matrix is not None:
        return model.forward_matrix @ x
    return np.asarray(model.forward_map(x), dtype=float).reshape(model.ny)


def eval_drift_batch(model, particles):
    """Apply ``f`` to each column of an ``(nx, M)`` array."""
    model = as_model_spec(model)
    if model.vectorized:
        return np.asarray(model.drift(particles), dtype=float)
    out = np.empty_like(particles, dtype=float)
    for i in range(particles.shape[1]):
        out[:, i] = model.drift(particles[:, i])
    return out


def eval_forward_batch(model, particles):
    """Apply ``h`` to each column of an ``(nx, M)`` array, giving ``(ny, M)``."""
    model = as_model_spec(model)
    if model.forward_matrix is not None:
        return model.forward_matrix @ particles
    if model.vectorized:
        return np.asarray(model.forward_map(particles), dtype=float)
    out = np.empty((model.ny, particles.shape[1]))
    for i in range(particles.shape[1]):
        out[:, i] = model.forward_map(particles[:, i])
    return out


def _symmetrized_outer(c):
    d = c @ c.T
    return 0.5 * (d + d.T)


def diffusion_tensor(model):
    """Diffusion tensor ``D = C C^T``, symmetrized after the product."""
    if isinstance(model, LinearModelSpec):
        return model.diffusion
    return _symmetrized_outer(as_model_spec(model).diffusion_factor)


def _lorenz63_drift(x):
    # Component order is fixed; works on (3,) and (3, M) inputs.
    x = np.asarray(x, dtype=float)
    return np.array([
        LORENZ_SIGMA * (x[1] - x[0]),
        (LORENZ_RHO - x[2]) * x[0] - x[1],
        x[0] * x[1] - LORENZ_BETA * x[2],
    ])


@numba.njit(cache=True)
def lorenz63_kernel(x, out):
    out[0] = LORENZ_SIGMA * (x[1] - x[0])
    out[1] = (LORENZ_RHO - x[2]) * x[0] - x[1]
    out[2] = x[0] * x[1] - LORENZ_BETA * x[2]


def _identity(x):
    return np.array(x, dtype=float)


def lorenz63_model(epsilon):
    """Stochastically perturbed, fully observed Lorenz-63 with ``C = I`` and ``R = epsilon I``."""
    epsilon = float(epsilon)
    if not (epsilon > 0.0 and np.isfinite(epsilon)):
        raise InvalidArgumentError(f"epsilon must be positive, got {epsilon}")
    return ModelSpec(
        nx=3,
        ny=3,
        nw=3,
        drift=_lorenz63_drift,
        diffusion_factor=np.eye(3),
        forward_map=_identity,
        obs_cov=epsilon * np.eye(3),
        name="lorenz63",
        vectorized=True,
        forward_matrix=np.eye(3),
        drift_kernel=lorenz63_kernel,
    )
