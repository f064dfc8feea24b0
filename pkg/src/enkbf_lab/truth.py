"""Reference trajectories and observation increments for twin experiments."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numba
import numpy as np

from .ensemble import frobenius_norm
from .errors import DivergenceError, InvalidArgumentError, NotPSDError
from .model import as_model_spec, eval_drift, eval_forward_batch
from .seeding import OBSERVATION_STREAM, SIGNAL_STREAM, substream

__all__ = ["TruthPath", "simulate_truth", "sqrt_psd", "read_truth_csv"]


@dataclass(frozen=True, eq=False)
class TruthPath:
    """Reference states on ``t_n = n dt`` and increments ``dY_n`` over ``[t_n, t_{n+1}]``."""

    dt: float
    states: np.ndarray
    obs_increments: np.ndarray
    seed: int

    @property
    def n_steps(self):
        return self.obs_increments.shape[0]

    @property
    def times(self):
        return self.dt * np.arange(self.states.shape[0])

    def to_csv(self, path):
        nx = self.states.shape[1]
        ny = self.obs_increments.shape[1]
        header = ["t"] + [f"x_{k + 1}" for k in range(nx)] + [f"dy_{k + 1}" for k in range(ny)]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for n, t in enumerate(self.times):
                row = [_fmt(t)] + [_fmt(v) for v in self.states[n]]
                if n < self.n_steps:
                    row += [_fmt(v) for v in self.obs_increments[n]]
                else:
                    row += [""] * ny
                w.writerow(row)
        return path


def _fmt(v):
    return format(float(v), ".17g")


def read_truth_csv(path, seed=0):
    """Load a path written by :meth:`TruthPath.to_csv`."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    nx = sum(1 for h in header if h.startswith("x_"))
    ny = sum(1 for h in header if h.startswith("dy_"))
    t = np.array([float(r[0]) for r in body])
    states = np.array([[float(v) for v in r[1:1 + nx]] for r in body])
    dys = np.array([[float(v) for v in r[1 + nx:1 + nx + ny]] for r in body[:-1]]).reshape(-1, ny)
    dt = float(t[1] - t[0]) if len(t) > 1 else 0.0
    return TruthPath(dt=dt, states=states, obs_increments=dys, seed=seed)


def sqrt_psd(m):
    """Symmetric PSD square root via eigendecomposition.

    Eigenvalues down to ``-1e-12 * ||m||`` are treated as round-off and clipped
    to zero; anything more negative raises :class:`NotPSDError`.
    """
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.shape[0] != m.shape[1]:
        raise InvalidArgumentError("matrix must be square")
    m = 0.5 * (m + m.T)
    lam, u = np.linalg.eigh(m)
    scale = frobenius_norm(m)
    if lam.size and lam.min() < -1e-12 * scale:
        raise NotPSDError(f"matrix has eigenvalue {lam.min():.3e} < 0")
    s = (u * np.sqrt(np.clip(lam, 0.0, None))) @ u.T
    return 0.5 * (s + s.T)


@numba.njit(cache=True)
def _euler_maruyama_kernel(drift, x0, dt, noise, states):
    # noise[n] already holds sqrt(2) C dW_n; returns the first bad step or -1
    nx = x0.shape[0]
    f = np.empty(nx)
    states[0] = x0
    for n in range(noise.shape[0]):
        drift(states[n], f)
        for k in range(nx):
            v = states[n, k] + dt * f[k] + noise[n, k]
            if not np.isfinite(v):
                return n
            states[n + 1, k] = v
    return -1


def simulate_truth(model, x0, dt, n_steps, seed):
    """Euler-Maruyama reference path and observation increments.

    ``X_{n+1} = X_n + dt f(X_n) + sqrt(2) C dW_n`` and
    ``dY_n = dt h(X_n) + R^{1/2} dB_n`` with ``dW_n ~ N(0, dt I)`` drawn from
    sub-stream 0 of ``seed`` and ``dB_n ~ N(0, dt I)`` from sub-stream 1, so
    the signal path does not depend on ``R``.
    """
    model = as_model_spec(model)
    dt = float(dt)
    n_steps = int(n_steps)
    if not dt > 0.0:
        raise InvalidArgumentError(f"dt must be positive, got {dt}")
    if n_steps < 0:
        raise InvalidArgumentError("n_steps must be non-negative")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape != (model.nx,):
        raise InvalidArgumentError(f"x0 must have length {model.nx}")
    if not np.all(np.isfinite(x0)):
        raise InvalidArgumentError("x0 must be finite")

    sqdt = np.sqrt(dt)
    dw = substream(seed, SIGNAL_STREAM).standard_normal((n_steps, model.nw)) * sqdt
    db = substream(seed, OBSERVATION_STREAM).standard_normal((n_steps, model.ny)) * sqdt
    noise = dw @ (np.sqrt(2.0) * model.diffusion_factor).T

    states = np.empty((n_steps + 1, model.nx))
    if model.drift_kernel is not None:
        bad = _euler_maruyama_kernel(model.drift_kernel, x0, dt, noise, states)
        if bad >= 0:
            raise DivergenceError("non-finite reference state", step=bad)
    else:
        states[0] = x0
        # blow-up is detected explicitly below
        with np.errstate(over="ignore", invalid="ignore"):
            for n in range(n_steps):
                nxt = states[n] + dt * eval_drift(model, states[n]) + noise[n]
                if not np.all(np.isfinite(nxt)):
                    raise DivergenceError("non-finite reference state", step=n)
                states[n + 1] = nxt

    hx = eval_forward_batch(model, states[:-1].T).T if n_steps else np.empty((0, model.ny))
    dy = dt * hx + db @ sqrt_psd(model.obs_cov).T
    states.setflags(write=False)
    dy.setflags(write=False)
    return TruthPath(dt=dt, states=states, obs_increments=dy, seed=int(seed))
