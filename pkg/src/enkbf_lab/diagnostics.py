"""Per-step observables, bound envelopes and summary statistics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .ensemble import frobenius_norm
from .errors import InvalidArgumentError
from .model import as_model_spec, eval_drift

__all__ = [
    "DIAG_COLUMNS",
    "DiagnosticsRow",
    "BoundEnvelope",
    "diagnostics_row",
    "estimation_error",
    "eigen_extremes",
    "v_upper_bound",
    "v_lower_bound",
    "v_local_bound",
    "eigenvalue_bound_formulas",
    "bound_envelope",
    "dissipativity_estimate",
    "time_average",
    "loglog_slope",
    "write_diagnostics_csv",
    "check_row_invariants",
]

# e_sq carries the 1/2 factor: e_sq = |x_ref - mean|^2 / 2.
DIAG_COLUMNS = ("t", "e_sq", "v", "lambda_min", "lambda_max", "frob_p", "trace_p")


class DiagnosticsRow(NamedTuple):
    t: float
    e_sq: float
    v: float
    lambda_min: float
    lambda_max: float
    frob_p: float
    trace_p: float


def estimation_error(x_ref, mean):
    """Half the squared distance between the reference state and the ensemble mean."""
    x_ref = np.asarray(x_ref, dtype=float)
    mean = np.asarray(mean, dtype=float)
    if x_ref.shape != mean.shape:
        raise InvalidArgumentError("x_ref and mean must have equal length")
    e = x_ref - mean
    return 0.5 * float(e @ e) if e.ndim else 0.5 * float(e * e)


def eigen_extremes(p):
    """Smallest and largest eigenvalue of a symmetric matrix."""
    p = np.atleast_2d(np.asarray(p, dtype=float))
    if np.abs(p - p.T).max(initial=0.0) > 1e-10 * np.linalg.norm(p):
        raise InvalidArgumentError("eigen_extremes expects a symmetric matrix")
    lam = np.linalg.eigvalsh(0.5 * (p + p.T))
    return float(lam[0]), float(lam[-1])


def diagnostics_row(t, x_ref, stats):
    lo, hi = eigen_extremes(stats.cov)
    return DiagnosticsRow(
        t=float(t),
        e_sq=estimation_error(x_ref, stats.mean),
        v=stats.v,
        lambda_min=lo,
        lambda_max=hi,
        frob_p=frobenius_norm(stats.cov),
        trace_p=float(np.trace(stats.cov)),
    )


def check_row_invariants(diags, m, slack=1e-10):
    """Count recorded rows violating the spread/covariance relations.

    Checked per row: ``V/sqrt(M) <= |P|_F <= V``, ``V = tr P`` and
    ``lambda_min <= lambda_max``, each with relative slack ``slack``.
    Returns a dict of violation counts keyed by relation.
    """
    d = np.asarray(diags, dtype=float).reshape(-1, len(DIAG_COLUMNS))
    v, lo, hi, frob, tr = d[:, 2], d[:, 3], d[:, 4], d[:, 5], d[:, 6]
    tol = slack * np.maximum(v, np.finfo(float).tiny)
    return {
        "frob_lower": int(np.sum(v / math.sqrt(m) > frob + tol)),
        "frob_upper": int(np.sum(frob > v + tol)),
        "trace": int(np.sum(np.abs(v - tr) > tol)),
        "eig_order": int(np.sum(lo > hi)),
    }


def v_upper_bound(v0, l_plus, trace_d, lambda_max_r, m):
    """Uniform-in-time upper bound on the ensemble spread ``V_t``.

    Largest root of ``L+ V + tr(D) - V^2 / (2 M lambda_max(R))``, or ``v0`` if
    that is larger.
    """
    if m < 2:
        raise InvalidArgumentError("m must be at least 2")
    if not lambda_max_r > 0:
        raise InvalidArgumentError("lambda_max_r must be positive")
    a = lambda_max_r * m * l_plus
    return max(v0, a + math.sqrt(a * a + 2.0 * lambda_max_r * m * trace_d))


def v_lower_bound(v0, l_minus, lambda_min_d, lambda_min_r):
    """Uniform-in-time lower bound on ``V_t``; the counterpart of :func:`v_upper_bound`."""
    if not lambda_min_r > 0:
        raise InvalidArgumentError("lambda_min_r must be positive")
    a = lambda_min_r * l_minus
    return min(v0, a + math.sqrt(a * a + 2.0 * lambda_min_r * lambda_min_d))


def v_local_bound(v0, l_plus, trace_d, t):
    """``exp(2 L+ t) (v0 + tr(D)/L+)``: finite-horizon bound that does not grow with M."""
    if not l_plus > 0:
        raise InvalidArgumentError("l_plus must be positive")
    if t < 0:
        raise InvalidArgumentError("t must be non-negative")
    return math.exp(2.0 * l_plus * t) * (v0 + trace_d / l_plus)


def eigenvalue_bound_formulas(lam0_max, lam0_min, f_lip, m, nx, lambda_max_d, lambda_min_d, epsilon):
    """Bounds on the extreme eigenvalues of ``P_t`` for ``R = epsilon I``.

    Returns ``(lam_max_bound, lam_min_bound)``; the lower bound uses
    ``C1 = lam_max_bound / sqrt(epsilon)``.
    """
    nm = nx * m
    lam_max = max(
        lam0_max,
        epsilon * f_lip * math.sqrt(nm)
        + math.sqrt(epsilon ** 2 * f_lip ** 2 * nm + 2.0 * epsilon * lambda_max_d),
    )
    c1 = lam_max / math.sqrt(epsilon)
    lam_min = min(
        lam0_min,
        -epsilon ** 1.5 * f_lip * c1 * math.sqrt(nm)
        + math.sqrt(epsilon ** 3 * f_lip ** 2 * c1 ** 2 * nm + 2.0 * epsilon * lambda_min_d),
    )
    return lam_max, lam_min


@dataclass(frozen=True)
class BoundEnvelope:
    v_upper: float
    v_lower: float
    lam_max_bound: float
    lam_min_bound: float
    L_plus: float
    L_minus: float
    epsilon: float
    m: int
    nx: int
    lambda_max_D: float
    lambda_min_D: float


def bound_envelope(v0, lam0_max, lam0_min, l_plus, l_minus, f_lip, diffusion, epsilon, m):
    """All closed-form envelopes for a fully observed problem with ``R = epsilon I``."""
    diffusion = np.atleast_2d(np.asarray(diffusion, dtype=float))
    nx = diffusion.shape[0]
    lam_d = np.linalg.eigvalsh(diffusion)
    lam_max, lam_min = eigenvalue_bound_formulas(
        lam0_max, lam0_min, f_lip, m, nx, lam_d[-1], lam_d[0], epsilon
    )
    return BoundEnvelope(
        v_upper=v_upper_bound(v0, l_plus, float(np.trace(diffusion)), epsilon, m),
        v_lower=v_lower_bound(v0, l_minus, lam_d[0], epsilon),
        lam_max_bound=lam_max,
        lam_min_bound=lam_min,
        L_plus=l_plus,
        L_minus=l_minus,
        epsilon=epsilon,
        m=m,
        nx=nx,
        lambda_max_D=float(lam_d[-1]),
        lambda_min_D=float(lam_d[0]),
    )


def dissipativity_estimate(model, samples):
    """Sample max/min of ``<f(x) - f(y), x - y> / |x - y|^2`` over state pairs.

    These are estimates of the dissipativity constants from the given pairs
    only, not the true supremum/infimum.
    """
    model = as_model_spec(model)
    quotients = []
    for x, y in samples:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        d = x - y
        nrm = d @ d
        if nrm == 0.0:
            continue
        quotients.append((eval_drift(model, x) - eval_drift(model, y)) @ d / nrm)
    if not quotients:
        raise InvalidArgumentError("need at least one pair with x != y")
    return max(quotients), min(quotients)


def time_average(series, burn_in_fraction=0.1):
    series = np.asarray(series, dtype=float).reshape(-1)
    if not 0.0 <= burn_in_fraction < 1.0:
        raise InvalidArgumentError("burn_in_fraction must lie in [0, 1)")
    tail = series[int(math.floor(burn_in_fraction * len(series))):]
    if tail.size == 0:
        raise InvalidArgumentError("series is empty after burn-in")
    return float(tail.mean())


def loglog_slope(xs, ys):
    """Least-squares line through ``(log10 x, log10 y)``; returns ``(slope, intercept)``."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.size < 2:
        raise InvalidArgumentError("need at least two (x, y) points")
    if np.any(xs <= 0) or np.any(ys <= 0) or not np.all(np.isfinite(xs * ys)):
        raise InvalidArgumentError("log-log fit needs finite positive values")
    lx, ly = np.log10(xs), np.log10(ys)
    if np.ptp(lx) == 0:
        raise InvalidArgumentError("x values must not all coincide")
    slope, intercept = np.polyfit(lx, ly, 1)
    return float(slope), float(intercept)


def write_diagnostics_csv(diags, path):
    """Write rows with the fixed column order at full double precision."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(DIAG_COLUMNS)
        for row in np.asarray(diags, dtype=float).reshape(-1, len(DIAG_COLUMNS)):
            w.writerow([format(float(v), ".17g") for v in row])
    return path
