"""Compiled inner loop for the fully observed, regularized EnKBF scheme.

Mirrors :func:`enkbf_lab.enkbf.enkbf_step_fully_observed` plus the per-record
diagnostics of :func:`enkbf_lab.diagnostics.diagnostics_row`; the two paths
agree to round-off (see tests/test_enkbf.py).
"""

import numba
import numpy as np

STATUS_OK = 0
STATUS_DIVERGED = 1


@numba.njit(cache=True)
def fully_observed_loop(drift, x, ref, dys, dt, eps, diff, rel_tol, record_every,
                        v_max, diags, means):
    """Advance particles ``x`` (nx, M) in place over all increments ``dys``.

    Records ``(t, e_sq, v, lambda_min, lambda_max, frob_p, trace_p)`` into
    ``diags`` and the ensemble mean into ``means`` every ``record_every``
    steps. Returns ``(status, step, n_records)``.
    """
    nx, m = x.shape
    n_steps = dys.shape[0]
    c = eps / dt
    mean = np.empty(nx)
    dev = np.empty((nx, m))
    p = np.empty((nx, nx))
    f = np.empty(nx)
    w = np.empty(nx)
    dpp = np.empty((nx, nx))
    gain = np.empty((nx, nx))
    pinv = np.empty((nx, nx))
    inv = np.empty(nx)
    g = np.empty(nx)
    rec = 0
    for n in range(n_steps + 1):
        for k in range(nx):
            s = 0.0
            for i in range(m):
                s += x[k, i]
            mean[k] = s / m
        for k in range(nx):
            for i in range(m):
                dev[k, i] = x[k, i] - mean[k]
        v = 0.0
        for k in range(nx):
            for l in range(k, nx):
                s = 0.0
                for i in range(m):
                    s += dev[k, i] * dev[l, i]
                p[k, l] = s / (m - 1)
                p[l, k] = p[k, l]
            s = 0.0
            for i in range(m):
                s += dev[k, i] * dev[k, i]
            v += s
        v /= m - 1
        if not np.isfinite(v) or v > v_max:
            return STATUS_DIVERGED, n, rec
        lam, u = np.linalg.eigh(p)
        if n % record_every == 0:
            e = 0.0
            fr = 0.0
            tr = 0.0
            for k in range(nx):
                d = ref[n, k] - mean[k]
                e += d * d
                tr += p[k, k]
                for l in range(nx):
                    fr += p[k, l] * p[k, l]
                means[rec, k] = mean[k]
            diags[rec, 0] = n * dt
            diags[rec, 1] = 0.5 * e
            diags[rec, 2] = v
            diags[rec, 3] = lam[0]
            diags[rec, 4] = lam[nx - 1]
            diags[rec, 5] = np.sqrt(fr)
            diags[rec, 6] = tr
            rec += 1
        if n == n_steps:
            break

        lmax = lam[nx - 1]
        for j in range(nx):
            inv[j] = 1.0 / lam[j] if lam[j] > rel_tol * lmax else 0.0
            g[j] = lam[j] / (lam[j] + c)
        for k in range(nx):
            for l in range(nx):
                s = 0.0
                t = 0.0
                for j in range(nx):
                    s += u[k, j] * inv[j] * u[l, j]
                    t += u[k, j] * g[j] * u[l, j]
                pinv[k, l] = s
                gain[k, l] = t
        for k in range(nx):
            for l in range(nx):
                s = 0.0
                for j in range(nx):
                    s += diff[k, j] * pinv[j, l]
                dpp[k, l] = s

        for i in range(m):
            drift(x[:, i], f)
            for k in range(nx):
                w[k] = x[k, i] + mean[k] - 2.0 * dys[n, k] / dt
            for k in range(nx):
                a = 0.0
                b = 0.0
                for l in range(nx):
                    a += dpp[k, l] * dev[l, i]
                    b += gain[k, l] * w[l]
                x[k, i] = x[k, i] + dt * f[k] + dt * a - 0.5 * b
    return STATUS_OK, n_steps, rec
