"""Property-based checks of the algebraic invariants."""

import math

import numpy as np
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from enkbf_lab.config import ExperimentConfig, format_config, parse_config_text
from enkbf_lab.diagnostics import loglog_slope, v_lower_bound, v_upper_bound
from enkbf_lab.enkbf import enkbf_step_general, mean_increment
from enkbf_lab.ensemble import empirical_stats, frobenius_norm, pseudo_inverse
from enkbf_lab.model import diffusion_tensor, linear_model
from enkbf_lab.seeding import mix_seed
from enkbf_lab.truth import sqrt_psd

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
# entries rounded to 1e-6 keep products of three matrices inside double range
moderate = st.floats(-10, 10).map(lambda v: round(v, 6))


@st.composite
def particles(draw, max_nx=4, max_m=10):
    nx = draw(st.integers(1, max_nx))
    m = draw(st.integers(2, max_m))
    return draw(arrays(np.float64, (nx, m), elements=finite))


@st.composite
def small_linear(draw, nx):
    a = draw(arrays(np.float64, (nx, nx), elements=st.floats(-2, 2)))
    c = draw(arrays(np.float64, (nx, nx), elements=st.floats(-2, 2)))
    ny = draw(st.integers(1, nx))
    h = draw(arrays(np.float64, (ny, nx), elements=st.floats(-2, 2)))
    r = np.diag(draw(arrays(np.float64, ny, elements=st.floats(0.1, 5.0))))
    return linear_model(a, h=h, c=c, r=r)


@settings(max_examples=200, deadline=None)
@given(particles())
def test_frobenius_sandwich_and_trace(x):
    s = empirical_stats(x, linear_model(np.eye(x.shape[0])))
    f = frobenius_norm(s.cov)
    slack = 1e-10 * s.v
    assert s.v / math.sqrt(x.shape[1]) <= f + slack
    assert f <= s.v + slack
    assert abs(s.v - np.trace(s.cov)) <= 1e-12 * max(s.v, 1e-300)
    assert np.array_equal(s.cov, s.cov.T)


@settings(max_examples=100, deadline=None)
@given(particles(), arrays(np.float64, 4, elements=finite))
def test_shift_invariance(x, shift):
    shift = shift[: x.shape[0]]
    model = linear_model(np.eye(x.shape[0]))
    a = empirical_stats(x, model)
    b = empirical_stats(x + shift[:, None], model)
    scale = 1e-10 * max(a.v, 1.0) * (1 + np.abs(shift).max() ** 2 / max(a.v, 1.0))
    assert np.abs(a.cov - b.cov).max() <= scale
    np.testing.assert_allclose(b.mean, a.mean + shift, rtol=1e-9, atol=1e-9)


@settings(max_examples=150, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.data())
def test_pseudo_inverse_penrose(n, k, data):
    f = data.draw(arrays(np.float64, (n, k), elements=moderate))
    p = f @ f.T
    lam = np.linalg.eigvalsh(p)
    kept = lam[lam > 1e-12 * lam.max(initial=0.0)]
    # P P^+ P loses about cond(P) * machine epsilon on the retained spectrum
    assume(kept.size == 0 or kept.max() / kept.min() < 1e6)
    pp = pseudo_inverse(p)
    norm = np.linalg.norm(p)
    assert np.linalg.norm(p @ pp @ p - p) <= 1e-8 * max(norm, 1e-300) + 1e-300
    assert np.array_equal(pp, pp.T)


@settings(max_examples=150, deadline=None)
@given(st.integers(1, 5), st.data())
def test_sqrt_psd_squares_back(n, data):
    f = data.draw(arrays(np.float64, (n, n), elements=st.floats(-10, 10)))
    m = f @ f.T
    s = sqrt_psd(m)
    assert np.linalg.norm(s @ s - m) <= 1e-10 * max(np.linalg.norm(m), 1e-300) + 1e-12


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 4), st.data())
def test_diffusion_symmetric_psd(n, data):
    c = data.draw(arrays(np.float64, (n, data.draw(st.integers(1, 4))), elements=st.floats(-5, 5)))
    d = diffusion_tensor(linear_model(np.zeros((n, n)), c=c))
    assert np.array_equal(d, d.T)
    assert np.linalg.eigvalsh(d).min() >= -1e-12 * max(1.0, np.abs(d).max())


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 3), st.data())
def test_general_step_mean_consistency(nx, data):
    model = data.draw(small_linear(nx))
    m = data.draw(st.integers(2, 8))
    x = data.draw(arrays(np.float64, (nx, m), elements=st.floats(-5, 5)))
    dy = data.draw(arrays(np.float64, model.ny, elements=st.floats(-0.1, 0.1)))
    dt = 1e-3
    s = empirical_stats(x, model)
    if s.v < 1e-6:
        return
    lam = np.linalg.eigvalsh(s.cov)
    if lam[0] > 1e-12 * lam[-1] and lam[-1] / lam[0] > 1e6:
        return  # ill-conditioned P: the spread term cancels only to cond(P) * eps
    out = enkbf_step_general(x, model, dy, dt).particles.mean(axis=1)
    expect = x.mean(axis=1) + mean_increment(x, model, dy, dt)
    np.testing.assert_allclose(out, expect, rtol=1e-10, atol=1e-10 * (1 + np.abs(x).max()))


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 8), st.randoms(use_true_random=False))
def test_general_step_permutation_equivariant(m, rnd):
    model = linear_model([[0.0, 1.0], [-1.0, -0.2]], c=np.eye(2), h=[[1.0, 0.0]])
    x = np.random.default_rng(rnd.randint(0, 2**32)).normal(size=(2, m))
    perm = np.array(rnd.sample(range(m), m))
    a = enkbf_step_general(x, model, np.array([0.01]), 0.01).particles
    b = enkbf_step_general(x[:, perm], model, np.array([0.01]), 0.01).particles
    np.testing.assert_allclose(b, a[:, perm], rtol=1e-12, atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 10), st.floats(-5, 0), st.floats(0.01, 5), st.floats(0.01, 5), st.integers(2, 50))
def test_spread_envelopes_ordered(v0, l_minus, lam_d, lam_r, m):
    lo = v_lower_bound(v0, l_minus, lam_d, lam_r)
    hi = v_upper_bound(v0, abs(l_minus), lam_d, lam_r, m)
    assert lo <= hi + 1e-12


@settings(max_examples=100, deadline=None)
@given(st.floats(-3, 3), st.floats(-5, 5))
def test_loglog_recovers_power(alpha, log_c):
    xs = np.logspace(-5, -1, 5)
    ys = 10 ** log_c * xs ** alpha
    slope, intercept = loglog_slope(xs, ys)
    assert abs(slope - alpha) <= 1e-8
    assert abs(intercept - log_c) <= 1e-7


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.floats(1e-8, 10), min_size=1, max_size=5),
    st.integers(2, 64),
    st.floats(1e-6, 1.0),
    st.integers(1, 10**6),
    st.integers(0, 2**63),
    st.one_of(st.none(), st.integers(1, 100)),
)
def test_config_echo_round_trip(eps, m, dt, n_steps, seed, record_every):
    cfg = ExperimentConfig(model="lorenz63", epsilon_list=eps, m=m, dt=dt, n_steps=n_steps, master_seed=seed,
                           record_every=record_every)
    assert parse_config_text(format_config(cfg)) == cfg


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**64 - 1))
def test_cell_seeds_distinct(master):
    seeds = {mix_seed(master, i) for i in range(64)}
    assert len(seeds) == 64
    assert all(0 <= s < 2**64 for s in seeds)
