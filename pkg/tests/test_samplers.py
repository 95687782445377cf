import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import special

from highpeaks.kernels import bargmann_fock, custom_spectral, random_plane_wave
from highpeaks.rng import derive_seed, stream
from highpeaks.samplers import (
    Box,
    GridSpec,
    SamplerError,
    bf_truncation_degree,
    rpw_tail_bound,
    rpw_truncation_order,
    sample_bf_series,
    sample_block_independent,
    sample_rpw_bessel,
    sample_stationary_grid,
)

BOX4 = Box((-2.0, -2.0), (2.0, 2.0))


def _values(sampler, pts, n):
    return np.array([sampler(s).evaluator.value(pts) for s in range(n)])


def _cov_z(a, b, target):
    """(empirical mean of a*b - target) / SE for zero-mean a, b."""
    prod = a * b
    return (prod.mean() - target) / (prod.std(ddof=1) / math.sqrt(len(prod)))


# --- Bargmann-Fock series ------------------------------------------------------

def test_bf_covariance_and_variance():
    pts = np.array([[0.0, 0.0], [0.6, 0.8], [-1.5, 1.0], [1.2, -1.7]])
    V = _values(lambda s: sample_bf_series(s, BOX4), pts, 3000)
    assert abs(_cov_z(V[:, 0], V[:, 1], math.exp(-0.5))) < 3
    d = pts[2] - pts[3]
    assert abs(_cov_z(V[:, 2], V[:, 3], math.exp(-0.5 * d @ d))) < 3
    for j in range(4):
        assert abs(_cov_z(V[:, j], V[:, j], 1.0)) < 3


def test_bf_deterministic_and_seed_sensitive():
    pts = np.random.default_rng(0).uniform(-2, 2, (20, 2))
    a = sample_bf_series(11, BOX4).evaluator.value(pts)
    b = sample_bf_series(11, BOX4).evaluator.value(pts)
    c = sample_bf_series(12, BOX4).evaluator.value(pts)
    assert np.array_equal(a, b)
    assert not np.allclose(a, c)


def test_bf_truncation_bound():
    f = sample_bf_series(0, Box((-20.0, -20.0), (20.0, 20.0)))
    assert f.truncation_error_bound <= 1e-10
    assert f.truncation == 536
    with pytest.raises(SamplerError, match="N="):
        bf_truncation_degree((200.0, 200.0), 1e-10, max_degree=1000)


def test_bf_derivatives_match_finite_differences():
    f = sample_bf_series(5, BOX4)
    ev = f.evaluator
    X = np.random.default_rng(1).uniform(-1.8, 1.8, (50, 2))
    h = 1e-5
    for i, a in enumerate([(1, 0), (0, 1)]):
        e = np.zeros(2)
        e[i] = h
        fd = (ev.value(X + e) - ev.value(X - e)) / (2 * h)
        np.testing.assert_allclose(ev.derivatives(X, [a])[a], fd, rtol=1e-6, atol=1e-8)
    g = ev.gradient
    Hfd = np.stack([(g(X + [h, 0]) - g(X - [h, 0])) / (2 * h), (g(X + [0, h]) - g(X - [0, h])) / (2 * h)], axis=1)
    np.testing.assert_allclose(ev.hessian(X), Hfd, rtol=1e-6, atol=1e-7)


def test_bf_grid_matches_pointwise():
    f = sample_bf_series(3, BOX4)
    axes = (np.linspace(-2, 2, 9), np.linspace(-1, 1, 5))
    G = f.evaluator.grid(axes, [(0, 0), (1, 1)])
    X, Y = np.meshgrid(*axes, indexing="ij")
    P = np.column_stack([X.ravel(), Y.ravel()])
    D = f.evaluator.derivatives(P, [(0, 0), (1, 1)])
    for a in G:
        np.testing.assert_allclose(G[a].ravel(), D[a], atol=1e-11)


def test_isotropy_bf_and_rpw():
    # Cov at a lag and at the same lag rotated by 60 degrees
    lag = np.array([0.9, 0.0])
    c, s = math.cos(math.pi / 3), math.sin(math.pi / 3)
    rot = np.array([[c, -s], [s, c]]) @ lag
    pts = np.array([[0.0, 0.0], lag, rot])
    for sampler, target in [
        (lambda sd: sample_bf_series(sd, BOX4), math.exp(-0.5 * 0.81)),
        (lambda sd: sample_rpw_bessel(sd, 3.0), special.j0(0.9)),
    ]:
        V = _values(sampler, pts, 2000)
        p1, p2 = V[:, 0] * V[:, 1], V[:, 0] * V[:, 2]
        diff = p1 - p2
        assert abs(diff.mean()) / (diff.std(ddof=1) / math.sqrt(len(diff))) < 3
        assert abs(_cov_z(V[:, 0], V[:, 1], target)) < 3


# --- random plane wave ------------------------------------------------------------

def test_rpw_covariance_examples():
    z0 = 2.404825557695773
    pts = np.array([[0.0, 0.0], [z0, 0.0], [0.0, 1.0], [-1.0, 0.5]])
    V = _values(lambda s: sample_rpw_bessel(s, 3.0), pts, 3000)
    assert abs(_cov_z(V[:, 0], V[:, 1], 0.0)) < 3
    assert abs(_cov_z(V[:, 0], V[:, 2], special.j0(1.0))) < 3
    assert abs(_cov_z(V[:, 0], V[:, 0], 1.0)) < 3


def test_rpw_origin_value_is_a0():
    f = sample_rpw_bessel(9, 4.0)
    a0 = stream(9).standard_normal((2, f.truncation + 1))[0, 0]
    assert f.evaluator.value(np.zeros((1, 2)))[0] == pytest.approx(a0, abs=1e-15)


def test_rpw_helmholtz_and_truncation():
    f = sample_rpw_bessel(2, 6.0)
    assert f.truncation_error_bound <= 1e-10
    X = np.random.default_rng(3).uniform(-4, 4, (30, 2))
    D = f.evaluator.derivatives(X, [(0, 0), (2, 0), (0, 2)])
    np.testing.assert_allclose(D[(2, 0)] + D[(0, 2)] + D[(0, 0)], 0.0, atol=1e-10)
    # the tail bound decreases and the chosen order meets it
    N = rpw_truncation_order(6.0, 1e-10)
    assert rpw_tail_bound(6.0, N) <= 1e-10 < rpw_tail_bound(6.0, N - 1)


def test_rpw_derivatives_match_finite_differences():
    ev = sample_rpw_bessel(4, 3.0).evaluator
    X = np.random.default_rng(8).uniform(-2, 2, (50, 2))
    h = 1e-5
    fd = np.column_stack([(ev.value(X + [h, 0]) - ev.value(X - [h, 0])) / (2 * h),
                          (ev.value(X + [0, h]) - ev.value(X - [0, h])) / (2 * h)])
    np.testing.assert_allclose(ev.gradient(X), fd, rtol=1e-6, atol=1e-8)


# --- circulant grid ------------------------------------------------------------------

def test_grid_lag_one_covariance(bf):
    h = 0.2
    spec = GridSpec((0.0, 0.0), h, (128, 128))
    V = np.array([sample_stationary_grid(bf, spec, s).grid.values[64, 64:66] for s in range(3000)])
    assert abs(_cov_z(V[:, 0], V[:, 1], math.exp(-0.5 * h * h))) < 3
    assert abs(_cov_z(V[:, 0], V[:, 0], 1.0)) < 3


def test_grid_deterministic(bf):
    spec = GridSpec((0.0, 0.0), 0.25, (40, 30))
    a = sample_stationary_grid(bf, spec, 4).grid.values
    b = sample_stationary_grid(bf, spec, 4).grid.values
    assert a.shape == (40, 30)
    assert np.array_equal(a, b)


def test_grid_white_noise_limit():
    # a kernel far narrower than the spacing: grid values are nearly independent
    ell = 0.05
    k = custom_spectral(2, {(0, 0): lambda x: np.exp(-0.5 * np.sum(x * x, axis=-1) / ell**2)})
    spec = GridSpec((0.0, 0.0), 1.0, (64, 64))
    V = np.array([sample_stationary_grid(k, spec, s).grid.values for s in range(50)])
    C = np.corrcoef(V.reshape(50, -1)[:, :40].T)
    off = C[~np.eye(40, dtype=bool)]
    assert np.abs(off).max() < 0.6
    assert abs(off.mean()) < 0.05


def test_grid_embedding_failure_is_explicit(rpw):
    # J_0 decays too slowly for the default embedding tolerance
    with pytest.raises(SamplerError):
        sample_stationary_grid(rpw, GridSpec((0.0, 0.0), 0.5, (16, 16)), 0, embed_tol=1e-14)


# --- block-independent field -----------------------------------------------------------

def test_block_single_block_equals_plain():
    dom = Box((-1.0, -1.0), (1.0, 1.0))
    f0 = sample_block_independent(bargmann_fock(2), 5.0, 0.0, dom, 17)
    f1 = sample_bf_series(17, dom)
    P = np.random.default_rng(2).uniform(-1, 1, (10, 2))
    assert np.array_equal(f0.evaluator.value(P), f1.evaluator.value(P))


def test_block_covariances():
    dom = Box((0.0, 0.0), (4.0, 2.0))
    pts = np.array([[1.5, 1.0], [2.5, 1.0], [1.0, 1.0]])  # blocks [0,2] and [2,4]
    V = _values(lambda s: sample_block_independent(bargmann_fock(2), 2.0, 0.0, dom, s), pts, 3000)
    assert abs(_cov_z(V[:, 0], V[:, 1], 0.0)) < 3
    assert abs(_cov_z(V[:, 0], V[:, 2], math.exp(-0.125))) < 3


def test_block_gaps_are_undefined():
    dom = Box((0.0, 0.0), (5.0, 2.0))
    f = sample_block_independent(bargmann_fock(2), 2.0, 1.0, dom, 0)
    v = f.evaluator.value(np.array([[2.5, 1.0], [1.0, 1.0]]))
    assert np.isnan(v[0]) and np.isfinite(v[1])
    with pytest.raises(ValueError):
        sample_block_independent(bargmann_fock(2), 0.0, 1.0, dom, 0)


# --- random streams ----------------------------------------------------------------------

def test_stream_collisions():
    draws = np.concatenate([stream(2024, r).integers(0, 2**63, size=1000) for r in range(100)])
    assert len(np.unique(draws)) == len(draws)
    seeds = {derive_seed(2024, c, r) for c in range(10) for r in range(1000)}
    assert len(seeds) == 10000


@given(st.integers(0, 2**32), st.integers(0, 1000))
def test_stream_reproducible(seed, idx):
    a = stream(seed, idx).standard_normal(4)
    b = stream(seed, idx).standard_normal(4)
    assert np.array_equal(a, b)
    assert derive_seed(seed, idx) == derive_seed(seed, idx)


def test_stream_rejects_bad_seed():
    with pytest.raises(TypeError):
        stream(1.5)
    with pytest.raises(ValueError):
        stream(-1)
