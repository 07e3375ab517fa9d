import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pli_mv.market import (
    DensityState,
    MarketCurves,
    d_scores,
    density_from_increments,
    brownian_increments,
    integrate_coefficients,
    lognormal_partial_expectation,
    norm_cdf,
    sample_density_path,
    stream_normals,
)


def two_segment():
    return MarketCurves(
        np.array([0.0, 5.0, 10.0]),
        np.array([0.02, 0.04]),
        np.array([[0.08], [0.10]]),
        np.array([[[0.2]], [[0.25]]]),
    )


def test_integrals_constant(bench_curves):
    assert integrate_coefficients(bench_curves, 0.0, 10.0) == pytest.approx((0.2, 0.9), abs=1e-15)


def test_integrals_empty_interval(bench_curves):
    assert integrate_coefficients(bench_curves, 3.0, 3.0) == (0.0, 0.0)


def test_integrals_two_segments():
    c = two_segment()
    int_r, int_k2 = integrate_coefficients(c, 0.0, 10.0)
    assert int_r == pytest.approx(0.3, abs=1e-15)
    assert int_k2 == pytest.approx(5 * 0.3**2 + 5 * 0.24**2, abs=1e-14)
    # partial overlap of both segments
    assert integrate_coefficients(c, 4.0, 6.0)[0] == pytest.approx(0.06, abs=1e-15)


def test_integrals_errors(bench_curves):
    with pytest.raises(ValueError):
        integrate_coefficients(bench_curves, 5.0, 4.0)
    with pytest.raises(ValueError):
        integrate_coefficients(bench_curves, 0.0, 11.0)


def test_curve_validation():
    with pytest.raises(ValueError, match="singular"):
        MarketCurves.constant(0.02, [0.08, 0.08], [[0.2, 0.2], [0.2, 0.2]], 1.0)
    with pytest.raises(ValueError, match="r must"):
        MarketCurves.constant(-0.01, [0.08], [[0.2]], 1.0)
    with pytest.raises(ValueError, match="increasing"):
        MarketCurves(np.array([0.0, 2.0, 1.0]), np.zeros(2), np.zeros((2, 1)), np.ones((2, 1, 1)))


def test_multidimensional_kappa():
    sigma = np.array([[0.2, 0.0], [0.05, 0.3]])
    mu = np.array([0.08, 0.1])
    c = MarketCurves.constant(0.02, mu, sigma, 5.0)
    np.testing.assert_allclose(sigma @ c.kappa[0], mu - 0.02, atol=1e-15)
    assert c.dimension == 2


def test_d_scores_hand_value(bench_curves):
    d0, d1, d2 = d_scores(bench_curves, 1.0, DensityState(0.0, 1.0))
    assert d1 == pytest.approx(-0.25 / math.sqrt(0.9), abs=1e-12)
    assert d1 == pytest.approx(-0.26352, abs=5e-6)
    assert d0 - d2 == pytest.approx(2 * math.sqrt(0.9), abs=1e-12)


def test_d_scores_symmetry_and_zero(bench_curves):
    x = math.exp(0.25)  # zeroes the d1 numerator at xi = 1
    _, d1, _ = d_scores(bench_curves, x, DensityState(0.0, 1.0))
    assert norm_cdf(d1) == pytest.approx(0.5, abs=1e-15)
    d0, d1, d2 = d_scores(bench_curves, 0.0, DensityState(0.0, 1.0))
    assert norm_cdf(d0) == norm_cdf(d1) == norm_cdf(d2) == 0.0


def test_d_scores_degenerate():
    c = MarketCurves.constant(0.02, [0.02], [[0.2]], 1.0)
    with pytest.raises(ValueError, match="degenerate"):
        d_scores(c, 1.0, DensityState(0.0, 1.0))


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-3, 50), st.floats(1e-3, 5), st.floats(0, 9.9))
def test_cdf_ordering(x, xi, t):
    c = MarketCurves.constant(0.02, [0.08], [[0.2]], 10.0)
    d0, d1, d2 = d_scores(c, x, DensityState(t, xi))
    assert norm_cdf(d2) <= norm_cdf(d1) <= norm_cdf(d0)


def test_partial_expectation_limits():
    assert lognormal_partial_expectation(0.3, 0.7, 0.0) == pytest.approx(math.exp(0.3 + 0.245), rel=1e-15)
    assert lognormal_partial_expectation(0.3, 0.7, 2.0, 2.0) == 0.0
    with pytest.raises(ValueError):
        lognormal_partial_expectation(0.0, 1.0, 2.0, 1.0)


def test_partial_expectation_known_value():
    # ln b - mu - sigma^2 = 0 and ln a - mu - sigma^2 = -1
    expected = math.exp(0.5) * (norm_cdf(0.0) - norm_cdf(-1.0))
    assert lognormal_partial_expectation(0.0, 1.0, 1.0, math.e) == pytest.approx(expected, rel=1e-14)
    z = np.random.default_rng(11).standard_normal(10**6)
    x = np.exp(z)
    sample = x * ((x >= 1.0) & (x <= math.e))
    assert abs(sample.mean() - expected) < 3 * sample.std(ddof=1) / math.sqrt(x.size)


@settings(max_examples=100, deadline=None)
@given(st.floats(-2, 2), st.floats(0.05, 2), st.floats(0, 5), st.floats(0, 5), st.floats(0, 5))
def test_partial_expectation_additive(mu, sigma, a, b, c):
    a, b, c = sorted((a, b, c))
    whole = lognormal_partial_expectation(mu, sigma, a, c)
    parts = lognormal_partial_expectation(mu, sigma, a, b) + lognormal_partial_expectation(mu, sigma, b, c)
    assert whole == pytest.approx(parts, abs=1e-12)


def test_partial_expectation_matches_gauss_legendre(bench_curves):
    int_r, int_k2 = integrate_coefficients(bench_curves, 0.0, 10.0)
    mu, s = -(int_r + 0.5 * int_k2), math.sqrt(int_k2)
    nodes, weights = np.polynomial.legendre.leggauss(200)
    for a, b in [(0.2, 0.9), (0.5, 3.0), (1e-3, 0.1)]:
        u = 0.5 * (b - a) * nodes + 0.5 * (a + b)
        dens = np.exp(-((np.log(u) - mu) ** 2) / (2 * s * s)) / (u * s * math.sqrt(2 * math.pi))
        quad = 0.5 * (b - a) * np.sum(weights * u * dens)
        assert lognormal_partial_expectation(mu, s, a, b) == pytest.approx(quad, rel=1e-6)


def test_stream_normals_reproducible():
    a = stream_normals(5, 3, 100)
    assert np.array_equal(a, stream_normals(5, 3, 100))
    assert not np.array_equal(a, stream_normals(5, 4, 100))
    assert np.all(np.isfinite(a))


def test_density_path_deterministic_cases():
    grid = np.linspace(0.0, 10.0, 101)
    flat = MarketCurves.constant(0.02, [0.02], [[0.2]], 10.0)
    path = sample_density_path(flat, grid, 1, 0)
    np.testing.assert_allclose([s.xi for s in path], np.exp(-0.02 * grid), rtol=1e-13)
    none = MarketCurves.constant(0.0, [0.0], [[0.2]], 10.0)
    assert all(s.xi == 1.0 for s in sample_density_path(none, grid, 1, 0))
    assert path[0].xi == 1.0


def test_density_path_order_independent(bench_curves):
    grid = np.linspace(0.0, 10.0, 51)
    first = sample_density_path(bench_curves, grid, 9, 17)
    sample_density_path(bench_curves, grid, 9, 3)
    assert sample_density_path(bench_curves, grid, 9, 17) == first


def test_grid_must_hit_breakpoints():
    with pytest.raises(ValueError, match="breakpoints"):
        sample_density_path(two_segment(), np.linspace(0.0, 10.0, 4), 0, 0)


def test_density_terminal_moments(bench_curves):
    grid = np.array([0.0, 5.0, 10.0])
    dW = np.stack([brownian_increments(bench_curves, grid, 2024, i) for i in range(100_000)])
    xi_T = density_from_increments(bench_curves, grid, dW)[:, -1]
    se = xi_T.std(ddof=1) / math.sqrt(xi_T.size)
    assert abs(xi_T.mean() - math.exp(-0.2)) < 3 * se
    log_xi = np.log(xi_T)
    n = log_xi.size
    assert abs(log_xi.mean() + (0.2 + 0.45)) < 4 * math.sqrt(0.9 / n)
    # sd of a sample variance of normals is sigma^2 sqrt(2/(n-1))
    assert abs(log_xi.var(ddof=1) - 0.9) < 4 * 0.9 * math.sqrt(2 / (n - 1))
