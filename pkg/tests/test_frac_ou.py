import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, linalg

from logconvex.frac_ou import (
    AliasingError,
    FourierGrid,
    FracOUParams,
    GridState,
    LatticeBallRegion,
    continuous_ft,
    fd_solve,
    fourier_solve,
    gaussian_density,
    geom_check,
    inverse_continuous_ft,
    invariant_covariance,
    symbol_exponent,
    weighted_norm,
)

GRID1 = FourierGrid(25.0, 512)


def bump(grid, sigma=1.0, center=0.0):
    return GridState.from_function(grid, lambda x: np.exp(-((x - center) ** 2) / (2 * sigma**2)))


def rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def test_grid_validation():
    with pytest.raises(ValueError):
        FourierGrid(10.0, 100)
    with pytest.raises(ValueError):
        FourierGrid(-1.0, 64)
    g = FourierGrid((4.0, 5.0), 64)
    assert g.points == (64, 64) and g.N == 2
    with pytest.raises(ValueError):
        GridState(np.zeros(10), GRID1)


def test_params_validation():
    with pytest.raises(ValueError):
        FracOUParams([[1.0, 2.0], [0.0, 1.0]], np.zeros((2, 2)))
    with pytest.raises(ValueError):
        FracOUParams(-1.0, 0.0)
    with pytest.raises(ValueError):
        FracOUParams(1.0, 0.0, s=0.0)
    with pytest.raises(ValueError):
        FracOUParams(np.eye(3), np.zeros((3, 3)))


def test_continuous_ft_of_gaussian():
    sigma = 1.3
    F = continuous_ft(bump(GRID1, sigma))
    xi = GRID1.freq_axes()[0]
    exact = math.sqrt(2 * math.pi) * sigma * np.exp(-(sigma * xi) ** 2 / 2)
    np.testing.assert_allclose(F, exact, atol=1e-12)
    back = inverse_continuous_ft(F, GRID1)
    np.testing.assert_allclose(back.real, bump(GRID1, sigma).values, atol=1e-14)


def test_heat_closed_form():
    x = GRID1.axes()[0]
    for sigma, t in [(1.0, 0.5), (0.7, 1.0)]:
        u = fourier_solve(FracOUParams(1.0, 0.0), GRID1, bump(GRID1, sigma), t)
        v = sigma**2 + 2 * t
        exact = sigma / math.sqrt(v) * np.exp(-(x**2) / (2 * v))
        assert rel(u.values, exact) <= 1e-13


@pytest.mark.parametrize("sigma,t", [(1.0, 0.5), (0.8, 1.0)])
def test_ou_closed_form(sigma, t):
    # classical OU with B = -1: Mehler formula for a Gaussian
    x = GRID1.axes()[0]
    q = 1 - math.exp(-2 * t)
    v = sigma**2 + q
    exact = sigma / math.sqrt(v) * np.exp(-((math.exp(-t) * x) ** 2) / (2 * v))
    u = fourier_solve(FracOUParams(1.0, -1.0), GRID1, bump(GRID1, sigma), t)
    assert rel(u.values, exact) <= 1e-5


@pytest.mark.parametrize("s", [0.5, 0.75])
def test_fractional_heat_periodic_oracle(s):
    # the box is periodic, so the exact answer is the Fourier series with the
    # analytic transform of the Gaussian
    t, sigma, L = 0.4, 1.0, 25.0
    u = fourier_solve(FracOUParams(1.0, 0.0, s), GRID1, bump(GRID1, sigma), t)
    m = np.arange(-256, 256)
    xi = np.pi * m / L
    coef = math.sqrt(2 * math.pi) * sigma * np.exp(-(sigma * xi) ** 2 / 2 - t * np.abs(xi) ** (2 * s))
    x = GRID1.axes()[0]
    exact = (np.cos(np.outer(x, xi)) @ coef) / (2 * L)
    np.testing.assert_allclose(u.values, exact, atol=1e-13)


def test_fractional_heat_whole_line_limit():
    # heavy kernel tails make the periodic images decay like 1/L^2
    t, s = 0.4, 0.5
    val, _ = integrate.quad(lambda k: math.sqrt(2 * math.pi) * math.exp(-k * k / 2 - t * k ** (2 * s)) / math.pi,
                            0, 40, epsabs=1e-14, limit=400)
    errs = []
    for L, n in [(50.0, 1024), (100.0, 2048)]:
        g = FourierGrid(L, n)
        errs.append(fourier_solve(FracOUParams(1.0, 0.0, s), g, bump(g), t).values[n // 2] - val)
    assert errs[1] < 3e-5
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)


@pytest.mark.parametrize("s", [0.6, 1.0, 1.5])
def test_symbol_exponent_scalar_drift(s):
    t = 0.7
    got = symbol_exponent(FracOUParams(2.0, -1.0, s), GRID1, t)
    eta = GRID1.freq_axes()[0]
    exact = 2.0**s * np.abs(eta) ** (2 * s) * (math.exp(2 * s * t) - 1) / (2 * s)
    np.testing.assert_allclose(got, exact, rtol=1e-12, atol=1e-300)


def test_mass_evolution():
    g = FourierGrid(30.0, 512)
    u0 = bump(g, 1.0, 0.5)
    for B in (0.0, -1.0, 0.3):
        u = fourier_solve(FracOUParams(1.0, B, 0.8), g, u0, 0.5)
        mass = np.sum(u.values) * g.cell_volume
        assert mass == pytest.approx(np.sum(u0.values) * g.cell_volume * math.exp(-0.5 * B), rel=1e-8)


@pytest.mark.parametrize("B", [0.0, -1.0])
def test_fd_agrees_in_1d(B):
    p = FracOUParams(1.0, B)
    u0 = bump(GRID1)
    assert rel(fd_solve(p, GRID1, u0, 0.5).values, fourier_solve(p, GRID1, u0, 0.5).values) <= 1e-4


def test_two_dimensional_rotation_drift():
    g = FourierGrid((14.0, 14.0), (128, 128))
    B = np.array([[0.0, -1.0], [1.0, 0.0]])
    # pure rotation with no diffusion contribution at xi=0 keeps the mass
    u0 = GridState.from_function(g, lambda x, y: np.exp(-((x - 1) ** 2 + y**2)))
    u = fourier_solve(FracOUParams(np.eye(2), B), g, u0, 0.3)
    assert np.sum(u.values) == pytest.approx(np.sum(u0.values), rel=1e-8)


def test_aliasing_guard():
    g = FourierGrid(25.0, 64)
    with pytest.raises(AliasingError):
        fourier_solve(FracOUParams(1.0, 0.0), g, bump(g, 0.2), 0.1)
    with pytest.raises(AliasingError):
        # a positive drift concentrates the state and widens its spectrum
        fourier_solve(FracOUParams(1.0, 2.0), FourierGrid(25.0, 64), bump(FourierGrid(25.0, 64), 0.8), 2.0)


def test_zero_time_identity_and_errors():
    u0 = bump(GRID1)
    p = FracOUParams(1.0, -1.0)
    np.testing.assert_array_equal(fourier_solve(p, GRID1, u0, 0.0).values, u0.values)
    with pytest.raises(ValueError):
        fourier_solve(p, GRID1, u0, -1.0)
    with pytest.raises(ValueError):
        fourier_solve(FracOUParams(np.eye(2), np.zeros((2, 2))), GRID1, u0, 1.0)


@pytest.mark.parametrize("s,tol", [(1.0, 1e-4), (0.8, 1e-3)])
def test_semigroup_property(s, tol):
    # for s < 1 the intermediate spectrum has a |xi|^{2s} kink at 0, which
    # limits the cubic interpolation of the transported spectrum
    p = FracOUParams(1.0, -1.0, s)
    u0 = bump(GRID1, 1.2, 0.3)
    a = fourier_solve(p, GRID1, fourier_solve(p, GRID1, u0, 0.3), 0.4)
    b = fourier_solve(p, GRID1, u0, 0.7)
    assert rel(a.values, b.values) <= tol


@settings(max_examples=10, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.5, 1.5))
def test_solver_is_linear(c1, c2, s):
    p = FracOUParams(1.0, -0.5, s)
    u1, u2 = bump(GRID1, 1.0, -1.0), bump(GRID1, 1.5, 1.0)
    combo = GridState(c1 * u1.values + c2 * u2.values, GRID1)
    lhs = fourier_solve(p, GRID1, combo, 0.5).values
    rhs = c1 * fourier_solve(p, GRID1, u1, 0.5).values + c2 * fourier_solve(p, GRID1, u2, 0.5).values
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_invariant_covariance_scalar():
    np.testing.assert_allclose(invariant_covariance(-2.0, 3.0), [[1.5]])


@pytest.mark.parametrize("B", [[[-1.0, 1.0], [0.0, -1.0]], [[-2.0, 1.0], [-1.0, -1.0]], [[-1.0, 0.0], [0.0, -3.0]]])
def test_invariant_covariance_integral_oracle(B):
    B = np.array(B)
    S = invariant_covariance(B)
    ref, _ = integrate.quad_vec(lambda s: 2 * linalg.expm(s * B) @ linalg.expm(s * B.T), 0, 60, epsabs=1e-13)
    np.testing.assert_allclose(S, ref, atol=1e-10)
    assert np.linalg.norm(B @ S + S @ B.T + 2 * np.eye(2)) <= 1e-10


def test_invariant_covariance_rejects_unstable():
    with pytest.raises(ValueError):
        invariant_covariance([[0.1]])
    with pytest.raises(ValueError):
        invariant_covariance([[-1.0, 0.0], [0.0, 0.5]])


def test_weighted_norms():
    S = np.array([[1.2, 0.3], [0.3, 0.7]])
    g = FourierGrid((12.0, 12.0), (128, 128))
    one = GridState(np.ones(g.points), g)
    assert weighted_norm(one, S) == pytest.approx(1.0, abs=1e-8)
    X, _ = g.mesh()
    assert weighted_norm(GridState(X, g), S) == pytest.approx(math.sqrt(1.2), rel=1e-8)
    assert np.sum(gaussian_density(g, S)) * g.cell_volume == pytest.approx(1.0, abs=1e-10)
    small = FourierGrid((2.0, 2.0), (64, 64))
    with pytest.raises(ValueError):
        weighted_norm(GridState(np.ones(small.points), small), S)


def test_lattice_region_membership():
    r = LatticeBallRegion((1.0, 1.0), 0.5)
    assert r.contains([[0.0, 0.0], [3.1, -2.2]]).tolist() == [True, True]
    assert not r.contains([[0.5, 0.5]])[0]
    assert r.nearest_center_distance([[0.5, 0.5]])[0] == pytest.approx(math.sqrt(0.5))
    with pytest.raises(ValueError):
        LatticeBallRegion((1.0, 1.0), 0.5, (0.0,))


def test_geom_example_and_negatives():
    r = LatticeBallRegion((1.0, 1.0), 0.5)
    v = geom_check(r, math.sqrt(2), 0.5)
    assert v.passed and v.exact
    assert v.covering_bound == pytest.approx(math.sqrt(2) / 2)
    assert not geom_check(r, math.sqrt(2), 0.6).passed
    assert not geom_check(r, 0.5, 0.5).passed
    assert geom_check(r, 0.5, 0.3).passed is False
    assert geom_check(r, 0.6, 0.3).passed
    with pytest.raises(ValueError):
        geom_check(r, 1.0, 0.5, probes=0)


@settings(max_examples=20, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3))
def test_geom_is_translation_invariant(ox, oy):
    a = geom_check(LatticeBallRegion((1.0, 1.0), 0.5), 0.8, 0.4)
    b = geom_check(LatticeBallRegion((1.0, 1.0), 0.5, (ox, oy)), 0.8, 0.4)
    assert a.passed == b.passed
    assert a.covering_bound == pytest.approx(b.covering_bound)
