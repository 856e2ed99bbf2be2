import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from logconvex.spectral import (
    dirichlet_laplacian_model,
    drift_operator,
    evolve,
    evolve_many,
    mode_factors,
    project_initial_data,
    symmetrized_drift_model,
    transport_solve,
    transport_trajectory,
)


def test_dirichlet_eigenvalues():
    m = dirichlet_laplacian_model(10)
    np.testing.assert_allclose(m.lambdas, np.arange(1, 11) ** 2)
    m2 = dirichlet_laplacian_model(4, length=2.0)
    np.testing.assert_allclose(m2.lambdas, (np.arange(1, 5) * np.pi / 2) ** 2)


def test_sine_basis_orthonormal():
    m = dirichlet_laplacian_model(16)
    x, w = np.polynomial.legendre.leggauss(200)
    x = 0.5 * np.pi * (x + 1)
    w = 0.5 * np.pi * w
    P = m.basis_matrix(x)
    np.testing.assert_allclose(P.T @ (w[:, None] * P), np.eye(16), atol=1e-13)


def test_projection_of_first_mode():
    m = dirichlet_laplacian_model(8)
    c = project_initial_data(m, np.sin)
    expected = np.zeros(8)
    expected[0] = math.sqrt(math.pi / 2)
    np.testing.assert_allclose(c, expected, atol=1e-13)


def test_projection_of_parabola():
    m = dirichlet_laplacian_model(12)
    n = np.arange(1, 13)
    exact = math.sqrt(2 / math.pi) * 2 * (1 - (-1.0) ** n) / n**3
    c = project_initial_data(m, lambda x: x * (np.pi - x))
    np.testing.assert_allclose(c, exact, atol=1e-13)
    x = np.linspace(0, np.pi, 4001)
    c2 = project_initial_data(m, (x, x * (np.pi - x)))
    np.testing.assert_allclose(c2, exact, atol=1e-6)


def test_synthesize_roundtrip():
    m = dirichlet_laplacian_model(6)
    c = np.array([1.0, -0.5, 0.25, 0.0, 0.1, -0.2])
    back = project_initial_data(m, lambda x: m.synthesize(c, x))
    np.testing.assert_allclose(back, c, atol=1e-12)


def test_projection_dimension_mismatch():
    m = dirichlet_laplacian_model(4)
    with pytest.raises(ValueError):
        project_initial_data(m, (np.linspace(0, 1, 5), np.zeros(4)))


def test_finite_difference_laplacian_eigenvalues():
    n = 200
    x = np.linspace(0, 1, n + 1)
    m = symmetrized_drift_model(x, 1.0, 0.0, 0.0, n_modes=8)
    h = 1.0 / n
    k = np.arange(1, 9)
    exact_discrete = 4 / h**2 * np.sin(k * np.pi * h / 2) ** 2
    np.testing.assert_allclose(m.lambdas, exact_discrete, rtol=1e-10)
    assert m.kappa == 0.0


def test_gradient_drift_eigenvalues():
    # u'' + u' with Dirichlet ends is similar to v'' - v/4
    x = np.linspace(0, 1, 801)
    m = symmetrized_drift_model(x, 1.0, lambda s: s, 0.0, n_modes=4)
    exact = (np.arange(1, 5) * np.pi) ** 2 + 0.25
    np.testing.assert_allclose(m.lambdas, exact, rtol=2e-4)


def test_drift_symmetry_and_weighted_orthonormality():
    rng = np.random.default_rng(3)
    x = np.sort(np.concatenate([[0.0, 1.0], rng.uniform(0, 1, 150)]))
    a = lambda s: 1 + 0.5 * np.sin(3 * s)
    b = lambda s: s**2 - s
    p = lambda s: np.cos(s)
    S, omega = drift_operator(x, a, b, p)
    np.testing.assert_array_equal(S, S.T)
    m = symmetrized_drift_model(x, a, b, p, n_modes=10)
    assert m.basis.symmetry_residual <= 1e-12
    phi = m.basis.vectors
    np.testing.assert_allclose(phi.T @ (omega[:, None] * phi), np.eye(10), atol=1e-10)


def test_positive_potential_gives_kappa():
    x = np.linspace(0, 1, 101)
    m = symmetrized_drift_model(x, 1.0, 0.0, 20.0, n_modes=3)
    assert m.kappa == pytest.approx(20.0 - math.pi**2, rel=1e-3)


def test_drift_model_rejects_coarse_grid():
    with pytest.raises(ValueError):
        symmetrized_drift_model(np.linspace(0, 1, 10), 1.0, 0.0, 0.0, n_modes=20)
    with pytest.raises(ValueError):
        drift_operator(np.linspace(0, 1, 10), -1.0, 0.0, 0.0)


def test_heat_evolution_exact():
    m = dirichlet_laplacian_model(5)
    t = np.linspace(0, 1, 11)
    tr = evolve(m, np.ones(5), 1.0, t)
    np.testing.assert_allclose(tr.states, np.exp(-np.outer(t, np.arange(1, 6) ** 2)), rtol=1e-15)
    np.testing.assert_allclose(tr.norms, tr.state_norms())


def test_fractional_factors_start_at_one_and_decay():
    m = dirichlet_laplacian_model(6)
    fac = mode_factors(m, 0.5, np.linspace(0, 1, 21))
    np.testing.assert_allclose(fac[0], 1.0)
    assert np.all(np.diff(fac, axis=0) <= 0)
    assert np.all(np.diff(fac, axis=1) <= 0)


def test_evolve_many_matches_evolve():
    m = dirichlet_laplacian_model(8)
    t = np.linspace(0, 1, 6)
    U = np.random.default_rng(0).normal(size=(3, 8))
    batch = evolve_many(m, U, 0.7, t)
    for row, tr in zip(U, batch):
        np.testing.assert_allclose(tr.states, evolve(m, row, 0.7, t).states)


def test_evolve_validation():
    m = dirichlet_laplacian_model(4)
    with pytest.raises(ValueError):
        evolve(m, np.ones(3), 1.0, [0, 1])
    with pytest.raises(ValueError):
        evolve(m, np.ones(4), 1.0, [0.5, 1])


@settings(max_examples=25, deadline=None)
@given(arrays(float, 8, elements=st.floats(-5, 5)), arrays(float, 8, elements=st.floats(-5, 5)),
       st.floats(-3, 3), st.sampled_from([0.4, 0.8, 1.0]))
def test_evolution_is_linear(c1, c2, s, alpha):
    m = dirichlet_laplacian_model(8)
    t = np.linspace(0, 1, 5)
    lhs = evolve(m, c1 + s * c2, alpha, t).states
    rhs = evolve(m, c1, alpha, t).states + s * evolve(m, c2, alpha, t).states
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(arrays(float, 8, elements=st.floats(-5, 5)), st.sampled_from([0.3, 0.6, 1.0]))
def test_norm_is_nonincreasing(c, alpha):
    tr = evolve(dirichlet_laplacian_model(8), c, alpha, np.linspace(0, 2, 21))
    assert np.all(np.diff(tr.norms) <= 1e-14 * max(tr.norms[0], 1e-300))


def test_transport_exact_shift():
    x = np.linspace(0.05, 0.95, 10)
    np.testing.assert_allclose(transport_solve(np.sin, x, 0.3), np.where(x > 0.3, np.sin(x - 0.3), 0.0))
    np.testing.assert_allclose(transport_solve(lambda s: np.ones_like(s), x, 0.0), 1.0)


def test_transport_norm_decay():
    t = np.linspace(0, 1, 11)
    tr = transport_trajectory(lambda s: np.ones_like(s), t, n_cells=1000)
    np.testing.assert_allclose(tr.norms, np.sqrt(1 - t), atol=1e-12)
    assert tr.norms[-1] == 0.0
