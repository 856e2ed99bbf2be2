"""Spectral models of self-adjoint generators and eigenmode-wise evolution.

Two bases are supported: the analytic Dirichlet sine basis on ``(0, L)`` and
a discrete eigenbasis of a finite-difference operator

    L u = (a u')' + a b' u' + p u        on (0, 1),  u(0) = u(1) = 0,

which is symmetric in ``L^2(e^b dx)`` because ``(a u')' + a b' u' =
e^{-b} (a e^b u')'``. The discretization keeps that structure, so conjugating
by the square root of the weighted mass gives an exactly symmetric matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
from scipy import linalg

from .mittag_leffler import MLParams, ml_eval_array

DEFAULT_MODES = 64

InitialData = Union[Callable[[np.ndarray], np.ndarray], tuple, np.ndarray]


@dataclass(frozen=True)
class SineBasis:
    length: float

    def __call__(self, x, dim):
        x = np.asarray(x, dtype=float)
        n = np.arange(1, dim + 1)
        return np.sqrt(2.0 / self.length) * np.sin(np.outer(x, n) * np.pi / self.length)

    @property
    def domain(self):
        return 0.0, self.length


@dataclass(frozen=True)
class DiscreteBasis:
    """Eigenvectors sampled on the interior nodes of ``grid``.

    ``weights`` are the weighted-mass quadrature weights ``d_i e^{b_i}``; the
    columns of ``vectors`` are orthonormal for them.
    """

    grid: np.ndarray
    vectors: np.ndarray
    weights: np.ndarray
    symmetry_residual: float = 0.0

    @property
    def nodes(self):
        return self.grid[1:-1]

    @property
    def domain(self):
        return float(self.grid[0]), float(self.grid[-1])

    def __call__(self, x, dim):
        x = np.asarray(x, dtype=float)
        out = np.empty((x.size, dim))
        for j in range(dim):
            col = np.concatenate([[0.0], self.vectors[:, j], [0.0]])
            out[:, j] = np.interp(x, self.grid, col)
        return out


@dataclass(frozen=True)
class SpectralModel:
    lambdas: np.ndarray
    kappa: float
    basis: Union[SineBasis, DiscreteBasis]

    def __post_init__(self):
        lam = np.asarray(self.lambdas, dtype=float)
        object.__setattr__(self, "lambdas", lam)
        if lam.ndim != 1 or lam.size == 0:
            raise ValueError("need at least one eigenvalue")
        if np.any(np.diff(lam) < 0):
            raise ValueError("eigenvalues must be ascending")
        if self.kappa < 0 or lam[0] < -self.kappa * (1 + 1e-12) - 1e-12:
            raise ValueError("lambdas[0] must be >= -kappa with kappa >= 0")

    @property
    def dim(self) -> int:
        return self.lambdas.size

    def basis_matrix(self, x) -> np.ndarray:
        """Basis functions evaluated at points ``x``; shape ``(len(x), dim)``."""
        return self.basis(x, self.dim)

    def synthesize(self, coeffs, x) -> np.ndarray:
        return self.basis_matrix(x) @ np.asarray(coeffs, dtype=float)

    def epsilon_norm(self, coeffs, epsilon: float) -> float:
        """Norm of ``D((-A)^epsilon)``: ``(sum (1+|lambda_n|)^{2 eps} c_n^2)^{1/2}``."""
        c = np.asarray(coeffs, dtype=float)
        return float(np.sqrt(np.sum((1.0 + np.abs(self.lambdas)) ** (2 * epsilon) * c**2)))


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    norms: np.ndarray
    T: float
    weights: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.atleast_2d(np.asarray(self.states, dtype=float))
        self.norms = np.asarray(self.norms, dtype=float)
        if self.times.ndim != 1 or self.times.size == 0:
            raise ValueError("empty trajectory")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be increasing")
        if self.states.shape[0] != self.times.size or self.norms.shape != self.times.shape:
            raise ValueError("states/norms do not match the time grid")

    @property
    def initial_norm(self) -> float:
        return float(self.norms[0])

    @property
    def final_norm(self) -> float:
        return float(self.norms[-1])

    def state_norms(self) -> np.ndarray:
        """Recompute the norms from the stored states."""
        w = 1.0 if self.weights is None else self.weights
        return np.sqrt(np.sum(w * self.states**2, axis=1))


def dirichlet_laplacian_model(n_modes: int = DEFAULT_MODES, length: float = np.pi) -> SpectralModel:
    """Dirichlet Laplacian on ``(0, length)``: ``lambda_n = (n pi / length)^2``."""
    if n_modes < 1:
        raise ValueError("n_modes must be >= 1")
    if length <= 0:
        raise ValueError("length must be positive")
    n = np.arange(1, n_modes + 1)
    return SpectralModel((n * np.pi / length) ** 2, 0.0, SineBasis(float(length)))


def _nodal(f, x):
    if callable(f):
        return np.asarray(f(x), dtype=float) * np.ones_like(x)
    arr = np.asarray(f, dtype=float)
    if arr.ndim == 0:
        return np.full_like(x, float(arr))
    if arr.shape != x.shape:
        raise ValueError("coefficient samples must match the grid")
    return arr


def drift_operator(grid, a, b, p):
    """Assemble ``(S, omega)`` with ``L_h = diag(omega)^{-1} S`` on interior nodes.

    ``S`` is symmetric tridiagonal; ``omega_i = d_i e^{b_i}`` with ``d_i`` the
    dual cell width.
    """
    x = np.asarray(grid, dtype=float)
    if x.ndim != 1 or x.size < 3 or np.any(np.diff(x) <= 0):
        raise ValueError("grid must be an increasing 1-D mesh with >= 3 points")
    av, bv, pv = _nodal(a, x), _nodal(b, x), _nodal(p, x)
    if np.any(av <= 0):
        raise ValueError("coefficient a must be positive")
    h = np.diff(x)
    k = 0.5 * (av[:-1] * np.exp(bv[:-1]) + av[1:] * np.exp(bv[1:])) / h
    d = 0.5 * (h[:-1] + h[1:])
    omega = d * np.exp(bv[1:-1])
    diag = -(k[:-1] + k[1:]) + omega * pv[1:-1]
    off = k[1:-1]
    S = np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)
    return S, omega


def symmetrized_drift_model(grid, a, b, p, n_modes: int = DEFAULT_MODES) -> SpectralModel:
    """Discrete eigenmodel of ``div(a grad u) + a b' u' + p u`` with Dirichlet ends.

    The drift is ``a`` times the gradient of the potential ``b``. ``a``, ``b``
    and ``p`` may be callables or nodal samples on ``grid``.
    """
    S, omega = drift_operator(grid, a, b, p)
    n_int = omega.size
    if n_modes > n_int:
        raise ValueError(f"grid too coarse: {n_modes} modes requested, {n_int} interior points")
    Lh = S / omega[:, None]
    r = np.sqrt(omega)
    conj = r[:, None] * Lh / r[None, :]
    sym_res = float(np.linalg.norm(conj - conj.T) / np.linalg.norm(conj))
    if sym_res > 1e-10:
        raise ArithmeticError(f"symmetrization failed, residual {sym_res:.2e}")
    conj = 0.5 * (conj + conj.T)
    lam, q = linalg.eigh(-conj, subset_by_index=[0, n_modes - 1])
    phi = q / r[:, None]
    kappa = max(0.0, -float(lam[0]))
    basis = DiscreteBasis(np.asarray(grid, dtype=float), phi, omega, sym_res)
    return SpectralModel(lam, kappa, basis)


def _sine_segment_integrals(x, v, length, dim):
    """Exact integrals of the piecewise-linear interpolant of (x, v) against each sine mode."""
    k = np.arange(1, dim + 1)[None, :] * np.pi / length
    x0, x1 = x[:-1, None], x[1:, None]
    v0 = v[:-1, None]
    s = (v[1:] - v[:-1])[:, None] / (x1 - x0)

    def anti(xx):
        # antiderivative of (v0 + s (xx - x0)) sin(k xx)
        c, sn = np.cos(k * xx), np.sin(k * xx)
        return (v0 - s * x0) * (-c / k) + s * (-xx * c / k + sn / k**2)

    return np.sqrt(2.0 / length) * np.sum(anti(x1) - anti(x0), axis=0)


def project_initial_data(model: SpectralModel, data: InitialData) -> np.ndarray:
    """Coefficients ``<u0, phi_n>`` in the model's inner product.

    ``data`` may be a callable, an ``(x, values)`` pair, or (discrete basis
    only) nodal samples on the interior grid.
    """
    basis = model.basis
    if isinstance(basis, SineBasis):
        L = basis.length
        if callable(data):
            panels = max(16, 2 * model.dim)
            xg, wg = np.polynomial.legendre.leggauss(24)
            edges = np.linspace(0.0, L, panels + 1)
            half = 0.5 * np.diff(edges)
            mid = 0.5 * (edges[:-1] + edges[1:])
            xq = (mid[:, None] + half[:, None] * xg[None, :]).ravel()
            wq = (half[:, None] * wg[None, :]).ravel()
            return model.basis_matrix(xq).T @ (wq * np.asarray(data(xq), dtype=float))
        if isinstance(data, tuple):
            x, v = (np.asarray(a, dtype=float) for a in data)
            if x.shape != v.shape or x.ndim != 1:
                raise ValueError("dimension mismatch between sample points and values")
            return _sine_segment_integrals(x, v, L, model.dim)
        raise ValueError("sine basis needs a callable or an (x, values) pair")
    nodes = basis.nodes
    if callable(data):
        v = np.asarray(data(nodes), dtype=float) * np.ones_like(nodes)
    elif isinstance(data, tuple):
        x, vals = (np.asarray(a, dtype=float) for a in data)
        v = np.interp(nodes, x, vals)
    else:
        v = np.asarray(data, dtype=float)
        if v.shape != nodes.shape:
            raise ValueError(f"expected {nodes.size} nodal samples, got {v.shape}")
    return basis.vectors.T @ (basis.weights * v)


def mode_factors(model: SpectralModel, alpha: float, times) -> np.ndarray:
    """``E_alpha(-lambda_n t^alpha)`` for every time (rows) and mode (columns)."""
    t = np.asarray(times, dtype=float)
    if np.any(t < 0):
        raise ValueError("times must be nonnegative")
    if alpha == 1.0:
        return np.exp(-np.outer(t, model.lambdas))
    arg = -np.outer(t**alpha, model.lambdas)
    return ml_eval_array(MLParams(alpha), arg)


def evolve(model: SpectralModel, u0, alpha: float, times) -> Trajectory:
    """Solve ``d^alpha u/dt^alpha = A u`` mode by mode.

    Mode ``n`` is multiplied by ``E_alpha(-lambda_n t^alpha)``, which is
    ``exp(-lambda_n t)`` at ``alpha = 1``.
    """
    c = np.asarray(u0, dtype=float)
    if c.shape != (model.dim,):
        raise ValueError(f"expected {model.dim} coefficients, got {c.shape}")
    t = np.asarray(times, dtype=float)
    if t.size == 0 or t[0] != 0.0:
        raise ValueError("time grid must start at 0")
    states = mode_factors(model, alpha, t) * c[None, :]
    norms = np.sqrt(np.sum(states**2, axis=1))
    return Trajectory(t, states, norms, float(t[-1]), meta={"alpha": alpha, "kind": "spectral"})


def cell_centers(n: int) -> np.ndarray:
    return (np.arange(n) + 0.5) / n


def transport_solve(u0, x, t: float) -> np.ndarray:
    """Exact solution of ``u_t + u_x = 0`` on ``(0, 1)`` with ``u(t, 0) = 0``.

    ``u0`` is a callable or samples at the points ``x``; sampled data is
    linearly interpolated along characteristics.
    """
    x = np.asarray(x, dtype=float)
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        vals = u0(x) if callable(u0) else u0
        return np.broadcast_to(np.asarray(vals, dtype=float), x.shape).copy()
    src = x - t
    inside = src > 0.0
    out = np.zeros_like(x)
    if callable(u0):
        out[inside] = u0(src[inside])
    else:
        out[inside] = np.interp(src[inside], x, np.asarray(u0, dtype=float))
    return out


def transport_trajectory(u0, times, n_cells: int = 1000) -> Trajectory:
    """Trajectory of the transport counterexample on a cell-centered grid."""
    x = cell_centers(n_cells)
    h = 1.0 / n_cells
    times = np.asarray(times, dtype=float)
    states = np.array([transport_solve(u0, x, t) for t in times])
    norms = np.sqrt(h * np.sum(states**2, axis=1))
    return Trajectory(times, states, norms, float(times[-1]), weights=np.full(n_cells, h),
                      meta={"kind": "transport", "x": x})


def evolve_many(model: SpectralModel, U0, alpha: float, times) -> list[Trajectory]:
    """:func:`evolve` for a batch of coefficient vectors sharing one factor table."""
    U0 = np.atleast_2d(np.asarray(U0, dtype=float))
    if U0.shape[1] != model.dim:
        raise ValueError(f"expected {model.dim} coefficients per row")
    t = np.asarray(times, dtype=float)
    if t.size == 0 or t[0] != 0.0:
        raise ValueError("time grid must start at 0")
    fac = mode_factors(model, alpha, t)
    out = []
    for c in U0:
        states = fac * c[None, :]
        out.append(Trajectory(t, states, np.sqrt(np.sum(states**2, axis=1)), float(t[-1]),
                              meta={"alpha": alpha, "kind": "spectral"}))
    return out
