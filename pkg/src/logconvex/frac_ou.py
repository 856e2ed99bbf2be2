"""Fractional Ornstein-Uhlenbeck evolution on a Fourier grid.

The equation ``u_t = -<Q xi, xi>^s(D) u + B x . grad u`` becomes, after the
Fourier transform,

    v_t = -tr(B) v - (B^T xi) . grad_xi v - <Q xi, xi>^s v,

which is solved along the characteristics ``xi(r) = e^{(r - t) B^T} eta``:

    v(t, eta) = e^{-t tr B} v0(e^{-t B^T} eta)
                * exp(-int_0^t <Q xi(r), xi(r)>^s dr).

``fd_solve`` is an independent finite-difference solver for ``s = 1`` used to
validate this formula.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, sparse
from scipy.ndimage import map_coordinates
from scipy.sparse.linalg import splu


class AliasingError(ValueError):
    """The state's spectrum reaches the edge of the resolved frequency band."""


EDGE_FRACTION = 0.8
EDGE_ENERGY_TOL = 1e-10
SYMBOL_NODES = 32


@dataclass(frozen=True)
class FracOUParams:
    Q: np.ndarray
    B: np.ndarray
    s: float = 1.0

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "B", B)
        if Q.shape != B.shape or Q.shape[0] != Q.shape[1]:
            raise ValueError("Q and B must be square matrices of the same size")
        if Q.shape[0] not in (1, 2):
            raise ValueError("only N = 1 or N = 2 is supported")
        if not np.allclose(Q, Q.T, atol=1e-14):
            raise ValueError("Q must be symmetric")
        if np.linalg.eigvalsh(Q).min() <= 0:
            raise ValueError("Q must be positive definite")
        if self.s <= 0:
            raise ValueError("s must be positive")

    @property
    def N(self) -> int:
        return self.Q.shape[0]


@dataclass(frozen=True)
class FourierGrid:
    """Uniform grid on ``[-L, L)^N`` with ``n`` points per dimension."""

    extent: tuple
    points: tuple

    def __post_init__(self):
        ext = tuple(float(e) for e in np.atleast_1d(self.extent))
        pts = tuple(int(n) for n in np.atleast_1d(self.points))
        if len(pts) == 1 and len(ext) > 1:
            pts = pts * len(ext)
        if len(ext) == 1 and len(pts) > 1:
            ext = ext * len(pts)
        object.__setattr__(self, "extent", ext)
        object.__setattr__(self, "points", pts)
        for L, n in zip(ext, pts):
            if L <= 0:
                raise ValueError("extent must be positive")
            if n < 32 or n & (n - 1):
                raise ValueError("points per dimension must be a power of two >= 32")

    @property
    def N(self) -> int:
        return len(self.points)

    @property
    def spacing(self) -> tuple:
        return tuple(2 * L / n for L, n in zip(self.extent, self.points))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axes(self):
        return [-L + np.arange(n) * h for L, n, h in zip(self.extent, self.points, self.spacing)]

    def mesh(self):
        return np.meshgrid(*self.axes(), indexing="ij")

    def freq_axes(self):
        """Sorted (fftshifted) angular frequencies per dimension."""
        return [np.fft.fftshift(np.fft.fftfreq(n, d=h)) * 2 * np.pi
                for n, h in zip(self.points, self.spacing)]

    @property
    def band(self) -> tuple:
        return tuple(math.pi / h for h in self.spacing)


@dataclass
class GridState:
    values: np.ndarray
    grid: FourierGrid
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.points:
            raise ValueError(f"values shape {self.values.shape} does not match grid {self.grid.points}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("state has non-finite values")

    def norm(self) -> float:
        return float(math.sqrt(np.sum(self.values**2) * self.grid.cell_volume))

    @classmethod
    def from_function(cls, grid: FourierGrid, func) -> "GridState":
        return cls(np.asarray(func(*grid.mesh()), dtype=float) * np.ones(grid.points), grid)


def _sign_pattern(grid: FourierGrid):
    # e^{i xi_k L} = (-1)^k on the fftfreq index k
    sign = np.ones(grid.points)
    for d, n in enumerate(grid.points):
        k = np.fft.fftfreq(n, d=1.0 / n).astype(int)
        shape = [1] * grid.N
        shape[d] = n
        sign = sign * ((-1.0) ** k).reshape(shape)
    return sign


def continuous_ft(u: GridState) -> np.ndarray:
    """Samples of ``int u(x) e^{-i x.xi} dx`` on the sorted frequency grid."""
    g = u.grid
    F = np.fft.fftn(u.values) * _sign_pattern(g) * g.cell_volume
    return np.fft.fftshift(F)


def inverse_continuous_ft(F: np.ndarray, grid: FourierGrid) -> np.ndarray:
    F = np.fft.ifftshift(F) * _sign_pattern(grid) / grid.cell_volume
    return np.fft.ifftn(F)


def _edge_energy(F: np.ndarray, grid: FourierGrid) -> float:
    fax = grid.freq_axes()
    mesh = np.meshgrid(*fax, indexing="ij")
    outer = np.zeros(F.shape, dtype=bool)
    for m, b in zip(mesh, grid.band):
        outer |= np.abs(m) > EDGE_FRACTION * b
    tot = np.sum(np.abs(F) ** 2)
    return float(np.sum(np.abs(F[outer]) ** 2) / tot) if tot > 0 else 0.0


def symbol_exponent(p: FracOUParams, grid: FourierGrid, t: float, nodes: int = SYMBOL_NODES) -> np.ndarray:
    """``int_0^t <Q xi(r), xi(r)>^s dr`` on the sorted frequency grid."""
    eta = np.stack(np.meshgrid(*grid.freq_axes(), indexing="ij"))
    flat = eta.reshape(grid.N, -1)
    if np.all(p.B == 0):
        qf = np.einsum("ik,ij,jk->k", flat, p.Q, flat)
        return (t * np.maximum(qf, 0.0) ** p.s).reshape(grid.points)
    x, w = np.polynomial.legendre.leggauss(nodes)
    r = 0.5 * t * (x + 1.0)
    w = 0.5 * t * w
    out = np.zeros(flat.shape[1])
    for rk, wk in zip(r, w):
        E = linalg.expm((rk - t) * p.B.T)
        M = E.T @ p.Q @ E
        qf = np.einsum("ik,ij,jk->k", flat, M, flat)
        out += wk * np.maximum(qf, 0.0) ** p.s
    return out.reshape(grid.points)


def _interpolate(F: np.ndarray, grid: FourierGrid, pts: np.ndarray) -> np.ndarray:
    fax = grid.freq_axes()
    coords = np.stack([(pts[d] - fax[d][0]) / (fax[d][1] - fax[d][0]) for d in range(grid.N)])
    re = map_coordinates(F.real, coords, order=3, mode="constant", cval=0.0)
    im = map_coordinates(F.imag, coords, order=3, mode="constant", cval=0.0)
    return re + 1j * im


def fourier_solve(p: FracOUParams, grid: FourierGrid, u0: GridState, t: float,
                  check: bool = True) -> GridState:
    """Evolve ``u0`` to time ``t`` with the characteristic Fourier formula.

    ``check=False`` skips the band-edge guards; it is meant for assembling
    the solution operator column by column, where unit vectors are not
    resolved states.
    """
    if grid.N != p.N or u0.grid != grid:
        raise ValueError("dimension mismatch between parameters, grid and state")
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return GridState(u0.values.copy(), grid)
    F0 = continuous_ft(u0)
    if check and _edge_energy(F0, grid) > EDGE_ENERGY_TOL:
        raise AliasingError("initial spectrum is not resolved by the grid")
    Minv = linalg.expm(-t * p.B.T)
    if np.allclose(Minv, np.eye(grid.N), rtol=0, atol=1e-15):
        V = F0
    else:
        scale = np.max(np.abs(F0))
        jumps = max(np.max(np.abs(np.diff(F0, axis=d))) for d in range(grid.N))
        if check and scale > 0 and jumps > 0.5 * scale:
            warnings.warn("initial spectrum is poorly sampled; transported interpolation may degrade",
                          RuntimeWarning, stacklevel=2)
        eta = np.stack(np.meshgrid(*grid.freq_axes(), indexing="ij")).reshape(grid.N, -1)
        V = _interpolate(F0, grid, Minv @ eta).reshape(grid.points)
    F = V * np.exp(-t * np.trace(p.B) - symbol_exponent(p, grid, t))
    if check and _edge_energy(F, grid) > EDGE_ENERGY_TOL:
        raise AliasingError(f"solution spectrum at t={t} leaves the resolved band")
    u = inverse_continuous_ft(F, grid)
    return GridState(u.real, grid, meta={"t": t})


def _diff_matrices(n, h):
    """Fourth-order central D2 and D1, third-order upwind-biased D1.

    Values beyond the box are taken as zero.
    """
    e = np.ones(n)

    def band(coefs, offsets):
        return sparse.diags([c * e[: n - abs(o)] for c, o in zip(coefs, offsets)], offsets, shape=(n, n))

    D2 = band([-1, 16, -30, 16, -1], [-2, -1, 0, 1, 2]) / (12 * h**2)
    D1c = band([1, -8, 8, -1], [-2, -1, 1, 2]) / (12 * h)
    Df = band([-2, -3, 6, -1], [-1, 0, 1, 2]) / (6 * h)
    Db = band([1, -6, 3, 2], [-2, -1, 0, 1]) / (6 * h)
    return D2, D1c, Df, Db


def fd_operator(p: FracOUParams, grid: FourierGrid):
    """Sparse matrix of ``tr(Q D^2) + B x . grad`` with zero values outside the box."""
    if p.s != 1.0:
        raise ValueError("fd_solve only handles s = 1")
    ns = grid.points
    eye = [sparse.identity(n, format="csr") for n in ns]
    mats = [_diff_matrices(n, h) for n, h in zip(ns, grid.spacing)]

    def lift(op, d):
        out = None
        for k in range(grid.N):
            m = op if k == d else eye[k]
            out = m if out is None else sparse.kron(out, m, format="csr")
        return out

    mesh = [m.ravel() for m in grid.mesh()]
    total = sparse.csr_matrix((int(np.prod(ns)), int(np.prod(ns))))
    for i in range(grid.N):
        total = total + p.Q[i, i] * lift(mats[i][0], i)
        for j in range(i + 1, grid.N):
            if p.Q[i, j] != 0.0:
                total = total + 2 * p.Q[i, j] * (lift(mats[i][1], i) @ lift(mats[j][1], j))
    for i in range(grid.N):
        v = sum(p.B[i, j] * mesh[j] for j in range(grid.N))
        fwd = lift(mats[i][2], i)
        bwd = lift(mats[i][3], i)
        total = total + sparse.diags(np.maximum(v, 0.0)) @ fwd + sparse.diags(np.minimum(v, 0.0)) @ bwd
    return total.tocsc()


def fd_solve(p: FracOUParams, grid: FourierGrid, u0: GridState, t: float, n_steps: int = 100) -> GridState:
    """Finite-difference oracle for ``s = 1``: Crank-Nicolson after a Rannacher start.

    The first step is replaced by four backward-Euler quarter steps to damp
    grid-scale components.
    """
    if u0.grid != grid or grid.N != p.N:
        raise ValueError("dimension mismatch")
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return GridState(u0.values.copy(), grid)
    if n_steps < 2:
        raise ValueError("need at least two time steps")
    A = fd_operator(p, grid)
    I = sparse.identity(A.shape[0], format="csc")
    dt = t / n_steps
    u = u0.values.ravel().copy()
    be = splu((I - 0.25 * dt * A).tocsc())
    for _ in range(4):
        u = be.solve(u)
    lhs = splu((I - 0.5 * dt * A).tocsc())
    rhs = (I + 0.5 * dt * A).tocsr()
    for _ in range(n_steps - 1):
        u = lhs.solve(rhs @ u)
    if not np.all(np.isfinite(u)):
        raise ArithmeticError("time stepping diverged")
    return GridState(u.reshape(grid.points), grid, meta={"t": t})


def invariant_covariance(B, Q=None) -> np.ndarray:
    """Stationary covariance: the solution of ``B S + S B^T = -2 Q`` (``Q = I`` by default)."""
    B = np.atleast_2d(np.asarray(B, dtype=float))
    n = B.shape[0]
    Q = np.eye(n) if Q is None else np.atleast_2d(np.asarray(Q, dtype=float))
    ev = np.linalg.eigvals(B)
    if np.max(ev.real) >= 0:
        raise ValueError("B must have spectrum in the open left half-plane")
    S = linalg.solve_continuous_lyapunov(B, -2.0 * Q)
    S = 0.5 * (S + S.T)
    res = np.linalg.norm(B @ S + S @ B.T + 2.0 * Q)
    if res > 1e-10 * max(1.0, np.linalg.norm(S)):
        raise ArithmeticError(f"Lyapunov residual {res:.2e} too large")
    if np.linalg.eigvalsh(S).min() <= 0:
        raise ArithmeticError("covariance is not positive definite")
    return S


def gaussian_density(grid: FourierGrid, Sigma) -> np.ndarray:
    Sigma = np.atleast_2d(np.asarray(Sigma, dtype=float))
    X = np.stack([m.ravel() for m in grid.mesh()])
    P = np.linalg.inv(Sigma)
    quad = np.einsum("ik,ij,jk->k", X, P, X)
    norm = (2 * np.pi) ** (grid.N / 2) * math.sqrt(np.linalg.det(Sigma))
    return (np.exp(-0.5 * quad) / norm).reshape(grid.points)


def weighted_norm(u: GridState, Sigma) -> float:
    """Norm in ``L^2(mu)`` for the centered Gaussian ``mu`` with covariance ``Sigma``."""
    rho = gaussian_density(u.grid, Sigma)
    dv = u.grid.cell_volume
    mass = float(np.sum(rho) * dv)
    if mass < 1.0 - 1e-8:
        raise ValueError(f"grid does not resolve the Gaussian weight (mass {mass:.3e})")
    return float(math.sqrt(np.sum(u.values**2 * rho) * dv))


@dataclass(frozen=True)
class LatticeBallRegion:
    """Union of closed balls of radius ``radius`` centered on ``offset + spacing * Z^N``."""

    spacing: tuple
    radius: float
    offset: tuple = None

    def __post_init__(self):
        sp = tuple(float(s) for s in np.atleast_1d(self.spacing))
        off = tuple(0.0 for _ in sp) if self.offset is None else tuple(float(o) for o in np.atleast_1d(self.offset))
        if len(off) != len(sp):
            raise ValueError("offset and spacing dimensions differ")
        if any(s <= 0 for s in sp) or self.radius <= 0:
            raise ValueError("spacing and radius must be positive")
        object.__setattr__(self, "spacing", sp)
        object.__setattr__(self, "offset", off)

    @property
    def N(self) -> int:
        return len(self.spacing)

    def nearest_center_distance(self, pts) -> np.ndarray:
        """Distance from each row of ``pts`` to the nearest lattice point."""
        pts = np.atleast_2d(pts)
        sp, off = np.array(self.spacing), np.array(self.offset)
        rel = (pts - off) / sp
        return np.linalg.norm((rel - np.round(rel)) * sp, axis=1)

    def contains(self, pts) -> np.ndarray:
        return self.nearest_center_distance(pts) <= self.radius

    def mask(self, grid: FourierGrid) -> np.ndarray:
        X = np.stack([m.ravel() for m in grid.mesh()], axis=1)
        return self.contains(X).reshape(grid.points)


@dataclass
class GeomVerdict:
    passed: bool
    worst_probe: np.ndarray
    worst_distance: float
    covering_bound: float
    exact: bool


def geom_check(region: LatticeBallRegion, delta: float, r_wit: float, probes: int = 1000,
               seed: int = 0) -> GeomVerdict:
    """Decide whether every point lies within ``delta`` of a center ``y'`` with
    ``B(y', r_wit)`` inside the region.

    Admissible centers contain the balls ``B(c, radius - r_wit)`` around the
    lattice points; that set is exact when the balls do not overlap
    (``radius <= min(spacing)/2``) and a sufficient witness set otherwise. By
    periodicity the farthest point from it is a cell corner, at distance
    ``half cell diagonal - (radius - r_wit)``. Random probes in a fundamental
    cell plus all cell corners are checked on top of that bound.
    """
    if probes < 1:
        raise ValueError("need at least one probe")
    sp = np.array(region.spacing)
    off = np.array(region.offset)
    exact = region.radius <= sp.min() / 2
    slack = region.radius - r_wit
    covering = 0.5 * float(np.linalg.norm(sp))
    rng = np.random.default_rng(seed)
    corners = np.array(np.meshgrid(*[[0.0, 0.5, 1.0]] * region.N, indexing="ij")).reshape(region.N, -1).T
    pts = off + np.vstack([corners, rng.random((probes, region.N))]) * sp
    if slack < 0:
        d = region.nearest_center_distance(pts)
        i = int(np.argmax(d))
        return GeomVerdict(False, pts[i], math.inf, math.inf, exact)
    dist = np.maximum(region.nearest_center_distance(pts) - slack, 0.0)
    i = int(np.argmax(dist))
    bound = max(covering - slack, 0.0)
    # witness balls must sit inside the region: probe their boundaries
    ang = rng.normal(size=(256, region.N))
    ang /= np.linalg.norm(ang, axis=1, keepdims=True)
    shift = rng.normal(size=region.N)
    shift *= slack / max(np.linalg.norm(shift), 1e-300)
    inside = bool(np.all(region.nearest_center_distance(off + shift + r_wit * ang) <= region.radius * (1 + 1e-12)))
    passed = inside and bound < delta and float(dist[i]) < delta
    return GeomVerdict(bool(passed), pts[i], float(dist[i]), bound, exact)
