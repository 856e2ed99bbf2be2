"""Harmonic interpolation weight for analytic semigroups of angle ``psi``.

On the real segment ``[0, T]`` the weight is ``w(t) = h^{-1}(t) / T`` with
``h = f o g``,

    g(z) = T sin^2(pi z / 2T),
    f(x) = (T sin psi / pi) int_0^{x/T} s^{a-1} (1-s)^{-a} ds,   a = psi / pi.

Because ``B(a, 1-a) = pi / sin psi`` the map ``f`` is ``T`` times a
regularized incomplete beta function; that identity is not used here, it is
what the tests check the quadrature against. The integrand left after
factoring out the endpoint weight is analytic on [0, 1] (nearest singularity
at s = 2), so a modest rule converges; large Gauss-Jacobi rules lose
accuracy through their weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, linalg, optimize
from scipy.special import gamma, roots_jacobi

from .spectral import Trajectory

GJ_NODES = 24
GJ_CHECK_NODES = 16
QUAD_TARGET = 1e-12
PSI_UNCERTAINTY = 0.02


@dataclass(frozen=True)
class Sector:
    psi: float
    K: float = 1.0
    kappa: float = 0.0
    T: float = 1.0
    psi_uncertainty: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.psi <= math.pi / 2 + 1e-15):
            raise ValueError(f"psi must lie in (0, pi/2], got {self.psi}")
        if self.K < 1.0:
            raise ValueError("K must be >= 1")
        if self.kappa < 0.0:
            raise ValueError("kappa must be >= 0")
        if self.T <= 0.0:
            raise ValueError("T must be positive")

    def slackened(self) -> "Sector":
        """The same sector with ``psi`` reduced by its uncertainty band."""
        psi = max(self.psi - self.psi_uncertainty, 1e-6)
        return Sector(psi, self.K, self.kappa, self.T, 0.0)


@lru_cache(maxsize=64)
def _gj_rule(n: int, a: float, b: float):
    """Gauss-Jacobi rule mapped to [0, 1] for the weight s^b (1-s)^a."""
    x, w = roots_jacobi(n, a, b)
    return 0.5 * (x + 1.0), w * 0.5 ** (a + b + 1.0)


def _left_piece(X, a, n):
    # int_0^X s^{a-1}(1-s)^{-a} ds = X^a int_0^1 sig^{a-1} (1 - X sig)^{-a} dsig
    s, w = _gj_rule(n, 0.0, a - 1.0)
    return X**a * np.dot(w, (1.0 - X * s) ** (-a))


def _right_piece(Y, a, n):
    # int_{1-Y}^1 s^{a-1}(1-s)^{-a} ds = Y^{1-a} int_0^1 sig^{-a} (1 - Y sig)^{a-1} dsig
    s, w = _gj_rule(n, 0.0, -a)
    return Y ** (1.0 - a) * np.dot(w, (1.0 - Y * s) ** (a - 1.0))


def _f_integral(X, a, n=GJ_NODES):
    """``int_0^X s^{a-1}(1-s)^{-a} ds`` for ``X`` in [0, 1]."""
    if X <= 0.5:
        return _left_piece(X, a, n)
    total = _left_piece(0.5, a, n) + _right_piece(0.5, a, n)
    return total - _right_piece(1.0 - X, a, n)


def _f_integral_adaptive(X, a):
    def integrand(s):
        return s ** (a - 1.0) * (1.0 - s) ** (-a)

    val, _ = integrate.quad(integrand, 0.0, X, epsabs=0.0, epsrel=QUAD_TARGET, limit=500)
    return val


@lru_cache(maxsize=65536)
def _f_scaled(X: float, a: float) -> float:
    hi = _f_integral(X, a, GJ_NODES)
    lo = _f_integral(X, a, GJ_CHECK_NODES)
    if abs(hi - lo) > QUAD_TARGET * max(abs(hi), 1e-300):
        hi = _f_integral_adaptive(X, a)
    return float(hi)


def _check_t(sector: Sector, z: float) -> float:
    z = float(z)
    if not (0.0 <= z <= sector.T * (1 + 1e-14)):
        raise ValueError(f"argument {z} outside [0, {sector.T}]")
    return min(z, sector.T)


def weight_g(sector: Sector, z: float) -> float:
    z = _check_t(sector, z)
    return sector.T * math.sin(math.pi * z / (2.0 * sector.T)) ** 2


def weight_f(sector: Sector, x: float) -> float:
    x = _check_t(sector, x)
    if x == 0.0:
        return 0.0
    a = sector.psi / math.pi
    X = min(x / sector.T, 1.0)
    return sector.T * math.sin(sector.psi) / math.pi * _f_scaled(X, a)


def weight_h(sector: Sector, z: float) -> float:
    return weight_f(sector, weight_g(sector, z))


def _h_prime(sector: Sector, z: float) -> float:
    T, a = sector.T, sector.psi / math.pi
    X = weight_g(sector, z) / T
    if X <= 0.0 or X >= 1.0:
        return math.inf
    fp = math.sin(sector.psi) / math.pi * X ** (a - 1.0) * (1.0 - X) ** (-a)
    gp = 0.5 * math.pi * math.sin(math.pi * z / T)
    return fp * gp


def weight_w(sector: Sector, t: float) -> float:
    """``h^{-1}(t) / T`` by bracketed root finding plus two Newton polish steps."""
    t = _check_t(sector, t)
    T = sector.T
    if t == 0.0:
        return 0.0
    if t >= T:
        return 1.0

    def resid(z):
        return weight_h(sector, z) - t

    z = optimize.brentq(resid, 0.0, T, xtol=1e-13 * T, rtol=4 * np.finfo(float).eps, maxiter=200)
    r = resid(z)
    for _ in range(2):
        d = _h_prime(sector, z)
        if not math.isfinite(d) or d <= 0:
            break
        zn = z - r / d
        if not (0.0 < zn < T):
            break
        rn = resid(zn)
        if abs(rn) >= abs(r):
            break
        z, r = zn, rn
    return z / T


def weight_lower_bound(sector: Sector, t: float) -> float:
    """``(2/pi) (psi / sin psi)^{pi/2psi} (t/T)^{pi/2psi}``."""
    t = float(t)
    if not (0.0 < t <= sector.T * (1 + 1e-14)):
        raise ValueError("lower bound needs 0 < t <= T")
    psi = sector.psi
    e = math.pi / (2.0 * psi)
    return 2.0 / math.pi * (psi / math.sin(psi)) ** e * (min(t, sector.T) / sector.T) ** e


@dataclass
class WeightTable:
    sector: Sector
    ts: np.ndarray
    ws: np.ndarray
    lower: np.ndarray = field(default=None)

    def __call__(self, t):
        return np.interp(t, self.ts, self.ws)


def weight_table(sector: Sector, n: int = 101) -> WeightTable:
    ts = np.linspace(0.0, sector.T, n)
    ws = np.array([weight_w(sector, t) for t in ts])
    lower = np.array([0.0] + [weight_lower_bound(sector, t) for t in ts[1:]])
    return WeightTable(sector, ts, ws, lower)


def psi_constant(psi: float, c: float) -> float:
    return c / math.pi * (psi / math.sin(psi)) ** (math.pi / (2.0 * psi))


def stability_envelope(sector: Sector, d: float, K1: float = 1.0, alpha: float = 1.0, c: float = 1.0) -> float:
    """Logarithmic stability bound for data norm ``d`` in ``(0, 1)``.

    ``K1``, ``alpha`` and ``c`` are not determined by the theory; pass fitted
    or assumed values.
    """
    if not (0.0 < d < 1.0):
        raise ValueError("data norm must lie in (0, 1)")
    psi = sector.psi
    q = 2.0 * psi / math.pi
    cpsi = psi_constant(psi, c)
    inner = 2.0 * psi * gamma(q) / (math.pi * abs(cpsi * math.log(d)) ** q)
    return K1 * inner**alpha


class NotSectorialError(ValueError):
    pass


def _hermitian_top(M) -> float:
    return float(linalg.eigvalsh(0.5 * (M + M.conj().T))[-1])


def _sample_numerical_range(A, n, rng):
    d = A.shape[0]
    U = rng.normal(size=(n, d)) + 1j * rng.normal(size=(n, d))
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    return np.einsum("ij,jk,ik->i", U.conj(), A, U)


def matrix_sector_estimate(A, n_samples: int = 100_000, seed: int = 0, n_rays: int = 9,
                           T: float = 1.0) -> Sector:
    """Estimate ``(psi, K, kappa)`` with ``||e^{zA}|| <= K e^{kappa Re z}`` on the sector.

    ``kappa`` is the top of the numerical range's real part. The angle comes
    from random numerical-range samples, then is polished by bisection on
    ``theta`` with the exact half-plane test ``lambda_max(Herm(e^{+-i theta}(A -
    kappa))) <= 0``. ``K`` is the largest sampled ``||e^{zA}|| e^{-kappa Re z}``
    on rays of the sector, floored at 1.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[0] != A.shape[1]:
        raise ValueError("A must be square")
    rng = np.random.default_rng(seed)
    z = _sample_numerical_range(A, n_samples, rng)
    kappa = max(0.0, _hermitian_top(A.astype(complex)))
    Ak = A - kappa * np.eye(A.shape[0])
    scale = max(np.linalg.norm(A, 2), 1.0)

    zs = z - kappa
    big = np.abs(zs) > 1e-12 * scale
    spread = float(np.max(np.abs(np.angle(-zs[big])))) if np.any(big) else 0.0
    psi_sampled = math.pi / 2 - spread

    def ok(theta):
        tol = 1e-12 * scale
        return all(_hermitian_top(np.exp(s * 1j * theta) * Ak) <= tol for s in (1.0, -1.0))

    lo, hi = 0.0, math.pi / 2
    if ok(hi):
        psi = hi
    else:
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if ok(mid) else (lo, mid)
        psi = lo
    psi = min(psi, psi_sampled)
    if psi <= 1e-8:
        raise NotSectorialError("numerical range is not sectorial around kappa")

    K = 1.0
    radii = np.geomspace(1e-3, 10.0, 25) * T
    for theta in np.linspace(-psi, psi, n_rays):
        for r in radii:
            zz = r * np.exp(1j * theta)
            nrm = np.linalg.norm(linalg.expm(zz * A), 2) * math.exp(-kappa * zz.real)
            K = max(K, float(nrm))
    return Sector(psi, K, kappa, T, PSI_UNCERTAINTY)


def matrix_semigroup_trajectory(A, u0, times) -> Trajectory:
    """States ``e^{t A} u0`` by scaling-and-squaring exponentials."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    u0 = np.asarray(u0, dtype=float)
    times = np.asarray(times, dtype=float)
    if np.any(times < 0):
        raise ValueError("times must be nonnegative")
    states = np.empty((times.size, u0.size))
    for i, t in enumerate(times):
        E = linalg.expm(t * A)
        if not np.all(np.isfinite(E)):
            raise ArithmeticError(f"matrix exponential failed at t={t}")
        states[i] = E @ u0
    norms = np.linalg.norm(states, axis=1)
    return Trajectory(times, states, norms, float(times[-1]), meta={"kind": "matrix"})
