"""Initial-data recovery from interior observations.

The forward map sends initial data to its restriction to the observation
region at each observation time. Data live in ``L^2(t_1, t_m; L^2(omega))``
discretized by trapezoid weights in time and quadrature weights on the
region; the model space carries its own weights, so ``adjoint`` is the true
adjoint for those inner products and not just a transpose.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .frac_ou import FourierGrid, FracOUParams, GridState, LatticeBallRegion, fourier_solve
from .spectral import SineBasis, SpectralModel, Trajectory, cell_centers, mode_factors, transport_solve

log = logging.getLogger(__name__)

TAU = 1.1
MAX_ITER_CGNE = 500
MAX_ITER_LANDWEBER = 5000


@dataclass(frozen=True)
class IntervalMask:
    """Union of open intervals inside a 1-D spectral domain."""

    intervals: tuple

    def __post_init__(self):
        iv = tuple((float(a), float(b)) for a, b in self.intervals)
        if not iv or any(b <= a for a, b in iv):
            raise ValueError("mask must contain at least one interval of positive length")
        object.__setattr__(self, "intervals", tuple(sorted(iv)))

    @property
    def measure(self) -> float:
        return sum(b - a for a, b in self.intervals)


@dataclass(frozen=True)
class GridMask:
    """Indicator of a lattice-ball region (or any boolean array) on a Fourier grid."""

    grid: FourierGrid
    indicator: np.ndarray

    def __post_init__(self):
        ind = np.asarray(self.indicator, dtype=bool)
        if ind.shape != self.grid.points:
            raise ValueError("indicator does not match the grid")
        if not ind.any():
            raise ValueError("mask has no grid points")
        object.__setattr__(self, "indicator", ind)

    @classmethod
    def from_region(cls, region: LatticeBallRegion, grid: FourierGrid) -> "GridMask":
        return cls(grid, region.mask(grid))


def time_weights(times) -> np.ndarray:
    """Trapezoid weights on the observation grid; a single snapshot gets weight 1."""
    t = np.asarray(times, dtype=float)
    if t.size == 1:
        return np.ones(1)
    w = np.zeros_like(t)
    dt = np.diff(t)
    w[:-1] += 0.5 * dt
    w[1:] += 0.5 * dt
    return w


@dataclass
class Observation:
    times: np.ndarray
    values: np.ndarray
    point_weights: np.ndarray
    time_weights: np.ndarray = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.time_weights is None:
            self.time_weights = time_weights(self.times)
        if self.values.shape != (self.times.size, self.point_weights.size):
            raise ValueError("data dimensions do not match the mask")

    def snapshot_norms(self) -> np.ndarray:
        return np.sqrt(np.sum(self.point_weights * self.values**2, axis=1))

    def norm(self) -> float:
        """Discrete ``L^2(0, T; L^2(omega))`` norm."""
        return float(math.sqrt(np.sum(self.time_weights * self.snapshot_norms() ** 2)))

    def h1_norm(self) -> float:
        """``H^1`` in time: adds second-order finite differences of the snapshots."""
        if self.times.size < 3:
            raise ValueError("need at least three observation times for an H1 norm")
        dv = np.gradient(self.values, self.times, axis=0, edge_order=2)
        dn = np.sum(self.point_weights * dv**2, axis=1)
        return float(math.sqrt(self.norm() ** 2 + np.sum(self.time_weights * dn)))


def _interval_quadrature(mask: IntervalMask, domain, dim: int):
    lo, hi = domain
    xs, ws = [], []
    xg, wg = np.polynomial.legendre.leggauss(16)
    for a, b in mask.intervals:
        if a < lo - 1e-12 or b > hi + 1e-12:
            raise ValueError(f"mask interval ({a}, {b}) outside the domain {domain}")
        panels = max(4, dim // 2)
        edges = np.linspace(a, b, panels + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[:-1] + edges[1:])
        xs.append((mid[:, None] + half[:, None] * xg).ravel())
        ws.append((half[:, None] * wg).ravel())
    return np.concatenate(xs), np.concatenate(ws)


class LinearForward:
    """``x -> [C u(t_i)]_i`` as a stack of matrices with weighted inner products."""

    def __init__(self, mats: np.ndarray, domain_weights, point_weights, times, final_state=None):
        self.mats = np.asarray(mats, dtype=float)          # (n_times, m, n)
        self.domain_weights = np.asarray(domain_weights, dtype=float)
        self.point_weights = np.asarray(point_weights, dtype=float)
        self.times = np.asarray(times, dtype=float)
        self.time_weights = time_weights(self.times)
        self._final_state = final_state
        if self.mats.shape[0] != self.times.size:
            raise ValueError("one matrix per observation time required")
        if self.mats.shape[1] != self.point_weights.size or self.mats.shape[2] != self.domain_weights.size:
            raise ValueError("geometry mismatch between matrices and weights")

    @property
    def T(self) -> float:
        return float(self.times[-1])

    def __call__(self, x) -> Observation:
        x = np.asarray(x, dtype=float)
        if x.shape != self.domain_weights.shape:
            raise ValueError("state dimension mismatch")
        return Observation(self.times, self.mats @ x, self.point_weights, self.time_weights)

    def adjoint(self, data) -> np.ndarray:
        d = data.values if isinstance(data, Observation) else np.atleast_2d(np.asarray(data, dtype=float))
        if d.shape != self.mats.shape[:2]:
            raise ValueError("data dimension mismatch")
        wd = (self.time_weights[:, None] * self.point_weights[None, :]) * d
        return np.einsum("tmn,tm->n", self.mats, wd) / self.domain_weights

    def domain_inner(self, x, y) -> float:
        return float(np.sum(self.domain_weights * x * y))

    def domain_norm(self, x) -> float:
        return math.sqrt(max(self.domain_inner(x, x), 0.0))

    def data_inner(self, a, b) -> float:
        va = a.values if isinstance(a, Observation) else np.asarray(a)
        vb = b.values if isinstance(b, Observation) else np.asarray(b)
        return float(np.sum(self.time_weights[:, None] * self.point_weights[None, :] * va * vb))

    def final_state_norm(self, x) -> float:
        """``||u(T)||`` in the model norm."""
        return float(self._final_state(np.asarray(x, dtype=float)))

    def operator_norm_sq(self, iters: int = 50, seed: int = 0) -> float:
        rng = np.random.default_rng(seed)
        x = rng.normal(size=self.domain_weights.size)
        lam = 0.0
        for _ in range(iters):
            x = x / self.domain_norm(x)
            y = self.adjoint(self(x))
            lam = self.domain_inner(x, y)
            x = y
        return lam


def spectral_forward(model: SpectralModel, alpha: float, mask: IntervalMask, times) -> LinearForward:
    times = np.asarray(times, dtype=float)
    if times.size == 0 or np.any(times <= 0) or np.any(np.diff(times) <= 0):
        raise ValueError("observation times must be increasing and positive")
    factors = mode_factors(model, alpha, times)                    # (n_times, dim)
    if isinstance(model.basis, SineBasis):
        xq, wq = _interval_quadrature(mask, model.basis.domain, model.dim)
        phi = model.basis_matrix(xq)
    else:
        nodes = model.basis.nodes
        sel = np.zeros(nodes.size, dtype=bool)
        for a, b in mask.intervals:
            sel |= (nodes > a) & (nodes < b)
        if not sel.any():
            raise ValueError("mask contains no grid nodes")
        phi = model.basis.vectors[sel]
        wq = model.basis.weights[sel]
    mats = phi[None, :, :] * factors[:, None, :]
    fT = factors[-1]

    def final_state(x):
        return np.linalg.norm(fT * x)

    return LinearForward(mats, np.ones(model.dim), wq, times, final_state)


def frac_ou_forward(p: FracOUParams, grid: FourierGrid, mask: GridMask, times) -> LinearForward:
    """Forward map of the fractional OU solver, assembled column by column (1-D grids)."""
    if grid.N != 1:
        raise ValueError("assembled frac-OU forward maps are limited to 1-D grids")
    n = grid.points[0]
    if n > 1024:
        raise ValueError("grid too large to assemble")
    times = np.asarray(times, dtype=float)
    h = grid.cell_volume
    sel = mask.indicator.ravel()
    eye = np.eye(n)
    S = []
    for t in times:
        cols = [fourier_solve(p, grid, GridState(eye[j], grid), t, check=False).values for j in range(n)]
        S.append(np.array(cols).T)
    S = np.array(S)
    mats = S[:, sel, :]
    ST = S[-1]

    def final_state(x):
        return math.sqrt(h * np.sum((ST @ x) ** 2))

    return LinearForward(mats, np.full(n, h), np.full(int(sel.sum()), h), times, final_state)


def transport_forward(n_cells: int, T: float) -> LinearForward:
    """Final-time snapshot of the transport counterexample on the whole interval.

    Information carried out through the outflow boundary is lost, so this map
    has a kernel; it serves as the ill-posed negative control.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    x = cell_centers(n_cells)
    h = 1.0 / n_cells
    eye = np.eye(n_cells)
    S = np.array([transport_solve(eye[j], x, T) for j in range(n_cells)]).T

    def final_state(v):
        return math.sqrt(h * np.sum((S @ v) ** 2))

    return LinearForward(S[None], np.full(n_cells, h), np.full(n_cells, h), [T], final_state)


def observe(traj: Trajectory | Sequence[GridState], mask, model: SpectralModel | None = None) -> Observation:
    """Restrict each state to the mask; norms are quadratures over the mask."""
    if isinstance(mask, IntervalMask):
        if model is None or not isinstance(traj, Trajectory):
            raise ValueError("interval masks need a spectral trajectory and its model")
        if isinstance(model.basis, SineBasis):
            xq, wq = _interval_quadrature(mask, model.basis.domain, model.dim)
            vals = traj.states @ model.basis_matrix(xq).T
        else:
            nodes = model.basis.nodes
            sel = np.zeros(nodes.size, dtype=bool)
            for a, b in mask.intervals:
                sel |= (nodes > a) & (nodes < b)
            vals = traj.states @ model.basis.vectors[sel].T
            wq = model.basis.weights[sel]
        return Observation(traj.times, vals, wq)
    if isinstance(mask, GridMask):
        states = list(traj)
        if any(s.grid != mask.grid for s in states):
            raise ValueError("geometry mismatch between states and mask")
        times = [s.meta.get("t", i) for i, s in enumerate(states)]
        vals = np.array([s.values[mask.indicator] for s in states])
        w = np.full(vals.shape[1], mask.grid.cell_volume)
        return Observation(np.asarray(times, dtype=float), vals, w)
    raise TypeError(f"unsupported mask type {type(mask).__name__}")


@dataclass(frozen=True)
class AdmissibleSet:
    epsilon: float
    M: float

    def __post_init__(self):
        if not (0.0 < self.epsilon <= 1.0):
            raise ValueError("epsilon must lie in (0, 1] (1 is the D(A) variant)")
        if self.M <= 0.0:
            raise ValueError("M must be positive")


def admissible_norm(x, model: SpectralModel | None, aset: AdmissibleSet, forward: LinearForward | None = None):
    if model is not None:
        return model.epsilon_norm(x, aset.epsilon)
    return forward.domain_norm(x)


def project_admissible(x, aset: AdmissibleSet, model: SpectralModel | None = None,
                       forward: LinearForward | None = None) -> np.ndarray:
    """Radial projection onto the admissible ball."""
    nrm = admissible_norm(x, model, aset, forward)
    if nrm <= aset.M:
        return np.asarray(x, dtype=float).copy()
    return np.asarray(x, dtype=float) * (aset.M / nrm)


@dataclass
class InverseProblem:
    forward: LinearForward
    data: Observation
    noise_level: float = 0.0
    model: SpectralModel | None = None

    def __post_init__(self):
        if self.data.values.shape != self.forward.mats.shape[:2]:
            raise ValueError("data dimensions do not match the forward map")
        if self.noise_level < 0:
            raise ValueError("noise level must be nonnegative")


def make_problem(forward: LinearForward, u0, noise_level: float = 0.0, seed: int = 0,
                 model: SpectralModel | None = None) -> InverseProblem:
    """Synthetic data ``F u0 + noise`` with noise scaled to norm exactly ``noise_level``."""
    clean = forward(u0)
    vals = clean.values.copy()
    if noise_level > 0:
        rng = np.random.default_rng(seed)
        noise = rng.normal(size=vals.shape)
        noise *= noise_level / math.sqrt(forward.data_inner(noise, noise))
        vals += noise
    return InverseProblem(forward, Observation(clean.times, vals, clean.point_weights, clean.time_weights),
                          noise_level, model)


def forward_map(problem: InverseProblem, u0) -> Observation:
    return problem.forward(u0)


def adjoint_map(problem: InverseProblem, data) -> np.ndarray:
    return problem.forward.adjoint(data)


@dataclass
class ReconResult:
    u0: np.ndarray
    discrepancy: float
    iterations: int
    residual_history: list = field(default_factory=list)
    converged: bool = True
    projected: bool = False
    method: str = "cgne"


def _interp_step(r, q, step, target, F):
    """Smallest ``theta`` in (0, 1] with ``||r - theta step q|| = target``."""
    a = step**2 * F.data_inner(q, q)
    b = -2.0 * step * F.data_inner(r, q)
    c = F.data_inner(r, r) - target**2
    disc = b * b - 4 * a * c
    if a <= 0 or disc < 0:
        return 1.0
    theta = (-b - math.sqrt(disc)) / (2 * a)
    return min(max(theta, 0.0), 1.0)


def reconstruct(problem: InverseProblem, aset: AdmissibleSet | None = None, method: str = "cgne",
                tau: float = TAU, max_iter: int | None = None) -> ReconResult:
    """Iterative least squares with Morozov stopping at ``tau * noise_level``.

    When a step would jump below the noise level the step is shortened so the
    final discrepancy lands at ``(1 + tau)/2 * noise_level``. The result is
    projected radially onto the admissible ball when it leaves it.
    """
    if method not in ("cgne", "landweber"):
        raise ValueError(f"unknown method {method!r}")
    if tau <= 1.0:
        raise ValueError("tau must exceed 1")
    F = problem.forward
    v = problem.data.values
    delta = problem.noise_level
    if max_iter is None:
        max_iter = MAX_ITER_CGNE if method == "cgne" else MAX_ITER_LANDWEBER
    vnorm = math.sqrt(F.data_inner(v, v))
    stop_at = tau * delta if delta > 0 else 1e-13 * vnorm
    land_at = 0.5 * (1.0 + tau) * delta

    x = np.zeros(F.domain_weights.size)
    r = v.copy()
    rn = vnorm
    hist = [rn]
    converged = rn <= stop_at
    it = 0
    if method == "cgne":
        s = F.adjoint(r)
        p = s.copy()
        gamma = F.domain_inner(s, s)
    else:
        step = 1.0 / F.operator_norm_sq()
    while not converged and it < max_iter:
        if method == "cgne":
            if gamma <= 0.0:
                break
            q = F(p).values
            qq = F.data_inner(q, q)
            if qq <= 0.0:
                break
            a = gamma / qq
            direction = p
        else:
            direction = F.adjoint(r)
            q = F(direction).values
            a = step
        r_new = r - a * q
        rn_new = math.sqrt(max(F.data_inner(r_new, r_new), 0.0))
        it += 1
        if delta > 0 and rn_new < delta:
            theta = _interp_step(r, q, a, land_at, F)
            a *= theta
            r_new = r - a * q
            rn_new = math.sqrt(max(F.data_inner(r_new, r_new), 0.0))
        x = x + a * direction
        r = r_new
        rn = rn_new
        hist.append(rn)
        if rn <= stop_at:
            converged = True
            break
        if method == "cgne":
            s = F.adjoint(r)
            g_new = F.domain_inner(s, s)
            p = s + (g_new / gamma) * p
            gamma = g_new
    if not converged and delta == 0 and method == "cgne":
        # noise-free CGNE stalls only at a normal-equation solution
        converged = True
    if not converged:
        log.warning("reconstruction stopped after %d iterations, discrepancy %.3e", it, rn)
    projected = False
    if aset is not None:
        xp = project_admissible(x, aset, problem.model, F)
        if not np.array_equal(xp, x):
            projected = True
            x = xp
            res = F(x).values - v
            rn = math.sqrt(F.data_inner(res, res))
    return ReconResult(x, rn, it, hist, converged, projected, method)


def observability_ratio(forward: LinearForward, samples: Sequence) -> float:
    """``max ||u(T)||^2 / int ||C u||^2 dt`` over the batch: empirical lower bound for the observability constant."""
    best = 0.0
    used = 0
    for x in samples:
        d = forward(x).norm()
        if d == 0.0:
            warnings.warn("skipping sample with zero observation", RuntimeWarning, stacklevel=2)
            continue
        best = max(best, forward.final_state_norm(x) ** 2 / d**2)
        used += 1
    if used == 0:
        raise ValueError("no usable samples")
    return best


def sample_admissible(model: SpectralModel, aset: AdmissibleSet, n: int, rng) -> np.ndarray:
    """Coefficients ``g_n (1+lambda_n)^{-eps-0.05}`` rescaled to admissible norms uniform on ``[M/2, M]``."""
    decay = (1.0 + np.abs(model.lambdas)) ** (-aset.epsilon - 0.05)
    out = rng.normal(size=(n, model.dim)) * decay
    target = rng.uniform(0.5 * aset.M, aset.M, size=n)
    norms = np.array([model.epsilon_norm(c, aset.epsilon) for c in out])
    return out * (target / norms)[:, None]


@dataclass
class StabilityCurve:
    d: np.ndarray
    e: np.ndarray
    env_x: np.ndarray
    env_y: np.ndarray
    K_hat: float
    alpha_hat: float
    nonincreasing: bool

    def rows(self):
        return list(zip(self.d.tolist(), self.e.tolist()))


def stability_curve(forward: LinearForward, model: SpectralModel, aset: AdmissibleSet, n: int,
                    seed: int = 0, decades: float = 6.0, n_bins: int = 8,
                    samples: np.ndarray | None = None) -> StabilityCurve:
    """Pairs ``(||C u||, ||u0||)`` for admissible samples and a log-stability fit.

    Samples are scaled by ``10^{-U(0, decades)}``, which keeps them in the
    admissible ball and spreads the data norms over several decades. The
    envelope is the 90th percentile of ``||u0||`` in equal-width bins of
    ``log |log d|``; ``(K, alpha)`` come from a least-squares fit of
    ``log e = log K - alpha log |log d|`` on that envelope.
    """
    if n < 10:
        raise ValueError("stability curve needs n >= 10 samples")
    rng = np.random.default_rng(seed)
    X = sample_admissible(model, aset, n, rng) if samples is None else np.asarray(samples, dtype=float)
    scale = 10.0 ** (-rng.uniform(0.0, decades, size=X.shape[0]))
    X = X * scale[:, None]
    d = np.array([forward(x).norm() for x in X])
    e = np.array([forward.domain_norm(x) for x in X])
    keep = (d > 0) & (d < 1)
    d, e = d[keep], e[keep]
    if d.size < 10 or np.log10(d.max() / d.min()) < 2.0:
        raise ValueError("insufficient decade span in data norms")
    ll = np.log(np.abs(np.log(d)))
    edges = np.linspace(ll.min(), ll.max(), n_bins + 1)
    idx = np.clip(np.digitize(ll, edges) - 1, 0, n_bins - 1)
    ex, ey = [], []
    for b in range(n_bins):
        sel = idx == b
        if sel.sum() < 2:
            continue
        ex.append(float(np.mean(np.abs(np.log(d[sel])))))
        ey.append(float(np.quantile(e[sel], 0.9)))
    ex, ey = np.array(ex), np.array(ey)
    slope, intercept = np.polyfit(np.log(ex), np.log(ey), 1)
    mono = bool(np.all(np.diff(ey) <= 1e-12 * np.max(ey)))
    return StabilityCurve(d, e, ex, ey, float(math.exp(intercept)), float(-slope), mono)
