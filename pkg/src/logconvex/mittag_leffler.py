"""Mittag-Leffler functions on the nonpositive real axis and the L1 Caputo scheme.

The evaluator picks one of four routes per argument:

* Taylor series in double precision, accepted only while the ratio of the
  absolute term sum to the result keeps cancellation below ~1e-13;
* the smallest-term truncated asymptotic expansion, accepted when the first
  omitted term is below 1e-15 of the sum;
* for ``beta == 1`` and ``alpha < 1``, the Laplace-type integral

      E_a(-y) = sin(a pi)/(a pi) * int_0^inf exp(-u**(1/a)) y / (u**2 + 2 u y cos(a pi) + y**2) du

  whose integrand is positive, so there is nothing to cancel;
* a multiprecision Taylor series as the last resort for general ``beta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath
import numpy as np
from scipy import integrate
from scipy.special import gammaln, rgamma

__all__ = [
    "DomainError",
    "MLParams",
    "SampledFunction",
    "ml_eval",
    "ml_eval_array",
    "ml_series",
    "ml_asymptotic",
    "ml_integral",
    "ml_monotonicity_report",
    "MonotonicityReport",
    "caputo_apply",
]

_EPS = np.finfo(float).eps
SERIES_MAX_ABS_X = 5.0
SERIES_COND_LIMIT = 1e3
ASYMPTOTIC_MIN_ABS_X = 5.0
ASYMPTOTIC_REL_TOL = 1e-15


class DomainError(ValueError):
    """Argument or parameters outside the supported domain."""


@dataclass(frozen=True)
class MLParams:
    alpha: float
    beta: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.alpha <= 1.0):
            raise DomainError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not self.beta > 0.0:
            raise DomainError(f"beta must be positive, got {self.beta}")


@dataclass(frozen=True)
class SampledFunction:
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)
        if t.ndim != 1 or v.shape != t.shape:
            raise ValueError("times and values must be 1-D arrays of equal length")
        if t.size < 3:
            raise ValueError("grid too coarse: need at least 3 points")
        if t[0] != 0.0:
            raise ValueError("times must start at 0")
        if np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")


def _check_x(x: float) -> float:
    x = float(x)
    if not math.isfinite(x) or x > 0.0:
        raise DomainError(f"only x <= 0 is supported, got {x}")
    return x


def ml_series(p: MLParams, x: float) -> tuple[float, float]:
    """Double-precision Taylor series.

    Returns ``(value, cond)`` where ``cond = sum|term| / |sum|`` measures the
    cancellation; the rounding error is roughly ``cond * eps``.
    """
    x = _check_x(x)
    if x == 0.0:
        return float(rgamma(p.beta)), 1.0
    logx = math.log(-x)
    s = 0.0
    comp = 0.0
    abs_sum = 0.0
    k = 0
    while True:
        mag = math.exp(k * logx - gammaln(p.alpha * k + p.beta))
        term = mag if k % 2 == 0 else -mag
        # Neumaier compensated summation
        t = s + term
        if abs(s) >= abs(term):
            comp += (s - t) + term
        else:
            comp += (term - t) + s
        s = t
        abs_sum += mag
        k += 1
        # terms decrease monotonically once alpha*k + beta exceeds |x|**(1/alpha)
        if mag < 1e-18 * abs(s + comp) and k * p.alpha + p.beta > (-x) ** (1 / p.alpha) + 1:
            break
        if k > 100000:
            raise DomainError("series did not converge")
    value = s + comp
    cond = abs_sum / abs(value) if value != 0.0 else math.inf
    return value, cond


def ml_asymptotic(p: MLParams, x: float, kmax: int = 400) -> tuple[float, float]:
    """Smallest-term truncated expansion ``-sum_k x**-k / Gamma(beta - alpha k)``.

    Returns ``(value, err)`` with ``err`` the magnitude of the first omitted
    nonzero term. Only meaningful for ``alpha < 1``; at ``alpha == 1`` every
    term vanishes and the error estimate is reported as infinite.
    """
    x = _check_x(x)
    if x == 0.0:
        raise DomainError("asymptotic expansion needs x < 0")
    if p.alpha == 1.0:
        return 0.0, math.inf
    y = -x
    total = 0.0
    prev = math.inf
    err = math.inf
    for k in range(1, kmax + 1):
        rg = float(rgamma(p.beta - p.alpha * k))
        if rg == 0.0:
            continue
        # -x**(-k) = -(-1)**k y**(-k)
        term = -((-1.0) ** k) * rg * y ** (-k)
        mag = abs(term)
        if mag >= prev:
            err = mag
            break
        total += term
        prev = mag
        err = mag
        if mag < 1e-17 * abs(total):
            break
    return total, err


def _integrand(u, y, alpha, c):
    return math.exp(-(u ** (1.0 / alpha))) * y / (u * u + 2.0 * u * y * c + y * y)


def ml_integral(p: MLParams, x: float) -> float:
    """Positive-integrand representation, valid for ``beta == 1``, ``alpha < 1``."""
    x = _check_x(x)
    if p.beta != 1.0 or p.alpha >= 1.0:
        raise DomainError("integral representation needs beta == 1 and alpha < 1")
    if x == 0.0:
        return 1.0
    y = -x
    a = p.alpha
    c = math.cos(a * math.pi)
    sn = math.sin(a * math.pi)
    # exp(-u**(1/a)) < 1e-320 beyond this point
    upper = 740.0 ** a
    peak = -y * c
    width = y * sn
    pts = sorted({b for b in (peak - 4 * width, peak, peak + 4 * width) if 0.0 < b < upper})
    edges = [0.0, *pts, upper]
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad(
            _integrand, lo, hi, args=(y, a, c), epsabs=0.0, epsrel=1e-13, limit=400
        )
        total += val
    return sn / (a * math.pi) * total


def _mp_series(p: MLParams, x: float) -> float:
    y = -x
    ks = np.arange(0, 20000)
    logs = ks * math.log(y) - gammaln(p.alpha * ks + p.beta)
    peak = float(np.max(logs)) / math.log(10)
    with mpmath.workdps(int(30 + max(peak, 0.0))):
        mx = mpmath.mpf(x)
        # the Gamma argument must be formed in extended precision too: a
        # rounding error of eps in alpha*k is amplified by the largest term
        ma, mb = mpmath.mpf(p.alpha), mpmath.mpf(p.beta)
        s = mpmath.mpf(0)
        k = 0
        while True:
            term = mx**k * mpmath.rgamma(ma * k + mb)
            s += term
            k += 1
            if k * p.alpha + p.beta > y ** (1 / p.alpha) + 1 and abs(term) < abs(s) * mpmath.mpf(10) ** -25:
                break
        return float(s)


def ml_eval(p: MLParams, x: float) -> float:
    """Evaluate ``E_{alpha,beta}(x)`` for real ``x <= 0``.

    Relative error is below 1e-10 on ``[-50, 0]``. Raises ``DomainError`` for
    ``x > 0``.
    """
    x = _check_x(x)
    if x == 0.0:
        return float(rgamma(p.beta))
    if p.alpha == 1.0 and p.beta == 1.0:
        return math.exp(x)
    # the largest series term grows like exp(|x|**(1/alpha))
    if -x <= SERIES_MAX_ABS_X and (-x) ** (1.0 / p.alpha) <= 30.0:
        val, cond = ml_series(p, x)
        if cond <= SERIES_COND_LIMIT:
            return val
    if p.alpha < 1.0 and -x >= ASYMPTOTIC_MIN_ABS_X:
        val, err = ml_asymptotic(p, x)
        if val != 0.0 and err <= ASYMPTOTIC_REL_TOL * abs(val):
            return val
    if p.beta == 1.0 and p.alpha < 1.0:
        return ml_integral(p, x)
    return _mp_series(p, x)


def ml_eval_array(p: MLParams, xs) -> np.ndarray:
    """Elementwise :func:`ml_eval`; repeated arguments are evaluated once."""
    xs = np.asarray(xs, dtype=float)
    if np.any(xs > 0) or not np.all(np.isfinite(xs)):
        raise DomainError("only finite x <= 0 is supported")
    if p.alpha == 1.0 and p.beta == 1.0:
        return np.exp(xs)
    uniq, inv = np.unique(xs, return_inverse=True)
    vals = np.array([ml_eval(p, u) for u in uniq])
    return vals[inv].reshape(xs.shape)


@dataclass
class MonotonicityReport:
    positivity: float
    nonincrease: float
    first_difference: float
    second_difference: float
    passed: bool

    @property
    def max_violation(self) -> float:
        return max(self.positivity, self.nonincrease, self.first_difference, self.second_difference)


def ml_monotonicity_report(p: MLParams, grid, tol: float = 1e-9) -> MonotonicityReport:
    """Check complete-monotonicity symptoms of ``x -> E_alpha(-x)`` on a grid.

    Violations are reported as nonnegative magnitudes: how far a value is
    below zero, how much the sequence rises, and how far the 1st (2nd)
    divided differences are above (below) zero.
    """
    if p.beta != 1.0:
        raise DomainError("monotonicity report requires beta == 1")
    g = np.asarray(grid, dtype=float)
    if g.ndim != 1 or np.any(g < 0) or np.any(np.diff(g) <= 0):
        raise ValueError("grid must be increasing and nonnegative")
    e = ml_eval_array(p, -g)
    pos = float(max(0.0, -e.min())) if e.size else 0.0
    rise = d1v = d2v = 0.0
    if g.size >= 2:
        de = np.diff(e)
        rise = float(max(0.0, de.max()))
        d1 = de / np.diff(g)
        d1v = float(max(0.0, d1.max()))
        if g.size >= 3:
            d2 = np.diff(d1) / (0.5 * (g[2:] - g[:-2]))
            d2v = float(max(0.0, -d2.min()))
    rep = MonotonicityReport(pos, rise, d1v, d2v, passed=False)
    rep.passed = rep.max_violation <= tol
    return rep


def caputo_apply(g: SampledFunction, alpha: float) -> SampledFunction:
    """L1 discretization of the Caputo derivative of order ``alpha``.

    On a (possibly nonuniform) grid ``t_0 = 0 < ... < t_n``::

        D g(t_n) ~ 1/Gamma(2-alpha) * sum_j (g_{j+1}-g_j)/(t_{j+1}-t_j)
                   * [(t_n-t_j)**(1-alpha) - (t_n-t_{j+1})**(1-alpha)]

    The first entry is 0. ``alpha == 1`` falls back to second-order finite
    differences (central inside, one-sided at the ends).
    """
    if not (0.0 < alpha <= 1.0):
        raise DomainError(f"alpha must lie in (0, 1], got {alpha}")
    t, v = g.times, g.values
    if alpha == 1.0:
        return SampledFunction(t, np.gradient(v, t, edge_order=2))
    slopes = np.diff(v) / np.diff(t)
    out = np.zeros_like(v)
    a1 = 1.0 - alpha
    for n in range(1, t.size):
        tn = t[n]
        w = (tn - t[:n]) ** a1 - (tn - t[1 : n + 1]) ** a1
        out[n] = np.dot(w, slopes[:n])
    out *= rgamma(2.0 - alpha)
    return SampledFunction(t, out)
