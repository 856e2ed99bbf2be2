"""Logarithmic-convexity checks on computed trajectories.

Every inequality has the shape

    ||u(t)|| <= P(t) ||u(0)||^{1 - w(t)} ||u(T)||^{w(t)},

and differs only in the prefactor ``P`` and exponent ``w``. The ratio of the
two sides is evaluated in log space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .spectral import Trajectory

KINDS = ("self_adjoint", "fractional", "analytic", "frac_ou")
TOL_ANALYTIC = 1e-9
TOL_GRID = 1e-6
C_RESOLUTION = 1e-4

HOLDS = "HOLDS"
VIOLATED = "VIOLATED"
VIOLATION_DEGENERATE = "VIOLATION_DEGENERATE"


@dataclass(frozen=True)
class ConvexityForm:
    """Prefactor and exponent of one convexity inequality.

    * ``self_adjoint``: ``P = 1``, ``w = t/T``
    * ``fractional``: ``P = M``, ``w = t/T``
    * ``analytic``: ``P = K exp(kappa (t - T w))`` with ``w`` supplied
    * ``frac_ou``: ``P = K``, ``w = c t/T``
    """

    kind: str
    M: float = 1.0
    K: float = 1.0
    kappa: float = 0.0
    c: float = 1.0
    weight: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown convexity kind {self.kind!r}")
        if self.kind == "analytic" and self.weight is None:
            raise ValueError("analytic form needs a weight function")
        if self.kind == "frac_ou" and not (0.0 < self.c <= 1.0):
            raise ValueError("c must lie in (0, 1]")

    def exponent(self, times, T):
        s = np.asarray(times, dtype=float) / T
        if self.kind == "analytic":
            return np.asarray(self.weight(np.asarray(times, dtype=float)), dtype=float)
        if self.kind == "frac_ou":
            return self.c * s
        return s

    def log_prefactor(self, times, T):
        t = np.asarray(times, dtype=float)
        if self.kind == "self_adjoint":
            return np.zeros_like(t)
        if self.kind == "fractional":
            return np.full_like(t, math.log(self.M))
        if self.kind == "frac_ou":
            return np.full_like(t, math.log(self.K))
        w = self.exponent(t, T)
        return math.log(self.K) + self.kappa * (t - T * w)


@dataclass
class ConvexityReport:
    kind: str
    max_ratio: float
    argmax_time: float
    verdict: str
    tol: float
    times: np.ndarray = field(repr=False)
    ratios: np.ndarray = field(repr=False)
    parameters: dict = field(default_factory=dict)

    @property
    def holds(self) -> bool:
        return self.verdict == HOLDS

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "parameters": self.parameters,
            "max_ratio": self.max_ratio,
            "argmax_time": self.argmax_time,
            "verdict": self.verdict,
            "tol": self.tol,
        }


def _log(x):
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(x, dtype=float))


def log_ratios(traj: Trajectory, form: ConvexityForm) -> np.ndarray:
    """``log rho(t)`` on the trajectory grid; ``-inf`` where ``||u(t)|| = 0``."""
    T = traj.T
    n = traj.norms
    w = form.exponent(traj.times, T)
    l0, lT = _log(n[0]), _log(n[-1])
    lt = _log(n)
    with np.errstate(invalid="ignore"):
        rhs = form.log_prefactor(traj.times, T) + (1.0 - w) * l0 + w * lT
        # where w == 0 the endpoint factor is 1 even if ||u(T)|| == 0
        rhs = np.where(w == 0.0, form.log_prefactor(traj.times, T) + l0, rhs)
        out = lt - rhs
    return np.where(np.isneginf(lt), -np.inf, out)


def convexity_report(traj: Trajectory, form: ConvexityForm, tol: float = TOL_ANALYTIC) -> ConvexityReport:
    if traj.times.size == 0:
        raise ValueError("empty trajectory")
    params = {"M": form.M, "K": form.K, "kappa": form.kappa, "c": form.c, "T": traj.T}
    norms = traj.norms
    if norms[-1] == 0.0 and np.any(norms > 0.0):
        i = int(np.argmax(norms))
        return ConvexityReport(form.kind, math.inf, float(traj.times[i]), VIOLATION_DEGENERATE, tol,
                               traj.times, np.full(norms.shape, math.inf), params)
    if np.all(norms == 0.0):
        return ConvexityReport(form.kind, 0.0, float(traj.times[0]), HOLDS, tol,
                               traj.times, np.zeros_like(norms), params)
    lr = log_ratios(traj, form)
    i = int(np.argmax(lr))
    mx = float(np.exp(lr[i]))
    verdict = HOLDS if mx <= 1.0 + tol else VIOLATED
    return ConvexityReport(form.kind, mx, float(traj.times[i]), verdict, tol, traj.times, np.exp(lr), params)


@dataclass
class ConstantFit:
    kind: str
    value: float
    K: float
    n_trajectories: int
    detail: dict = field(default_factory=dict)


def _feasible_c(trajs, K, c, tol):
    form = ConvexityForm("frac_ou", K=K, c=c)
    return all(np.max(log_ratios(tr, form)) <= math.log1p(tol) for tr in trajs)


def fit_min_constant(trajs: Sequence[Trajectory], kind: str, K: float | None = None,
                     tol: float = TOL_GRID) -> ConstantFit:
    """Empirical constants left abstract by the theory.

    ``fractional``: the smallest ``M`` for which the ``t/T`` inequality holds
    on every trajectory. ``frac_ou``: the largest ``c`` in ``(0, 1]`` (to
    ``1e-4``) for which the ``c t/T`` inequality holds with a common ``K``.
    When ``K`` is not given it defaults to the smallest value that makes the
    ``c -> 0`` limit hold, ``max(1, max ||u(t)|| / ||u(0)||)``.
    """
    trajs = list(trajs)
    if not trajs:
        raise ValueError("empty batch")
    for tr in trajs:
        if tr.norms[0] <= 0.0 or tr.norms[-1] <= 0.0:
            raise ValueError("degenerate trajectory in batch (zero endpoint norm)")
    if kind == "fractional":
        form = ConvexityForm("fractional", M=1.0)
        m = max(float(np.exp(np.max(log_ratios(tr, form)))) for tr in trajs)
        return ConstantFit(kind, max(m, 1.0), 1.0, len(trajs), {"max_ratio_M1": m})
    if kind != "frac_ou":
        raise ValueError(f"no constant fit for kind {kind!r}")
    if K is None:
        K = max(1.0, max(float(np.max(tr.norms / tr.norms[0])) for tr in trajs))
    if _feasible_c(trajs, K, 1.0, tol):
        return ConstantFit(kind, 1.0, K, len(trajs))
    lo, hi = C_RESOLUTION, 1.0
    if not _feasible_c(trajs, K, lo, tol):
        raise ValueError(f"no admissible c >= {C_RESOLUTION} for K={K}")
    while hi - lo > C_RESOLUTION:
        mid = 0.5 * (lo + hi)
        if _feasible_c(trajs, K, mid, tol):
            lo = mid
        else:
            hi = mid
    return ConstantFit(kind, lo, K, len(trajs))


def backward_uniqueness_probe(traj: Trajectory, tol: float = 1e-12) -> str:
    """``"violating"`` when ``u(T)`` vanishes while earlier states do not."""
    if traj.norms[-1] <= tol and np.max(traj.norms) > 1e3 * tol:
        return "violating"
    return "consistent"
