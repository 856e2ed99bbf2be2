"""Shipped experiments. Each preset returns a :class:`Bundle` of named
assertions and tables; failures are recorded, never raised."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .convexity import (
    VIOLATION_DEGENERATE,
    ConvexityForm,
    backward_uniqueness_probe,
    convexity_report,
    fit_min_constant,
    log_ratios,
)
from .frac_ou import (
    FourierGrid,
    FracOUParams,
    GridState,
    LatticeBallRegion,
    fourier_solve,
    gaussian_density,
    geom_check,
    invariant_covariance,
    weighted_norm,
)
from .inverse import (
    AdmissibleSet,
    IntervalMask,
    make_problem,
    reconstruct,
    spectral_forward,
    stability_curve,
)
from .spectral import dirichlet_laplacian_model, evolve, evolve_many, transport_trajectory
from .weight import (
    Sector,
    matrix_sector_estimate,
    matrix_semigroup_trajectory,
    weight_f,
    weight_h,
    weight_lower_bound,
    weight_w,
)

TEST_MATRICES = {
    "rotation-damped": [[-1.0, 1.0], [-1.0, -1.0]],
    "upper-triangular": [[-1.0, 2.0, 0.0], [0.0, -2.0, 1.0], [0.0, 0.0, -3.0]],
    "shifted-block": [[0.3, 0.0, 0.0], [0.0, -1.0, 1.0], [0.0, -1.0, -1.0]],
}

OU_DRIFTS = {
    "scalar": [[-1.0]],
    "identity": [[-1.0, 0.0], [0.0, -1.0]],
    "jordan": [[-1.0, 1.0], [0.0, -1.0]],
    "rotation": [[-2.0, 1.0], [-1.0, -1.0]],
}

PSI_SET = (math.pi / 6, math.pi / 4, math.pi / 3, math.pi / 2)
WEIGHT_ROUNDING = 1e-12


@dataclass
class ExperimentConfig:
    preset: str
    seed: int = 0
    params: dict = field(default_factory=dict)
    out: Path | None = None
    tol: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise KeyError(f"unknown preset {self.preset!r}")

    def get_tol(self, name, default):
        return float(self.tol.get(name, self.tol.get("*", default)))


@dataclass
class Bundle:
    preset: str
    seed: int
    parameters: dict = field(default_factory=dict)
    assertions: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    elapsed: float = 0.0

    def check(self, name, passed, value=None, threshold=None):
        self.assertions.append({"name": name, "passed": bool(passed), "value": value, "threshold": threshold})
        return bool(passed)

    @property
    def passed(self) -> bool:
        return all(a["passed"] for a in self.assertions)

    def summary(self) -> dict:
        return {
            "schema_version": io.SCHEMA_VERSION,
            "preset": self.preset,
            "seed": self.seed,
            "passed": self.passed,
            "parameters": self.parameters,
            "assertions": self.assertions,
        }


def _agmon_nirenberg(cfg, b):
    n_modes = int(cfg.params.get("n_modes", 64))
    n_samples = int(cfg.params.get("n_samples", 100))
    T = float(cfg.params.get("T", 1.0))
    tol = cfg.get_tol("ratio", 1e-10)
    b.parameters.update(n_modes=n_modes, n_samples=n_samples, T=T, alpha=1.0)
    model = dirichlet_laplacian_model(n_modes)
    times = np.linspace(0.0, T, 101)
    rng = np.random.default_rng(cfg.seed)
    form = ConvexityForm("self_adjoint")
    rows, worst = [], 0.0
    for i, tr in enumerate(evolve_many(model, rng.normal(size=(n_samples, n_modes)), 1.0, times)):
        rep = convexity_report(tr, form, tol)
        rows.append((i, rep.max_ratio, rep.argmax_time))
        worst = max(worst, rep.max_ratio)
    b.tables["ratios"] = (["sample", "max_ratio", "argmax_t"], rows)
    b.check("max_ratio_le_1_plus_tol", worst <= 1 + tol, worst, 1 + tol)
    single = np.zeros(n_modes)
    single[0] = 1.0
    rep = convexity_report(evolve(model, single, 1.0, times), form)
    dev = float(np.max(np.abs(rep.ratios - 1.0)))
    b.check("single_mode_equality", dev <= 1e-12, dev, 1e-12)


def _transport(cfg, b):
    n_cells = int(cfg.params.get("n_cells", 1000))
    times = np.linspace(0.0, 1.0, 11)
    tr = transport_trajectory(lambda x: np.ones_like(x), times, n_cells)
    b.parameters.update(n_cells=n_cells, T=1.0)
    b.tables["norms"] = (["t", "norm"], list(zip(tr.times, tr.norms)))
    rep = convexity_report(tr, ConvexityForm("self_adjoint"))
    b.check("initial_norm_is_1", abs(tr.norms[0] - 1.0) <= 1e-12, tr.norms[0], 1.0)
    b.check("final_norm_is_0", tr.norms[-1] == 0.0, tr.norms[-1], 0.0)
    b.check("verdict_degenerate", rep.verdict == VIOLATION_DEGENERATE, rep.verdict, VIOLATION_DEGENERATE)
    probe = backward_uniqueness_probe(tr)
    b.check("probe_violating", probe == "violating", probe, "violating")


def _krein_weight(cfg, b):
    T = float(cfg.params.get("T", 1.0))
    n = int(cfg.params.get("grid", 1000))
    rows = []
    for psi in PSI_SET:
        sec = Sector(psi, T=T)
        rel = abs(weight_f(sec, T) - T) / T
        b.check(f"f_T_equals_T[psi={psi:.6f}]", rel <= 1e-10, rel, 1e-10)
        zs = np.linspace(0.0, T, 201)
        hs = np.array([weight_h(sec, z) for z in zs])
        ok = hs[0] == 0.0 and abs(hs[-1] - T) <= 1e-10 * T and bool(np.all(np.diff(hs) > 0))
        b.check(f"h_increasing[psi={psi:.6f}]", ok, float(np.min(np.diff(hs))), 0.0)
        for z in zs[::20]:
            rows.append((psi, z, weight_w(sec, z)))
    sec = Sector(math.pi / 2, T=T)
    ts = np.linspace(0.0, T, n)
    dev = max(abs(weight_w(sec, t) - t / T) for t in ts)
    b.check("self_adjoint_collapse", dev <= 1e-8, dev, 1e-8)
    b.parameters.update(T=T, grid=n)
    b.tables["weights"] = (["psi", "t", "w"], rows)


def _weight_lower_bound(cfg, b):
    T = float(cfg.params.get("T", 1.0))
    n = int(cfg.params.get("grid", 200))
    rows, violations, worst = [], 0, math.inf
    for psi in PSI_SET:
        sec = Sector(psi, T=T)
        for t in np.linspace(0.0, T, n + 1)[1:]:
            w, lb = weight_w(sec, t), weight_lower_bound(sec, t)
            rows.append((psi, t, w, lb))
            worst = min(worst, w - lb)
            if w < lb - WEIGHT_ROUNDING:
                violations += 1
    b.parameters.update(T=T, grid=n, rounding=WEIGHT_ROUNDING)
    b.tables["lower_bound"] = (["psi", "t", "w", "lower_bound"], rows)
    b.check("zero_violations", violations == 0, violations, 0)
    b.check("min_margin", worst >= -WEIGHT_ROUNDING, worst, -WEIGHT_ROUNDING)


def _matrix_analytic(cfg, b):
    n_samples = int(cfg.params.get("n_samples", 100))
    tol = cfg.get_tol("ratio", 1e-6)
    T = 1.0
    times = np.linspace(0.0, T, 51)
    rng = np.random.default_rng(cfg.seed)
    rows = []
    for name, A in TEST_MATRICES.items():
        A = np.array(A)
        sec = matrix_sector_estimate(A, seed=cfg.seed, T=T)
        slack = sec.slackened()
        ws = np.array([weight_w(slack, t) for t in times])
        form = ConvexityForm("analytic", K=sec.K, kappa=sec.kappa, weight=lambda t, ws=ws: np.interp(t, times, ws))
        worst = 0.0
        for _ in range(n_samples):
            tr = matrix_semigroup_trajectory(A, rng.normal(size=A.shape[0]), times)
            worst = max(worst, convexity_report(tr, form, tol).max_ratio)
        rows.append((name, sec.psi, slack.psi, sec.K, sec.kappa, worst))
        b.check(f"krein_prozorovskaya[{name}]", worst <= 1 + tol, worst, 1 + tol)
    b.parameters.update(n_samples=n_samples, T=T)
    b.tables["matrices"] = (["matrix", "psi", "psi_slack", "K", "kappa", "max_ratio"], rows)


def _fractional(cfg, b):
    n_modes = int(cfg.params.get("n_modes", 64))
    n_samples = int(cfg.params.get("n_samples", 100))
    alphas = cfg.params.get("alphas", [0.3, 0.5, 0.7, 0.9])
    tol = cfg.get_tol("M", 1e-8)
    model = dirichlet_laplacian_model(n_modes)
    times = np.linspace(0.0, 1.0, 101)
    rng = np.random.default_rng(cfg.seed)
    rows = []
    for a in alphas:
        trajs = evolve_many(model, rng.normal(size=(n_samples, n_modes)), float(a), times)
        fit = fit_min_constant(trajs, "fractional")
        m = fit.detail["max_ratio_M1"]
        rows.append((a, m))
        b.check(f"M_hat[alpha={a}]", m <= 1 + tol, m, 1 + tol)
    b.parameters.update(n_modes=n_modes, n_samples=n_samples, kappa=0.0)
    b.tables["M_hat"] = (["alpha", "M_hat"], rows)


def random_bumps(grid: FourierGrid, rng, n_bumps=3) -> GridState:
    """Sum of Gaussian bumps with random centers, widths in [0.6, 1.5] and signed amplitudes."""
    mesh = grid.mesh()
    vals = np.zeros(grid.points)
    for _ in range(n_bumps):
        c = rng.uniform(-2.0, 2.0, size=grid.N)
        w = rng.uniform(0.6, 1.5)
        r2 = sum((m - ci) ** 2 for m, ci in zip(mesh, c))
        vals += rng.normal() * np.exp(-r2 / (2 * w * w))
    return GridState(vals, grid)


def frac_ou_batch(s, n_samples, rng, T=1.0, n_times=11, grid=None):
    grid = grid or FourierGrid(48.0, 512)
    p = FracOUParams(1.0, -1.0, s)
    times = np.linspace(0.0, T, n_times)
    from .spectral import Trajectory

    trajs = []
    for _ in range(n_samples):
        u0 = random_bumps(grid, rng)
        norms = np.array([fourier_solve(p, grid, u0, t).norm() for t in times])
        trajs.append(Trajectory(times, norms[:, None], norms, T, meta={"kind": "frac_ou", "s": s}))
    return trajs


def _frac_ou_convexity(cfg, b):
    n_samples = int(cfg.params.get("n_samples", 50))
    s_values = cfg.params.get("s_values", [0.6, 1.0, 1.5])
    rng = np.random.default_rng(cfg.seed)
    rows = []
    for s in s_values:
        trajs = frac_ou_batch(float(s), n_samples, rng)
        fit = fit_min_constant(trajs, "frac_ou")
        form = ConvexityForm("frac_ou", K=fit.K, c=fit.value)
        worst = max(float(np.exp(np.max(log_ratios(tr, form)))) for tr in trajs)
        rows.append((s, fit.value, fit.K, worst))
        b.check(f"c_hat_in_(0,1][s={s}]", 0.0 < fit.value <= 1.0, fit.value, [0.0, 1.0])
        b.check(f"holds_with_c_hat[s={s}]", worst <= 1 + 1e-6, worst, 1 + 1e-6)
    b.parameters.update(n_samples=n_samples, B=-1.0, Q=1.0, T=1.0)
    b.tables["c_hat"] = (["s", "c_hat", "K", "max_ratio"], rows)


def ou_norm_trajectory(B, times, grid=None):
    B = np.atleast_2d(B)
    N = B.shape[0]
    Sigma = invariant_covariance(B)
    grid = grid or (FourierGrid(25.0, 512) if N == 1 else FourierGrid((20.0, 20.0), (128, 128)))
    p = FracOUParams(np.eye(N), B, 1.0)
    u0 = GridState.from_function(grid, lambda *x: np.exp(-0.5 * sum((xi - 0.5) ** 2 for xi in x)))
    return np.array([weighted_norm(fourier_solve(p, grid, u0, t), Sigma) for t in times])


def _ou_invariant(cfg, b):
    rows = []
    for name, B in OU_DRIFTS.items():
        B = np.array(B)
        S = invariant_covariance(B)
        res = float(np.linalg.norm(B @ S + S @ B.T + 2 * np.eye(B.shape[0])))
        b.check(f"lyapunov_residual[{name}]", res <= 1e-10, res, 1e-10)
        L = 12.0 * math.sqrt(float(np.linalg.eigvalsh(S).max()))
        N = B.shape[0]
        grid = FourierGrid((L,) * N, (256,) if N == 1 else (128, 128))
        one = GridState(np.ones(grid.points), grid)
        wn = weighted_norm(one, S)
        b.check(f"weighted_norm_of_one[{name}]", abs(wn - 1.0) <= 1e-8, wn, 1.0)
        rows.append((name, res, wn, float(np.linalg.eigvalsh(S).min())))
    times = np.linspace(0.0, 1.0, 11)
    for name in ("scalar", "jordan"):
        norms = ou_norm_trajectory(np.array(OU_DRIFTS[name]), times)
        rise = float(np.max(np.diff(norms) / norms[:-1]))
        b.check(f"weighted_contraction[{name}]", rise <= 1e-10, rise, 1e-10)
    b.tables["covariances"] = (["B", "residual", "weighted_norm_one", "min_eig"], rows)


def _geom(cfg, b):
    region = LatticeBallRegion((1.0, 1.0), 0.5)
    probes = int(cfg.params.get("probes", 2000))
    v = geom_check(region, math.sqrt(2.0), 0.5, probes, cfg.seed)
    b.check("unit_lattice_passes", v.passed, v.worst_distance, math.sqrt(2.0))
    v2 = geom_check(region, math.sqrt(2.0), 0.6, probes, cfg.seed)
    b.check("oversized_witness_fails", not v2.passed, v2.worst_distance, None)
    v3 = geom_check(region, 0.5, 0.5, probes, cfg.seed)
    b.check("small_delta_fails", not v3.passed, v3.worst_distance, 0.5)
    v4 = geom_check(LatticeBallRegion((1.0, 1.0), 0.5, (0.37, -0.21)), math.sqrt(2.0), 0.5, probes, cfg.seed)
    b.check("offset_invariance", v4.passed == v.passed, v4.covering_bound, v.covering_bound)
    b.tables["geom"] = (["case", "passed", "worst_distance", "covering_bound"],
                        [("example", v.passed, v.worst_distance, v.covering_bound),
                         ("r_wit=0.6", v2.passed, v2.worst_distance, v2.covering_bound),
                         ("delta=0.5", v3.passed, v3.worst_distance, v3.covering_bound),
                         ("offset", v4.passed, v4.worst_distance, v4.covering_bound)])


def heat_half_mask_forward(n_modes=64, n_times=50, T=1.0, alpha=1.0):
    model = dirichlet_laplacian_model(n_modes)
    times = np.linspace(T / n_times, T, n_times)
    return model, spectral_forward(model, alpha, IntervalMask([(0.0, math.pi / 2)]), times)


def dot_test(F, n_pairs, rng) -> float:
    worst = 0.0
    for _ in range(n_pairs):
        x = rng.normal(size=F.domain_weights.size)
        d = rng.normal(size=F.mats.shape[:2])
        Fx = F(x)
        lhs = F.data_inner(Fx, d)
        rhs = F.domain_inner(x, F.adjoint(d))
        scale = Fx.norm() * math.sqrt(F.data_inner(d, d))
        worst = max(worst, abs(lhs - rhs) / scale)
    return worst


def _heat_inversion(cfg, b):
    rng = np.random.default_rng(cfg.seed)
    model, F = heat_half_mask_forward()
    mm = dot_test(F, 100, rng)
    b.check("adjoint_dot_product", mm <= 1e-10, mm, 1e-10)
    m8 = dirichlet_laplacian_model(8)
    F8 = spectral_forward(m8, 1.0, IntervalMask([(0.0, math.pi)]), np.linspace(0.02, 1.0, 50))
    u8 = rng.normal(size=8)
    r8 = reconstruct(make_problem(F8, u8))
    err = float(np.linalg.norm(r8.u0 - u8) / np.linalg.norm(u8))
    b.check("noise_free_recovery", err <= 1e-6, err, 1e-6)
    u = rng.normal(size=model.dim) * (1.0 + model.lambdas) ** -0.6
    delta = 1e-3 * F(u).norm()
    pr = make_problem(F, u, delta, seed=cfg.seed + 1, model=model)
    res = reconstruct(pr, AdmissibleSet(0.5, 10.0 * model.epsilon_norm(u, 0.5)))
    ratio = res.discrepancy / delta
    b.check("morozov_band", 1.0 <= ratio <= 1.1, ratio, [1.0, 1.1])
    b.parameters.update(n_modes=model.dim, mask=[0.0, math.pi / 2], noise=delta)
    b.tables["residuals"] = (["iteration", "residual"], list(enumerate(res.residual_history)))


def _stability(cfg, b):
    n = int(cfg.params.get("n", 200))
    eps = float(cfg.params.get("epsilon", 0.5))
    M = float(cfg.params.get("M", 1.0))
    model, F = heat_half_mask_forward()
    aset = AdmissibleSet(eps, M)
    sc = stability_curve(F, model, aset, n, seed=cfg.seed)
    again = stability_curve(F, model, aset, n, seed=cfg.seed)
    b.parameters.update(n=n, epsilon=eps, M=M, K_hat=sc.K_hat, alpha_hat=sc.alpha_hat)
    b.tables["pairs"] = (["data_norm", "initial_norm"], sc.rows())
    b.tables["envelope"] = (["abs_log_d", "envelope"], list(zip(sc.env_x, sc.env_y)))
    b.check("envelope_nonincreasing", sc.nonincreasing, None, None)
    b.check("alpha_hat_positive", sc.alpha_hat > 0, sc.alpha_hat, 0.0)
    same = np.array_equal(sc.d, again.d) and np.array_equal(sc.e, again.e)
    b.check("deterministic", same, None, None)


PRESETS = {
    "agmon-nirenberg": _agmon_nirenberg,
    "transport-counterexample": _transport,
    "krein-weight": _krein_weight,
    "weight-lower-bound": _weight_lower_bound,
    "matrix-analytic-convexity": _matrix_analytic,
    "fractional-convexity": _fractional,
    "frac-ou-convexity": _frac_ou_convexity,
    "ou-invariant-measure": _ou_invariant,
    "geom-lattice": _geom,
    "heat-inversion": _heat_inversion,
    "stability-curve": _stability,
}


def run_preset(cfg: ExperimentConfig) -> Bundle:
    b = Bundle(cfg.preset, cfg.seed)
    t0 = time.perf_counter()
    PRESETS[cfg.preset](cfg, b)
    b.elapsed = time.perf_counter() - t0
    return b


def emit_tables(bundle: Bundle, out, fmt: str = "csv") -> list[Path]:
    """Write ``summary.json`` plus one file per table (CSV or JSON)."""
    if fmt not in ("csv", "json"):
        raise ValueError(f"unknown format {fmt!r}")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    written = [io.write_json(out / "summary.json", bundle.summary())]
    for name, (header, rows) in sorted(bundle.tables.items()):
        if fmt == "csv":
            written.append(io.write_csv(out / f"{name}.csv", header, rows))
        else:
            written.append(io.write_json(out / f"{name}.json",
                                         {"columns": header, "rows": [list(r) for r in rows]}))
    return written
