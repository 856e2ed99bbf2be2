"""Command-line interface.

Exit codes: 0 when every assertion passes, 1 on an assertion failure,
2 on a usage error (bad flags, unknown preset, invalid config).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import io
from .convexity import HOLDS, KINDS, ConvexityForm, convexity_report
from .frac_ou import FourierGrid, FracOUParams, GridState, fourier_solve
from .inverse import AdmissibleSet, IntervalMask, make_problem, reconstruct, spectral_forward, stability_curve
from .mittag_leffler import MLParams, ml_eval
from .presets import PRESETS, ExperimentConfig, emit_tables, heat_half_mask_forward, run_preset
from .spectral import dirichlet_laplacian_model, evolve
from .weight import Sector, weight_table

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
STABILITY_PRESETS = ("heat-half-mask",)

log = logging.getLogger("logconvex")


class UsageError(Exception):
    pass


def load_schema(name: str) -> dict:
    return json.loads(resources.files("logconvex").joinpath("schemas", f"{name}.schema.json").read_text())


def load_config(path, schema: str) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    try:
        jsonschema.validate(cfg, load_schema(schema))
    except jsonschema.ValidationError as exc:
        raise UsageError(f"invalid config {path}: {exc.message}") from exc
    return cfg


def parse_tol(items) -> dict:
    out = {}
    for item in items or []:
        name, _, value = item.rpartition("=")
        try:
            out[name or "*"] = float(value)
        except ValueError as exc:
            raise UsageError(f"bad --tol value {item!r}") from exc
    return out


def parse_matrix(text: str) -> np.ndarray:
    try:
        return np.atleast_2d(np.asarray(json.loads(text), dtype=float))
    except (json.JSONDecodeError, ValueError) as exc:
        raise UsageError(f"cannot parse matrix {text!r}") from exc


def parse_ints(text: str) -> tuple:
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError as exc:
        raise UsageError(f"cannot parse {text!r} as integers") from exc


def _print_json(obj):
    print(json.dumps(io.jsonable(obj), indent=2, sort_keys=True))


def cmd_ml(args) -> int:
    p = MLParams(args.alpha, args.beta)
    rows = [(x, ml_eval(p, x)) for x in args.x]
    for x, v in rows:
        print(f"{io.fmt(x)},{io.fmt(v)}")
    if args.out:
        io.write_csv(Path(args.out) / "ml.csv", ["x", "value"], rows)
    return EXIT_OK


def cmd_solve_spectral(args) -> int:
    model = dirichlet_laplacian_model(args.modes)
    times = np.linspace(0.0, args.T, args.n_times)
    rng = np.random.default_rng(args.seed)
    if args.init == "random":
        u0 = rng.normal(size=model.dim) * (1.0 + model.lambdas) ** (-args.decay)
    else:
        u0 = np.zeros(model.dim)
        u0[0] = 1.0
    tr = evolve(model, u0, args.alpha, times)
    if args.out:
        io.write_trajectory(tr, Path(args.out) / "trajectory")
    for t, n in zip(tr.times, tr.norms):
        print(f"{io.fmt(t)},{io.fmt(n)}")
    return EXIT_OK


def cmd_solve_frac_ou(args) -> int:
    Q, B = parse_matrix(args.q), parse_matrix(args.b)
    N = Q.shape[0]
    points = parse_ints(args.grid)
    if len(points) == 1:
        points = points * N
    grid = FourierGrid((args.extent,) * N, points)
    p = FracOUParams(Q, B, args.s)
    u0 = GridState.from_function(grid, lambda *x: np.exp(-0.5 * sum(xi * xi for xi in x) / args.width**2))
    u = fourier_solve(p, grid, u0, args.t)
    u.meta["t"] = args.t
    if args.out:
        io.write_grid_state(u, Path(args.out) / "state")
    _print_json({"t": args.t, "initial_norm": u0.norm(), "norm": u.norm(), "points": list(points)})
    return EXIT_OK


def cmd_weight(args) -> int:
    table = weight_table(Sector(args.psi, T=args.T), args.n)
    if args.out:
        io.write_weight_table(table, Path(args.out) / "weight.csv")
    else:
        print("t,w,lower_bound")
        for row in zip(table.ts, table.ws, table.lower):
            print(",".join(io.fmt(v) for v in row))
    return EXIT_OK


def cmd_check_convexity(args) -> int:
    tr = io.read_trajectory(args.trajectory)
    if args.kind == "analytic":
        sec = Sector(args.psi, K=args.K, kappa=args.kappa, T=tr.T)
        table = weight_table(sec, 401)
        form = ConvexityForm("analytic", K=args.K, kappa=args.kappa, weight=table)
    else:
        form = ConvexityForm(args.kind, M=args.M, K=args.K, c=args.c)
    tol = args.tol_map.get("ratio", args.tol_map.get("*", 1e-9))
    rep = convexity_report(tr, form, tol)
    if args.out:
        io.write_report(rep, Path(args.out) / "report")
    _print_json(rep.to_dict())
    return EXIT_OK if rep.verdict == HOLDS else EXIT_FAIL


def _problem_times(desc):
    if isinstance(desc, list):
        return np.asarray(desc, dtype=float)
    start = desc.get("start", desc["stop"] / desc["num"])
    return np.linspace(start, desc["stop"], desc["num"])


def cmd_invert(args) -> int:
    if not args.config:
        raise UsageError("invert needs --config problem.json")
    cfg = load_config(args.config, "problem")
    mcfg = cfg["model"]
    model = dirichlet_laplacian_model(mcfg.get("n_modes", 64), mcfg.get("length", math.pi))
    F = spectral_forward(model, cfg.get("alpha", 1.0), IntervalMask([tuple(m) for m in cfg["mask"]]),
                         _problem_times(cfg["times"]))
    rng = np.random.default_rng(args.seed)
    u0spec = cfg.get("u0", {"kind": "random"})
    if isinstance(u0spec, list):
        u0 = np.zeros(model.dim)
        u0[: len(u0spec)] = u0spec[: model.dim]
    else:
        u0 = rng.normal(size=model.dim) * (1.0 + model.lambdas) ** (-u0spec.get("decay", 0.6))
    delta = cfg.get("noise", 0.0) * F(u0).norm()
    problem = make_problem(F, u0, delta, seed=args.seed, model=model)
    aset = AdmissibleSet(cfg["epsilon"], cfg["M"]) if "epsilon" in cfg and "M" in cfg else None
    res = reconstruct(problem, aset, cfg.get("method", "cgne"), cfg.get("tau", 1.1), cfg.get("max_iter"))
    err = float(np.linalg.norm(res.u0 - u0) / np.linalg.norm(u0))
    summary = {
        "schema_version": io.SCHEMA_VERSION,
        "method": res.method,
        "iterations": res.iterations,
        "converged": res.converged,
        "projected": res.projected,
        "noise_level": delta,
        "discrepancy": res.discrepancy,
        "relative_error": err,
    }
    if args.out:
        out = Path(args.out)
        io.write_json(out / "reconstruction.json", summary)
        io.write_csv(out / "coefficients.csv", ["mode", "true", "reconstructed"],
                     zip(range(model.dim), u0, res.u0))
        io.write_csv(out / "residuals.csv", ["iteration", "residual"], enumerate(res.residual_history))
    _print_json(summary)
    return EXIT_OK if res.converged else EXIT_FAIL


def cmd_stability_curve(args) -> int:
    model, F = heat_half_mask_forward()
    sc = stability_curve(F, model, AdmissibleSet(args.epsilon, args.M), args.n, seed=args.seed)
    fmt, target = "csv", None
    if args.out in ("csv", "json"):
        fmt = args.out
    elif args.out:
        target = Path(args.out)
    summary = {"schema_version": io.SCHEMA_VERSION, "preset": args.preset, "seed": args.seed, "n": args.n,
               "K_hat": sc.K_hat, "alpha_hat": sc.alpha_hat, "nonincreasing": sc.nonincreasing}
    if target is not None:
        io.write_csv(target / "pairs.csv", ["data_norm", "initial_norm"], sc.rows())
        io.write_csv(target / "envelope.csv", ["abs_log_d", "envelope"], zip(sc.env_x, sc.env_y))
        io.write_json(target / "summary.json", summary)
    elif fmt == "csv":
        print("data_norm,initial_norm")
        for row in sc.rows():
            print(",".join(io.fmt(v) for v in row))
    else:
        _print_json({**summary, "pairs": [list(r) for r in sc.rows()]})
    return EXIT_OK if sc.nonincreasing and sc.alpha_hat > 0 else EXIT_FAIL


def cmd_preset_run(args) -> int:
    cfg_file = load_config(args.config, "config") if args.config else {}
    name = args.name or cfg_file.get("preset")
    if name is None:
        raise UsageError("preset name required")
    if name not in PRESETS:
        raise UsageError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    seed = args.seed if args.seed_given else cfg_file.get("seed", args.seed)
    tol = {**cfg_file.get("tol", {}), **args.tol_map}
    cfg = ExperimentConfig(name, seed, dict(cfg_file.get("params", {})), args.out, tol)
    bundle = run_preset(cfg)
    if args.out:
        emit_tables(bundle, args.out, args.format or cfg_file.get("format", "csv"))
    for a in bundle.assertions:
        print(f"{'PASS' if a['passed'] else 'FAIL'} {a['name']} value={io.jsonable(a['value'])}")
    print(f"{'PASS' if bundle.passed else 'FAIL'} {name} ({bundle.elapsed:.2f} s)")
    return EXIT_OK if bundle.passed else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--config", default=argparse.SUPPRESS)
    common.add_argument("--tol", action="append", default=argparse.SUPPRESS, metavar="[NAME=]VALUE")
    common_out = argparse.ArgumentParser(add_help=False)
    common_out.add_argument("--out", default=argparse.SUPPRESS, help="output directory")

    parser = argparse.ArgumentParser(prog="logconvex", description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--config", default=None, help="JSON config file")
    parser.add_argument("--tol", action="append", default=[], metavar="[NAME=]VALUE",
                        help="tolerance override; repeatable")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    both = [common, common_out]

    ml = sub.add_parser("ml", help="Mittag-Leffler function").add_subparsers(dest="ml_command", required=True)
    ev = ml.add_parser("eval", parents=both, help="evaluate E_{alpha,beta}(x) for x <= 0")
    ev.add_argument("--alpha", type=float, required=True)
    ev.add_argument("--beta", type=float, default=1.0)
    ev.add_argument("--x", type=float, nargs="+", required=True)
    ev.set_defaults(func=cmd_ml)

    solve = sub.add_parser("solve", help="forward solvers").add_subparsers(dest="solve_command", required=True)
    sp = solve.add_parser("spectral", parents=both, help="Dirichlet heat / subdiffusion trajectory")
    sp.add_argument("--alpha", type=float, default=1.0)
    sp.add_argument("--modes", type=int, default=64)
    sp.add_argument("--T", type=float, default=1.0)
    sp.add_argument("--n-times", type=int, default=101)
    sp.add_argument("--init", choices=("random", "first-mode"), default="random")
    sp.add_argument("--decay", type=float, default=0.0, help="random coefficient decay exponent")
    sp.set_defaults(func=cmd_solve_spectral)
    fo = solve.add_parser("frac-ou", parents=both, help="fractional OU semigroup on a Gaussian bump")
    fo.add_argument("--q", default="1", help="diffusion matrix as JSON")
    fo.add_argument("--b", default="-1", help="drift matrix as JSON")
    fo.add_argument("--s", type=float, default=1.0)
    fo.add_argument("--t", type=float, default=0.5)
    fo.add_argument("--grid", default="512", help="points per axis, e.g. 128,128")
    fo.add_argument("--extent", type=float, default=25.0)
    fo.add_argument("--width", type=float, default=1.0)
    fo.set_defaults(func=cmd_solve_frac_ou)

    w = sub.add_parser("weight", parents=both, help="harmonic weight table")
    w.add_argument("--psi", type=float, required=True)
    w.add_argument("--T", type=float, default=1.0)
    w.add_argument("--n", type=int, default=101)
    w.set_defaults(func=cmd_weight)

    check = sub.add_parser("check", help="inequality checks").add_subparsers(dest="check_command", required=True)
    cc = check.add_parser("convexity", parents=both, help="check a stored trajectory")
    cc.add_argument("--trajectory", required=True, help="prefix of a stored trajectory")
    cc.add_argument("--kind", choices=KINDS, default="self_adjoint")
    cc.add_argument("--M", type=float, default=1.0)
    cc.add_argument("--K", type=float, default=1.0)
    cc.add_argument("--kappa", type=float, default=0.0)
    cc.add_argument("--c", type=float, default=1.0)
    cc.add_argument("--psi", type=float, default=math.pi / 2)
    cc.set_defaults(func=cmd_check_convexity)

    inv = sub.add_parser("invert", parents=both, help="reconstruct initial data from a problem JSON")
    inv.set_defaults(func=cmd_invert)

    st = sub.add_parser("stability-curve", parents=[common], help="sampled (data norm, initial norm) pairs")
    st.add_argument("--preset", choices=STABILITY_PRESETS, default="heat-half-mask")
    st.add_argument("--n", type=int, default=200)
    st.add_argument("--epsilon", type=float, default=0.5)
    st.add_argument("--M", type=float, default=1.0)
    st.add_argument("--out", default=argparse.SUPPRESS, help="csv, json, or an output directory")
    st.set_defaults(func=cmd_stability_curve)

    pr = sub.add_parser("preset", help="shipped experiments").add_subparsers(dest="preset_command", required=True)
    run = pr.add_parser("run", parents=both, help="run one preset")
    run.add_argument("name", nargs="?", help=f"one of: {', '.join(PRESETS)}")
    run.add_argument("--format", choices=("csv", "json"), default=None)
    run.set_defaults(func=cmd_preset_run)
    lst = pr.add_parser("list", help="list presets")
    lst.set_defaults(func=lambda args: print("\n".join(PRESETS)) or EXIT_OK)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(argv)
    args.seed_given = any(a == "--seed" or a.startswith("--seed=") for a in argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.tol_map = parse_tol(args.tol)
        return args.func(args)
    except UsageError as exc:
        print(f"logconvex: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, KeyError) as exc:
        print(f"logconvex: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
