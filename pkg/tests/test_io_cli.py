import json
import math
import subprocess
import sys

import jsonschema
import numpy as np
import pytest

from logconvex import io
from logconvex.cli import load_schema, main
from logconvex.convexity import ConvexityForm, convexity_report
from logconvex.frac_ou import FourierGrid, GridState
from logconvex.presets import PRESETS, Bundle, ExperimentConfig, emit_tables, run_preset
from logconvex.spectral import dirichlet_laplacian_model, evolve, transport_trajectory
from logconvex.weight import Sector, weight_table

FAST = ["agmon-nirenberg", "transport-counterexample", "krein-weight", "weight-lower-bound", "geom-lattice",
        "heat-inversion", "ou-invariant-measure"]


def read_all(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_trajectory_roundtrip(tmp_path):
    tr = evolve(dirichlet_laplacian_model(5), np.arange(1.0, 6.0), 0.5, np.linspace(0, 1, 7))
    io.write_trajectory(tr, tmp_path / "tr")
    back = io.read_trajectory(tmp_path / "tr")
    np.testing.assert_array_equal(back.states, tr.states)
    np.testing.assert_array_equal(back.norms, tr.norms)
    header = json.loads((tmp_path / "tr.json").read_text())
    assert header["dtype"] == "<f8" and header["dims"] == [7, 5]
    assert (tmp_path / "tr.bin").stat().st_size == 7 * 5 * 8
    assert (tmp_path / "tr.csv").read_text().splitlines()[0] == "t,norm"


def test_weighted_trajectory_roundtrip(tmp_path):
    tr = transport_trajectory(np.sin, np.linspace(0, 1, 3), n_cells=50)
    io.write_trajectory(tr, tmp_path / "tt")
    np.testing.assert_allclose(io.read_trajectory(tmp_path / "tt").norms, tr.norms, rtol=1e-15)


def test_grid_state_roundtrip(tmp_path):
    g = FourierGrid((3.0, 4.0), (32, 64))
    u = GridState.from_function(g, lambda x, y: np.exp(-x * x - y * y))
    u.meta["t"] = 0.25
    io.write_grid_state(u, tmp_path / "u")
    back = io.read_grid_state(tmp_path / "u")
    assert back.grid == g and back.meta["t"] == 0.25
    np.testing.assert_array_equal(back.values, u.values)


def test_report_and_weight_table(tmp_path):
    tr = evolve(dirichlet_laplacian_model(3), np.ones(3), 1.0, np.linspace(0, 1, 5))
    io.write_report(convexity_report(tr, ConvexityForm("self_adjoint")), tmp_path / "rep")
    assert json.loads((tmp_path / "rep.json").read_text())["verdict"] == "HOLDS"
    io.write_weight_table(weight_table(Sector(1.0), 11), tmp_path / "w.csv")
    lines = (tmp_path / "w.csv").read_text().splitlines()
    assert lines[0] == "t,w,lower_bound" and len(lines) == 12


def test_jsonable_nonfinite():
    assert io.jsonable({"a": math.inf, "b": np.float64("nan"), "c": np.arange(2)}) == {"a": "inf", "b": "nan", "c": [0, 1]}


@pytest.mark.parametrize("name", FAST)
def test_fast_presets_pass_and_validate(name, tmp_path):
    b = run_preset(ExperimentConfig(name, seed=1))
    assert b.passed, [a for a in b.assertions if not a["passed"]]
    emit_tables(b, tmp_path)
    summary = json.loads((tmp_path / "summary.json").read_text())
    jsonschema.validate(summary, load_schema("summary"))


def test_csv_emission_is_byte_identical(tmp_path):
    for run in ("a", "b"):
        emit_tables(run_preset(ExperimentConfig("matrix-analytic-convexity", seed=4)), tmp_path / run)
    assert read_all(tmp_path / "a") == read_all(tmp_path / "b")


def test_json_emission(tmp_path):
    emit_tables(run_preset(ExperimentConfig("geom-lattice")), tmp_path, "json")
    geom = json.loads((tmp_path / "geom.json").read_text())
    assert geom["columns"][0] == "case" and len(geom["rows"]) == 4
    with pytest.raises(ValueError):
        emit_tables(Bundle("geom-lattice", 0), tmp_path, "xml")


def test_empty_bundle(tmp_path):
    files = emit_tables(Bundle("geom-lattice", 0), tmp_path)
    assert [f.name for f in files] == ["summary.json"]
    summary = json.loads(files[0].read_text())
    jsonschema.validate(summary, load_schema("summary"))
    assert summary["passed"] and summary["assertions"] == []


def test_unknown_preset_config():
    with pytest.raises(KeyError):
        ExperimentConfig("nope")


def test_failures_are_recorded_not_raised():
    b = run_preset(ExperimentConfig("agmon-nirenberg", tol={"ratio": -1.0}))
    assert not b.passed
    assert any(not a["passed"] for a in b.assertions)


def test_cli_preset_exit_codes(tmp_path, capsys):
    assert main(["preset", "run", "agmon-nirenberg", "--seed", "1", "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "summary.json").read_text())["seed"] == 1
    assert main(["preset", "run", "agmon-nirenberg", "--tol", "ratio=-1"]) == 1
    assert main(["preset", "run", "no-such-preset"]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["bogus-command"])
    assert exc.value.code == 2


def test_cli_preset_config_file(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"schema_version": "1.0", "preset": "agmon-nirenberg", "seed": 3,
                               "params": {"n_samples": 10}}))
    assert main(["--config", str(cfg), "--out", str(tmp_path / "o"), "preset", "run"]) == 0
    s = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert s["seed"] == 3 and s["parameters"]["n_samples"] == 10
    # flags override config fields
    assert main(["--config", str(cfg), "--out", str(tmp_path / "p"), "preset", "run", "--seed", "5"]) == 0
    assert json.loads((tmp_path / "p" / "summary.json").read_text())["seed"] == 5
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"schema_version": "0.9"}))
    assert main(["--config", str(bad), "preset", "run"]) == 2


def test_cli_ml_eval(capsys):
    assert main(["ml", "eval", "--alpha", "0.5", "--x", "0", "-1"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert float(lines[1].split(",")[1]) == pytest.approx(math.exp(1) * math.erfc(1), rel=1e-12)
    assert main(["ml", "eval", "--alpha", "0.5", "--x", "1"]) == 2


def test_cli_solve_and_check(tmp_path, capsys):
    assert main(["solve", "spectral", "--alpha", "0.7", "--modes", "16", "--out", str(tmp_path)]) == 0
    assert main(["check", "convexity", "--trajectory", str(tmp_path / "trajectory"), "--kind", "fractional"]) == 0
    assert main(["check", "convexity", "--trajectory", str(tmp_path / "trajectory"), "--kind", "analytic",
                 "--psi", str(math.pi / 2)]) == 0
    capsys.readouterr()
    assert main(["solve", "frac-ou", "--q", "[[1,0],[0,1]]", "--b", "[[-1,1],[0,-1]]", "--grid", "64",
                 "--extent", "10", "--t", "0.3", "--out", str(tmp_path)]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["points"] == [64, 64]
    assert io.read_grid_state(tmp_path / "state").grid.points == (64, 64)


def test_cli_weight(capsys):
    assert main(["weight", "--psi", "0.5", "--n", "5"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "t,w,lower_bound" and len(out) == 6


def test_cli_invert(tmp_path, capsys):
    problem = {"schema_version": "1.0", "model": {"kind": "dirichlet-laplacian", "n_modes": 32},
               "alpha": 1.0, "mask": [[0.0, 1.5707963267948966]], "times": {"start": 0.02, "stop": 1.0, "num": 50},
               "noise": 1e-3, "epsilon": 0.5, "M": 100.0}
    path = tmp_path / "problem.json"
    path.write_text(json.dumps(problem))
    assert main(["invert", "--config", str(path), "--out", str(tmp_path / "r")]) == 0
    res = json.loads((tmp_path / "r" / "reconstruction.json").read_text())
    assert res["noise_level"] <= res["discrepancy"] <= 1.1 * res["noise_level"]
    problem["model"]["kind"] = "unknown"
    path.write_text(json.dumps(problem))
    assert main(["invert", "--config", str(path)]) == 2
    assert main(["invert"]) == 2


def test_cli_stability_curve(tmp_path, capsys):
    assert main(["stability-curve", "--preset", "heat-half-mask", "--n", "60", "--seed", "7", "--out", "csv"]) == 0
    first = capsys.readouterr().out
    assert first.splitlines()[0] == "data_norm,initial_norm" and len(first.splitlines()) > 20
    main(["stability-curve", "--n", "60", "--seed", "7", "--out", "csv"])
    assert capsys.readouterr().out == first
    assert main(["stability-curve", "--n", "60", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "envelope.csv").exists()


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "logconvex", "preset", "list"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.split() == list(PRESETS)
