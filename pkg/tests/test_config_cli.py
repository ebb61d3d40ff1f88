import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from singular_pf import io
from singular_pf.cli import check_invariants, main
from singular_pf.config import DEFAULTS, build_problem, parse_config, validate
from singular_pf.errors import ConfigError, InvariantViolation
from singular_pf.grid import Grid
from singular_pf.solver import Solver

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
SMALL = {"T": 0.01, "dt": 0.005, "grid": {"n": [6, 6]}, "epsilon": 0.4,
         "phi0": {"sum": [0.1, {"cos": [1, 0], "amp": 0.2}]}}


def write_cfg(tmp_path, data, name="run.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return path


def test_defaults_validate():
    cfg = validate({})
    assert cfg.mode == DEFAULTS["mode"] and cfg.dt == pytest.approx(cfg.T / 200)
    assert cfg.grid.shape == (16, 16) and cfg.family.family_id == "gaussian-truncated"


@pytest.mark.parametrize("path", sorted((CONFIGS / "negative").glob("*.yaml")), ids=lambda p: p.stem)
def test_negative_configs_name_their_assumption(path):
    with pytest.raises(ConfigError) as exc:
        parse_config(path)
    assert exc.value.label == path.stem.split("_")[0].upper()


@pytest.mark.parametrize("path", sorted((CONFIGS / "positive").glob("*.yaml")), ids=lambda p: p.stem)
def test_positive_configs_validate(path):
    assert parse_config(path).hash()


@pytest.mark.parametrize("raw", [{"nope": 1}, {"mode": "other"}, {"grid": {"n": [4]}}, {"T": 0.1, "dt": 0.03}])
def test_structural_errors(raw):
    with pytest.raises(ConfigError):
        validate(raw)


def test_yaml_syntax_error(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("grid: {n: [8, 8\n")
    with pytest.raises(ConfigError) as exc:
        parse_config(p)
    assert exc.value.label == "syntax"


def test_env_tolerance_override(monkeypatch):
    monkeypatch.setenv("SPF_TOL_NEWTON", "1e-7")
    monkeypatch.setenv("SPF_TOL_PICARD", "1e-6")
    cfg = validate({})
    assert cfg.tol.newton == 1e-7 and cfg.tol.picard == 1e-6


def test_overrides_and_hash():
    cfg = validate(SMALL)
    other = cfg.with_overrides(lam=0.25)
    assert other.lam == 0.25 and other.hash() != cfg.hash()
    assert cfg.with_overrides(lam=cfg.lam).hash() == cfg.hash()


def test_mollified_initial_datum_keeps_mean():
    cfg = validate(dict(SMALL, mollify=True, phi0={"sum": [0.2, {"noise": 0.3}]}))
    a, b = cfg.phi0(), cfg.phi0_eps()
    assert abs(a.mean() - b.mean()) < 1e-14 and np.std(b) < np.std(a)


def test_build_problem_modes():
    cfg = validate(SMALL)
    assert build_problem(cfg, mode="local").operator is None
    assert build_problem(cfg).operator is not None


def test_check_invariants():
    traj = Solver(build_problem(validate(SMALL))).run()
    assert check_invariants(traj) < 1e-12
    traj.theta[1, 0] = 0.0
    with pytest.raises(InvariantViolation):
        check_invariants(traj)


def test_simulate_outputs_and_determinism(tmp_path):
    cfg = write_cfg(tmp_path, SMALL)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--config", str(cfg), "--out", str(a)]) == 0
    assert main(["simulate", "--config", str(cfg), "--out", str(b)]) == 0
    man = io.read_json(a / "manifest.json")
    assert set(man) >= {"command", "config_hash", "seed", "versions", "outputs"}
    for rel in man["outputs"]:
        assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel
    assert (a / "manifest.json").read_bytes() == (b / "manifest.json").read_bytes()
    phi = io.read_field(a / "fields" / "phi_00002")
    assert phi.unit == "order-parameter" and phi.values.shape == (36,)
    summary = json.loads((a / "summary.json").read_text())
    assert summary["diagnostics"]["max_mean_drift"] < 1e-12


def test_seed_and_mode_flags(tmp_path):
    cfg = write_cfg(tmp_path, SMALL)
    assert main(["simulate", "--config", str(cfg), "--seed", "7", "--mode", "local", "--out", str(tmp_path / "o")]) == 0
    man = io.read_json(tmp_path / "o" / "manifest.json")
    assert man["seed"] == 7 and man["config"]["mode"] == "local"


def test_config_error_exit_code(tmp_path):
    assert main(["simulate", "--config", str(CONFIGS / "negative" / "c5_theta_lower_zero.yaml"),
                 "--out", str(tmp_path)]) == 2


def test_bad_arguments_exit_code(tmp_path):
    assert main(["plot", "--input", str(tmp_path / "missing.csv"), "--out", str(tmp_path)]) == 2
    cfg = write_cfg(tmp_path, SMALL)
    assert main(["sweep-epsilon", "--config", str(cfg), "--eps-ladder", "0.1", "--out", str(tmp_path)]) == 2


def test_solver_failure_exit_code(tmp_path, monkeypatch):
    monkeypatch.setenv("SPF_TOL_NEWTON", "1e-30")
    cfg = write_cfg(tmp_path, dict(SMALL, tolerances={"newton_max_iter": 2}))
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3


def test_tabulate_and_plot(tmp_path):
    assert main(["tabulate-graphs", "--graph", "power", "--lam", "0.5", "--samples", "5", "--out", str(tmp_path)]) == 0
    rows = io.read_csv(tmp_path / "graph_power.csv")
    assert len(rows) == 5 and rows[2]["r"] == 0.0 and rows[2]["J"] == 0.0
    assert main(["plot", "--input", str(tmp_path / "graph_power.csv"), "--x", "r", "--y", "J", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "graph_power.svg").read_text().lstrip().startswith("<?xml")


def test_sweep_commands(tmp_path):
    cfg = write_cfg(tmp_path, dict(SMALL, grid={"n": [12, 12]}))
    code = main(["sweep-lambda", "--config", str(cfg), "--rungs", "3", "--out", str(tmp_path / "l")])
    assert code in (0, 1) and (tmp_path / "l" / "lambda_rates.svg").exists()
    assert len(io.read_csv(tmp_path / "l" / "lambda_sweep.csv")) == 3
    code = main(["sweep-epsilon", "--config", str(cfg), "--eps-ladder", "0.4", "0.3", "--out", str(tmp_path / "e")])
    assert code in (0, 1) and (tmp_path / "e" / "epsilon_sweep.csv").exists()


def test_csv_json_roundtrip(tmp_path):
    rows = [{"a": 0.1, "b": 1 / 3, "flag": True}, {"a": float("nan"), "b": 2.0, "flag": False}]
    io.write_csv(tmp_path / "t.csv", rows)
    back = io.read_csv(tmp_path / "t.csv")
    assert back[0]["b"] == 1 / 3 and np.isnan(back[1]["a"]) and back[1]["flag"] == "false"
    io.write_json(tmp_path / "t.json", {"x": np.float64(np.inf), "y": np.arange(2)})
    assert io.read_json(tmp_path / "t.json") == {"x": None, "y": [0, 1]}


def test_field_roundtrip(tmp_path):
    g = Grid((3, 4), (1.5, 2.0))
    vals = np.random.default_rng(0).standard_normal(g.size)
    io.write_field(tmp_path / "f", g, vals, "temperature")
    f = io.read_field(tmp_path / "f")
    assert f.grid.shape == g.shape and f.grid.extent == g.extent and np.array_equal(f.values, vals)
