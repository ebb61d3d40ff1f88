import numpy as np
import pytest

from singular_pf import harness
from singular_pf.config import validate
from singular_pf.grid import Grid
from singular_pf.kernels import KernelFamily, assemble

EQUILIBRIUM = {"T": 0.02, "dt": 0.005, "grid": {"n": [6, 6]}, "phi0": 0.3, "theta0": 1.0, "theta_gamma": 1.0}


def test_rate_table_and_monotonicity():
    rows = harness.rate_table([4.0, 2.0, 1.0], "gap")
    assert [r["ratio"] for r in rows[1:]] == [0.5, 0.5] and np.isnan(rows[0]["ratio"])
    assert harness.strictly_decreasing([3, 2, 1]) and not harness.strictly_decreasing([3, 3, 1])
    assert harness.nonincreasing([3, 3, 1])


def test_max_H_gap():
    g = Grid((4, 4))
    a = np.zeros((3, g.size))
    b = a.copy()
    b[2] = 2.0
    assert harness.max_H_gap(g, a, b) == pytest.approx(2.0)


def test_equilibrium_lambda_sweep_is_flat():
    rows, rep = harness.sweep_lambda(validate(EQUILIBRIUM), lam0=0.5, rungs=3, eps=0.3)
    # constant states do not depend on lambda: every gap clamps to the floor
    assert all(d == harness.FLOOR for d in rep["deltas"])
    assert all(r["floor"] for r in rows[:-1])
    assert rep["beta_L2_bounded"]


def test_sweep_epsilon_rejects_underresolved():
    cfg = validate(dict(EQUILIBRIUM, grid={"n": [8, 8]}))
    with pytest.raises(ValueError, match="grid resolution"):
        harness.sweep_epsilon(cfg, eps_ladder=(0.4, 0.2))


def test_equilibrium_epsilon_sweep():
    cfg = validate(dict(EQUILIBRIUM, grid={"n": [16, 16]}))
    rows, rep = harness.sweep_epsilon(cfg, eps_ladder=(0.4, 0.2))
    assert rep["solution_gaps"] == [harness.FLOOR, harness.FLOOR]
    assert all(r["max_mean_drift"] < 1e-14 for r in rows)


def test_probe_energy_gaps_decrease():
    gaps = harness.probe_energy_gaps(Grid((32, 32)), KernelFamily("gaussian-truncated", 2), (0.4, 0.2, 0.1))
    assert harness.strictly_decreasing(gaps)


def test_sign_inequality_battery():
    res = harness.sign_inequality(Grid((8, 8)), samples=5, seed=1)
    assert res["passed"] and res["min_value"] >= 0.0


def test_graph_batteries_pass():
    out = harness.graph_batteries()
    assert all(b["passed"] for b in out.values()), {k: v for k, v in out.items() if not v["passed"]}


def test_compactness_probe_identical_fields():
    g = Grid((8, 8))
    op = assemble(g, 0.3, KernelFamily("gaussian-truncated", 2))
    f = np.cos(np.pi * g.centers[:, 0])
    assert harness.compactness_probe(g, [f, f], [op, op]) == {0.1: 0.0, 0.01: 0.0}


def test_check_operator_lemmas_default():
    rep = harness.check_operator_lemmas(validate({"grid": {"n": [12, 12]}}), form_n=32, form_ladder=(0.4, 0.2, 0.1))
    failed = [k for k, b in rep["batteries"].items() if not b["passed"]]
    assert rep["passed"], failed
