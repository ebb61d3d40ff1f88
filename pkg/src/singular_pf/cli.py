"""Command-line interface.

Exit codes: 0 success, 1 acceptance/battery failure, 2 configuration or arguments rejected,
3 invariant violation or solver failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import diagnostics, graphs, harness, io, plotting
from .config import build_problem, parse_config, validate
from .errors import ConfigError, InvariantViolation, SolverError
from .solver import MODES, Solver

log = logging.getLogger("singular_pf")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_INVARIANT = 0, 1, 2, 3
MASS_TOL = 1e-10


def _load(args):
    over = {}
    if getattr(args, "seed", None) is not None:
        over["seed"] = args.seed
    if getattr(args, "mode", None) is not None:
        over["mode"] = args.mode
    if args.config is None:
        return validate(over)
    cfg = parse_config(args.config)
    return cfg.with_overrides(**over) if over else cfg


def check_invariants(traj):
    """Raise :class:`InvariantViolation` on mass drift above 1e-10 or non-positive temperature."""
    drift = float(np.max(np.abs(traj.phi.mean(axis=1) - traj.phi[0].mean())))
    if drift > MASS_TOL:
        raise InvariantViolation(f"mean of phi drifted by {drift:.3e}")
    if not float(traj.theta.min()) > 0.0:
        raise InvariantViolation(f"temperature reached {float(traj.theta.min()):.3e}")
    return drift


def cmd_simulate(args, out: Path):
    cfg = _load(args)
    prob = build_problem(cfg)
    traj = Solver(prob).run()
    led = diagnostics.ledger(prob, traj)
    outputs = []
    cols, rows = diagnostics.to_rows(led)
    outputs.append(io.write_csv(out / "ledger.csv", rows, cols))
    g = cfg.grid
    for n in sorted({0, len(traj) - 1}):
        for name, unit, vals in (("theta", "temperature", traj.theta[n]), ("phi", "order-parameter", traj.phi[n]),
                                 ("mu", "potential", traj.mu[n])):
            stem = io.write_field(out / "fields" / f"{name}_{n:05d}", g, vals, unit, {"time": float(traj.times[n])})
            outputs += [stem.with_suffix(".bin"), stem.with_suffix(".json")]
    summary = {"mode": prob.mode, "coupling": prob.coupling, "lambda": prob.lam, "epsilon": prob.eps,
               "steps": prob.nsteps, "diagnostics": led["summary"], "solver": traj.ledger}
    outputs.append(io.write_json(out / "summary.json", summary))
    outputs.append(plotting.ledger_plot(led, out / "energy.svg"))
    if g.dim == 2:
        outputs.append(plotting.field_plot(g, traj.phi[-1], out / "phi_final.png", "phi(T)"))
    io.write_json(out / "manifest.json", io.manifest("simulate", cfg, cfg.seed, [o.relative_to(out) for o in outputs]))
    check_invariants(traj)
    return EXIT_OK


def cmd_sweep_lambda(args, out: Path):
    cfg = _load(args)
    rows, report = harness.sweep_lambda(cfg, lam0=args.lam0, rungs=args.rungs)
    outputs = [io.write_csv(out / "lambda_sweep.csv", rows),
               io.write_csv(out / "lambda_rates.csv", harness.rate_table(report["deltas"]))]
    outputs.append(io.write_json(out / "report.json", report))
    outputs.append(plotting.rate_plot(rows[:-1], "lambda", ["delta", "graph_distance"], out / "lambda_rates.svg"))
    io.write_json(out / "manifest.json", io.manifest("sweep-lambda", cfg, cfg.seed, [o.relative_to(out) for o in outputs]))
    return EXIT_OK if report["passed"] else EXIT_FAIL


def cmd_sweep_epsilon(args, out: Path):
    cfg = _load(args)
    rows, report = harness.sweep_epsilon(cfg, eps_ladder=tuple(args.eps_ladder), lam=args.lam)
    outputs = [io.write_csv(out / "epsilon_sweep.csv", rows),
               io.write_csv(out / "epsilon_rates.csv", harness.rate_table(report["solution_gaps"]))]
    outputs.append(io.write_json(out / "report.json", report))
    outputs.append(plotting.rate_plot(rows, "epsilon", ["solution_gap", "energy_gap"], out / "epsilon_rates.svg"))
    io.write_json(out / "manifest.json", io.manifest("sweep-epsilon", cfg, cfg.seed, [o.relative_to(out) for o in outputs]))
    return EXIT_OK if report["passed"] else EXIT_FAIL


def cmd_check_operators(args, out: Path):
    cfg = _load(args)
    report = harness.check_operator_lemmas(cfg)
    energy_rows = report["batteries"]["energy_convergence"]["table"]
    outputs = [io.write_json(out / "operators.json", report), io.write_csv(out / "energy_table.csv", energy_rows)]
    io.write_json(out / "manifest.json", io.manifest("check-operators", cfg, cfg.seed, [o.relative_to(out) for o in outputs]))
    return EXIT_OK if report["passed"] else EXIT_FAIL


def cmd_tabulate_graphs(args, out: Path):
    r = np.linspace(args.rmin, args.rmax, args.samples)
    outputs = []
    for gid in args.graph or graphs.GRAPH_IDS:
        gr = graphs.get_graph(gid)
        rows = [{"r": float(a), "J": float(j), "beta_lambda": float(b), "moreau": float(m)}
                for a, j, b, m in zip(r, gr.resolvent(args.lam, r), gr.yosida(args.lam, r), gr.moreau(args.lam, r))]
        outputs.append(io.write_csv(out / f"graph_{gid}.csv", rows))
    io.write_json(out / "manifest.json", io.manifest("tabulate-graphs", None, None, [o.relative_to(out) for o in outputs],
                                                     {"lambda": args.lam}))
    return EXIT_OK


def cmd_plot(args, out: Path):
    rows = io.read_csv(args.input)
    if not rows:
        raise ValueError(f"{args.input} is empty")
    x = args.x or next(iter(rows[0]))
    ys = args.y or [k for k in rows[0] if k != x and isinstance(rows[0][k], float)]
    target = out / (args.name or Path(args.input).with_suffix(".svg").name)
    plotting.rate_plot(rows, x, ys, target, title=Path(args.input).stem)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="singular-pf", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", type=Path, default=None, help="YAML run config (defaults built in)")
            sp.add_argument("--seed", type=int, default=None)
            sp.add_argument("--mode", choices=MODES, default=None)
        sp.add_argument("--out", type=Path, default=Path("runs"), help="output directory")

    common(sub.add_parser("simulate", help="solve one trajectory"))
    s = sub.add_parser("sweep-lambda", help="lambda ladder at fixed eps")
    common(s)
    s.add_argument("--lam0", type=float, default=0.5)
    s.add_argument("--rungs", type=int, default=6)
    s = sub.add_parser("sweep-epsilon", help="eps ladder against the local limit")
    common(s)
    s.add_argument("--eps-ladder", type=float, nargs="+", default=[0.4, 0.2, 0.1, 0.05])
    s.add_argument("--lam", type=float, default=None)
    common(sub.add_parser("check-operators", help="operator and graph property batteries"))
    s = sub.add_parser("tabulate-graphs", help="tabulate J, beta_lam and the Moreau envelope")
    common(s, config=False)
    s.add_argument("--graph", choices=graphs.GRAPH_IDS, action="append")
    s.add_argument("--lam", type=float, default=0.1)
    s.add_argument("--rmin", type=float, default=-2.0)
    s.add_argument("--rmax", type=float, default=2.0)
    s.add_argument("--samples", type=int, default=81)
    s = sub.add_parser("plot", help="render a CSV table as a log-log SVG")
    common(s, config=False)
    s.add_argument("--input", type=Path, required=True)
    s.add_argument("--x", default=None)
    s.add_argument("--y", action="append", default=None)
    s.add_argument("--name", default=None)
    return p


COMMANDS = {
    "simulate": cmd_simulate,
    "sweep-lambda": cmd_sweep_lambda,
    "sweep-epsilon": cmd_sweep_epsilon,
    "check-operators": cmd_check_operators,
    "tabulate-graphs": cmd_tabulate_graphs,
    "plot": cmd_plot,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        return COMMANDS[args.command](args, out)
    except ConfigError as exc:
        print(f"config rejected: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InvariantViolation, SolverError) as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (ValueError, OSError) as exc:
        print(f"bad arguments: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
