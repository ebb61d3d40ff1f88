"""Per-step energy ledger and a priori quantities of a computed trajectory.

Two discrete balances are tracked.  Testing the phase equation with ``mu`` and
the chemical-potential equation with ``phi_t`` gives

    F(phi^N) - F(phi^0) + sum_n dt (||grad mu||^2 + ||dphi/dt||^2) = sum_n (theta, dphi)

(``residual_phase``), and testing the enthalpy equation with ``theta`` gives

    int Phi(theta^N) - int Phi(theta^0) + sum_n [(dphi, theta) + dt ||grad theta||^2
        + dt ||theta||_Gamma^2] = sum_n dt [(theta_Gamma, theta)_Gamma + (f, theta)]

with ``Phi(r) = lam/2 r^2 + lam/2 ln_lam(r)^2 + J_lam^ln(r)`` (``residual_thermal``).
Implicit Euler satisfies both up to the quadratic remainders of the step, so
the residuals are O(dt).
"""

from __future__ import annotations

import numpy as np

from . import graphs


def thermal_potential(lam, theta):
    """``Phi`` with ``Phi'(r) = r Ln_lam'(r)``, so that ``(d/dt Ln_lam(theta), theta) = d/dt int Phi``."""
    lnl = graphs.ln_lambda(lam, theta)
    return 0.5 * lam * theta ** 2 + 0.5 * lam * lnl ** 2 + graphs.J_ln(lam, theta)


def ledger(problem, traj) -> dict:
    """Per-step arrays (length ``N + 1``) plus scalar summaries."""
    p = problem
    g = p.grid
    lam, dt = p.lam, p.dt
    N = len(traj) - 1
    phi, theta, mu = traj.phi, traj.theta, traj.mu

    free = np.array([p.free_energy(x) for x in phi])
    interface = np.array([p.interface_energy(x) for x in phi])
    beta = traj.graph.yosida(lam, phi)
    rows = {k: np.zeros(N + 1) for k in (
        "grad_mu", "phi_t", "coupling", "grad_theta", "trace_theta", "boundary_work", "source_work")}
    for n in range(1, N + 1):
        d = phi[n] - phi[n - 1]
        th = theta[n]
        t = traj.times[n]
        rows["grad_mu"][n] = dt * g.grad_norm_sq(mu[n])
        rows["phi_t"][n] = g.inner(d, d) / dt
        rows["coupling"][n] = g.inner(th, d)
        rows["grad_theta"][n] = dt * g.grad_norm_sq(th)
        rows["trace_theta"][n] = dt * g.trace_norm_sq(th)
        rows["boundary_work"][n] = dt * g.trace_integral(th, p.theta_gamma(t))
        rows["source_work"][n] = dt * g.inner(p.f(t), th)
    cum = {k: np.cumsum(v) for k, v in rows.items()}

    res_phase = free - free[0] + cum["grad_mu"] + cum["phi_t"] - cum["coupling"]
    pot = np.array([g.integral(thermal_potential(lam, th)) for th in theta])
    res_thermal = (pot - pot[0] + cum["coupling"] + cum["grad_theta"] + cum["trace_theta"]
                   - cum["boundary_work"] - cum["source_work"])

    lnl = graphs.ln_lambda(lam, theta)
    out = {
        "time": traj.times,
        "free_energy": free,
        "interface_energy": interface,
        "dissipation_grad_mu": cum["grad_mu"],
        "dissipation_phi_t": cum["phi_t"],
        "coupling_work": cum["coupling"],
        "residual_phase": res_phase,
        "theta_sq": 0.5 * lam * g.cellvol * np.sum(theta ** 2, axis=1),
        "ln_lambda_sq": 0.5 * lam * g.cellvol * np.sum(lnl ** 2, axis=1),
        "J_ln_integral": g.cellvol * np.sum(graphs.J_ln(lam, theta), axis=1),
        "grad_theta": cum["grad_theta"],
        "trace_theta": cum["trace_theta"],
        "residual_thermal": res_thermal,
        "mean_phi": phi.mean(axis=1),
        "mean_drift": phi.mean(axis=1) - phi[0].mean(),
        "beta_L1": g.cellvol * np.sum(np.abs(beta), axis=1),
        "beta_L2": np.sqrt(g.cellvol * np.sum(beta ** 2, axis=1)),
        "min_theta": theta.min(axis=1),
    }
    out["summary"] = summary(problem, traj, out)
    return out


def summary(problem, traj, led) -> dict:
    g = problem.grid
    dt = problem.dt
    beta = traj.graph.yosida(problem.lam, traj.phi[1:])
    mu = traj.mu[1:]
    return {
        "final_free_energy": float(led["free_energy"][-1]),
        "residual_phase": float(led["residual_phase"][-1]),
        "residual_thermal": float(led["residual_thermal"][-1]),
        "max_mean_drift": float(np.max(np.abs(led["mean_drift"]))),
        "min_theta": float(np.min(led["min_theta"])),
        "dissipation": float(led["dissipation_grad_mu"][-1] + led["dissipation_phi_t"][-1]),
        "beta_L2_time": float(np.sqrt(dt * g.cellvol * np.sum(beta ** 2))),
        "mu_L2_time": float(np.sqrt(dt * g.cellvol * np.sum(mu ** 2))),
        "max_beta_L1": float(np.max(led["beta_L1"])),
    }


def to_rows(led) -> tuple[list[str], list[list[float]]]:
    """Flatten the per-step arrays into CSV columns."""
    keys = [k for k, v in led.items() if k != "summary"]
    return keys, [[float(led[k][n]) for k in keys] for n in range(len(led["time"]))]
