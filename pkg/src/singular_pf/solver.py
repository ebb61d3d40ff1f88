"""Implicit-Euler solver for the doubly regularized system and its two limits.

The coupled system is split into two maps on whole trajectories:

* ``phase_map`` (the map A): given temperatures, solve the viscous Cahn-Hilliard
  pair for ``(phi, mu)``.
* ``thermal_map`` (the map B): given order parameters, solve the enthalpy
  equation ``Ln_lam(theta)_t + phi_t - Delta theta = f`` with Robin data.

``picard_solve`` iterates ``S = B o A`` to its fixed point in the weighted
metric ``d_h(z, w) = sum_n dt exp(-L t_n) ||z_n - w_n||_H^2`` with
``L = 2 ||pi'||_inf + 3 / lam``.  ``per_step_solve`` runs the same fixed point
one time level at a time.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import graphs
from .errors import NewtonError, PicardError, PositivityError
from .grid import Grid
from .kernels import NonlocalOperator

log = logging.getLogger(__name__)

MODES = ("eps-lambda", "eps", "local")
COUPLINGS = ("global-picard", "per-step")


@dataclass
class Tolerances:
    picard: float = 1e-10  # relative to the trajectory energy scale
    newton: float = 1e-9
    linear: float = 1e-10
    picard_max_iter: int = 200
    coupling_max_iter: int = 200
    newton_max_iter: int = 60


@dataclass
class Problem:
    """Everything a trajectory solve needs, already evaluated on the grid."""

    grid: Grid
    lam: float
    T: float
    dt: float
    graph: graphs.MonotoneGraph
    pi: graphs.LinearPi
    theta0: np.ndarray
    phi0: np.ndarray
    f: Callable[[float], np.ndarray]
    theta_gamma: Callable[[float], np.ndarray]
    operator: Optional[NonlocalOperator] = None
    mode: str = "eps-lambda"
    eps: Optional[float] = None
    coupling: str = "per-step"
    tol: Tolerances = field(default_factory=Tolerances)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode != "local" and self.operator is None:
            raise ValueError(f"mode {self.mode!r} needs an assembled nonlocal operator")
        if self.dt * self.pi.lipschitz >= 1.0:
            raise ValueError("time step too large: dt * Lip(pi) must stay below 1")
        n = self.T / self.dt
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise ValueError("T must be an integer multiple of dt")

    @property
    def nsteps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def times(self):
        return self.dt * np.arange(self.nsteps + 1)

    @property
    def weight_L(self) -> float:
        return 2.0 * self.pi.lipschitz + 3.0 / self.lam

    def apply_A(self, phi):
        """Interface operator ``-lam Delta_h + B_eps`` (``-(lam + 1) Delta_h`` in local mode)."""
        lap = self.grid.apply_laplacian(phi)
        if self.mode == "local":
            return -(self.lam + 1.0) * lap
        return -self.lam * lap + self.operator.apply(phi)

    def interface_energy(self, phi) -> float:
        """``lam/2 ||grad phi||^2 + E_eps(phi)`` (``E`` replaced by the Dirichlet energy locally)."""
        g2 = self.grid.grad_norm_sq(phi)
        if self.mode == "local":
            return 0.5 * (self.lam + 1.0) * g2
        return 0.5 * self.lam * g2 + self.operator.energy(phi)

    def free_energy(self, phi) -> float:
        phi = np.asarray(phi)
        bulk = self.graph.moreau(self.lam, phi) + self.pi.primitive(phi)
        return self.interface_energy(phi) + self.grid.integral(bulk)


@dataclass
class Trajectory:
    """Time levels ``t_n = n dt`` of ``(theta, phi, mu, xi, u)`` plus a run ledger."""

    times: np.ndarray
    theta: np.ndarray
    phi: np.ndarray
    mu: np.ndarray
    lam: float
    graph: graphs.MonotoneGraph
    ledger: dict = field(default_factory=dict)

    @property
    def xi(self):
        return self.graph.yosida(self.lam, self.phi)

    @property
    def u(self):
        return graphs.Ln_lambda(self.lam, self.theta)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def __len__(self):
        return len(self.times)


def weighted_distance(problem: Problem, z, w, weighted=True) -> float:
    """``d_h(z, w) = sum_{n>=1} dt e^{-L t_n} ||z_n - w_n||_H^2``."""
    t = problem.times[1:]
    diff = np.asarray(z)[1:] - np.asarray(w)[1:]
    wts = np.exp(-problem.weight_L * t) if weighted else np.ones_like(t)
    return float(problem.dt * problem.grid.cellvol * np.sum(wts * np.sum(diff * diff, axis=1)))


def projected_pcg(matvec, b, precond, rtol=1e-10, maxiter=1000, floor=1e-15):
    """Preconditioned CG restricted to zero-mean vectors.

    Stops when ``|r| <= max(rtol |b|, floor * scale)`` where ``scale`` tracks the
    size of ``A x``, so tiny right-hand sides never demand sub-roundoff accuracy.
    Returns ``(x, iterations)``; ``x`` is None on failure.
    """
    b = b - b.mean()
    x = np.zeros_like(b)
    r = b.copy()
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return x, 0
    z = precond(r)
    z = z - z.mean()
    pvec = z.copy()
    rz = r @ z
    scale = bnorm
    for it in range(1, maxiter + 1):
        q = matvec(pvec)
        q = q - q.mean()
        pq = pvec @ q
        if pq <= 0.0:
            return None, it
        alpha = rz / pq
        x += alpha * pvec
        r -= alpha * q
        scale = max(scale, abs(alpha) * np.linalg.norm(q))
        rn = np.linalg.norm(r)
        if rn <= max(rtol * bnorm, floor * scale * np.sqrt(b.size)):
            return x, it
        z = precond(r)
        z = z - z.mean()
        rz_new = r @ z
        pvec = z + (rz_new / rz) * pvec
        rz = rz_new
    return None, maxiter


class PhaseStep:
    """One implicit step of the viscous Cahn-Hilliard pair at fixed temperature.

    With ``u = phi - phi_old`` (zero mean) the first equation gives
    ``mu = -N u / dt + const``; the second then becomes the optimality condition
    of a strictly convex functional on zero-mean fields, solved by Newton with
    a DCT-preconditioned CG inner solve.
    """

    def __init__(self, problem: Problem):
        self.p = problem
        g = problem.grid
        kap = g.laplacian_eigenvalues
        self.kappa = kap
        with np.errstate(divide="ignore"):
            inv_kap = np.where(kap > 0.0, 1.0 / np.where(kap > 0.0, kap, 1.0), 0.0)
        self.inv_kappa = inv_kap
        if problem.mode == "local":
            a_sym = (problem.lam + 1.0) * kap
        else:
            a_sym = problem.lam * kap + problem.operator.stencil_symbol
        self.base_symbol = a_sym
        self.n = g.size

    def N(self, v):
        return self.p.grid.spectral_solve(v, self.kappa)

    def _functional(self, u, phi_old, theta, dt):
        p = self.p
        phi = phi_old + u
        quad = (p.grid.inner(u, u) + p.grid.inner(u, self.N(u))) / (2.0 * dt)
        return quad + p.free_energy(phi) - p.grid.inner(theta, phi)

    def _residual(self, u, phi_old, theta, dt):
        p = self.p
        phi = phi_old + u
        r = u / dt + self.N(u) / dt + p.apply_A(phi) + p.graph.yosida(p.lam, phi) + p.pi(phi) - theta
        return r - r.mean()

    def solve(self, phi_old, theta, guess=None, dt=None, step=None):
        p = self.p
        dt = p.dt if dt is None else dt
        tol = p.tol.newton
        u = np.zeros(self.n) if guess is None else np.asarray(guess, dtype=float) - phi_old
        u = u - u.mean()
        res = self._residual(u, phi_old, theta, dt)
        its = 0
        inner = 0
        while np.max(np.abs(res)) > tol:
            if its >= p.tol.newton_max_iter:
                raise NewtonError(f"phase Newton stalled at residual {np.max(np.abs(res)):.3e}", step)
            phi = phi_old + u
            dg = p.graph.yosida_derivative(p.lam, phi) + p.pi.derivative(phi)
            sym = 1.0 / dt + self.inv_kappa / dt + self.base_symbol + dg.mean()
            sym = np.maximum(sym, 1.0 / dt * 1e-3)
            sym.flat[0] = 0.0

            def matvec(v, dg=dg):
                v = v - v.mean()
                out = v / dt + self.N(v) / dt + p.apply_A(v) + dg * v
                return out - out.mean()

            delta, cg_its = projected_pcg(matvec, -res, lambda v, s=sym: p.grid.spectral_solve(v, s),
                                          rtol=p.tol.linear, maxiter=10 * self.n)
            inner += cg_its
            if delta is None:
                raise NewtonError("phase CG failed to converge", step)
            delta = delta - delta.mean()
            # full step if the residual drops, else Armijo backtracking on the convex functional
            trial = u + delta
            new_res = self._residual(trial, phi_old, theta, dt)
            if np.linalg.norm(new_res) >= np.linalg.norm(res):
                f0 = self._functional(u, phi_old, theta, dt)
                slope = p.grid.inner(res, delta)
                s = 1.0
                while s > 1e-8:
                    s *= 0.5
                    trial = u + s * delta
                    if self._functional(trial, phi_old, theta, dt) <= f0 + 1e-4 * s * slope:
                        break
                new_res = self._residual(trial, phi_old, theta, dt)
            u = trial
            res = new_res
            its += 1
        phi = phi_old + u
        g = p.graph.yosida(p.lam, phi) + p.pi(phi)
        mu = -self.N(u) / dt + np.mean(g - theta)
        return phi, mu, its, inner

    def step(self, phi_old, theta, guess=None, step=None):
        """Implicit step with one step-halving retry on Newton failure."""
        try:
            return self.solve(phi_old, theta, guess, step=step)
        except NewtonError as exc:
            log.warning("phase step %s failed (%s); retrying with two half steps", step, exc)
            half = 0.5 * self.p.dt
            mid, _, i1, c1 = self.solve(phi_old, theta, None, dt=half, step=step)
            phi, _, i2, c2 = self.solve(mid, theta, None, dt=half, step=step)
            # report mu for the full step so that phi_t = Delta mu holds on the time grid
            u = phi - phi_old
            g = self.p.graph.yosida(self.p.lam, phi) + self.p.pi(phi)
            mu = -self.N(u) / self.p.dt + np.mean(g - theta)
            return phi, mu, i1 + i2, c1 + c2


class ThermalStep:
    """One implicit step of the enthalpy equation with Robin boundary data."""

    def __init__(self, problem: Problem):
        self.p = problem
        g = problem.grid
        self.K = sp.csr_matrix(g.stiffness + sp.diags(g.trace_weights))
        self.cv = g.cellvol

    def residual(self, theta, u_old, dphi, f, load_gamma, dt):
        lam = self.p.lam
        return (self.cv * (graphs.Ln_lambda(lam, theta) - u_old) / dt + self.cv * dphi / dt
                + self.K @ theta - load_gamma - self.cv * f)

    def solve(self, u_old, guess, dphi, f, theta_gamma, step=None):
        p = self.p
        dt, lam = p.dt, p.lam
        load = p.grid.face_load(theta_gamma)
        theta = np.array(guess, dtype=float)
        res = self.residual(theta, u_old, dphi, f, load, dt)
        its = 0
        while np.max(np.abs(res)) / self.cv > p.tol.newton:
            if its >= p.tol.newton_max_iter:
                raise NewtonError(f"thermal Newton stalled at residual {np.max(np.abs(res)) / self.cv:.3e}", step)
            jac = sp.csr_matrix(self.K + sp.diags(self.cv * graphs.Ln_lambda_derivative(lam, theta) / dt))
            d = jac.diagonal()
            M = spla.LinearOperator(jac.shape, matvec=lambda x, d=d: x / d, dtype=float)
            delta, info = spla.cg(jac, -res, rtol=p.tol.linear, atol=0.0, M=M, maxiter=20 * theta.size)
            if info != 0:
                raise NewtonError(f"thermal CG failed (info={info})", step)
            s = 1.0
            norm0 = np.linalg.norm(res)
            while True:
                trial = theta + s * delta
                new_res = self.residual(trial, u_old, dphi, f, load, dt)
                if np.linalg.norm(new_res) < norm0 or s < 1e-6:
                    break
                s *= 0.5
            theta, res = trial, new_res
            its += 1
        if not np.min(theta) > 0.0:
            raise PositivityError(f"step {step}: temperature lost positivity (min {np.min(theta):.3e})")
        return theta, its


class Solver:
    """Owns the two step operators of one problem."""

    def __init__(self, problem: Problem):
        self.p = problem
        self.phase = PhaseStep(problem)
        self.thermal = ThermalStep(problem)
        self._f = [problem.f(t) for t in problem.times]
        self._tg = [problem.theta_gamma(t) for t in problem.times]

    # -- the two maps ----------------------------------------------------
    def phase_map(self, theta_traj, phi_warm=None):
        """Map A: temperatures -> ``(phi, mu)`` trajectories, mean of phi conserved."""
        p = self.p
        N = p.nsteps
        phi = np.empty((N + 1, p.grid.size))
        mu = np.empty_like(phi)
        phi[0] = p.phi0
        mu[0] = self.initial_mu(theta_traj[0])
        newton = np.zeros(N + 1, dtype=int)
        for n in range(N):
            guess = None if phi_warm is None else phi_warm[n + 1]
            phi[n + 1], mu[n + 1], newton[n + 1], _ = self.phase.step(phi[n], theta_traj[n + 1], guess, step=n + 1)
        return phi, mu, newton

    def thermal_map(self, phi_traj, theta_warm=None):
        """Map B: order parameters -> temperature trajectory."""
        p = self.p
        N = p.nsteps
        theta = np.empty((N + 1, p.grid.size))
        theta[0] = p.theta0
        u = graphs.Ln_lambda(p.lam, p.theta0)
        newton = np.zeros(N + 1, dtype=int)
        for n in range(N):
            guess = theta[n] if theta_warm is None else theta_warm[n + 1]
            theta[n + 1], newton[n + 1] = self.thermal.solve(
                u, guess, phi_traj[n + 1] - phi_traj[n], self._f[n + 1], self._tg[n + 1], step=n + 1)
            u = graphs.Ln_lambda(p.lam, theta[n + 1])
        return theta, newton

    def S(self, theta_traj, phi_warm=None):
        phi, _, _ = self.phase_map(theta_traj, phi_warm)
        theta, _ = self.thermal_map(phi)
        return theta

    def initial_mu(self, theta):
        p = self.p
        phi = p.phi0
        return p.apply_A(phi) + p.graph.yosida(p.lam, phi) + p.pi(phi) - theta

    def constant_guess(self):
        return np.tile(self.p.theta0, (self.p.nsteps + 1, 1))

    def energy_scale(self) -> float:
        return weighted_distance(self.p, self.constant_guess(), np.zeros((self.p.nsteps + 1, self.p.grid.size)))

    # -- coupled solves --------------------------------------------------
    def picard_solve(self, theta_init=None):
        p = self.p
        theta = self.constant_guess() if theta_init is None else np.array(theta_init, dtype=float)
        theta[0] = p.theta0
        tol = p.tol.picard * max(self.energy_scale(), 1e-300)
        history, unweighted, ratios = [], [], []
        phi_warm = None
        for k in range(1, p.tol.picard_max_iter + 1):
            phi, mu, newton = self.phase_map(theta, phi_warm)
            theta_new, tnewton = self.thermal_map(phi, theta)
            d = weighted_distance(p, theta_new, theta)
            du = weighted_distance(p, theta_new, theta, weighted=False)
            if history and history[-1] > 0.0:
                ratios.append(d / history[-1])
            history.append(d)
            unweighted.append(du)
            log.debug("picard %d: d_h=%.3e unweighted=%.3e", k, d, du)
            theta, phi_warm = theta_new, phi
            if d <= tol and du <= tol:
                phi, mu, newton = self.phase_map(theta, phi_warm)
                ledger = {
                    "coupling": "global-picard",
                    "picard_iterations": k,
                    "picard_distances": history,
                    "picard_unweighted": unweighted,
                    "contraction_ratios": ratios,
                    "picard_tol": tol,
                    "phase_newton": newton.tolist(),
                    "thermal_newton": tnewton.tolist(),
                }
                return Trajectory(p.times, theta, phi, mu, p.lam, p.graph, ledger)
        raise PicardError(f"Picard iteration cap {p.tol.picard_max_iter} exceeded (last d_h={history[-1]:.3e}, tol={tol:.3e})", ratios)

    def per_step_solve(self):
        """Same fixed point, iterated to convergence on each time level in turn."""
        p = self.p
        N = p.nsteps
        theta = np.empty((N + 1, p.grid.size))
        phi = np.empty_like(theta)
        mu = np.empty_like(theta)
        theta[0], phi[0] = p.theta0, p.phi0
        mu[0] = self.initial_mu(p.theta0)
        u = graphs.Ln_lambda(p.lam, p.theta0)
        coupling_its = np.zeros(N + 1, dtype=int)
        newton = np.zeros(N + 1, dtype=int)
        for n in range(N):
            th = theta[n].copy()
            ph = phi[n]
            for j in range(1, p.tol.coupling_max_iter + 1):
                ph, m, nits, _ = self.phase.step(phi[n], th, ph, step=n + 1)
                th_new, _ = self.thermal.solve(u, th, ph - phi[n], self._f[n + 1], self._tg[n + 1], step=n + 1)
                diff = np.max(np.abs(th_new - th))
                th = th_new
                newton[n + 1] += nits
                if diff <= p.tol.newton * max(1.0, np.max(np.abs(th))):
                    break
            else:
                raise PicardError(f"step {n + 1}: per-step coupling did not converge")
            # final phase solve consistent with the converged temperature
            ph, m, nits, _ = self.phase.step(phi[n], th, ph, step=n + 1)
            theta[n + 1], phi[n + 1], mu[n + 1] = th, ph, m
            coupling_its[n + 1] = j
            u = graphs.Ln_lambda(p.lam, th)
        ledger = {
            "coupling": "per-step",
            "coupling_iterations": coupling_its.tolist(),
            "phase_newton": newton.tolist(),
        }
        return Trajectory(p.times, theta, phi, mu, p.lam, p.graph, ledger)

    def run(self):
        if self.p.coupling == "global-picard":
            return self.picard_solve()
        return self.per_step_solve()


def picard_solve(problem: Problem, theta_init=None) -> Trajectory:
    return Solver(problem).picard_solve(theta_init)


def solve(problem: Problem) -> Trajectory:
    """Entry point for all three modes.

    In ``eps`` mode the selection ``xi = beta_lam(phi)`` is reported at the
    configured (small) lambda; in ``local`` mode the kernel operator is replaced
    by ``-Delta_h``.
    """
    return Solver(problem).run()


def contraction_ratio(problem: Problem, theta1, theta2, solver: Solver = None) -> float:
    """Measured ``d_h(S theta1, S theta2) / d_h(theta1, theta2)``."""
    solver = solver or Solver(problem)
    s1, s2 = solver.S(theta1), solver.S(theta2)
    return weighted_distance(problem, s1, s2) / weighted_distance(problem, theta1, theta2)
