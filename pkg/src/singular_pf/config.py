"""Run configuration: YAML parsing, validation against C1-C8, problem building.

Every rejection raises :class:`ConfigError` whose ``label`` names the violated
assumption.  Tolerances may be overridden with the environment variables
``SPF_TOL_PICARD``, ``SPF_TOL_NEWTON``, ``SPF_TOL_LINEAR``.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
import os
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np
import yaml

from . import graphs
from .errors import ConfigError
from .expressions import ExpressionError, parse_expr
from .grid import Grid
from .kernels import FAMILIES, KernelFamily, assemble, check_family
from .solver import COUPLINGS, MODES, Problem, Tolerances

ENV_TOLERANCES = {"SPF_TOL_PICARD": "picard", "SPF_TOL_NEWTON": "newton", "SPF_TOL_LINEAR": "linear"}

DEFAULTS = {
    "mode": "eps-lambda",
    "coupling": "per-step",
    "epsilon": 0.2,
    "lambda": 0.5,
    "T": 0.1,
    "dt": None,
    "seed": 0,
    "grid": {"n": [16, 16], "extent": None},
    "kernel": {"family": "gaussian-truncated", "scale": 1.0, "eps_ladder": None},
    "beta": "power",
    "pi": {"kind": "linear", "coefficient": 1.0},
    "f": 0.0,
    "theta_gamma": 1.0,
    "theta0": 1.0,
    "theta_lower": None,
    "theta_upper": None,
    "phi0": 0.0,
    "phi0_eps": None,
    "phi0_eps_lambda": None,
    "mean_window": None,
    "mollify": False,
    "tolerances": {},
}
KNOWN_KEYS = set(DEFAULTS) | {"name", "description"}


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


@dataclass
class RunConfig:
    """Validated configuration.  ``data`` keeps the merged raw mapping."""

    data: dict
    grid: Grid
    family: KernelFamily
    graph: graphs.MonotoneGraph
    pi: graphs.LinearPi
    tol: Tolerances = field(default_factory=Tolerances)

    @property
    def mode(self):
        return self.data["mode"]

    @property
    def eps(self):
        return float(self.data["epsilon"])

    @property
    def lam(self):
        return float(self.data["lambda"])

    @property
    def T(self):
        return float(self.data["T"])

    @property
    def dt(self):
        dt = self.data["dt"]
        return self.T / 200.0 if dt is None else float(dt)

    @property
    def seed(self):
        return int(self.data["seed"])

    def expr(self, key):
        return parse_expr(self.data[key])

    def nodal(self, key, t=0.0):
        return self.expr(key).evaluate(self.grid.centers, t, self.grid.extent, self.seed)

    def faces(self, key, t=0.0):
        return self.expr(key).evaluate(self.grid.face_centers, t, self.grid.extent, self.seed)

    def phi0(self):
        return self.nodal("phi0")

    def phi0_eps(self, eps=None):
        """``phi_{0,eps}``: explicit override, heat-mollified ``phi0``, or ``phi0`` itself."""
        eps = self.eps if eps is None else eps
        if self.data["phi0_eps"] is not None:
            return self.nodal("phi0_eps")
        phi = self.phi0()
        if self.data["mollify"]:
            g = self.grid
            phi = g.idct(g.dct(phi) * np.exp(-eps * eps * g.laplacian_eigenvalues)).ravel()
        return phi

    def phi0_eps_lambda(self, eps=None):
        if self.data["phi0_eps_lambda"] is not None:
            return self.nodal("phi0_eps_lambda")
        return self.phi0_eps(eps)

    def with_overrides(self, **kw) -> "RunConfig":
        """Re-validate with top-level keys replaced (``lam`` maps to ``lambda``)."""
        data = copy.deepcopy(self.data)
        for k, v in kw.items():
            if v is None:
                continue
            data["lambda" if k == "lam" else "epsilon" if k == "eps" else k] = v
        return validate(data)

    def hash(self) -> str:
        blob = json.dumps(self.data, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()


def load_config(path) -> RunConfig:
    return parse_config(path)


def parse_config(path) -> RunConfig:
    text = Path(path).read_text()
    try:
        raw = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError("syntax", f"cannot parse {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("syntax", "top level must be a mapping")
    return validate(raw)


def _env_tolerances(tol: Tolerances) -> Tolerances:
    over = {}
    for var, name in ENV_TOLERANCES.items():
        if var in os.environ:
            over[name] = float(os.environ[var])
    return replace(tol, **over)


def _finite_expr(cfg, key, label, where="nodal", times=(0.0,)):
    try:
        e = parse_expr(cfg.data[key])
    except ExpressionError as exc:
        raise ConfigError(label, f"{key}: {exc}") from exc
    pts = cfg.grid.centers if where == "nodal" else cfg.grid.face_centers
    vals = [e.evaluate(pts, t, cfg.grid.extent, cfg.seed) for t in times]
    if not all(np.all(np.isfinite(v)) for v in vals):
        raise ConfigError(label, f"{key} must be finite everywhere")
    return vals


def validate(raw: dict) -> RunConfig:
    unknown = set(raw) - KNOWN_KEYS
    if unknown:
        raise ConfigError("syntax", f"unknown keys {sorted(unknown)}")
    data = _merge(DEFAULTS, raw)
    if data["mode"] not in MODES:
        raise ConfigError("syntax", f"mode must be one of {MODES}")
    if data["coupling"] not in COUPLINGS:
        raise ConfigError("syntax", f"coupling must be one of {COUPLINGS}")

    gspec = data["grid"]
    try:
        n = tuple(int(k) for k in gspec["n"])
        extent = None if gspec.get("extent") is None else tuple(float(e) for e in gspec["extent"])
        grid = Grid(n, extent)
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError("syntax", f"bad grid spec: {exc}") from exc

    T = float(data["T"])
    dt = T / 200.0 if data["dt"] is None else float(data["dt"])
    if not (T > 0.0 and dt > 0.0):
        raise ConfigError("syntax", "T and dt must be positive")

    # C1: kernel family normalization and tail
    k = data["kernel"]
    if k["family"] not in FAMILIES:
        raise ConfigError("C1", f"kernel family must be one of {FAMILIES}")
    family = KernelFamily(k["family"], grid.dim, float(k.get("scale", 1.0)))
    eps = float(data["epsilon"])
    ladder = sorted({eps, *(float(e) for e in (k.get("eps_ladder") or []))}, reverse=True)
    diam = float(np.linalg.norm(grid.extent))
    failures = check_family(family, ladder, delta=0.25 * diam)
    if failures:
        raise ConfigError("C1", "kernel family fails the normalization self-test: " + "; ".join(failures))

    # C2: maximal monotone graph with beta_hat(0) = 0
    if data["beta"] not in graphs.GRAPH_IDS:
        raise ConfigError("C2", f"beta must be one of {graphs.GRAPH_IDS}")
    graph = graphs.get_graph(data["beta"])
    if float(graph.primitive(0.0)) != 0.0:
        raise ConfigError("C2", f"beta_hat(0) must be 0 (graph {graph.graph_id!r} has {float(graph.primitive(0.0)):g})")

    # C3: Lipschitz pi
    pspec = data["pi"]
    if pspec.get("kind", "linear") != "linear":
        raise ConfigError("C3", f"pi must be Lipschitz; kind {pspec.get('kind')!r} is not supported")
    coef = float(pspec.get("coefficient", 1.0))
    if not math.isfinite(coef):
        raise ConfigError("C3", "pi coefficient must be finite")
    pi = graphs.LinearPi(coef)
    if dt * pi.lipschitz >= 1.0:
        raise ConfigError("C3", "dt * Lip(pi) must stay below 1 for the implicit step to be uniquely solvable")

    tol = _env_tolerances(replace(Tolerances(), **{kk: type(getattr(Tolerances(), kk))(v) for kk, v in data["tolerances"].items()}))
    cfg = RunConfig(data, grid, family, graph, pi, tol)
    nsteps = int(round(T / dt))
    if abs(T / dt - nsteps) > 1e-9 * max(1.0, nsteps):
        raise ConfigError("syntax", "T must be an integer multiple of dt")
    times = dt * np.arange(nsteps + 1)

    # C4: f in L^2 (finite on the space-time grid)
    _finite_expr(cfg, "f", "C4", times=times)

    # C5: positive bounds on theta_Gamma and theta0
    tg = _finite_expr(cfg, "theta_gamma", "C5", where="faces", times=times)
    th0 = _finite_expr(cfg, "theta0", "C5")[0]
    lo = data["theta_lower"] if data["theta_lower"] is not None else min(th0.min(), min(v.min() for v in tg))
    hi = data["theta_upper"] if data["theta_upper"] is not None else max(th0.max(), max(v.max() for v in tg))
    lo, hi = float(lo), float(hi)
    if not lo > 0.0:
        raise ConfigError("C5", "theta_lower must be positive")
    if not hi >= lo:
        raise ConfigError("C5", "theta_upper must be at least theta_lower")
    if th0.min() < lo or th0.max() > hi:
        raise ConfigError("C5", "theta0 must lie in [theta_lower, theta_upper]")
    if any(v.min() < lo or v.max() > hi for v in tg):
        raise ConfigError("C5", "theta_gamma must lie in [theta_lower, theta_upper]")

    # C6: phi0 with integrable beta_hat and mean in Int D(beta)
    phi0 = _finite_expr(cfg, "phi0", "C6")[0]
    bh = graph.primitive(phi0)
    if not np.all(np.isfinite(bh)):
        raise ConfigError("C6", "beta_hat(phi0) must be integrable (phi0 leaves the domain of beta_hat)")
    if not graph.interior_contains(phi0.mean()):
        raise ConfigError("C6", f"mean of phi0 ({phi0.mean():g}) must lie in Int D(beta)")

    # C7: eps in (0, 1); phi_{0,eps} mean window inside Int D(beta)
    if not 0.0 < eps < 1.0:
        raise ConfigError("C7", "epsilon must lie in (0, 1)")
    if data["phi0_eps"] is not None:
        _finite_expr(cfg, "phi0_eps", "C7")
    p0e = cfg.phi0_eps()
    if not np.all(np.isfinite(graph.primitive(p0e))):
        raise ConfigError("C7", "beta_hat(phi0_eps) must be integrable")
    window = data["mean_window"]
    a0, b0 = (p0e.mean(), p0e.mean()) if window is None else (float(window[0]), float(window[1]))
    if not (a0 <= b0 and graph.interior_contains(a0) and graph.interior_contains(b0)):
        raise ConfigError("C7", f"mean window [{a0:g}, {b0:g}] must lie in Int D(beta)")
    if not a0 - 1e-12 <= p0e.mean() <= b0 + 1e-12:
        raise ConfigError("C7", f"mean of phi0_eps ({p0e.mean():g}) must lie in [a0, b0]")

    # C8: lambda in (0, 1); mean(phi_{0,eps,lam}) = mean(phi_{0,eps})
    lam = float(data["lambda"])
    if not 0.0 < lam < 1.0:
        raise ConfigError("C8", "lambda must lie in (0, 1)")
    if data["phi0_eps_lambda"] is not None:
        _finite_expr(cfg, "phi0_eps_lambda", "C8")
    p0el = cfg.phi0_eps_lambda()
    if abs(p0el.mean() - p0e.mean()) > 1e-12 * max(1.0, abs(p0e.mean())):
        raise ConfigError("C8", "mean of phi0_eps_lambda must equal the mean of phi0_eps")
    if not np.all(np.isfinite(graph.primitive(p0el))):
        raise ConfigError("C8", "beta_hat(phi0_eps_lambda) must be integrable")
    return cfg


@lru_cache(maxsize=8)
def cached_operator(grid: Grid, eps: float, family: KernelFamily):
    return assemble(grid, eps, family)


def build_problem(cfg: RunConfig, mode=None, eps=None, lam=None, dt=None, coupling=None) -> Problem:
    """Evaluate the config's data on its grid and return a solver :class:`Problem`."""
    mode = mode or cfg.mode
    eps = cfg.eps if eps is None else float(eps)
    lam = cfg.lam if lam is None else float(lam)
    dt = cfg.dt if dt is None else float(dt)
    g = cfg.grid
    op = None if mode == "local" else cached_operator(g, eps, cfg.family)
    f_expr, tg_expr = cfg.expr("f"), cfg.expr("theta_gamma")
    f0 = f_expr.evaluate(g.centers, 0.0, g.extent, cfg.seed)
    tg0 = tg_expr.evaluate(g.face_centers, 0.0, g.extent, cfg.seed)

    def f(t):
        return f_expr.evaluate(g.centers, t, g.extent, cfg.seed) if f_expr.time_dependent else f0

    def theta_gamma(t):
        return tg_expr.evaluate(g.face_centers, t, g.extent, cfg.seed) if tg_expr.time_dependent else tg0

    phi0 = cfg.phi0() if mode == "local" else cfg.phi0_eps_lambda(eps)
    return Problem(
        grid=g, lam=lam, T=cfg.T, dt=dt, graph=cfg.graph, pi=cfg.pi,
        theta0=cfg.nodal("theta0"), phi0=phi0, f=f, theta_gamma=theta_gamma,
        operator=op, mode=mode, eps=eps, coupling=coupling or cfg.data["coupling"], tol=cfg.tol,
    )
