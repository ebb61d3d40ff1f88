"""Maximal monotone graphs on the real line and their Yosida machinery.

Every evaluator is vectorized over numpy arrays.  Scalar solves (resolvents,
the inverse of ``Ln_lambda``) go through a safeguarded Newton iteration whose
bisection bracket comes from monotonicity, so they never leave the bracket.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NewtonError

GRAPH_IDS = ("log", "indicator", "power", "natural-log")

#: absolute residual target of the innermost scalar solves (relative for |r| > 1)
SCALAR_TOL = 1e-12
SCALAR_MAXITER = 200


def _softplus(x):
    return np.logaddexp(0.0, x)


def _log_series(s):
    # (1+s) ln(1+s) + (1-s) ln(1-s) = s^2 + s^4/6 + s^6/15 + ..., accurate for |s| < 1e-3
    s2 = s * s
    return s2 * (1.0 + s2 * (1.0 / 6.0 + s2 / 15.0))


def monotone_solve(fun, dfun, target, lo, hi, x0=None, tol=SCALAR_TOL, maxiter=SCALAR_MAXITER):
    """Solve ``fun(x) = target`` elementwise for an increasing ``fun``.

    ``lo``/``hi`` must bracket the root.  A Newton step that leaves the current
    bracket is replaced by bisection, and the bracket is shrunk after every
    evaluation, so the iteration converges for any monotone ``fun``.
    """
    target = np.asarray(target, dtype=float)
    lo = np.array(np.broadcast_to(lo, target.shape), dtype=float)
    hi = np.array(np.broadcast_to(hi, target.shape), dtype=float)
    if x0 is None:
        x = 0.5 * (lo + hi)
    else:
        x = np.clip(np.array(np.broadcast_to(x0, target.shape), dtype=float), lo, hi)
    scale = np.maximum(1.0, np.abs(target))
    for _ in range(maxiter):
        res = fun(x) - target
        done = np.abs(res) <= tol * scale
        if np.all(done):
            # one polishing Newton step takes the residual down to roundoff
            with np.errstate(divide="ignore", invalid="ignore"):
                xp = x - res / dfun(x)
            ok = np.isfinite(xp) & (xp >= lo) & (xp <= hi)
            return np.where(ok, xp, x)
        lo = np.where(res < 0.0, x, lo)
        hi = np.where(res > 0.0, x, hi)
        d = dfun(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            xn = x - res / d
        bad = ~np.isfinite(xn) | (xn <= lo) | (xn >= hi)
        xn = np.where(bad, 0.5 * (lo + hi), xn)
        # bracket collapsed to adjacent floats: accept
        stuck = (hi - lo) <= 4.0 * np.spacing(np.maximum(np.abs(lo), np.abs(hi)))
        x = np.where(done, x, np.where(stuck, x, xn))
        if np.all(done | stuck):
            return x
    res = fun(x) - target
    if np.any(np.abs(res) > 1e3 * tol * scale):
        worst = float(np.max(np.abs(res) / scale))
        raise NewtonError(f"monotone scalar solve did not converge (relative residual {worst:.3e})")
    return x


class MonotoneGraph:
    """Base class: a maximal monotone graph ``beta`` with primitive ``beta_hat``.

    Subclasses implement :meth:`resolvent_with_slope`, which returns the
    resolvent ``J_lam(r)`` together with its derivative.  All Yosida
    quantities are derived from it.
    """

    graph_id = ""
    domain = (-np.inf, np.inf)
    single_valued = True

    def primitive(self, r):
        raise NotImplementedError

    def minimal_section(self, r):
        raise NotImplementedError

    def resolvent_with_slope(self, lam, r):
        raise NotImplementedError

    def resolvent(self, lam, r):
        return self.resolvent_with_slope(lam, r)[0]

    def yosida(self, lam, r):
        r = np.asarray(r, dtype=float)
        return (r - self.resolvent(lam, r)) / lam

    def yosida_derivative(self, lam, r):
        _, slope = self.resolvent_with_slope(lam, r)
        return (1.0 - slope) / lam

    def moreau(self, lam, r):
        """Moreau envelope ``beta_hat_lam(r) = (r - J)^2 / (2 lam) + beta_hat(J)``."""
        r = np.asarray(r, dtype=float)
        j = self.resolvent(lam, r)
        return (r - j) ** 2 / (2.0 * lam) + self.primitive(j)

    def interior_contains(self, r) -> bool:
        lo, hi = self.domain
        return bool(lo < r < hi)

    def __repr__(self):
        return f"{type(self).__name__}()"


class LogGraph(MonotoneGraph):
    """``beta(r) = ln((1 + r) / (1 - r))`` on ``(-1, 1)``.

    Solves are carried out in ``t = artanh(s)`` so that resolvents close to the
    endpoints never round onto them.
    """

    graph_id = "log"
    domain = (-1.0, 1.0)

    def primitive(self, r):
        r = np.asarray(r, dtype=float)
        out = np.full(r.shape, np.inf)
        inside = np.abs(r) < 1.0
        ri = r[inside]
        val = np.log1p(ri) * (1.0 + ri) + np.log1p(-ri) * (1.0 - ri)
        out[inside] = np.where(np.abs(ri) < 1e-3, _log_series(ri), np.maximum(val, 0.0))
        edge = np.abs(r) == 1.0
        out[edge] = 2.0 * np.log(2.0)
        return out

    def minimal_section(self, r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            return np.log1p(r) - np.log1p(-r)

    def _solve_t(self, lam, r):
        r = np.asarray(r, dtype=float)
        lo = (r - 1.0) / (2.0 * lam)
        hi = (r + 1.0) / (2.0 * lam)
        x0 = np.arctanh(np.clip(r, -0.999, 0.999))
        return monotone_solve(
            lambda t: np.tanh(t) + 2.0 * lam * t,
            lambda t: 1.0 / np.cosh(np.clip(t, -350, 350)) ** 2 + 2.0 * lam,
            r, lo, hi, x0=x0,
        )

    def resolvent_with_slope(self, lam, r):
        t = self._solve_t(lam, r)
        sech2 = 1.0 / np.cosh(np.clip(t, -350, 350)) ** 2
        # J' = 1 / (1 + lam * beta'(J)), beta'(tanh t) = 2 cosh^2 t
        return np.tanh(t), sech2 / (sech2 + 2.0 * lam)

    def moreau(self, lam, r):
        r = np.asarray(r, dtype=float)
        t = self._solve_t(lam, r)
        j = np.tanh(t)
        ln2 = np.log(2.0)
        # (1+s) ln(1+s) + (1-s) ln(1-s) with s = tanh t, without cancellation
        prim = (1.0 + j) * (ln2 - _softplus(-2.0 * t)) + (1.0 - j) * (ln2 - _softplus(2.0 * t))
        prim = np.where(np.abs(j) < 1e-3, _log_series(j), np.maximum(prim, 0.0))
        return (r - j) ** 2 / (2.0 * lam) + prim


class IndicatorGraph(MonotoneGraph):
    """Subdifferential of the indicator of ``[-1, 1]`` (multivalued at the ends)."""

    graph_id = "indicator"
    domain = (-1.0, 1.0)
    single_valued = False

    def primitive(self, r):
        r = np.asarray(r, dtype=float)
        return np.where(np.abs(r) <= 1.0, 0.0, np.inf)

    def minimal_section(self, r):
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        out[r > 1.0] = np.inf
        out[r < -1.0] = -np.inf
        return out

    def resolvent_with_slope(self, lam, r):
        r = np.asarray(r, dtype=float)
        # semismooth choice: "inactive" (slope 1) on the closed set |r| <= 1
        return np.clip(r, -1.0, 1.0), np.where(np.abs(r) <= 1.0, 1.0, 0.0)


class PowerGraph(MonotoneGraph):
    """``beta(r) = r^3`` with ``beta_hat(r) = r^4 / 4``."""

    graph_id = "power"

    def primitive(self, r):
        return np.asarray(r, dtype=float) ** 4 / 4.0

    def minimal_section(self, r):
        return np.asarray(r, dtype=float) ** 3

    def resolvent_with_slope(self, lam, r):
        r = np.asarray(r, dtype=float)
        cap = np.cbrt(np.abs(r) / lam)
        lo = np.where(r >= 0.0, 0.0, np.maximum(r, -cap))
        hi = np.where(r >= 0.0, np.minimum(r, cap), 0.0)
        s = monotone_solve(lambda s: s + lam * s**3, lambda s: 1.0 + 3.0 * lam * s**2, r, lo, hi)
        return s, 1.0 / (1.0 + 3.0 * lam * s**2)


class NaturalLogGraph(MonotoneGraph):
    """The graph of ``ln`` on ``(0, inf)``; drives the temperature equation.

    Its primitive is normalized at the zero of ``ln`` (``r = 1``), so unlike the
    order-parameter graphs ``primitive(0) = 1``.
    """

    graph_id = "natural-log"
    domain = (0.0, np.inf)

    def primitive(self, r):
        r = np.asarray(r, dtype=float)
        out = np.full(r.shape, np.inf)
        pos = r > 0.0
        out[pos] = r[pos] * np.log(r[pos]) - r[pos] + 1.0
        out[r == 0.0] = 1.0
        return out

    def minimal_section(self, r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(r > 0.0, np.log(np.where(r > 0.0, r, 1.0)), -np.inf)

    def _solve_v(self, lam, r):
        # s = exp(v) solves s + lam ln s = r  <=>  exp(v) + lam v = r
        r = np.asarray(r, dtype=float)
        big = r >= 1.0
        with np.errstate(divide="ignore", invalid="ignore"):
            lo = np.where(big, 0.0, (r - 1.0) / lam)
            hi = np.where(big, np.log(np.where(big, r, 1.0)), np.minimum(0.0, r / lam))
        return monotone_solve(
            lambda v: np.exp(v) + lam * v,
            lambda v: np.exp(v) + lam,
            r, lo, hi, x0=np.where(big, np.log(np.maximum(r, 1.0)), np.minimum(0.0, r / lam)),
        )

    def resolvent_with_slope(self, lam, r):
        s = np.exp(self._solve_v(lam, r))
        return s, s / (s + lam)

    def yosida(self, lam, r):
        r = np.asarray(r, dtype=float)
        return (r - self.resolvent(lam, r)) / lam


_GRAPHS = {
    "log": LogGraph,
    "indicator": IndicatorGraph,
    "power": PowerGraph,
    "natural-log": NaturalLogGraph,
}


def get_graph(graph_id: str) -> MonotoneGraph:
    try:
        return _GRAPHS[graph_id]()
    except KeyError:
        raise ValueError(f"unknown monotone graph {graph_id!r}; choose from {GRAPH_IDS}") from None


# module-level conveniences mirroring the operation names
def resolvent(graph, lam, r):
    return _as_graph(graph).resolvent(lam, r)


def yosida(graph, lam, r):
    return _as_graph(graph).yosida(lam, r)


def moreau(graph, lam, r):
    return _as_graph(graph).moreau(lam, r)


def _as_graph(graph):
    return get_graph(graph) if isinstance(graph, str) else graph


_LN = NaturalLogGraph()


def ln_lambda(lam, r):
    """Yosida approximation of ``ln``."""
    return _LN.yosida(lam, r)


def Ln_lambda(lam, r):
    """``Ln_lam(r) = lam r + ln_lam(r)``, strictly increasing on the whole line."""
    r = np.asarray(r, dtype=float)
    return lam * r + _LN.yosida(lam, r)


def Ln_lambda_derivative(lam, r):
    j = _LN.resolvent(lam, r)
    return lam + 1.0 / (j + lam)


def inv_Ln_lambda(lam, u):
    """Solve ``Ln_lam(theta) = u``.

    With ``theta = exp(v) + lam v`` one has ``Ln_lam(theta) = lam exp(v) + (1 + lam^2) v``,
    which is increasing in ``v``; the solve is done in that variable.
    """
    u = np.asarray(u, dtype=float)
    c = 1.0 + lam * lam
    big = u >= lam
    with np.errstate(divide="ignore", invalid="ignore"):
        lo = np.where(big, 0.0, (u - lam) / c)
        hi = np.where(big, np.minimum(np.log(np.where(big, u, lam) / lam), u / c), np.minimum(0.0, u / c))
    v = monotone_solve(lambda v: lam * np.exp(v) + c * v, lambda v: lam * np.exp(v) + c, u, lo, hi)
    return np.exp(v) + lam * v


def J_ln(lam, theta):
    """Resolvent of ``ln``: ``J_lam^ln(theta)``."""
    return _LN.resolvent(lam, theta)


@dataclass(frozen=True)
class LinearPi:
    """Lipschitz anti-monotone perturbation ``pi(r) = -coefficient * r``."""

    coefficient: float = 1.0

    def __call__(self, r):
        return -self.coefficient * np.asarray(r, dtype=float)

    def derivative(self, r):
        return np.full(np.shape(r), -self.coefficient)

    def primitive(self, r):
        return -0.5 * self.coefficient * np.asarray(r, dtype=float) ** 2

    @property
    def lipschitz(self) -> float:
        return abs(self.coefficient)
