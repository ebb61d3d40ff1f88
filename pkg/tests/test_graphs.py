import mpmath
import numpy as np
import pytest
import scipy.integrate
from hypothesis import given, settings
from hypothesis import strategies as st

from singular_pf import graphs
from singular_pf.errors import NewtonError
from singular_pf.grid import Grid


def cardano(lam, r):
    # real root of lam s^3 + s - r = 0
    roots = np.roots([lam, 0.0, 1.0, -r])
    return float(roots[np.argmin(np.abs(roots.imag))].real)


def lambert_ln_resolvent(lam, r):
    # s + lam ln s = r  <=>  s = lam W(exp(r / lam) / lam)
    return float(lam * mpmath.lambertw(mpmath.exp(mpmath.mpf(r) / lam) / lam).real)


def log_resolvent_mp(lam, r):
    with mpmath.workdps(60):
        f = lambda s: s + lam * mpmath.log((1 + s) / (1 - s)) - r  # noqa: E731
        lo, hi = mpmath.mpf(-1) + mpmath.mpf(10) ** -40, 1 - mpmath.mpf(10) ** -40
        return float(mpmath.findroot(f, (lo, hi), solver="illinois"))


def test_ids():
    assert set(graphs.GRAPH_IDS) == {"log", "indicator", "power", "natural-log"}
    with pytest.raises(ValueError):
        graphs.get_graph("nope")


@pytest.mark.parametrize("lam", [0.5, 1.0, 0.01])
@pytest.mark.parametrize("r", [-3.0, -0.2, 0.0, 0.7, 2.0, 10.0])
def test_power_resolvent_cardano(lam, r):
    assert graphs.resolvent("power", lam, r) == pytest.approx(cardano(lam, r), rel=1e-12, abs=1e-14)


def test_power_resolvent_example():
    assert float(graphs.resolvent("power", 1.0, 2.0)) == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("lam", [0.5, 0.1, 0.01])
@pytest.mark.parametrize("r", [-2.0, 0.1, 1.0, 3.0, 50.0])
def test_ln_resolvent_lambert(lam, r):
    assert float(graphs.J_ln(lam, r)) == pytest.approx(lambert_ln_resolvent(lam, r), rel=1e-12)


@pytest.mark.parametrize("lam", [0.5, 0.05])
@pytest.mark.parametrize("r", [-1.1, -0.5, 0.0, 0.3, 0.95, 1.15])
def test_log_resolvent_mpmath(lam, r):
    assert float(graphs.resolvent("log", lam, r)) == pytest.approx(log_resolvent_mp(lam, r), rel=1e-12, abs=1e-15)


def test_fixed_points_and_indicator():
    assert float(graphs.J_ln(0.3, 1.0)) == pytest.approx(1.0)
    assert float(graphs.resolvent("indicator", 0.7, 1.5)) == 1.0
    assert float(graphs.yosida("indicator", 0.5, 1.5)) == pytest.approx(1.0)
    assert float(graphs.ln_lambda(0.2, 1.0)) == pytest.approx(0.0, abs=1e-15)
    assert float(graphs.moreau("indicator", 1.0, 2.0)) == pytest.approx(0.5)


def test_indicator_moreau_quadrature():
    val, _ = scipy.integrate.quad(lambda s: float(graphs.yosida("indicator", 1.0, s)), 0, 2, points=[1.0])
    assert float(graphs.moreau("indicator", 1.0, 2.0)) == pytest.approx(val, rel=1e-12)


@pytest.mark.parametrize("gid", ["log", "power", "indicator"])
def test_moreau_is_integral_of_yosida(gid):
    lam = 0.1
    for r in (-0.8, 0.4, 0.95):
        val, _ = scipy.integrate.quad(lambda s: float(graphs.yosida(gid, lam, s)), 0, r, epsabs=1e-13, limit=200)
        assert float(graphs.moreau(gid, lam, r)) == pytest.approx(val, rel=1e-9, abs=1e-12)


def test_moreau_bounds_log():
    g = graphs.get_graph("log")
    r = np.linspace(-0.9, 0.9, 19)
    m = g.moreau(0.1, r)
    assert np.all(m >= 0) and np.all(m <= g.primitive(r) + 1e-15)
    assert float(g.moreau(0.1, 0.0)) == 0.0


def test_yosida_below_minimal_section():
    g = graphs.get_graph("log")
    b = float(g.yosida(0.1, 0.9))
    assert 0 < b <= np.log(1.9 / 0.1)


@pytest.mark.parametrize("gid", ["log", "power", "natural-log"])
def test_resolvent_residual(gid):
    g = graphs.get_graph(gid)
    r = np.linspace(-1.2, 1.2, 25) if gid != "natural-log" else np.linspace(-3, 5, 25)
    for lam in (0.5, 0.05):
        j = g.resolvent(lam, r)
        assert np.max(np.abs(j + lam * g.minimal_section(j) - r)) <= 1e-12 * max(1.0, np.max(np.abs(r)))


def test_ln_identities():
    th = np.geomspace(1e-3, 1e3, 30)
    for lam in (0.5, 0.05):
        np.testing.assert_allclose(graphs.ln_lambda(lam, th), np.log(graphs.J_ln(lam, th)), atol=1e-10)
    lam, t0 = 0.1, 2.0
    assert float(graphs.J_ln(lam, t0)) == pytest.approx(t0 - lam * float(graphs.ln_lambda(lam, t0)), rel=1e-14)
    # residual oracle for J
    j = float(graphs.J_ln(lam, t0))
    assert abs(j + lam * np.log(j) - t0) < 1e-14


def test_Ln_and_inverse():
    assert float(graphs.Ln_lambda(0.1, 1.0)) == pytest.approx(0.1)
    assert float(graphs.inv_Ln_lambda(0.1, 0.1)) == pytest.approx(1.0)
    u = np.linspace(-20, 20, 41)
    for lam in (0.5, 0.05, 0.005):
        np.testing.assert_allclose(graphs.Ln_lambda(lam, graphs.inv_Ln_lambda(lam, u)), u, rtol=1e-11, atol=1e-11)
    th = np.linspace(0.1, 3, 7)
    h = 1e-6
    fd = (graphs.Ln_lambda(0.2, th + h) - graphs.Ln_lambda(0.2, th - h)) / (2 * h)
    np.testing.assert_allclose(graphs.Ln_lambda_derivative(0.2, th), fd, rtol=1e-7)


@settings(max_examples=60, deadline=None)
@given(gid=st.sampled_from(graphs.GRAPH_IDS), lam=st.floats(1e-3, 0.99),
       r=st.floats(-5, 5), s=st.floats(-5, 5))
def test_yosida_monotone_lipschitz(gid, lam, r, s):
    g = graphs.get_graph(gid)
    br, bs = float(g.yosida(lam, r)), float(g.yosida(lam, s))
    assert (br - bs) * (r - s) >= -1e-9 * max(1.0, abs(br), abs(bs))
    assert abs(br - bs) <= abs(r - s) / lam * (1 + 1e-9) + 1e-9


@settings(max_examples=40, deadline=None)
@given(lam=st.floats(1e-3, 0.99), r=st.floats(-3, 3))
def test_moreau_nonneg(lam, r):
    for gid in ("log", "power", "indicator"):
        assert float(graphs.moreau(gid, lam, r)) >= 0.0


def test_lambda_limit_pointwise():
    g = graphs.get_graph("power")
    errs = [abs(float(g.yosida(2.0 ** -k, 0.8)) - 0.8 ** 3) for k in range(1, 10)]
    assert all(b < a for a, b in zip(errs, errs[1:]))
    # scalar rate O(lam)
    assert errs[-1] / errs[-2] == pytest.approx(0.5, abs=0.05)


def test_discrete_sign_inequality():
    g = Grid((12, 12))
    rng = np.random.default_rng(0)
    for gid in graphs.GRAPH_IDS:
        for lam in (0.5, 0.05):
            u = rng.uniform(-2, 2, g.size)
            assert g.inner(-(g.laplacian @ u), graphs.yosida(gid, lam, u)) >= -1e-10


def test_monotone_solve_failure():
    with pytest.raises(NewtonError):
        # bracket that does not contain the root
        graphs.monotone_solve(lambda x: x, lambda x: np.ones_like(x), np.array([5.0]), 0.0, 1.0, maxiter=5)


def test_linear_pi():
    p = graphs.LinearPi(2.0)
    assert float(p(1.5)) == -3.0 and p.lipschitz == 2.0 and float(p.primitive(1.0)) == -1.0
