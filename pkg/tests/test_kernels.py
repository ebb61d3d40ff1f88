import numpy as np
import pytest
import scipy.integrate
from hypothesis import given, settings
from hypothesis import strategies as st

from singular_pf.grid import Grid
from singular_pf.kernels import (
    KernelFamily, apply_B, assemble, bilinear_a, cd_constant, check_family, energy_E,
    norm_Veps, norm_Weps, rho,
)


def sphere_oracle(d):
    # int_{S^{d-1}} sigma_1^2 by direct quadrature in angular coordinates
    if d == 1:
        return 2.0
    if d == 2:
        return scipy.integrate.quad(lambda t: np.cos(t) ** 2, 0, 2 * np.pi)[0]
    return scipy.integrate.dblquad(lambda p, t: (np.cos(t) ** 2) * np.sin(t), 0, np.pi, 0, 2 * np.pi)[0]


@pytest.mark.parametrize("d", [1, 2, 3])
def test_cd_matches_sphere_quadrature(d):
    assert cd_constant(d) == pytest.approx(2.0 / sphere_oracle(d), rel=1e-12)


def test_cd_values():
    assert cd_constant(1) == pytest.approx(1.0)
    assert cd_constant(2) == pytest.approx(0.6366198, abs=1e-7)
    assert cd_constant(3) == pytest.approx(0.4774648, abs=1e-7)
    with pytest.raises(ValueError):
        cd_constant(4)


@pytest.mark.parametrize("fam", ["indicator", "polynomial", "gaussian-truncated"])
@pytest.mark.parametrize("d", [1, 2, 3])
def test_normalization_all_eps(fam, d):
    k = KernelFamily(fam, d)
    for eps in (1.0, 0.3, 0.05):
        assert k.normalization_error(eps) <= 1e-8


def test_indicator_profile_closed_form():
    k = KernelFamily("indicator", 2)
    assert float(k.profile(0.5)) == pytest.approx(2 * cd_constant(2))
    assert float(k.profile(1.01)) == 0.0
    # closed form: int_0^1 2 c_2 s ds = c_2
    assert k.radial_moment(1.0) == pytest.approx(cd_constant(2), rel=1e-12)


def test_rho_support_and_scaling():
    k = KernelFamily("polynomial", 2)
    assert float(rho(k, 0.1, 0.11)) == 0.0
    assert float(rho(k, 0.1, 0.05)) == pytest.approx(0.1 ** -2 * float(k.profile(0.5)))
    assert np.all(k.rho(0.2, np.linspace(0, 1, 50)) >= 0)


def test_check_family_tail_and_scale():
    assert check_family(KernelFamily("gaussian-truncated", 2), [0.4, 0.2, 0.1], delta=0.35) == []
    assert check_family(KernelFamily("indicator", 2, scale=1.1), [0.2])
    # a ladder that stays coarse keeps mass beyond delta
    assert check_family(KernelFamily("indicator", 2), [0.9, 0.8], delta=0.35)


def test_two_node_toy():
    g = Grid((2, 1), (2.0, 1.0))
    k = KernelFamily("indicator", 2)
    op = assemble(g, 1.5, k)
    w = g.cellvol * float(k.rho(1.5, 1.0)) / 1.0
    assert op.weights[0, 1] == op.weights[1, 0] == pytest.approx(w)
    np.testing.assert_allclose(apply_B(op, np.array([0.0, 1.0])), [-w, w])
    # E = 1/4 * cellvol * (w + w) * 1
    assert energy_E(op, np.array([0.0, 1.0])) == pytest.approx(0.5 * g.cellvol * w)


def test_row_sums_equal_column_sums_8x8():
    g = Grid((8, 8))
    op = assemble(g, 0.3, KernelFamily("indicator", 2))
    W = np.array(op.weights)
    rows = [sum(W[i, j] for j in range(g.size)) for i in range(g.size)]
    cols = [sum(W[j, i] for j in range(g.size)) for i in range(g.size)]
    np.testing.assert_allclose(rows, cols, rtol=1e-14)


def test_dense_and_sparse_agree():
    g = Grid((12, 10), (1.2, 1.0))
    k = KernelFamily("polynomial", 2)
    d, s = assemble(g, 0.25, k, storage="dense"), assemble(g, 0.25, k, storage="sparse")
    phi = np.random.default_rng(0).standard_normal(g.size)
    np.testing.assert_allclose(d.apply(phi), s.apply(phi), rtol=1e-12, atol=1e-12)
    assert d.energy(phi) == pytest.approx(s.energy(phi), rel=1e-12)
    np.testing.assert_allclose(d.dense_matrix(), s.dense_matrix(), atol=1e-12)


def test_dense_cap():
    with pytest.raises(MemoryError):
        assemble(Grid((8, 8)), 0.2, KernelFamily("indicator", 2), storage="dense", node_cap=10)
    assert assemble(Grid((8, 8)), 0.2, KernelFamily("indicator", 2), node_cap=10).storage == "sparse"


def test_grid_mismatch():
    op = assemble(Grid((4, 4)), 0.3, KernelFamily("indicator", 2))
    with pytest.raises(ValueError):
        op.apply(np.zeros(5))


@settings(max_examples=25, deadline=None)
@given(a=st.floats(-5, 5), b=st.floats(-5, 5), seed=st.integers(0, 1000))
def test_linearity_and_form_identities(a, b, seed):
    g = Grid((6, 6))
    op = assemble(g, 0.4, KernelFamily("gaussian-truncated", 2))
    rng = np.random.default_rng(seed)
    phi, psi = rng.standard_normal(g.size), rng.standard_normal(g.size)
    np.testing.assert_allclose(op.apply(a * phi + b * psi), a * op.apply(phi) + b * op.apply(psi), atol=1e-10)
    assert bilinear_a(op, phi, phi) == pytest.approx(2 * energy_E(op, phi), rel=1e-12)
    assert 2 * energy_E(op, phi) == pytest.approx(g.inner(phi, op.apply(phi)), rel=1e-12)
    assert abs(bilinear_a(op, phi, np.ones(g.size))) < 1e-12
    assert norm_Veps(op, phi) >= g.norm(phi)
    assert norm_Weps(op, phi) >= g.norm(phi)


def test_norms_of_zero():
    op = assemble(Grid((4, 4)), 0.3, KernelFamily("indicator", 2))
    assert norm_Veps(op, np.zeros(16)) == 0.0 == norm_Weps(op, np.zeros(16))


def test_dual_norm_bound_16x16():
    g = Grid((16, 16))
    op = assemble(g, 0.2, KernelFamily("gaussian-truncated", 2))
    rng = np.random.default_rng(3)
    for _ in range(3):
        phi = rng.standard_normal(g.size)
        # oracle: sup over psi of (B phi, psi)_H / ||psi||_{V_eps} via the generalized eigenproblem
        A = op.dense_matrix()
        G = A + g.cellvol * np.eye(g.size)
        ell = A @ phi
        L = np.linalg.cholesky(G)
        y = np.linalg.solve(L, ell)
        assert op.dual_norm_of_B(phi) == pytest.approx(np.linalg.norm(y), rel=1e-10)
        assert op.dual_norm_of_B(phi) <= op.norm_V(phi)


def test_kernel_is_constants_only():
    g = Grid((10, 10))
    ev = assemble(g, 0.2, KernelFamily("gaussian-truncated", 2)).spectrum()
    assert ev[0] > -1e-12 and ev[1] > 1e-8


def test_stencil_symbol_matches_interior_action():
    # on a periodic-like smooth mode the lattice symbol approximates the operator
    g = Grid((32, 32))
    op = assemble(g, 0.1, KernelFamily("gaussian-truncated", 2))
    sym = op.stencil_symbol
    assert sym.shape == g.shape and sym.flat[0] == pytest.approx(0.0, abs=1e-9) and np.all(sym >= 0)
