"""Radial kernel families and the discrete nonlocal operator ``B_eps``.

The kernel is ``K_eps(x, y) = rho_eps(|x - y|) / |x - y|^2`` with the rescaling
``rho_eps(r) = eps^{-d} rho(r / eps)`` and every profile normalized so that
``int_0^inf rho(s) s^{d-1} ds = c_d``.  Quadrature is the midpoint rule on the
grid and the self-cell is skipped, which keeps ``w_ij = w_ji`` bit-exact and
makes constants lie exactly in the kernel.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.integrate
import scipy.sparse as sp
import scipy.special
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from .grid import Grid

FAMILIES = ("indicator", "polynomial", "gaussian-truncated")
GAUSS_CUTOFF = 3.0
DEFAULT_NODE_CAP = 4096


def cd_constant(d: int) -> float:
    """``2 / int_{S^{d-1}} |e_1 . sigma|^2``; the sphere integral equals ``|S^{d-1}| / d``."""
    if d not in (1, 2, 3):
        raise ValueError(f"unsupported dimension {d}")
    return float(d * scipy.special.gamma(d / 2.0) / np.pi ** (d / 2.0))


@dataclass(frozen=True)
class KernelFamily:
    """A normalized radial profile ``rho`` in dimension ``dim``.

    ``scale`` multiplies the profile; anything other than 1 breaks the C1
    normalization and exists so that the config gate can be exercised.
    """

    family_id: str
    dim: int
    scale: float = 1.0

    def __post_init__(self):
        if self.family_id not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family_id!r}; choose from {FAMILIES}")
        cd_constant(self.dim)

    @property
    def c_d(self) -> float:
        return cd_constant(self.dim)

    @property
    def support_radius(self) -> float:
        return GAUSS_CUTOFF if self.family_id == "gaussian-truncated" else 1.0

    @cached_property
    def _amplitude(self) -> float:
        d, c = self.dim, self.c_d
        if self.family_id == "indicator":
            return d * c
        if self.family_id == "polynomial":
            return d * (d + 1) * c
        # int_0^R exp(-s^2/2) s^{d-1} ds = 2^{d/2-1} Gamma(d/2) P(d/2, R^2/2)
        z = 2.0 ** (d / 2.0 - 1.0) * scipy.special.gamma(d / 2.0) * scipy.special.gammainc(d / 2.0, GAUSS_CUTOFF**2 / 2.0)
        return c / z

    def profile(self, s):
        s = np.abs(np.asarray(s, dtype=float))
        a = self.scale * self._amplitude
        inside = s <= self.support_radius
        if self.family_id == "indicator":
            return np.where(inside, a, 0.0)
        if self.family_id == "polynomial":
            return np.where(inside, a * (1.0 - s), 0.0)
        return np.where(inside, a * np.exp(-0.5 * s * s), 0.0)

    def rho(self, eps: float, r):
        return eps ** (-self.dim) * self.profile(np.asarray(r, dtype=float) / eps)

    def radial_moment(self, eps: float, lower: float = 0.0) -> float:
        """``int_lower^inf rho_eps(r) r^{d-1} dr`` by adaptive quadrature."""
        top = eps * self.support_radius
        if lower >= top:
            return 0.0
        val, _ = scipy.integrate.quad(
            lambda r: float(self.rho(eps, r)) * r ** (self.dim - 1),
            lower, top, epsabs=0.0, epsrel=1e-13, limit=200,
        )
        return float(val)

    def normalization_error(self, eps: float) -> float:
        return abs(self.radial_moment(eps) - self.c_d) / self.c_d

    def tail(self, eps: float, delta: float) -> float:
        return self.radial_moment(eps, lower=delta)


def rho(family: KernelFamily, eps: float, r):
    return family.rho(eps, r)


def check_family(family: KernelFamily, eps_ladder, delta=None, tol=1e-8):
    """Self-test of the C1 conditions along an eps ladder.

    Returns a list of human-readable failures (empty when the family passes).
    The tail check is only meaningful for a ladder of two or more rungs.
    """
    failures = []
    ladder = sorted(float(e) for e in eps_ladder)[::-1]
    for eps in ladder:
        err = family.normalization_error(eps)
        if not err <= tol:
            failures.append(f"radial moment at eps={eps:g} misses c_d by relative {err:.2e}")
    if len(ladder) > 1 and delta is not None:
        tails = [family.tail(e, delta) for e in ladder]
        if any(b > a * (1 + 1e-12) + 1e-300 for a, b in zip(tails, tails[1:])):
            failures.append(f"tail beyond delta={delta:g} is not nonincreasing along the ladder")
        if not tails[-1] < 1e-3 * family.c_d:
            failures.append(f"tail beyond delta={delta:g} is {tails[-1]:.3e} at eps={ladder[-1]:g}")
    return failures


class NonlocalOperator:
    """Assembled weights ``w_ij = cellvol * K_eps(x_i, x_j)`` (zero diagonal).

    Immutable after construction.  ``storage`` is ``"dense"`` or ``"sparse"``.
    """

    def __init__(self, grid: Grid, eps: float, family: KernelFamily, weights, storage: str):
        self.grid = grid
        self.eps = float(eps)
        self.family = family
        self.storage = storage
        self.weights = weights
        if storage == "dense":
            self.weights.setflags(write=False)
        self.rowsum = np.asarray(weights @ np.ones(grid.size)).ravel()
        self.rowsum.setflags(write=False)

    @property
    def size(self) -> int:
        return self.grid.size

    def _check(self, phi):
        phi = np.asarray(getattr(phi, "values", phi), dtype=float).ravel()
        if phi.size != self.size:
            raise ValueError(f"field has {phi.size} values, operator grid has {self.size} nodes")
        return phi

    def apply(self, phi):
        """``(B phi)_i = sum_j w_ij (phi_i - phi_j)``."""
        phi = self._check(phi)
        # shifting by a nodal value leaves B phi unchanged and makes B c = 0 exact
        phi = phi - phi[0]
        return self.rowsum * phi - self.weights @ phi

    def _pair_sum(self, phi, psi):
        # sum_ij w_ij (phi_i - phi_j)(psi_i - psi_j), evaluated on differences
        if self.storage == "sparse":
            coo = self.weights.tocoo()
            return float(np.sum(coo.data * (phi[coo.row] - phi[coo.col]) * (psi[coo.row] - psi[coo.col])))
        total = 0.0
        W = self.weights
        for start in range(0, self.size, 512):
            blk = slice(start, min(start + 512, self.size))
            dphi = phi[blk, None] - phi[None, :]
            dpsi = dphi if psi is phi else psi[blk, None] - psi[None, :]
            total += float(np.sum(W[blk] * dphi * dpsi))
        return total

    def energy(self, phi) -> float:
        """``E_eps(phi) = 1/4 sum_ij cellvol w_ij (phi_i - phi_j)^2``."""
        phi = self._check(phi)
        return 0.25 * self.grid.cellvol * self._pair_sum(phi, phi)

    def bilinear(self, phi, psi) -> float:
        phi, psi = self._check(phi), self._check(psi)
        return 0.5 * self.grid.cellvol * self._pair_sum(phi, psi)

    def norm_V(self, phi) -> float:
        phi = self._check(phi)
        return float(np.sqrt(self.grid.inner(phi, phi) + 2.0 * self.energy(phi)))

    def norm_W(self, phi) -> float:
        phi = self._check(phi)
        b = self.apply(phi)
        return float(np.sqrt(self.grid.inner(phi, phi) + self.grid.inner(b, b)))

    def matrix(self):
        """Symmetric PSD Gram matrix ``cellvol * (diag(rowsum) - W)`` of ``a_eps``."""
        if self.storage == "sparse":
            return sp.csr_matrix(self.grid.cellvol * (sp.diags(self.rowsum) - self.weights))
        M = -self.grid.cellvol * np.array(self.weights)
        M[np.diag_indices_from(M)] += self.grid.cellvol * self.rowsum
        return M

    def dense_matrix(self):
        M = self.matrix()
        return M.toarray() if sp.issparse(M) else M

    def dual_norm_of_B(self, phi) -> float:
        """``||B phi||_{V_eps^*}``: Riesz representer in the V_eps inner product."""
        phi = self._check(phi)
        A = self.dense_matrix()
        G = A + self.grid.cellvol * np.eye(self.size)
        ell = A @ phi
        return float(np.sqrt(ell @ np.linalg.solve(G, ell)))

    def spectrum(self):
        return np.linalg.eigvalsh(self.dense_matrix())

    @cached_property
    def stencil_symbol(self):
        """Lattice symbol of the translation-invariant part of ``B`` on the DCT modes.

        Boundary truncation is ignored, so this is an approximation used only
        for preconditioning.
        """
        g = self.grid
        reach = [min(int(np.ceil(self.eps * self.family.support_radius / hk)), nk - 1) for hk, nk in zip(g.h, g.n)]
        offs = [np.arange(-R, R + 1) for R in reach]
        mesh = np.meshgrid(*[o * hk for o, hk in zip(offs, g.h)], indexing="ij")
        r = np.sqrt(sum(m * m for m in mesh))
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(r > 0.0, g.cellvol * self.family.rho(self.eps, r) / np.where(r > 0, r * r, 1.0), 0.0)
        cos = [np.cos(np.pi * np.outer(np.arange(nk), o) / nk) for nk, o in zip(g.n, offs)]
        if g.dim == 2:
            c = cos[0] @ w @ cos[1].T
        else:
            c = np.einsum("ia,jb,kc,abc->ijk", cos[0], cos[1], cos[2], w, optimize=True)
        return np.maximum(w.sum() - c, 0.0)

    def __repr__(self):
        return f"NonlocalOperator(eps={self.eps:g}, family={self.family.family_id!r}, storage={self.storage!r}, n={self.size})"


def assemble(grid: Grid, eps: float, family: KernelFamily, storage="auto", node_cap=DEFAULT_NODE_CAP) -> NonlocalOperator:
    """Assemble ``B_eps`` on ``grid``.

    ``storage="auto"`` picks dense at or below ``node_cap`` nodes and
    truncated-sparse above; asking for dense beyond the cap raises
    ``MemoryError``.
    """
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    if family.dim != grid.dim:
        raise ValueError("kernel family dimension does not match the grid")
    if storage == "auto":
        storage = "dense" if grid.size <= node_cap else "sparse"
    if storage == "dense" and grid.size > node_cap:
        raise MemoryError(f"dense kernel storage refused for {grid.size} nodes (cap {node_cap})")
    x = grid.centers
    cut = eps * family.support_radius
    if storage == "dense":
        r = cdist(x, x)
        with np.errstate(divide="ignore", invalid="ignore"):
            W = grid.cellvol * family.rho(eps, r) / (r * r)
        W = np.triu(np.where(r > 0.0, W, 0.0), 1)
        W = W + W.T
        return NonlocalOperator(grid, eps, family, W, "dense")
    if storage != "sparse":
        raise ValueError(f"unknown storage mode {storage!r}")
    tree = cKDTree(x)
    pairs = tree.query_pairs(cut * (1.0 + 1e-12), output_type="ndarray")
    i, j = pairs[:, 0], pairs[:, 1]
    r = np.sqrt(np.sum((x[i] - x[j]) ** 2, axis=1))
    w = grid.cellvol * family.rho(eps, r) / (r * r)
    keep = w > 0.0
    i, j, w = i[keep], j[keep], w[keep]
    W = sp.coo_matrix((np.concatenate([w, w]), (np.concatenate([i, j]), np.concatenate([j, i]))), shape=(grid.size,) * 2)
    return NonlocalOperator(grid, eps, family, W.tocsr(), "sparse")


def apply_B(op: NonlocalOperator, phi):
    return op.apply(phi)


def energy_E(op: NonlocalOperator, phi) -> float:
    return op.energy(phi)


def bilinear_a(op: NonlocalOperator, phi, psi) -> float:
    return op.bilinear(phi, psi)


def norm_Veps(op: NonlocalOperator, phi) -> float:
    return op.norm_V(phi)


def norm_Weps(op: NonlocalOperator, phi) -> float:
    return op.norm_W(phi)
