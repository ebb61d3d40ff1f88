"""Cell-centred finite-volume discretization of a rectangular box.

Nodes sit at cell centres ``x_i = (i + 1/2) h``.  The Neumann Laplacian uses
ghost-cell reflection, so its eigenvectors are the DCT-II modes
``cos(pi m x / L)`` and every column sums to zero (discrete conservation).
Robin terms enter through boundary-face quadrature only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft
import scipy.sparse as sp
import scipy.sparse.linalg as spla

UNITS = ("temperature", "order-parameter", "potential", "generic")

#: relative tolerance of all CG solves in this module
CG_RTOL = 1e-10


@dataclass(frozen=True)
class Grid:
    """Uniform box ``prod [0, L_k]`` split into ``n_k`` cells per axis."""

    n: tuple
    extent: tuple = None

    def __post_init__(self):
        n = tuple(int(k) for k in self.n)
        extent = tuple(float(x) for x in (self.extent or (1.0,) * len(n)))
        if len(n) not in (2, 3):
            raise ValueError(f"grid dimension must be 2 or 3, got {len(n)}")
        if len(extent) != len(n):
            raise ValueError("extent and node counts differ in length")
        if min(n) < 1 or min(extent) <= 0.0:
            raise ValueError("node counts and extents must be positive")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "extent", extent)

    @property
    def dim(self) -> int:
        return len(self.n)

    @property
    def shape(self):
        return self.n

    @property
    def size(self) -> int:
        return int(np.prod(self.n))

    @property
    def h(self):
        return tuple(L / k for L, k in zip(self.extent, self.n))

    @property
    def cellvol(self) -> float:
        return float(np.prod(self.h))

    @property
    def volume(self) -> float:
        return float(np.prod(self.extent))

    @property
    def boundary_measure(self) -> float:
        """Exact measure of the box surface (perimeter in 2D)."""
        total = 0.0
        for k in range(self.dim):
            total += 2.0 * np.prod([self.extent[j] for j in range(self.dim) if j != k])
        return float(total)

    @cached_property
    def axes(self):
        return [(np.arange(k) + 0.5) * hk for k, hk in zip(self.n, self.h)]

    @cached_property
    def mesh(self):
        return np.meshgrid(*self.axes, indexing="ij")

    @cached_property
    def centers(self):
        """(size, dim) array of node coordinates in C order."""
        return np.stack([m.ravel() for m in self.mesh], axis=1)

    @cached_property
    def _faces(self):
        cells, areas, centers = [], [], []
        idx = np.arange(self.size).reshape(self.n)
        for k in range(self.dim):
            area = self.cellvol / self.h[k]
            for side, pos in ((0, 0.0), (-1, self.extent[k])):
                sl = [slice(None)] * self.dim
                sl[k] = side
                c = idx[tuple(sl)].ravel()
                xc = self.centers[c].copy()
                xc[:, k] = pos
                cells.append(c)
                areas.append(np.full(c.size, area))
                centers.append(xc)
        return np.concatenate(cells), np.concatenate(areas), np.concatenate(centers)

    @property
    def face_cells(self):
        return self._faces[0]

    @property
    def face_areas(self):
        return self._faces[1]

    @property
    def face_centers(self):
        return self._faces[2]

    @cached_property
    def trace_weights(self):
        """Per-node boundary measure (zero for interior nodes)."""
        return np.bincount(self.face_cells, weights=self.face_areas, minlength=self.size)

    @cached_property
    def laplacian(self):
        """Sparse nodal Neumann Laplacian ``Delta_h`` (ghost reflection)."""
        mats = []
        for k, (nk, hk) in enumerate(zip(self.n, self.h)):
            main = np.full(nk, -2.0)
            main[0] = main[-1] = -1.0
            if nk == 1:
                main[:] = 0.0
            d1 = sp.diags([np.ones(nk - 1), main, np.ones(nk - 1)], [-1, 0, 1]) / hk**2
            factors = [sp.identity(m, format="csr") for m in self.n]
            factors[k] = d1
            term = factors[0]
            for f in factors[1:]:
                term = sp.kron(term, f)
            mats.append(term)
        return sp.csr_matrix(sum(mats))

    def apply_laplacian(self, v):
        """``Delta_h v`` in flux form: differences first, so constants map to exact zeros."""
        u = np.reshape(v, self.n)
        out = np.zeros(self.n)
        for k, hk in enumerate(self.h):
            if self.n[k] == 1:
                continue
            flux = np.diff(u, axis=k)
            pad = [(0, 0)] * self.dim
            pad[k] = (1, 1)
            flux = np.pad(flux, pad)
            out += np.diff(flux, axis=k) / hk**2
        return out.ravel()

    @cached_property
    def stiffness(self):
        """``cellvol * (-Delta_h)``: Gram matrix of ``int grad u . grad w``."""
        return sp.csr_matrix(-self.cellvol * self.laplacian)

    @cached_property
    def laplacian_eigenvalues(self):
        """Eigenvalues of ``-Delta_h`` on the DCT-II modes, shape ``self.n``."""
        kap = np.zeros(self.n)
        for k, (nk, hk) in enumerate(zip(self.n, self.h)):
            lam1 = (2.0 / hk**2) * (1.0 - np.cos(np.pi * np.arange(nk) / nk))
            shape = [1] * self.dim
            shape[k] = nk
            kap = kap + lam1.reshape(shape)
        return kap

    def dct(self, v):
        return scipy.fft.dctn(np.reshape(v, self.n), type=2, norm="ortho")

    def idct(self, c):
        return scipy.fft.idctn(c, type=2, norm="ortho").ravel()

    def spectral_solve(self, v, symbol):
        """Apply the inverse of the DCT-diagonal operator with the given symbol.

        Modes where ``symbol == 0`` are dropped (used for the mean mode).
        """
        c = self.dct(v)
        with np.errstate(divide="ignore", invalid="ignore"):
            c = np.where(symbol != 0.0, c / np.where(symbol != 0.0, symbol, 1.0), 0.0)
        return self.idct(c)

    # -- quadrature ------------------------------------------------------
    def inner(self, a, b) -> float:
        return float(self.cellvol * np.dot(np.ravel(a), np.ravel(b)))

    def norm(self, a) -> float:
        return float(np.sqrt(self.inner(a, a)))

    def integral(self, a) -> float:
        return float(self.cellvol * np.sum(a))

    def mean(self, a) -> float:
        return float(np.mean(a))

    def grad_norm_sq(self, w) -> float:
        w = np.ravel(w)
        return float(w @ (self.stiffness @ w))

    def trace_norm_sq(self, w) -> float:
        return float(np.sum(self.trace_weights * np.ravel(w) ** 2))

    def trace_integral(self, phi, g=1.0) -> float:
        """Boundary quadrature of ``phi * g``; ``g`` is a scalar or per-face array."""
        phi = np.ravel(phi)
        return float(np.sum(self.face_areas * phi[self.face_cells] * np.broadcast_to(g, self.face_areas.shape)))

    def face_load(self, g):
        """Nodal vector ``int_Gamma g w_i`` for face data ``g``."""
        g = np.broadcast_to(np.asarray(g, dtype=float), self.face_areas.shape)
        return np.bincount(self.face_cells, weights=self.face_areas * g, minlength=self.size)

    def field(self, values, unit="generic"):
        return Field(self, np.asarray(values, dtype=float).ravel(), unit)

    def constant(self, c, unit="generic"):
        return Field(self, np.full(self.size, float(c)), unit)

    def to_json(self):
        return {"n": list(self.n), "extent": list(self.extent)}


@dataclass(frozen=True)
class Field:
    """Nodal values on a grid; rejects non-finite data on construction."""

    grid: Grid
    values: np.ndarray
    unit: str = "generic"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).ravel()
        if values.size != self.grid.size:
            raise ValueError(f"field has {values.size} values, grid has {self.grid.size} nodes")
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        if self.unit not in UNITS:
            raise ValueError(f"unknown unit tag {self.unit!r}")
        object.__setattr__(self, "values", values)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    @property
    def mean(self) -> float:
        return self.grid.mean(self.values)


def _values(v):
    return v.values if isinstance(v, Field) else np.asarray(v, dtype=float).ravel()


def laplacian_neumann(grid: Grid, phi):
    return grid.apply_laplacian(_values(phi))


def mean(grid: Grid, phi) -> float:
    return grid.mean(_values(phi))


def trace_integral(grid: Grid, phi, g=1.0) -> float:
    return grid.trace_integral(_values(phi), g)


def _jacobi_cg(A, b, x0=None, rtol=CG_RTOL):
    d = A.diagonal()
    M = spla.LinearOperator(A.shape, matvec=lambda x: x / d, dtype=float)
    if not np.any(b):
        return np.zeros_like(b)
    x, info = spla.cg(A, b, x0=x0, rtol=rtol, atol=0.0, M=M, maxiter=20 * A.shape[0])
    if info != 0:
        raise RuntimeError(f"conjugate gradient did not converge (info={info})")
    return x


def robin_system(grid: Grid, theta_gamma, source=0.0):
    """Stationary Robin problem ``-Delta theta = source``, ``d_nu theta + theta = theta_gamma``.

    Returns the SPD matrix of ``w -> int grad theta . grad w + int_Gamma theta w``
    and the right side ``int_Gamma theta_gamma w + (source, w)``.
    """
    A = sp.csr_matrix(grid.stiffness + sp.diags(grid.trace_weights))
    src = np.broadcast_to(np.asarray(source, dtype=float), (grid.size,))
    rhs = grid.face_load(theta_gamma) + grid.cellvol * src
    return A, rhs


def solve_robin(grid: Grid, theta_gamma, source=0.0):
    A, rhs = robin_system(grid, theta_gamma, source)
    return _jacobi_cg(A, rhs)


def inv_neumann_laplacian(grid: Grid, v, method="cg"):
    """Mean-zero solution ``u`` of ``-Delta_h u = v`` (the map N on zero-mean data)."""
    v = _values(v)
    scale = np.linalg.norm(v) / np.sqrt(max(v.size, 1))
    if abs(np.mean(v)) > 1e-10 * max(scale, 1e-300) and abs(np.mean(v)) > 1e-300:
        raise ValueError("inv_neumann_laplacian requires zero-mean data")
    v = v - np.mean(v)
    if method == "dct":
        return grid.spectral_solve(v, grid.laplacian_eigenvalues)
    if method != "cg":
        raise ValueError(f"unknown method {method!r}")
    u = _jacobi_cg(grid.stiffness, grid.cellvol * v)
    return u - np.mean(u)


def riesz_inverse(grid: Grid, v, method="cg"):
    """Solve ``(-Delta_h + I) u = v`` with Neumann stencil (the map F^{-1})."""
    v = _values(v)
    if method == "dct":
        return grid.spectral_solve(v, grid.laplacian_eigenvalues + 1.0)
    if method != "cg":
        raise ValueError(f"unknown method {method!r}")
    A = sp.csr_matrix(grid.stiffness + grid.cellvol * sp.identity(grid.size))
    return _jacobi_cg(A, grid.cellvol * v)


def norm_V0star(grid: Grid, v, method="dct") -> float:
    v = _values(v)
    return float(np.sqrt(max(grid.inner(v, inv_neumann_laplacian(grid, v, method)), 0.0)))


def norm_Vstar(grid: Grid, v, method="dct") -> float:
    v = _values(v)
    return float(np.sqrt(max(grid.inner(v, riesz_inverse(grid, v, method)), 0.0)))


def norm_V(grid: Grid, w) -> float:
    w = _values(w)
    return float(np.sqrt(grid.grad_norm_sq(w) + grid.inner(w, w)))


@dataclass
class NormConstants:
    """Measured discrete constants; recorded, never asserted beyond positivity."""

    trace_lower: float = np.inf
    trace_upper: float = 0.0
    poincare_wirtinger: float = 0.0
    samples: int = 0
    extra: dict = field(default_factory=dict)

    def update(self, grid: Grid, w):
        w = _values(w)
        v2 = norm_V(grid, w) ** 2
        gt = grid.grad_norm_sq(w) + grid.trace_norm_sq(w)
        if gt > 0.0:
            ratio = v2 / gt
            self.trace_lower = min(self.trace_lower, ratio)
            self.trace_upper = max(self.trace_upper, ratio)
        g = grid.grad_norm_sq(w)
        if g > 0.0:
            self.poincare_wirtinger = max(self.poincare_wirtinger, grid.norm(w - np.mean(w)) / np.sqrt(g))
        self.samples += 1
        return self


def measure_norm_constants(grid: Grid, samples=20, seed=0) -> NormConstants:
    """Probe the trace-equivalence and Poincare-Wirtinger constants on random and smooth fields."""
    rng = np.random.default_rng(seed)
    consts = NormConstants()
    for _ in range(samples):
        consts.update(grid, rng.standard_normal(grid.size))
    x = grid.mesh
    for m in range(1, 4):
        consts.update(grid, np.cos(np.pi * m * x[0] / grid.extent[0]).ravel())
        consts.update(grid, (x[0] * x[1]).ravel())
    consts.update(grid, np.ones(grid.size))
    return consts
