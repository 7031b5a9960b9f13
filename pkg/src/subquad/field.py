"""Vector fields on uniform grids and the discrete Allen-Cahn energy.

The grid is the node lattice of the box [-L, L]^n, optionally restricted to
the cells whose centers lie in the open ball B_R(0).  The discrete energy is
cell based:

    J_h(u) = sum over active cells c of h^n [ 1/2 sum_d mean_{d-edges of c} |D_d u / h|^2
                                             + W(mean of the 2^n corners of c) ]

so every cell contributes a forward-difference Dirichlet term and a midpoint
potential term.  ``first_variation`` is the exact gradient of J_h divided by
h^n, which is what the minimizer descends.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

DIRICHLET = "dirichlet"
FREE = "free"


class FieldError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Grid:
    n: int
    h: float
    L: float
    R: float | None = None

    def __post_init__(self):
        if self.n < 1:
            raise FieldError("grid dimension must be >= 1")
        if not self.h > 0.0:
            raise FieldError("grid spacing must be positive")
        k = self.L / self.h
        if not self.L > 0.0 or abs(k - round(k)) > 1e-9 * max(1.0, k):
            raise FieldError(f"L/h must be a positive integer (L={self.L}, h={self.h})")
        if self.R is not None and not 0.0 < self.R <= self.L + 1e-12:
            raise FieldError(f"ball radius R={self.R} must lie in (0, L={self.L}]")

    @property
    def half(self) -> int:
        return int(round(self.L / self.h))

    @property
    def size(self) -> int:
        """Nodes per axis."""
        return 2 * self.half + 1

    @property
    def shape(self) -> tuple:
        return (self.size,) * self.n

    @property
    def cell_shape(self) -> tuple:
        return (self.size - 1,) * self.n

    @property
    def cell_volume(self) -> float:
        return self.h**self.n

    @cached_property
    def axis(self) -> np.ndarray:
        return np.arange(-self.half, self.half + 1) * self.h

    @cached_property
    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``shape + (n,)``."""
        mesh = np.meshgrid(*([self.axis] * self.n), indexing="ij")
        out = np.stack(mesh, axis=-1)
        out.setflags(write=False)
        return out

    @cached_property
    def cell_centers(self) -> np.ndarray:
        mid = 0.5 * (self.axis[:-1] + self.axis[1:])
        out = np.stack(np.meshgrid(*([mid] * self.n), indexing="ij"), axis=-1)
        out.setflags(write=False)
        return out

    @cached_property
    def radius(self) -> np.ndarray:
        return np.linalg.norm(self.coords, axis=-1)

    @cached_property
    def cell_mask(self) -> np.ndarray:
        """Active cells: all cells of the box, or those centered in B_R."""
        if self.R is None:
            mask = np.ones(self.cell_shape, dtype=bool)
        else:
            mask = np.linalg.norm(self.cell_centers, axis=-1) < self.R
        mask.setflags(write=False)
        return mask

    @cached_property
    def active(self) -> np.ndarray:
        """Nodes that are a corner of at least one active cell."""
        return _corner_touch(self.cell_mask) > 0

    @cached_property
    def boundary(self) -> np.ndarray:
        """Active nodes carrying Dirichlet data: box faces, or |x| >= R for a ball."""
        if self.R is None:
            b = np.zeros(self.shape, dtype=bool)
            for d in range(self.n):
                idx = [slice(None)] * self.n
                idx[d] = [0, -1]
                b[tuple(idx)] = True
            return b
        return self.active & (self.radius >= self.R)

    @cached_property
    def edge_weights(self) -> list:
        """Per axis, the (active cells sharing the edge) / 2^(n-1) weight of every edge."""
        m = self.cell_mask.astype(float)
        out = []
        for d in range(self.n):
            w = m
            for e in range(self.n):
                if e == d:
                    continue
                pad = [(0, 0)] * self.n
                pad[e] = (1, 1)
                w = np.pad(w, pad)
                lo = [slice(None)] * self.n
                hi = [slice(None)] * self.n
                lo[e] = slice(None, -1)
                hi[e] = slice(1, None)
                w = w[tuple(lo)] + w[tuple(hi)]
            out.append(w / 2 ** (self.n - 1))
        return out

    def check_radius(self, center, r):
        center = np.asarray(center, dtype=float)
        reach = float(np.linalg.norm(center)) + r
        limit = self.L if self.R is None else self.R
        if r < 0.0 or reach > limit + 1e-12:
            raise FieldError(f"ball of radius {r} around {center.tolist()} leaves the domain")

    def metadata(self) -> dict:
        return {"n": self.n, "h": self.h, "L": self.L, "R": self.R}


def _corner_touch(cell_values):
    """Sum of cell values over the cells touching each node."""
    out = np.asarray(cell_values, dtype=float)
    for d in range(out.ndim):
        pad = [(0, 0)] * out.ndim
        pad[d] = (1, 1)
        out = np.pad(out, pad)
        lo = [slice(None)] * out.ndim
        hi = [slice(None)] * out.ndim
        lo[d] = slice(None, -1)
        hi[d] = slice(1, None)
        out = out[tuple(lo)] + out[tuple(hi)]
    return out


def cell_average(values, n):
    """Mean of the 2^n corner values of every cell; values have shape grid + (m,)."""
    out = values
    for d in range(n):
        lo = [slice(None)] * out.ndim
        hi = [slice(None)] * out.ndim
        lo[d] = slice(None, -1)
        hi[d] = slice(1, None)
        out = 0.5 * (out[tuple(lo)] + out[tuple(hi)])
    return out


def cell_average_adjoint(cell_values, n):
    """Transpose of ``cell_average``."""
    out = cell_values
    for d in reversed(range(n)):
        pad_lo = [(0, 0)] * out.ndim
        pad_hi = [(0, 0)] * out.ndim
        pad_lo[d] = (0, 1)
        pad_hi[d] = (1, 0)
        out = 0.5 * (np.pad(out, pad_lo) + np.pad(out, pad_hi))
    return out


@dataclass(eq=False)
class Field:
    grid: Grid
    values: np.ndarray
    bc: str = DIRICHLET

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape == self.grid.shape:
            vals = vals[..., None]
        if vals.shape[:-1] != self.grid.shape:
            raise FieldError(f"values of shape {vals.shape} do not fit grid {self.grid.shape}")
        if not np.all(np.isfinite(vals[self.grid.active])):
            raise FieldError("field values must be finite")
        if self.bc not in (DIRICHLET, FREE):
            raise FieldError(f"unknown boundary condition {self.bc!r}")
        self.values = vals

    @property
    def m(self) -> int:
        return self.values.shape[-1]

    @property
    def fixed(self) -> np.ndarray:
        if self.bc == FREE:
            return np.zeros(self.grid.shape, dtype=bool)
        return self.grid.boundary

    @property
    def free(self) -> np.ndarray:
        return self.grid.active & ~self.fixed

    def copy(self, values=None) -> "Field":
        return Field(self.grid, self.values.copy() if values is None else values, self.bc)

    def active_values(self) -> np.ndarray:
        return self.values[self.grid.active]

    def to_csv(self, path):
        """Active nodes as rows ``x[,y],u1[,u2,...]`` in lexicographic (row-major) order."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        names = ["x", "y", "z"][: self.grid.n] if self.grid.n <= 3 else [f"x{i + 1}" for i in range(self.grid.n)]
        header = names + [f"u{i + 1}" for i in range(self.m)]
        act = self.grid.active
        rows = np.concatenate([self.grid.coords[act], self.values[act]], axis=1)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in rows:
                w.writerow([repr(float(v)) for v in row])
        return path


@dataclass(frozen=True)
class EnergyBreakdown:
    dirichlet: float
    potential: float

    @property
    def total(self) -> float:
        return self.dirichlet + self.potential

    def to_dict(self) -> dict:
        return {"dirichlet": self.dirichlet, "potential": self.potential, "total": self.total}


# -- initialisation ----------------------------------------------------------
def init_field(grid: Grid, init: str, data=None, bc: str = DIRICHLET, m: int | None = None) -> Field:
    """Build a field from ``init`` in {"constant", "affine", "radial", "custom"}.

    constant: ``data`` is the state vector.
    affine:   ``data`` is an EquivariantSetup; the field is its affine competitor.
    radial:   ``data(r)`` returns states (or scalars) for radii r.
    custom:   ``data(x)`` maps coordinates (..., n) to states (..., m).

    Every node gets a value, including inactive ones, so that Dirichlet data and
    off-lattice interpolation see a consistent extension.
    """
    x = grid.coords
    if init == "constant":
        c = np.atleast_1d(np.asarray(data, dtype=float))
        vals = np.broadcast_to(c, grid.shape + c.shape).copy()
    elif init == "affine":
        if grid.n != data.group.n:
            raise FieldError("grid and group dimensions differ")
        vals = data.affine_competitor(x)
    elif init == "radial":
        vals = np.asarray(data(grid.radius), dtype=float)
    elif init == "custom":
        vals = np.asarray(data(x), dtype=float)
    else:
        raise FieldError(f"unknown init kind {init!r}")
    if vals.shape == grid.shape:
        vals = vals[..., None]
    if m is not None and vals.shape[-1] != m:
        raise FieldError(f"init produced {vals.shape[-1]} components, expected {m}")
    return Field(grid, vals, bc)


# -- energy --------------------------------------------------------------------
def _edge_sq(values, grid, d):
    diff = np.diff(values, axis=d)
    return np.einsum("...i,...i->...", diff, diff), diff


def energy_and_gradient(values, grid: Grid, p, need_grad=True):
    """Discrete energy (dirichlet, potential) and its exact gradient w.r.t. all nodes."""
    n, h = grid.n, grid.h
    hn = grid.cell_volume
    mask = grid.cell_mask
    grad = np.zeros_like(values) if need_grad else None
    e_dir = 0.0
    for d, w in enumerate(grid.edge_weights):
        sq, diff = _edge_sq(values, grid, d)
        e_dir += 0.5 * hn / h**2 * float(np.sum(w * sq))
        if need_grad:
            flux = (hn / h**2) * w[..., None] * diff
            lo = [slice(None)] * values.ndim
            hi = [slice(None)] * values.ndim
            lo[d] = slice(None, -1)
            hi[d] = slice(1, None)
            grad[tuple(lo)] -= flux
            grad[tuple(hi)] += flux
    ubar = cell_average(values, n)
    inside = ubar[mask]
    if need_grad:
        w, dw = p.value_and_gradient(inside)
        gc = np.zeros_like(ubar)
        gc[mask] = hn * dw
        grad += cell_average_adjoint(gc, n)
    else:
        w = p.value(inside)
    e_pot = hn * float(np.sum(w))
    return e_dir, e_pot, grad


def cell_energy_density(values, grid: Grid, p):
    """Per-cell energy (already multiplied by h^n), zero on inactive cells."""
    n, h = grid.n, grid.h
    hn = grid.cell_volume
    dens = np.zeros(grid.cell_shape)
    for d in range(n):
        sq, _ = _edge_sq(values, grid, d)
        # average the d-edges of each cell over the other axes
        for e in range(n):
            if e == d:
                continue
            lo = [slice(None)] * n
            hi = [slice(None)] * n
            lo[e] = slice(None, -1)
            hi[e] = slice(1, None)
            sq = 0.5 * (sq[tuple(lo)] + sq[tuple(hi)])
        dens += 0.5 * hn / h**2 * sq
    ubar = cell_average(values, n)
    dens += hn * p.value(ubar)
    return np.where(grid.cell_mask, dens, 0.0)


def _check_potential(u: Field, p):
    if p.m != u.m:
        raise FieldError(f"field has {u.m} components but the potential acts on R^{p.m}")


def total_energy(u: Field, p) -> EnergyBreakdown:
    _check_potential(u, p)
    e_dir, e_pot, _ = energy_and_gradient(u.values, u.grid, p, need_grad=False)
    return EnergyBreakdown(e_dir, e_pot)


def energy_profile(u: Field, p, center, radii) -> list:
    """(r, J restricted to the cells centered in B_r(center)) for each radius."""
    _check_potential(u, p)
    center = np.asarray(center, dtype=float).reshape(u.grid.n)
    radii = [float(r) for r in radii]
    for r in radii:
        u.grid.check_radius(center, r)
    dens = cell_energy_density(u.values, u.grid, p)
    dist = np.linalg.norm(u.grid.cell_centers - center, axis=-1)
    order = np.argsort(dist, axis=None, kind="stable")
    dsorted = dist.ravel()[order]
    csum = np.concatenate([[0.0], np.cumsum(dens.ravel()[order])])
    return [(r, float(csum[np.searchsorted(dsorted, r, side="left")])) for r in radii]


def first_variation(u: Field, p) -> np.ndarray:
    """-Delta_h u + W_u(u) at free nodes (exact discrete gradient / h^n); zero elsewhere."""
    _check_potential(u, p)
    if not p.differentiable:
        raise FieldError("the characteristic potential has no first variation; use alpha continuation")
    _, _, grad = energy_and_gradient(u.values, u.grid, p)
    grad /= u.grid.cell_volume
    grad[~u.free] = 0.0
    return grad
