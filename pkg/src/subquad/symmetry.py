"""Finite reflection groups acting on space and on states, and the two projections
that keep a descent inside the equivariant, positive class.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from scipy.ndimage import map_coordinates
from scipy.optimize import linprog

from .field import Field

_ORTHO_TOL = 1e-12
_CLOSURE_TOL = 1e-10


class SymmetryError(ValueError):
    pass


def _reflection(normal):
    nrm = np.asarray(normal, dtype=float)
    nrm = nrm / np.linalg.norm(nrm)
    return np.eye(len(nrm)) - 2.0 * np.outer(nrm, nrm)


def _find(mats, g, tol=_CLOSURE_TOL):
    hit = np.nonzero(np.abs(mats - g).max(axis=(1, 2)) <= tol)[0]
    return int(hit[0]) if len(hit) else -1


def _reflection_normal(g):
    """Unit normal if g = I - 2 n n^T, else None."""
    n = g.shape[0]
    if not np.allclose(g, g.T, atol=_CLOSURE_TOL):
        return None
    w, v = np.linalg.eigh(g)
    neg = np.abs(w + 1.0) < 1e-9
    if neg.sum() != 1 or not np.allclose(w[~neg], 1.0, atol=1e-9):
        return None
    nrm = v[:, neg][:, 0]
    if np.abs(np.eye(n) - 2.0 * np.outer(nrm, nrm) - g).max() > _CLOSURE_TOL:
        return None
    return nrm


@dataclass(frozen=True, eq=False)
class ReflectionGroup:
    elements: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        mats = np.asarray(self.elements, dtype=float)
        if mats.ndim != 3 or mats.shape[1] != mats.shape[2] or len(mats) == 0:
            raise SymmetryError("group elements must be a nonempty stack of square matrices")
        n = mats.shape[1]
        for g in mats:
            if np.abs(g.T @ g - np.eye(n)).max() > _ORTHO_TOL * 10 * n:
                raise SymmetryError("group elements must be orthogonal")
        if _find(mats, np.eye(n)) < 0:
            raise SymmetryError("group must contain the identity")
        for g in mats:
            for k in mats:
                if _find(mats, g @ k) < 0:
                    raise SymmetryError("group elements are not closed under products")
        mats.setflags(write=False)
        object.__setattr__(self, "elements", mats)

    @property
    def n(self) -> int:
        return self.elements.shape[1]

    @property
    def order(self) -> int:
        return len(self.elements)

    def __len__(self):
        return self.order

    @cached_property
    def reflection_indices(self) -> tuple:
        return tuple(i for i, g in enumerate(self.elements) if _reflection_normal(g) is not None)

    @cached_property
    def normals(self) -> np.ndarray:
        """Unit normals of the reflections, in ``reflection_indices`` order (sign arbitrary)."""
        out = [_reflection_normal(self.elements[i]) for i in self.reflection_indices]
        return np.array(out).reshape(-1, self.n)

    @property
    def reflections(self) -> np.ndarray:
        return self.elements[list(self.reflection_indices)]

    def index(self, g) -> int:
        return _find(self.elements, np.asarray(g, dtype=float))

    def inverse_index(self) -> np.ndarray:
        return np.array([self.index(g.T) for g in self.elements])

    @cached_property
    def lattice_permutations(self):
        """Per element, (perm, signs) with (g x)_i = signs_i x_perm_i if g is a signed permutation."""
        out = []
        for g in self.elements:
            r = np.rint(g)
            ok = np.allclose(g, r, atol=1e-12) and np.all(np.abs(r).sum(axis=1) == 1)
            if not ok:
                out.append(None)
                continue
            perm = np.abs(r).argmax(axis=1)
            signs = r[np.arange(self.n), perm]
            out.append((perm, signs))
        return tuple(out)

    @property
    def lattice_exact(self) -> bool:
        return all(t is not None for t in self.lattice_permutations)

    def generated_by_reflections(self) -> bool:
        found = [np.eye(self.n)]
        frontier = list(found)
        refl = list(self.reflections)
        while frontier:
            nxt = []
            for g in frontier:
                for r in refl:
                    k = r @ g
                    if _find(np.array(found), k) < 0:
                        found.append(k)
                        nxt.append(k)
            frontier = nxt
        return len(found) == self.order

    def metadata(self) -> dict:
        return {"name": self.name, "order": self.order, "elements": self.elements.tolist()}


def dihedral(k: int) -> ReflectionGroup:
    """Symmetry group of the regular k-gon with a vertex on the positive x-axis (order 2k)."""
    if int(k) != k or k < 2:
        raise SymmetryError("dihedral(k) needs an integer k >= 2")
    k = int(k)
    mats = []
    for j in range(k):
        t = 2.0 * np.pi * j / k
        c, s = np.cos(t), np.sin(t)
        mats.append(np.array([[c, -s], [s, c]]))
    for j in range(k):
        t = np.pi * j / k  # mirror line at angle t
        mats.append(_reflection([-np.sin(t), np.cos(t)]))
    mats = np.array(mats)
    mats[np.abs(mats) < 1e-15] = 0.0
    return ReflectionGroup(mats, name=f"dihedral({k})")


def coordinate(n: int) -> ReflectionGroup:
    """All 2^n coordinate sign flips."""
    if int(n) != n or n < 1:
        raise SymmetryError("coordinate(n) needs an integer n >= 1")
    n = int(n)
    mats = [np.diag(s) for s in itertools.product([1.0, -1.0], repeat=n)]
    return ReflectionGroup(np.array(mats), name=f"coordinate({n})")


def build_group(group_cfg) -> ReflectionGroup:
    """From ``{"kind": "dihedral", "k": 3}``, ``{"kind": "coordinate", "n": 2}`` or
    ``{"kind": "matrices", "elements": [...]}``."""
    kind = group_cfg.get("kind")
    if kind == "dihedral":
        return dihedral(group_cfg.get("k", 0))
    if kind == "coordinate":
        return coordinate(group_cfg.get("n", 0))
    if kind == "matrices":
        return ReflectionGroup(np.asarray(group_cfg["elements"], dtype=float))
    raise SymmetryError(f"unknown group kind {kind!r}")


def _generic_point(n):
    v = np.array([0.01**i * (1.0 + 0.1 * i) for i in range(n)])
    return v / np.linalg.norm(v)


def fundamental_region(group: ReflectionGroup) -> np.ndarray:
    """Inward unit normals of the walls of F = {x : x . n_i > 0 for all i}."""
    if not group.generated_by_reflections():
        raise SymmetryError("group is not generated by its reflections")
    normals = group.normals
    if len(normals) == 0:
        return np.zeros((0, group.n))
    x0 = _generic_point(group.n)
    for _ in range(64):
        dots = normals @ x0
        if np.abs(dots).min() > 1e-8:
            break
        x0 = x0 + 1e-3 * np.random.default_rng(0).standard_normal(group.n)
        x0 /= np.linalg.norm(x0)
    oriented = normals * np.sign(normals @ x0)[:, None]
    keep = []
    for i, nrm in enumerate(oriented):
        others = np.delete(oriented, i, axis=0)
        if len(others) == 0:
            keep.append(i)
            continue
        res = linprog(nrm, A_ub=-others, b_ub=np.zeros(len(others)), bounds=[(-1, 1)] * group.n, method="highs")
        if res.status == 0 and res.fun < -1e-9:
            keep.append(i)
    return oriented[keep]


def _project_cone(v, walls):
    """Closest point of {y : y . w_i >= 0} to each row of v (walls are unit vectors)."""
    v = np.array(v, dtype=float)
    out = v.copy()
    bad = np.any(v @ walls.T < 0.0, axis=-1)
    if not bad.any():
        return out
    cand = v[bad]
    best = np.full(cand.shape, np.nan)
    best_d = np.full(len(cand), np.inf)
    n = walls.shape[1]
    for size in range(1, min(n, len(walls)) + 1):
        for active in itertools.combinations(range(len(walls)), size):
            A = walls[list(active)]
            gram = A @ A.T
            if abs(np.linalg.det(gram)) < 1e-14:
                continue
            lam = np.linalg.solve(gram, A @ cand.T).T
            y = cand - lam @ A
            ok = np.all(lam <= 1e-14, axis=1) & np.all(y @ walls.T >= -1e-12, axis=1)
            d = np.linalg.norm(y - cand, axis=1)
            better = ok & (d < best_d)
            best[better] = y[better]
            best_d[better] = d[better]
    out[bad] = best
    return out


@dataclass(frozen=True, eq=False)
class EquivariantSetup:
    group: ReflectionGroup
    walls: np.ndarray
    a1: np.ndarray
    stab: tuple
    orbit: np.ndarray

    @property
    def N(self) -> int:
        return len(self.orbit)

    def in_F(self, x, closed=True, tol=1e-12) -> np.ndarray:
        s = np.asarray(x, dtype=float) @ self.walls.T
        return np.all(s >= -tol, axis=-1) if closed else np.all(s > tol, axis=-1)

    def chamber(self, x) -> np.ndarray:
        """Index of an element g with g^T x in the closed fundamental region."""
        x = np.asarray(x, dtype=float)
        # x . g w_i >= 0 for all walls  <=>  g^T x in F-bar; pick the best-scoring element
        score = np.einsum("...j,gji,wi->...gw", x, self.group.elements, self.walls).min(axis=-1)
        return np.argmax(score, axis=-1)

    def nearest_orbit(self, x) -> np.ndarray:
        d = np.linalg.norm(np.asarray(x, dtype=float)[..., None, :] - self.orbit, axis=-1)
        return np.argmin(d, axis=-1)

    def in_D(self, x, tol=1e-12) -> np.ndarray:
        """Membership in D, computed as the open Voronoi cell of a1 in its orbit."""
        return self.dist_to_boundary_D(x, signed=True) > tol

    def dist_to_boundary_D(self, x, signed=False) -> np.ndarray:
        return self._cell_distance(np.asarray(x, dtype=float), 0, signed)

    def _cell_distance(self, x, k, signed):
        b = self.orbit[k]
        others = np.delete(self.orbit, k, axis=0)
        # distance to each bisector, positive on b's side
        num = np.linalg.norm(x[..., None, :] - others, axis=-1) ** 2 - np.linalg.norm(x - b, axis=-1)[..., None] ** 2
        dist = (num / (2.0 * np.linalg.norm(others - b, axis=-1))).min(axis=-1)
        return dist if signed else np.abs(dist)

    def affine_competitor(self, x) -> np.ndarray:
        """min(dist(x, boundary of the cell), 1) times the orbit point owning x's cell."""
        x = np.asarray(x, dtype=float)
        k = self.nearest_orbit(x)
        out = np.zeros(x.shape[:-1] + (self.orbit.shape[1],))
        for j in range(self.N):
            sel = k == j
            if not sel.any():
                continue
            dist = self._cell_distance(x[sel], j, signed=True)
            out[sel] = np.clip(dist, 0.0, 1.0)[:, None] * self.orbit[j]
        return out

    def metadata(self) -> dict:
        return {
            "group": self.group.name,
            "order": self.group.order,
            "a1": self.a1.tolist(),
            "stabilizerOrder": len(self.stab),
            "orbit": self.orbit.tolist(),
            "walls": self.walls.tolist(),
        }


def stabilizer_region(group: ReflectionGroup, a1) -> EquivariantSetup:
    a1 = np.asarray(a1, dtype=float).reshape(-1)
    if a1.shape != (group.n,):
        raise SymmetryError("a1 must live in the group's space")
    if np.linalg.norm(a1) == 0.0:
        raise SymmetryError("a1 must be nonzero")
    walls = fundamental_region(group)
    if len(walls) and (walls @ a1).min() < -1e-12:
        raise SymmetryError(f"a1={a1.tolist()} is not in the closed fundamental region")
    images = np.einsum("gij,j->gi", group.elements, a1)
    stab = tuple(int(i) for i in np.nonzero(np.linalg.norm(images - a1, axis=1) <= 1e-10)[0])
    orbit = [a1]
    for y in images:
        if min(np.linalg.norm(y - o) for o in orbit) > 1e-10:
            orbit.append(y)
    orbit = np.array(orbit)
    if len(orbit) * len(stab) != group.order:
        raise SymmetryError("orbit-stabilizer count mismatch")
    return EquivariantSetup(group, walls, a1, stab, orbit)


# -- projections -----------------------------------------------------------------
def _sample(values, grid, points):
    """Multilinear interpolation of node values at physical points (..., n)."""
    idx = (np.moveaxis(points, -1, 0) + grid.L) / grid.h
    return np.stack(
        [map_coordinates(values[..., c], idx, order=1, mode="nearest") for c in range(values.shape[-1])],
        axis=-1,
    )


def _lattice_gather(values, perm, signs):
    """v(x) = values at the node g x, for g a signed permutation (grid symmetric about 0)."""
    n = len(perm)
    # (g x)_i = s_i x_perm(i): axis i of the output reads axis perm(i) of the input
    inv = np.argsort(perm)
    out = np.transpose(values, tuple(inv) + (n,))
    for i in range(n):
        if signs[i] < 0:
            out = np.flip(out, axis=perm[i])
    return out


def act_on_field(values, grid, group: ReflectionGroup, index: int) -> np.ndarray:
    """x -> g^T u(g x) for the element ``index``."""
    g = group.elements[index]
    lat = group.lattice_permutations[index]
    if lat is not None:
        moved = _lattice_gather(values, *lat)
    else:
        pts = np.einsum("ij,...j->...i", g, grid.coords)
        moved = _sample(values, grid, pts)
    return np.einsum("ji,...j->...i", g, moved)


def _check_field(u: Field, group: ReflectionGroup):
    if u.grid.n != group.n:
        raise SymmetryError("field grid and group dimensions differ")
    if u.m != group.n:
        raise SymmetryError("field values and group act on different dimensions")
    if not np.allclose(u.grid.axis, -u.grid.axis[::-1], atol=1e-12):
        raise SymmetryError("grid is not centered at the origin")


def equivariant_project(u: Field, group: ReflectionGroup, elements=None) -> Field:
    """Group average x -> mean_g g^T u(g x); nodes carrying Dirichlet data are kept.

    ``elements`` restricts the average to a subgroup given by element indices.
    """
    _check_field(u, group)
    idx = range(group.order) if elements is None else elements
    acc = np.zeros_like(u.values)
    for i in idx:
        acc += act_on_field(u.values, u.grid, group, i)
    acc /= len(idx)
    acc[u.fixed] = u.values[u.fixed]
    return u.copy(acc)


def lattice_subgroup(group: ReflectionGroup) -> tuple:
    """Indices of the elements that map the node lattice to itself."""
    return tuple(i for i, t in enumerate(group.lattice_permutations) if t is not None)


def equivariance_residual(u: Field, group: ReflectionGroup) -> float:
    """max over active nodes x and elements g of |u(g x) - g u(x)| (off-lattice points interpolated)."""
    _check_field(u, group)
    act = u.grid.active
    worst = 0.0
    for i in range(group.order):
        moved = act_on_field(u.values, u.grid, group, i)
        worst = max(worst, float(np.abs(moved - u.values)[act].max()))
    return worst


@lru_cache(maxsize=16)
def _chambers(setup: EquivariantSetup, grid) -> np.ndarray:
    """Per node, the matrix g with g^T x in the closed fundamental region."""
    idx = setup.chamber(grid.coords.reshape(-1, grid.n))
    mats = setup.group.elements[idx]
    mats.setflags(write=False)
    return mats


def positivity_project(u: Field, setup: EquivariantSetup) -> Field:
    """Pointwise: with g the chamber of x, replace u(x) by g P(g^T u(x)), P the projection onto F-bar."""
    _check_field(u, setup.group)
    mats = _chambers(setup, u.grid)
    flat_u = u.values.reshape(-1, u.m)
    local = np.einsum("kji,kj->ki", mats, flat_u)
    outside = np.flatnonzero(np.any(local @ setup.walls.T < 0.0, axis=1))
    out = u.values.copy()
    if outside.size:
        proj = _project_cone(local[outside], setup.walls)
        flat_out = out.reshape(-1, u.m)
        flat_out[outside] = np.einsum("kij,kj->ki", mats[outside], proj)
    out[u.fixed] = u.values[u.fixed]
    return u.copy(out)


def positivity_tangent(values, grid, direction, setup: EquivariantSetup, tol: float = 1e-12) -> np.ndarray:
    """Project a nodal direction onto the tangent cone of the positivity constraint at ``values``.

    Components pushing a value that sits on a wall of g F-bar further out are removed;
    ``direction`` has the shape of ``values``.
    """
    mats = _chambers(setup, grid)
    m = values.shape[-1]
    flat_u = values.reshape(-1, m)
    local_u = np.einsum("kji,kj->ki", mats, flat_u)
    on_wall = np.abs(local_u @ setup.walls.T) <= tol * max(1.0, float(np.abs(flat_u).max()))
    out = np.array(direction, dtype=float).reshape(-1, m)
    rows = np.flatnonzero(on_wall.any(axis=1))
    if rows.size == 0:
        return out.reshape(values.shape)
    local_d = np.einsum("kji,kj->ki", mats[rows], out[rows])
    pattern = on_wall[rows]
    for key in np.unique(pattern, axis=0):
        sel = np.all(pattern == key, axis=1)
        local_d[sel] = _project_cone(local_d[sel], setup.walls[key])
    out[rows] = np.einsum("kij,kj->ki", mats[rows], local_d)
    return out.reshape(values.shape)
