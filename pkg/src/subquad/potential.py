"""Multi-well potentials with sub-quadratic or characteristic behaviour at the wells.

Three kinds are supported:

* ``subquadratic``   W(u) = prod_k |u - a_k|^{alpha_k},  0 < alpha_k < 2
* ``characteristic`` W(u) = 1 on the simplex hull of the wells minus its
                     vertices, 0 elsewhere (the alpha -> 0 object)
* ``regularized``    the sub-quadratic product with each singular factor
                     |u - a_k|^{alpha_k} replaced, for |u - a_k| < eps, by the
                     even quartic A rho^2 + B rho^4 matching value and slope
                     at rho = eps.

Arrays of states have shape ``(..., m)``; values come back with shape ``(...)``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

SUBQUADRATIC = "subquadratic"
CHARACTERISTIC = "characteristic"
REGULARIZED = "regularized"
KINDS = (SUBQUADRATIC, CHARACTERISTIC, REGULARIZED)

# |u - a| below this is treated as sitting on the well (designated subgradient 0)
_ON_WELL = np.finfo(float).eps


class PotentialError(ValueError):
    """Invalid potential data or an operation the potential kind does not support."""


@dataclass(frozen=True, eq=False)
class MinimaSet:
    """The wells a_1..a_N of a potential, stored as an (N, m) array."""

    points: np.ndarray

    def __post_init__(self):
        src = self.points.points if isinstance(self.points, MinimaSet) else self.points
        pts = np.atleast_2d(np.array(src, dtype=float))
        if pts.ndim != 2:
            raise PotentialError("minima must be an (N, m) array")
        if pts.shape[0] < 2:
            raise PotentialError("at least two minima are required")
        if not np.all(np.isfinite(pts)):
            raise PotentialError("minima must be finite")
        if self._pairwise(pts).min() <= 0.0:
            raise PotentialError("minima must be pairwise distinct")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @staticmethod
    def _pairwise(pts):
        d = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
        return d[~np.eye(len(pts), dtype=bool)]

    @property
    def N(self) -> int:
        return self.points.shape[0]

    @property
    def m(self) -> int:
        return self.points.shape[1]

    @cached_property
    def d0(self) -> float:
        """Minimum pairwise distance between wells."""
        return float(self._pairwise(self.points).min())

    def is_nondegenerate_simplex(self) -> bool:
        if self.N != self.m + 1:
            return False
        edges = self.points[1:] - self.points[0]
        return np.linalg.matrix_rank(edges, tol=1e-12 * max(1.0, np.abs(edges).max())) == self.m

    def require_simplex(self):
        if not self.is_nondegenerate_simplex():
            raise PotentialError(
                "a nondegenerate simplex of m+1 minima is required "
                f"(got N={self.N}, m={self.m})"
            )

    def barycentric(self, u: np.ndarray) -> np.ndarray:
        """Barycentric coordinates of states ``u`` (..., m) -> (..., m+1)."""
        self.require_simplex()
        a0 = self.points[0]
        T = (self.points[1:] - a0).T
        lam_rest = np.linalg.solve(T, (np.asarray(u, float) - a0).reshape(-1, self.m).T).T
        lam = np.concatenate([1.0 - lam_rest.sum(axis=1, keepdims=True), lam_rest], axis=1)
        return lam.reshape(np.shape(u)[:-1] + (self.N,))

    def distances(self, u: np.ndarray) -> np.ndarray:
        """|u - a_k| for every well, shape (..., N)."""
        u = np.asarray(u, dtype=float)
        return np.linalg.norm(u[..., None, :] - self.points, axis=-1)

    def project_hull(self, u) -> np.ndarray:
        """Closest point of the convex hull of the wells to each state in ``u`` (..., m)."""
        u = np.asarray(u, dtype=float)
        flat = u.reshape(-1, self.m)
        best = np.empty_like(flat)
        best_d = np.full(len(flat), np.inf)
        for size in range(1, min(self.N, self.m + 1) + 1):
            for sub in itertools.combinations(range(self.N), size):
                a0 = self.points[sub[0]]
                E = self.points[list(sub[1:])] - a0
                rel = flat - a0
                if size > 1:
                    gram = E @ E.T
                    if np.linalg.matrix_rank(gram) < size - 1:
                        continue
                    mu = np.linalg.solve(gram, E @ rel.T).T
                    lam0 = 1.0 - mu.sum(axis=1)
                    ok = (lam0 >= -1e-14) & np.all(mu >= -1e-14, axis=1)
                    # a full-dimensional simplex contains the point itself
                    y = flat if size == self.m + 1 else a0 + mu @ E
                else:
                    ok = np.ones(len(flat), dtype=bool)
                    y = np.broadcast_to(a0, flat.shape)
                d = np.linalg.norm(flat - y, axis=1)
                take = ok & (d < best_d)
                best[take] = y[take]
                best_d[take] = d[take]
        return best.reshape(u.shape)

    def hull_distance(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return np.linalg.norm(u - self.project_hull(u), axis=-1)

    def to_list(self):
        return self.points.tolist()


def quartic_patch(alpha, eps):
    """Coefficients (A, B) of A r^2 + B r^4 matching r^alpha in value and slope at r = eps."""
    alpha = np.asarray(alpha, dtype=float)
    A = 0.5 * (4.0 - alpha) * eps ** (alpha - 2.0)
    B = 0.5 * (alpha - 2.0) * eps ** (alpha - 4.0)
    return A, B


def _product(arrays):
    out = None
    for a in arrays:
        out = a.copy() if out is None else out * a
    return out


def _prod_except(factors):
    """prod_{j != k} f_j along the last axis, without dividing."""
    ones = np.ones_like(factors[..., :1])
    left = np.cumprod(np.concatenate([ones, factors[..., :-1]], axis=-1), axis=-1)
    right = np.cumprod(np.concatenate([ones, factors[..., :0:-1]], axis=-1), axis=-1)[..., ::-1]
    return left * right


@dataclass(frozen=True, eq=False)
class Potential:
    kind: str
    minima: MinimaSet
    exponents: tuple | None = None
    eps: float | None = None
    # vertex snapping radius used only by the characteristic indicator
    tol: float = 0.0
    _alpha: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise PotentialError(f"unknown potential kind {self.kind!r}")
        if not isinstance(self.minima, MinimaSet):
            object.__setattr__(self, "minima", MinimaSet(self.minima))
        if self.kind == CHARACTERISTIC:
            self.minima.require_simplex()
            object.__setattr__(self, "exponents", None)
            object.__setattr__(self, "_alpha", np.zeros(self.minima.N))
            return
        if self.exponents is None:
            raise PotentialError("exponents are required for sub-quadratic potentials")
        alpha = np.broadcast_to(np.asarray(self.exponents, dtype=float), (self.minima.N,)).copy()
        if np.any(alpha <= 0.0) or np.any(alpha >= 2.0):
            raise PotentialError("exponents must lie in (0, 2)")
        object.__setattr__(self, "exponents", tuple(float(a) for a in alpha))
        object.__setattr__(self, "_alpha", alpha)
        if self.kind == REGULARIZED:
            if self.eps is None or not self.eps > 0.0:
                raise PotentialError("regularized potential needs eps > 0")
            if self.eps >= self.minima.d0 / 4.0:
                raise PotentialError(
                    f"eps={self.eps} must be below d0/4={self.minima.d0 / 4.0} "
                    "(regularization patches would overlap)"
                )

    # -- constructors -----------------------------------------------------
    @classmethod
    def subquadratic(cls, minima, exponents):
        return cls(SUBQUADRATIC, MinimaSet(minima), exponents)

    @classmethod
    def characteristic(cls, minima, tol=0.0):
        return cls(CHARACTERISTIC, MinimaSet(minima), tol=tol)

    @property
    def m(self):
        return self.minima.m

    @property
    def alpha(self) -> np.ndarray:
        return self._alpha

    @property
    def differentiable(self) -> bool:
        return self.kind != CHARACTERISTIC

    def _check(self, u):
        u = np.asarray(u, dtype=float)
        if u.ndim == 0 or u.shape[-1] != self.m:
            raise PotentialError(
                f"state dimension mismatch: expected trailing axis {self.m}, got shape {u.shape}"
            )
        return u

    # -- evaluation -------------------------------------------------------
    def value(self, u) -> np.ndarray:
        u = self._check(u)
        if self.kind == CHARACTERISTIC:
            return self._indicator(u)
        return self._evaluate(u, want_grad=False)[0]

    def gradient(self, u) -> np.ndarray:
        """W_u(u); the zero vector at the wells (designated subgradient)."""
        return self.value_and_gradient(u)[1]

    def value_and_gradient(self, u):
        u = self._check(u)
        if self.kind == CHARACTERISTIC:
            raise PotentialError(
                "the characteristic potential has no pointwise gradient; "
                "reach alpha = 0 through alpha-continuation"
            )
        return self._evaluate(u, want_grad=True)

    def _evaluate(self, u, want_grad):
        shape = u.shape[:-1]
        flat = u.reshape(-1, self.m)
        cols = [flat[:, i] for i in range(self.m)]
        pts, alpha, N = self.minima.points, self._alpha, self.minima.N
        diffs = [[c - a_i for c, a_i in zip(cols, a)] for a in pts]
        r = [np.sqrt(sum(d * d for d in dk)) for dk in diffs]
        powers = [rk ** ak for rk, ak in zip(r, alpha)]
        others = [_product(powers[j] for j in range(N) if j != k) for k in range(N)]
        value = powers[0] * others[0]
        grad = None
        if want_grad:
            grad = np.zeros_like(flat)
            with np.errstate(divide="ignore", invalid="ignore"):
                for k in range(N):
                    on = r[k] <= _ON_WELL
                    # alpha_k r^(alpha_k - 2) (u - a_k) prod_{j != k} r_j^alpha_j
                    coef = np.where(on, 0.0, alpha[k] * r[k] ** (alpha[k] - 2.0) * others[k])
                    for i in range(self.m):
                        grad[:, i] += coef * diffs[k][i]
        if self.kind == REGULARIZED:
            for k in range(N):
                inside = np.flatnonzero(r[k] < self.eps)
                if inside.size == 0:
                    continue
                A, B = quartic_patch(alpha[k], self.eps)
                rho2 = r[k][inside] ** 2
                rest = others[k][inside]
                q = (A + B * rho2) * rho2
                value[inside] = q * rest
                if want_grad:
                    # gradient of the smooth co-factor prod_{j != k} r_j^alpha_j
                    w = [alpha[j] / r[j][inside] ** 2 for j in range(N) if j != k]
                    dj = [diffs[j] for j in range(N) if j != k]
                    slope = (2.0 * A + 4.0 * B * rho2) * rest
                    for i in range(self.m):
                        g_rest = rest * sum(wj * d[i][inside] for wj, d in zip(w, dj))
                        grad[inside, i] = slope * diffs[k][i][inside] + q * g_rest
        value = value.reshape(shape)
        return (value, grad.reshape(shape + (self.m,))) if want_grad else (value, None)

    def stiffness(self, u) -> np.ndarray:
        """Nonnegative curvature scale of W^eps inside its patches, zero elsewhere.

        Used only to build descent preconditioners.
        """
        u = self._check(u)
        if self.kind != REGULARIZED:
            return np.zeros(u.shape[:-1])
        r = self.minima.distances(u)
        k, rho, inside = self._patch_index(r)
        others = _prod_except(r ** self._alpha)
        rest = np.take_along_axis(others, k[..., None], axis=-1)[..., 0]
        A, B = quartic_patch(self._alpha[k], self.eps)
        curv = np.maximum(2.0 * A + 12.0 * B * rho**2, 2.0 * A + 4.0 * B * rho**2) * rest
        return np.where(inside, np.maximum(curv, 0.0), 0.0)

    def _patch_index(self, r):
        k = np.argmin(r, axis=-1)
        rho = np.take_along_axis(r, k[..., None], axis=-1)[..., 0]
        return k, rho, rho < self.eps

    def _indicator(self, u):
        lam = self.minima.barycentric(u)
        scale = max(1.0, float(np.abs(self.minima.points).max()))
        inside = np.all(lam >= -1e-12 * scale, axis=-1)
        near_vertex = self.minima.distances(u).min(axis=-1) <= self.tol
        at_vertex = np.any(lam >= 1.0 - 1e-12, axis=-1) | near_vertex
        return np.where(inside & ~at_vertex, 1.0, 0.0)

    # -- transformations --------------------------------------------------
    def regularize(self, eps: float) -> "Potential":
        if self.kind == CHARACTERISTIC:
            raise PotentialError("only sub-quadratic potentials can be regularized")
        return Potential(REGULARIZED, self.minima, self.exponents, eps=float(eps))

    def base(self) -> "Potential":
        """The unregularized potential."""
        if self.kind == REGULARIZED:
            return Potential(SUBQUADRATIC, self.minima, self.exponents)
        return self

    def with_exponent(self, alpha: float) -> "Potential":
        if alpha == 0.0:
            return Potential(CHARACTERISTIC, self.minima, tol=self.tol)
        return Potential(SUBQUADRATIC, self.minima, (alpha,) * self.minima.N)

    def metadata(self) -> dict:
        out = {"kind": self.kind, "minima": self.minima.to_list()}
        if self.exponents is not None:
            out["exponents"] = list(self.exponents)
        if self.kind == REGULARIZED:
            out["eps"] = self.eps
            out["patch"] = "quartic A*rho^2 + B*rho^4 on the singular factor"
        if self.kind == CHARACTERISTIC and self.tol:
            out["tol"] = self.tol
        return out


@dataclass(frozen=True)
class H1Certificate:
    rho0: float
    cStar: float
    alpha: float
    worstRatio: float

    @property
    def passed(self) -> bool:
        return self.worstRatio >= 1.0


def eval_potential(p: Potential, u) -> np.ndarray:
    return p.value(u)


def grad_potential(p: Potential, u) -> np.ndarray:
    return p.gradient(u)


def regularize(p: Potential, eps: float) -> Potential:
    return p.regularize(eps)


def verify_h1(p: Potential, rho0: float, cStar: float, nSamples: int = 64, seed: int = 0) -> H1Certificate:
    """Sample d/drho W(a + rho xi) >= alpha C* rho^(alpha-1) around every well.

    Radii are a uniform ladder on (0, rho0] (endpoint included); directions are
    +-1 in one dimension and seeded uniform samples of the sphere otherwise.
    """
    if p.kind != SUBQUADRATIC:
        raise PotentialError("verify_h1 applies to sub-quadratic potentials")
    if not 0.0 < rho0 < p.minima.d0 / 2.0:
        raise PotentialError("rho0 must lie in (0, d0/2)")
    if cStar < 0.0:
        raise PotentialError("cStar must be nonnegative")
    alpha = float(p.alpha.min())
    if cStar == 0.0:
        return H1Certificate(rho0, cStar, alpha, float("inf"))
    m = p.m
    if m == 1:
        xi = np.array([[1.0], [-1.0]])
    else:
        rng = np.random.default_rng(seed)
        xi = rng.standard_normal((nSamples, m))
        xi /= np.linalg.norm(xi, axis=1, keepdims=True)
    rho = rho0 * np.arange(1, nSamples + 1) / nSamples
    worst = np.inf
    for a, alpha_k in zip(p.minima.points, p.alpha):
        pts = a + rho[:, None, None] * xi[None, :, :]
        slope = np.einsum("rdi,di->rd", p.gradient(pts), xi)
        bound = alpha_k * cStar * rho ** (alpha_k - 1.0)
        worst = min(worst, float((slope / bound[:, None]).min()))
    return H1Certificate(rho0, cStar, alpha, worst)


def potential_from_config(pot_cfg: dict, minima=None) -> Potential:
    """Build a potential from ``{"kind", "minima", "exponents" | "alpha", "eps"}``."""
    kind = pot_cfg.get("kind", SUBQUADRATIC)
    pts = pot_cfg.get("minima", minima)
    if pts is None:
        raise PotentialError("potential config needs minima")
    if kind == CHARACTERISTIC:
        return Potential.characteristic(pts, tol=pot_cfg.get("tol", 0.0))
    exps = pot_cfg.get("exponents", pot_cfg.get("alpha"))
    n = np.atleast_2d(np.asarray(pts, dtype=float)).shape[0]
    if np.isscalar(exps):
        exps = (exps,) * n
    p = Potential.subquadratic(pts, exps)
    if kind == REGULARIZED:
        p = p.regularize(pot_cfg["eps"])
    elif kind != SUBQUADRATIC:
        raise PotentialError(f"unknown potential kind {kind!r}")
    return p
