"""Dead cores: detection on computed fields, predicted radii, and the torsion-function
supersolution of the scalar model  Delta v = c^2 v^p,  v = delta on the boundary.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy import ndimage
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .field import DIRICHLET, Field, Grid, init_field
from .potential import _ON_WELL, MinimaSet, quartic_patch


class DeadCoreError(ValueError):
    pass


def _check_pc(p, c):
    if not 0.0 < p < 1.0:
        raise DeadCoreError("p must lie in (0, 1)")
    if not c > 0.0:
        raise DeadCoreError("c must be positive")


def onset_length(p: float, c: float) -> float:
    """d(p, c): length over which the model profile climbs from 0 to 1."""
    _check_pc(p, c)
    return np.sqrt(2.0 * (p + 1.0)) / ((1.0 - p) * c)


# -- scalar model potential -----------------------------------------------------------
@dataclass(frozen=True)
class PowerWell:
    """kappa |v|^q with 1 < q < 2 and a single well at 0; W' = kappa q |v|^(q-2) v.

    With kappa = c^2 / (p + 1) and q = p + 1 the Euler-Lagrange equation is Delta v = c^2 v^p
    for v >= 0.  ``eps`` replaces |v|^q by A v^2 + B v^4 on |v| < eps.
    """

    kappa: float
    q: float
    eps: float | None = None

    def __post_init__(self):
        if not 1.0 < self.q < 2.0:
            raise DeadCoreError("the power must lie in (1, 2)")
        if not self.kappa > 0.0:
            raise DeadCoreError("kappa must be positive")
        if self.eps is not None and not self.eps > 0.0:
            raise DeadCoreError("eps must be positive")

    @classmethod
    def model(cls, p: float, c: float) -> "PowerWell":
        _check_pc(p, c)
        return cls(c * c / (p + 1.0), p + 1.0)

    m = 1
    differentiable = True
    minima = None

    @property
    def kind(self):
        return "regularized" if self.eps is not None else "power"

    def _abs(self, u):
        u = np.asarray(u, dtype=float)
        if u.shape[-1] != 1:
            raise DeadCoreError("the power well acts on scalars")
        return u[..., 0]

    def value_and_gradient(self, u):
        v = self._abs(u)
        a = np.abs(v)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = self.kappa * a**self.q
            grad = np.where(a <= _ON_WELL, 0.0, self.kappa * self.q * a ** (self.q - 2.0) * v)
        if self.eps is not None:
            A, B = quartic_patch(self.q, self.eps)
            inside = a < self.eps
            val = np.where(inside, self.kappa * (A + B * v * v) * v * v, val)
            grad = np.where(inside, self.kappa * (2.0 * A + 4.0 * B * v * v) * v, grad)
        return val, grad[..., None]

    def value(self, u):
        return self.value_and_gradient(u)[0]

    def gradient(self, u):
        return self.value_and_gradient(u)[1]

    def stiffness(self, u):
        a = np.abs(self._abs(u))
        if self.eps is None:
            return np.zeros_like(a)
        A, _ = quartic_patch(self.q, self.eps)
        return np.where(a < self.eps, 2.0 * self.kappa * A, 0.0)

    def regularize(self, eps):
        return PowerWell(self.kappa, self.q, float(eps))

    def base(self):
        return PowerWell(self.kappa, self.q)

    def metadata(self):
        out = {"kind": "power", "kappa": self.kappa, "q": self.q}
        if self.eps is not None:
            out["eps"] = self.eps
        return out


# -- torsion function --------------------------------------------------------------------
@dataclass(frozen=True)
class Torsion:
    R: float
    n: int
    x0: np.ndarray

    @property
    def psi_max(self) -> float:
        return self.R**2 / (2.0 * self.n)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return (self.R**2 - np.sum((x - self.x0) ** 2, axis=-1)) / (2.0 * self.n)

    def s(self, x):
        """sqrt(2 (psi_max - psi(x))) = |x - x0| / sqrt(n)."""
        return np.sqrt(np.maximum(2.0 * (self.psi_max - self(x)), 0.0))


def torsion_ball(R: float, n: int, x0=None) -> Torsion:
    if not R > 0.0:
        raise DeadCoreError("R must be positive")
    x0 = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).reshape(n)
    return Torsion(float(R), int(n), x0)


# -- one-dimensional supersolution profile ---------------------------------------------------
@dataclass
class SupersolutionProfile:
    p: float
    c: float
    s0: float
    s: np.ndarray
    X: np.ndarray
    dead_core_onset: float
    X0: float
    evaluate: object = dc_field(repr=False, default=None)

    def __call__(self, s):
        return self.evaluate(np.asarray(s, dtype=float))

    def to_rows(self):
        return list(zip(self.s.tolist(), self.X.tolist()))


def _unit_log_profile(p, c, t_end):
    """z = log Y for Y'' = c^2 Y^p, Y(0) = 1, Y'(0) = 0, integrated in z to avoid overflow."""
    def rhs(_, y):
        return [y[1], c * c * np.exp((p - 1.0) * y[0]) - y[1] ** 2]

    return solve_ivp(rhs, (0.0, t_end), [0.0, 0.0], method="DOP853", rtol=1e-12, atol=1e-14, dense_output=True)


def supersolution_profile(p: float, c: float, s0: float, samples: int = 401,
                          t_max: float = 1e12) -> SupersolutionProfile:
    """Solve X'' = c^2 X^p, X'(0) = 0, X(s0) = 1.

    For s0 >= d(p, c) the solution vanishes on [0, s0 - d] and is a pure power beyond.
    Otherwise X(s) = Y(t s / s0) / Y(t), with Y the solution started from Y(0) = 1
    (the equation is invariant under X -> l X, s -> l^((1-p)/2) s); the shooting
    parameter t solves Y(t) / t^beta = s0^(-beta) and X(0) = 1 / Y(t).
    """
    _check_pc(p, c)
    if not s0 > 0.0:
        raise DeadCoreError("s0 must be positive")
    d = onset_length(p, c)
    beta = 2.0 / (1.0 - p)
    k = (c * c / (beta * (beta - 1.0))) ** (1.0 / (1.0 - p))
    if s0 >= d:
        s_d = s0 - d

        def evaluate(s):
            return k * np.maximum(s - s_d, 0.0) ** beta

        X0 = 0.0
    else:
        target = -beta * np.log(s0)
        # log Y(t) - beta log t falls from +inf towards log k < target
        t_hi = 1.0
        sol = _unit_log_profile(p, c, t_hi)
        while sol.y[0, -1] - beta * np.log(t_hi) >= target:
            t_hi *= 8.0
            if t_hi > t_max:
                raise DeadCoreError(f"shooting bracket failed for p={p}, c={c}, s0={s0} (s0 too close to d={d})")
            sol = _unit_log_profile(p, c, t_hi)
        z = sol.sol

        def miss(t):
            return z(t)[0] - beta * np.log(t) - target

        t_lo = t_hi
        while miss(t_lo) <= 0.0:
            t_lo *= 0.5
        t = brentq(miss, t_lo, t_hi, xtol=1e-14 * t_hi, rtol=1e-15, maxiter=500)
        zt = z(t)[0]
        X0 = float(np.exp(-zt))
        s_d = 0.0

        def evaluate(s):
            arg = t * np.clip(s, 0.0, s0) / s0
            return np.exp(z(np.ravel(arg))[0] - zt).reshape(np.shape(arg))

    s = np.linspace(0.0, s0, samples)
    return SupersolutionProfile(p, c, s0, s, evaluate(s), s_d, X0, evaluate)


@dataclass(frozen=True)
class SupersolutionCheck:
    violation: float
    h: float
    nodes: int


def verify_supersolution(p: float, c: float, R: float, n: int, h: float) -> SupersolutionCheck:
    """max over interior nodes of (Delta_h u_bar - c^2 u_bar^p)_+, u_bar = X(s(x)) on B_R."""
    tors = torsion_ball(R, n)
    prof = supersolution_profile(p, c, np.sqrt(2.0 * tors.psi_max))
    L = h * np.ceil(R / h)
    grid = Grid(n, h, L)
    x = grid.coords
    ubar = prof(tors.s(x))
    lap = -2.0 * n * ubar
    inner = np.ones(grid.shape, dtype=bool)
    for d in range(n):
        lap += np.roll(ubar, 1, axis=d) + np.roll(ubar, -1, axis=d)
        for shift in (1, -1):
            inner &= np.roll(grid.radius, shift, axis=d) <= R
    lap /= h * h
    inner &= grid.radius < R
    for d in range(n):
        idx = [slice(None)] * n
        idx[d] = [0, -1]
        inner[tuple(idx)] = False
    resid = lap - c * c * np.maximum(ubar, 0.0) ** p
    return SupersolutionCheck(float(max(resid[inner].max(), 0.0)), h, int(inner.sum()))


# -- predicted radii and constants ---------------------------------------------------------
def predicted_deadcore_radius(p: float, c: float, delta: float, R: float, n: int):
    """R0 with dist(y, boundary) > R0 forcing v(y) = 0 for the model on B_R; None when R is too small."""
    _check_pc(p, c)
    if not (delta > 0.0 and R > 0.0):
        raise DeadCoreError("delta and R must be positive")
    c_hat = c / delta ** ((1.0 - p) / 2.0)
    reach = np.sqrt(n) * onset_length(p, c_hat)
    if R >= reach:
        return float(reach)
    if R > 0.5 * reach:
        return float(2.0 * R - reach)
    return None


def hat_c_constant(alpha: float, n: int, C0: float, C1: float, cStar: float, rho0: float) -> float:
    if not 0.0 < alpha < 2.0:
        raise DeadCoreError("alpha must lie in (0, 2)")
    if min(C0, C1, cStar, rho0) <= 0.0:
        raise DeadCoreError("all constants must be positive")
    first = 2.0 ** (alpha + 2.0) * C0 / (C1 * cStar)
    second = (
        2.0 * np.sqrt(n * (alpha + 2.0)) / ((1.0 - alpha / 2.0) * np.sqrt(2.0 * alpha * cStar))
        * (rho0 / 2.0) ** (1.0 + alpha / 2.0)
    )
    return float(first + second)


# -- detection ---------------------------------------------------------------------------------
@dataclass
class DeadCoreReport:
    tol_core: float
    per_minimum: list

    def to_dict(self) -> dict:
        return {"tolCore": self.tol_core, "perMinimum": self.per_minimum}

    @property
    def empty(self) -> bool:
        return all(m["coreCellCount"] == 0 for m in self.per_minimum)


def _distance_to_boundary(grid: Grid):
    if grid.R is not None:
        return grid.R - grid.radius
    return grid.L - np.abs(grid.coords).max(axis=-1)


def detect_deadcore(u: Field, minima, tol_core: float, predicted_R0=None, margin: float | None = None) -> DeadCoreReport:
    """Per minimum, the core component {|u - a| <= tol} containing its deepest point.

    The inradius is the largest Euclidean distance from a core node to a node outside
    the core (nodes carrying boundary data count as outside), minus h.  With
    ``predicted_R0`` the report also checks that every node at distance >= R0 + margin
    from the domain boundary lies in the core (margin defaults to 5h).
    """
    if not tol_core > 0.0:
        raise DeadCoreError("tolCore must be positive")
    pts = minima.points if isinstance(minima, MinimaSet) else np.atleast_2d(np.asarray(minima, dtype=float))
    grid = u.grid
    h = grid.h
    margin = 5.0 * h if margin is None else margin
    interior = u.free
    out = []
    for a in pts:
        dev = np.linalg.norm(u.values - a, axis=-1)
        near = interior & (dev <= tol_core)
        entry = {
            "minimum": a.tolist(),
            "coreCellCount": 0,
            "coreInradius": 0.0,
            "predictedR0": predicted_R0,
            "containsPredictedCore": None,
        }
        if near.any():
            padded = np.pad(near, 1)
            depth = ndimage.distance_transform_edt(padded, sampling=h)[(slice(1, -1),) * grid.n]
            labels, _ = ndimage.label(near)
            deepest = np.unravel_index(np.argmax(np.where(near, depth, -1.0)), grid.shape)
            core = labels == labels[deepest]
            entry["coreCellCount"] = int(core.sum())
            entry["coreInradius"] = float(max(depth[core].max() - h, 0.0))
        if predicted_R0 is not None:
            region = grid.active & (_distance_to_boundary(grid) >= predicted_R0 + margin)
            entry["predictedRegionNodes"] = int(region.sum())
            entry["maxDeviationInPredictedRegion"] = float(dev[region].max()) if region.any() else 0.0
            entry["containsPredictedCore"] = bool(np.all(dev[region] <= tol_core))
        out.append(entry)
    return DeadCoreReport(tol_core, out)


def model_problem_field(p: float, c: float, delta: float, R: float, h: float, n: int = 2) -> tuple:
    """Initial field and potential for Delta v = c^2 v^p on B_R with v = delta on the boundary.

    The interior starts at 0, the boundary ring at delta.
    """
    grid = Grid(n, h, R, R)
    u0 = init_field(grid, "radial", lambda r: np.where(r >= R, delta, 0.0), bc=DIRICHLET)
    return u0, PowerWell.model(p, c)
