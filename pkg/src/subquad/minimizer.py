"""Constrained descent for the discrete energy, with regularization and exponent ladders.

Each rung descends a differentiable energy (the potential regularized at the
rung's eps) by limited-memory quasi-Newton steps preconditioned with the
discrete Laplacian plus the local potential curvature.  Every trial point is
pushed through the requested projections before the Armijo test, so accepted
iterates always satisfy the constraints and the rung's energy never increases.
"""
from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field as dc_field, fields

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .field import Field, Grid, energy_and_gradient, init_field, total_energy
from .potential import MinimaSet, Potential, PotentialError
from .symmetry import equivariant_project, lattice_subgroup, positivity_project, positivity_tangent

log = logging.getLogger(__name__)

# nodes above which the preconditioner switches from a direct factorization to AMG
_DIRECT_LIMIT = 60_000


class MinimizeError(RuntimeError):
    pass


class BacktrackingError(MinimizeError):
    pass


class DivergenceError(MinimizeError):
    pass


_CAMEL = {
    "stepRule": "step_rule",
    "tolGrad": "tol_grad",
    "maxIters": "max_iters",
    "epsLadder": "eps_ladder",
    "alphaLadder": "alpha_ladder",
    "clampToHull": "clamp_to_hull",
    "equivariantElements": "equivariant_elements",
    "tolEnergy": "tol_energy",
    "refreshEvery": "refresh_every",
    "snapToWells": "snap_to_wells",
}


@dataclass
class MinimizeConfig:
    step_rule: str = "backtracking"
    tau: float = 1.0
    beta: float = 0.5
    c1: float = 1e-4
    tol_grad: float = 1e-6
    # one budget for every rung, or a list with one entry per rung
    max_iters: int | tuple = 5000
    eps_ladder: tuple = (0.1, 0.03, 0.01, 0.003, 0.001)
    alpha_ladder: tuple = ()
    equivariant: bool = False
    # "all" or "lattice" (only elements mapping the grid onto itself)
    equivariant_elements: str = "all"
    positivity: bool = False
    clamp_to_hull: bool = False
    memory: int = 8
    shift: float = 1.0
    refresh_every: int = 50
    # relative energy decrease below which a rung counts as stagnated
    tol_energy: float = 1e-15
    patience: int = 20
    # after the last rung, move nodes within the last eps of a well onto it if that lowers J
    snap_to_wells: bool = True

    def __post_init__(self):
        self.eps_ladder = tuple(float(e) for e in self.eps_ladder)
        self.alpha_ladder = tuple(float(a) for a in self.alpha_ladder)
        for name, ladder in (("epsLadder", self.eps_ladder), ("alphaLadder", self.alpha_ladder)):
            if any(v <= 0.0 for v in ladder):
                raise ValueError(f"{name} entries must be positive")
            if any(b >= a for a, b in zip(ladder, ladder[1:])):
                raise ValueError(f"{name} must be strictly decreasing")
        if any(a >= 2.0 for a in self.alpha_ladder):
            raise ValueError("alphaLadder entries must lie in (0, 2)")
        if not self.tol_grad > 0.0:
            raise ValueError("tolGrad must be positive")
        if self.step_rule not in ("backtracking", "fixed"):
            raise ValueError(f"unknown step rule {self.step_rule!r}")
        if not 0.0 < self.beta < 1.0 or not 0.0 < self.c1 < 1.0:
            raise ValueError("backtracking needs beta, c1 in (0, 1)")
        if not isinstance(self.max_iters, int):
            self.max_iters = tuple(int(m) for m in self.max_iters)
        if min(np.atleast_1d(self.max_iters)) < 0:
            raise ValueError("maxIters must be nonnegative")
        if self.equivariant_elements not in ("all", "lattice"):
            raise ValueError("equivariantElements must be 'all' or 'lattice'")

    @classmethod
    def from_dict(cls, data: dict) -> "MinimizeConfig":
        known = {f.name for f in fields(cls)}
        kw = {}
        for key, val in data.items():
            if key == "constraints":
                for ck, cv in val.items():
                    kw[_CAMEL.get(ck, ck)] = cv
                continue
            name = _CAMEL.get(key, key)
            if name not in known:
                raise ValueError(f"unknown minimizer option {key!r}")
            kw[name] = val
        return cls(**kw)

    def to_dict(self) -> dict:
        back = {v: k for k, v in _CAMEL.items()}
        return {back.get(k, k): (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self).items()}

    def replace(self, **kw) -> "MinimizeConfig":
        d = asdict(self)
        d.update(kw)
        return MinimizeConfig(**d)


@dataclass
class MinimizeResult:
    field: Field
    energy_history: list
    rung_of_iterate: list
    ladder_record: list
    converged: bool
    reason: str
    energy: dict
    potential: dict = dc_field(default_factory=dict)
    snap: dict | None = None

    def summary(self) -> dict:
        return {
            "converged": self.converged,
            "reason": self.reason,
            "energy": self.energy,
            "ladder": self.ladder_record,
            "iterations": len(self.energy_history) - len(self.ladder_record),
            "potential": self.potential,
            "snap": self.snap,
        }


# -- preconditioner --------------------------------------------------------------
def dirichlet_matrix(grid: Grid) -> sp.csr_matrix:
    """Hessian of the discrete Dirichlet energy over all nodes."""
    N = int(np.prod(grid.shape))
    ids = np.arange(N).reshape(grid.shape)
    scale = grid.cell_volume / grid.h**2
    rows, cols, vals = [], [], []
    for d, w in enumerate(grid.edge_weights):
        lo = [slice(None)] * grid.n
        hi = [slice(None)] * grid.n
        lo[d] = slice(None, -1)
        hi[d] = slice(1, None)
        i, j, ww = ids[tuple(lo)].ravel(), ids[tuple(hi)].ravel(), scale * w.ravel()
        keep = ww > 0
        i, j, ww = i[keep], j[keep], ww[keep]
        rows += [i, j, i, j]
        cols += [i, j, j, i]
        vals += [ww, ww, -ww, -ww]
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N)
    )


class _Preconditioner:
    def __init__(self, K_free, diag):
        A = (K_free + sp.diags(diag)).tocsc()
        if A.shape[0] <= _DIRECT_LIMIT:
            lu = spla.splu(A)
            self._solve = lu.solve
        else:
            import pyamg

            ml = pyamg.smoothed_aggregation_solver(A.tocsr(), symmetry="symmetric")
            M = ml.aspreconditioner(cycle="V")
            self._solve = lambda r: np.column_stack([M.matvec(r[:, c]) for c in range(r.shape[1])])

    def __call__(self, r):
        return self._solve(np.ascontiguousarray(r))


# -- constraints ---------------------------------------------------------------------
class _Constraints:
    def __init__(self, u0: Field, cfg: MinimizeConfig, setup, minima: MinimaSet | None):
        self.cfg = cfg
        self.setup = setup
        self.minima = minima
        self.elements = None
        if (cfg.equivariant or cfg.positivity) and setup is None:
            raise MinimizeError("equivariance/positivity constraints need an EquivariantSetup")
        if cfg.clamp_to_hull and minima is None:
            raise MinimizeError("clampToHull needs the minima set")
        if cfg.equivariant and cfg.equivariant_elements == "lattice":
            self.elements = lattice_subgroup(setup.group)
        self.active = cfg.equivariant or cfg.positivity or cfg.clamp_to_hull

    def reduce(self, values, grid, free, G):
        """Gradient with the components blocked by an active positivity wall removed."""
        if not self.cfg.positivity:
            return G
        full = np.zeros_like(values)
        full[free] = -G
        return -positivity_tangent(values, grid, full, self.setup)[free]

    def __call__(self, u: Field) -> Field:
        if self.cfg.equivariant:
            u = equivariant_project(u, self.setup.group, self.elements)
        if self.cfg.positivity:
            u = positivity_project(u, self.setup)
        if self.cfg.clamp_to_hull:
            free = u.free
            vals = u.values.copy()
            vals[free] = self.minima.project_hull(vals[free])
            u = u.copy(vals)
        return u


# -- one rung ----------------------------------------------------------------------------
def _descend(u: Field, p, cfg: MinimizeConfig, constrain, K_free, history, label):
    grid = u.grid
    hn = grid.cell_volume
    free = u.free
    if constrain.active:
        u = constrain(u)
    vals = u.values

    def evaluate(v):
        e_dir, e_pot, g = energy_and_gradient(v, grid, p)
        E = e_dir + e_pot
        if not np.isfinite(E):
            raise DivergenceError(f"non-finite energy in rung {label}")
        return E, constrain.reduce(v, grid, free, g[free])

    E, G = evaluate(vals)
    history.append(E)
    S, Y = [], []
    precond = None
    since_refresh = 0
    stagnant = 0
    reason = "maxIters"
    it = 0
    budget = cfg.max_iters if isinstance(cfg.max_iters, int) else cfg.max_iters[label]
    for it in range(1, budget + 1):
        gnorm = float(np.abs(G).max()) / hn if G.size else 0.0
        if gnorm <= cfg.tol_grad:
            reason = "tolGrad"
            it -= 1
            break
        if precond is None or since_refresh >= cfg.refresh_every:
            stiff = p.stiffness(vals[free]) if hasattr(p, "stiffness") else 0.0
            precond = _Preconditioner(K_free, hn * (stiff + cfg.shift))
            S, Y = [], []
            since_refresh = 0
        since_refresh += 1
        d = -_two_loop(G, S, Y, precond)
        slope = float(np.sum(G * d))
        if not slope < 0.0:
            S, Y = [], []
            d = -precond(G)
            slope = float(np.sum(G * d))
        t = cfg.tau
        accepted = False
        for _ in range(60):
            trial = vals.copy()
            trial[free] += t * d
            if not np.all(np.isfinite(trial[free])):
                raise DivergenceError(f"non-finite field in rung {label}")
            if constrain.active:
                trial = constrain(u.copy(trial)).values
            step = trial[free] - vals[free]
            E_t, G_t = evaluate(trial)
            if cfg.step_rule == "fixed":
                if E_t > E + 1e-12 * max(1.0, abs(E)):
                    raise BacktrackingError(
                        f"fixed step tau={cfg.tau} raised the energy from {E!r} to {E_t!r} in rung {label}"
                    )
                accepted = True
                break
            if E_t <= E + cfg.c1 * min(float(np.sum(G * step)), 0.0) and E_t <= E:
                accepted = True
                break
            t *= cfg.beta
        if not accepted:
            if S:
                S, Y = [], []
                precond = None
                continue
            reason = "lineSearchStalled"
            break
        s_vec = step
        y_vec = G_t - G
        sy = float(np.sum(s_vec * y_vec))
        if sy > 1e-12 * np.linalg.norm(s_vec) * np.linalg.norm(y_vec):
            S.append(s_vec)
            Y.append(y_vec)
            if len(S) > cfg.memory:
                S.pop(0)
                Y.pop(0)
        decrease = E - E_t
        vals, E, G = trial, E_t, G_t
        history.append(E)
        if it % 100 == 0:
            log.debug("rung %s iter %d energy %.12g grad %.3e step %.3g", label, it, E, gnorm, t)
        if decrease <= cfg.tol_energy * max(1.0, abs(E)):
            stagnant += 1
            if stagnant >= cfg.patience:
                reason = "energyStagnation"
                break
        else:
            stagnant = 0
    gnorm = float(np.abs(G).max()) / hn if G.size else 0.0
    return u.copy(vals), E, it, reason, gnorm


def _two_loop(G, S, Y, precond):
    q = G.copy()
    alphas = []
    for s, y in zip(reversed(S), reversed(Y)):
        rho = 1.0 / float(np.sum(y * s))
        a = rho * float(np.sum(s * q))
        alphas.append((a, rho, s, y))
        q -= a * y
    r = precond(q)
    for a, rho, s, y in reversed(alphas):
        b = rho * float(np.sum(y * r))
        r += (a - b) * s
    return r


def _rung_potentials(p, cfg: MinimizeConfig):
    if getattr(p, "kind", None) == "regularized":
        p = p.base()
    if not p.differentiable:
        raise MinimizeError("the characteristic potential is reached only through alpha continuation")
    if not cfg.eps_ladder:
        return [(None, p)]
    return [(eps, p.regularize(eps)) for eps in cfg.eps_ladder]


def minimize(u0: Field, p, cfg: MinimizeConfig | None = None, setup=None) -> MinimizeResult:
    """Descend the energy over the eps ladder, warm-starting each rung from the last."""
    cfg = cfg or MinimizeConfig()
    if u0.m != p.m:
        raise MinimizeError("field and potential dimensions differ")
    minima = getattr(p, "minima", None)
    constrain = _Constraints(u0, cfg, setup, minima if isinstance(minima, MinimaSet) else None)
    base = p.base() if getattr(p, "kind", None) == "regularized" else p
    rungs = _rung_potentials(p, cfg)
    if not isinstance(cfg.max_iters, int) and len(cfg.max_iters) != len(rungs):
        raise MinimizeError(f"maxIters lists {len(cfg.max_iters)} budgets for {len(rungs)} rungs")
    K = dirichlet_matrix(u0.grid)
    free_idx = np.flatnonzero(u0.free.ravel())
    K_free = K[free_idx][:, free_idx]
    history, owner, record = [], [], []
    u = u0
    reason = "maxIters"
    for r, (eps, pr) in enumerate(rungs):
        start = len(history)
        t0 = time.perf_counter()
        u, E, iters, reason, gnorm = _descend(u, pr, cfg, constrain, K_free, history, r)
        owner += [r] * (len(history) - start)
        log.info(
            "rung %d eps=%s energy=%.10g iters=%d reason=%s grad=%.3e (%.2fs)",
            r, eps, E, iters, reason, gnorm, time.perf_counter() - t0,
        )
        record.append(
            {
                "eps": eps,
                "energy": E,
                "iterations": iters,
                "reason": reason,
                "gradNorm": gnorm,
            }
        )
    snap = None
    if cfg.snap_to_wells and rungs[-1][0] is not None:
        u, snap = snap_to_wells(u, base, rungs[-1][0], constrain)
    final = total_energy(u, base).to_dict()
    return MinimizeResult(
        field=u,
        energy_history=history,
        rung_of_iterate=owner,
        ladder_record=record,
        converged=reason == "tolGrad",
        reason=reason,
        energy=final,
        potential=base.metadata(),
        snap=snap,
    )


def _wells(p) -> np.ndarray:
    minima = getattr(p, "minima", None)
    if isinstance(minima, MinimaSet):
        return minima.points
    return np.zeros((1, p.m))


def snap_to_wells(u: Field, p, radius: float, constrain=None, levels: int = 7):
    """Set free nodes closer than a threshold to a well exactly onto it.

    The regularized rungs leave exponentially small tails where the true potential
    still charges |u - a|^alpha.  Thresholds radius * 10^-j, j < levels, are tried and
    the one giving the lowest unregularized energy is kept, if it beats the input.
    """
    wells = _wells(p)
    dist = np.linalg.norm(u.values[..., None, :] - wells, axis=-1)
    k = dist.argmin(axis=-1)
    d = np.take_along_axis(dist, k[..., None], axis=-1)[..., 0]
    candidates = u.free & (d > 0.0)
    best, best_E = u, total_energy(u, p).total
    record = {"radius": None, "nodes": 0, "energyBefore": best_E, "energyAfter": best_E, "accepted": False}
    for j in range(levels):
        r = radius * 10.0 ** (-j)
        near = candidates & (d < r)
        if not near.any():
            break
        vals = u.values.copy()
        vals[near] = wells[k[near]]
        trial = u.copy(vals)
        if constrain is not None and constrain.active:
            trial = constrain(trial)
        E = total_energy(trial, p).total
        if E < best_E:
            best, best_E = trial, E
            record.update(radius=r, nodes=int(near.sum()), energyAfter=E, accepted=True)
    if record["accepted"]:
        log.info("snapped %d nodes onto wells: energy %.10g -> %.10g", record["nodes"], record["energyBefore"], best_E)
    return best, record


@dataclass
class ContinuationResult:
    rungs: list
    energies: list
    limit_energy: dict
    hull_violation: list

    def summary(self) -> dict:
        return {
            "alphas": [a for a, _ in self.rungs],
            "energies": self.energies,
            "limitEnergy": self.limit_energy,
            "hullViolation": self.hull_violation,
            "ladder": [r.summary() for _, r in self.rungs],
        }


def continuation_alpha(u0: Field, minima, cfg: MinimizeConfig, setup=None) -> ContinuationResult:
    """Minimize with every exponent equal to alpha along ``cfg.alpha_ladder``, warm-starting rungs.

    Reports J^alpha(u^alpha) per rung and the characteristic energy of the final field.
    """
    minima = minima if isinstance(minima, MinimaSet) else MinimaSet(minima)
    if not minima.is_nondegenerate_simplex():
        raise PotentialError("alpha continuation needs a nondegenerate simplex of minima")
    if not cfg.alpha_ladder:
        raise MinimizeError("alphaLadder is empty")
    rungs, energies, hull = [], [], []
    u = u0
    for alpha in cfg.alpha_ladder:
        p = Potential.subquadratic(minima, (alpha,) * minima.N)
        res = minimize(u, p, cfg, setup)
        u = res.field
        rungs.append((alpha, res))
        energies.append(res.energy["total"])
        hull.append(float(minima.hull_distance(u.active_values()).max()))
    limit = total_energy(u, Potential.characteristic(minima)).to_dict()
    return ContinuationResult(rungs, energies, limit, hull)


@dataclass
class SweepResult:
    radii: list
    results: list
    table: list = dc_field(default_factory=list)

    def summary(self) -> dict:
        return {"table": self.table, "runs": [r.summary() for r in self.results]}


def radius_sweep(p, setup, radii, cfg: MinimizeConfig, h: float) -> SweepResult:
    """Independent runs on B_R with the affine competitor as initial and boundary data."""
    radii = [float(r) for r in radii]
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise MinimizeError("radii must be increasing")
    results, table = [], []
    for R in radii:
        grid = Grid(setup.group.n, h, R, R)
        u0 = init_field(grid, "affine", setup)
        res = minimize(u0, p, cfg, setup)
        results.append(res)
        table.append((R, res.energy["total"]))
    return SweepResult(radii, results, table)
