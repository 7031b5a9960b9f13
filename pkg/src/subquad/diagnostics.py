"""Measurements on computed fields: hull containment, density and phase growth curves,
a log-Lipschitz modulus, free-boundary gradients and log-log scaling fits.

Volumes and perimeters count cells (value = mean of the cell's corners), so they carry an
O(h R^(n-1)) error; the perimeter is the discrete face count, not a measure-theoretic one.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .field import Field, cell_average
from .potential import MinimaSet

R_MIN_FIT = 2.0


class DiagnosticsError(ValueError):
    pass


def _minima(minima) -> MinimaSet:
    return minima if isinstance(minima, MinimaSet) else MinimaSet(minima)


def containment_check(u: Field, minima) -> float:
    """Largest distance from an active nodal value to the convex hull of the minima."""
    ms = _minima(minima)
    if not ms.is_nondegenerate_simplex():
        raise DiagnosticsError(f"the hull of {ms.N} minima in R^{ms.m} is not a nondegenerate simplex")
    if u.m != ms.m:
        raise DiagnosticsError("field and minima live in different target dimensions")
    vals = u.active_values()
    return float(ms.hull_distance(vals).max()) if len(vals) else 0.0


def _cells_in_balls(u: Field, center, radii):
    grid = u.grid
    center = np.asarray(center, dtype=float).reshape(grid.n)
    for r in radii:
        grid.check_radius(center, r)
    return np.linalg.norm(grid.cell_centers - center, axis=-1), grid.cell_mask


def density_curve(u: Field, a, lam: float, center, radii) -> list:
    """(r, measure of the cells centred in B_r whose mean value is farther than lam from a)."""
    if not lam > 0.0:
        raise DiagnosticsError("lambda must be positive")
    a = np.asarray(a, dtype=float).reshape(u.m)
    dist, mask = _cells_in_balls(u, center, radii)
    far = mask & (np.linalg.norm(cell_average(u.values, u.grid.n) - a, axis=-1) > lam)
    vol = u.grid.cell_volume
    return [(float(r), float(np.count_nonzero(far & (dist < r))) * vol) for r in radii]


@dataclass
class PhaseCurves:
    tol: float
    volume: dict
    perimeter: dict
    unassigned: list
    ball: list

    def to_dict(self) -> dict:
        return {
            "tol": self.tol,
            "volume": {str(k): v for k, v in self.volume.items()},
            "perimeter": {str(k): v for k, v in self.perimeter.items()},
            "unassigned": self.unassigned,
            "ball": self.ball,
        }


def _phase_labels(u: Field, ms: MinimaSet, tol: float) -> np.ndarray:
    """Index of the nearest minimum within tol for every cell, or -1."""
    dist = ms.distances(cell_average(u.values, u.grid.n))
    nearest = dist.argmin(axis=-1)
    close = np.take_along_axis(dist, nearest[..., None], axis=-1)[..., 0] <= tol
    return np.where(close, nearest, -1)


def phase_volume_perimeter(u: Field, minima, tol: float, center, radii) -> PhaseCurves:
    """Per minimum: volume of its phase in B_R, and the faces between it and other cells
    (both centred in B_R) times h^(n-1).  A cell belongs to the nearest minimum within tol."""
    if not tol > 0.0:
        raise DiagnosticsError("tol must be positive")
    ms = _minima(minima)
    grid = u.grid
    dist, mask = _cells_in_balls(u, center, radii)
    labels = np.where(mask, _phase_labels(u, ms, tol), -2)
    vol, face = grid.cell_volume, grid.h ** (grid.n - 1)
    volume = {k: [] for k in range(ms.N)}
    perimeter = {k: [] for k in range(ms.N)}
    unassigned, ball = [], []
    for r in radii:
        inside = mask & (dist < r)
        lab = np.where(inside, labels, -3)
        ball.append((float(r), float(np.count_nonzero(inside)) * vol))
        unassigned.append((float(r), float(np.count_nonzero(inside & (lab == -1))) * vol))
        for k in range(ms.N):
            phase = lab == k
            count = 0
            for d in range(grid.n):
                lo = [slice(None)] * grid.n
                hi = [slice(None)] * grid.n
                lo[d], hi[d] = slice(None, -1), slice(1, None)
                a, b = phase[tuple(lo)], phase[tuple(hi)]
                both = inside[tuple(lo)] & inside[tuple(hi)]
                count += np.count_nonzero(both & (a != b))
            volume[k].append((float(r), float(np.count_nonzero(phase)) * vol))
            perimeter[k].append((float(r), float(count) * face))
    return PhaseCurves(float(tol), volume, perimeter, unassigned, ball)


@dataclass(frozen=True)
class ModulusStat:
    sup: float
    per_distance: dict

    def to_dict(self) -> dict:
        return {"sup": self.sup, "perDistance": {repr(k): v for k, v in self.per_distance.items()}}


DEFAULT_DISTANCES = (0.05, 0.1, 0.2, 0.25, 0.5)


def log_modulus(u: Field, distances=DEFAULT_DISTANCES) -> ModulusStat:
    """sup |u(x) - u(y)| / (|x - y| ln(1/|x - y|)) over all axis-aligned pairs of active nodes
    at the given physical distances (each a multiple of h in [h, 1/2])."""
    grid = u.grid
    act = grid.active
    per = {}
    for dist in distances:
        k = int(round(dist / grid.h))
        if k < 1 or abs(k * grid.h - dist) > 1e-9 * max(1.0, dist) or dist > 0.5:
            raise DiagnosticsError(f"pair distance {dist} must be a multiple of h={grid.h} in [h, 1/2]")
        best = 0.0
        for d in range(grid.n):
            lo = [slice(None)] * grid.n
            hi = [slice(None)] * grid.n
            lo[d], hi[d] = slice(None, -k), slice(k, None)
            lo, hi = tuple(lo), tuple(hi)
            both = act[lo] & act[hi]
            if both.any():
                jump = np.linalg.norm(u.values[hi] - u.values[lo], axis=-1)[both]
                best = max(best, float(jump.max()))
        per[float(dist)] = float(best / (dist * np.log(1.0 / dist)))
    return ModulusStat(max(per.values(), default=0.0), per)


POSITIVE, ZERO = "positive", "zero"


@dataclass
class FreeBoundaryStats:
    alpha_kind: str
    count: int
    mean: float | None
    max: float | None
    histogram: dict = field(default_factory=dict)

    @property
    def empty(self) -> bool:
        return self.count == 0

    @property
    def expected(self) -> float:
        return 0.0 if self.alpha_kind == POSITIVE else 2.0

    def to_dict(self) -> dict:
        return {
            "alphaKind": self.alpha_kind,
            "expected": self.expected,
            "count": self.count,
            "mean": self.mean,
            "max": self.max,
            "histogram": self.histogram,
        }


def core_mask(u: Field, minima, tol_core: float) -> np.ndarray:
    ms = _minima(minima)
    return u.grid.active & (ms.distances(u.values).min(axis=-1) <= tol_core)


def free_boundary_gradient(u: Field, minima, tol_core: float, alpha_kind: str = POSITIVE, bins: int = 20) -> FreeBoundaryStats:
    """|grad u|^2 at non-core nodes with a core neighbour.

    Along an axis with a core neighbour the difference is taken on the opposite (non-core)
    side; other axes use central differences.
    """
    if alpha_kind not in (POSITIVE, ZERO):
        raise DiagnosticsError(f"alphaKind must be {POSITIVE!r} or {ZERO!r}")
    if not tol_core > 0.0:
        raise DiagnosticsError("tolCore must be positive")
    grid = u.grid
    core = core_mask(u, minima, tol_core)
    act = grid.active
    pad = [(1, 1)] * grid.n
    core_p = np.pad(core, pad)
    act_p = np.pad(act, pad)
    vals_p = np.pad(u.values, pad + [(0, 0)], mode="edge")
    inner = (slice(1, -1),) * grid.n

    def shifted(arr, d, s):
        idx = list(inner)
        idx[d] = slice(1 + s, arr.shape[d] - 1 + s)
        return arr[tuple(idx)]

    edge = np.zeros(grid.shape, dtype=bool)
    sq = np.zeros(grid.shape)
    valid = act & ~core
    for d in range(grid.n):
        core_lo, core_hi = shifted(core_p, d, -1), shifted(core_p, d, 1)
        act_lo, act_hi = shifted(act_p, d, -1), shifted(act_p, d, 1)
        v_lo, v_hi = shifted(vals_p, d, -1), shifted(vals_p, d, 1)
        edge |= core_lo | core_hi
        # outward difference away from the core neighbour
        diff = np.where(
            (core_lo & ~core_hi)[..., None], v_hi - u.values,
            np.where((core_hi & ~core_lo)[..., None], u.values - v_lo, 0.5 * (v_hi - v_lo)),
        ) / grid.h
        usable = np.where(core_lo & ~core_hi, act_hi & ~core_hi, np.where(core_hi & ~core_lo, act_lo & ~core_lo, act_lo & act_hi))
        valid &= usable
        sq += np.sum(diff**2, axis=-1)
    sel = edge & valid
    samples = sq[sel]
    if samples.size == 0:
        return FreeBoundaryStats(alpha_kind, 0, None, None, {})
    counts, edges = np.histogram(samples, bins=bins)
    return FreeBoundaryStats(
        alpha_kind,
        int(samples.size),
        float(samples.mean()),
        float(samples.max()),
        {"counts": counts.tolist(), "edges": edges.tolist()},
    )


def scaling_fit(profile) -> tuple:
    """Least-squares (slope, intercept) of log J against log r; entries with J <= 0 are dropped."""
    data = [(float(r), float(J)) for r, J in profile if r > 0.0 and J > 0.0]
    if len(data) < 3:
        raise DiagnosticsError("a scaling fit needs at least three positive data points")
    r, J = np.log(np.array(data)).T
    A = np.stack([r, np.ones_like(r)], axis=1)
    (slope, intercept), *_ = np.linalg.lstsq(A, J, rcond=None)
    return float(slope), float(intercept)


def fit_exponent(curve, r_min: float = R_MIN_FIT):
    """Growth exponent of a (r, value) curve over r >= r_min, or None without enough data."""
    try:
        return scaling_fit([(r, v) for r, v in curve if r >= r_min])[0]
    except DiagnosticsError:
        return None


@dataclass
class DiagnosticsReport:
    containment_violation: float | None = None
    density_curves: dict = field(default_factory=dict)
    volume_curves: dict = field(default_factory=dict)
    perimeter_curves: dict = field(default_factory=dict)
    log_modulus: ModulusStat | None = None
    fb_grad_stats: FreeBoundaryStats | None = None
    scaling_fit: tuple | None = None
    energy_curve: list = field(default_factory=list)

    def exponents(self, r_min: float = R_MIN_FIT) -> dict:
        return {
            "density": {k: fit_exponent(v, r_min) for k, v in self.density_curves.items()},
            "volume": {k: fit_exponent(v, r_min) for k, v in self.volume_curves.items()},
            "perimeter": {k: fit_exponent(v, r_min) for k, v in self.perimeter_curves.items()},
        }

    def to_dict(self) -> dict:
        fit = None if self.scaling_fit is None else {"slope": self.scaling_fit[0], "intercept": self.scaling_fit[1]}
        return {
            "containmentViolation": self.containment_violation,
            "densityCurves": self.density_curves,
            "volumeCurves": {str(k): v for k, v in self.volume_curves.items()},
            "perimeterCurves": {str(k): v for k, v in self.perimeter_curves.items()},
            "energyCurve": self.energy_curve,
            "logModulus": None if self.log_modulus is None else self.log_modulus.to_dict(),
            "fbGradStats": None if self.fb_grad_stats is None else self.fb_grad_stats.to_dict(),
            "scalingFit": fit,
            "exponents": self.exponents(),
        }

    def curves(self) -> dict:
        """Every curve as ``name -> (header, rows)`` for CSV export."""
        out = {}
        for k, v in self.density_curves.items():
            out[f"density_{k}"] = (("r", "measure"), v)
        for k, v in self.volume_curves.items():
            out[f"volume_{k}"] = (("R", "volume"), v)
        for k, v in self.perimeter_curves.items():
            out[f"perimeter_{k}"] = (("R", "perimeter"), v)
        if self.energy_curve:
            out["energy"] = (("r", "J"), self.energy_curve)
        return out


def write_curve_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) for v in row])
    return path


def diagnose(u: Field, p, minima, center, radii, tol: float = 1e-2, lam=None,
             tol_core: float = 1e-6, alpha_kind: str = POSITIVE, distances=None) -> DiagnosticsReport:
    """Run every measurement that applies to ``u``; unavailable pieces stay empty."""
    from .field import energy_profile

    ms = _minima(minima)
    rep = DiagnosticsReport()
    if ms.is_nondegenerate_simplex() and u.m == ms.m:
        rep.containment_violation = containment_check(u, ms)
    lam = 0.5 * ms.d0 if lam is None else lam
    for k, a in enumerate(ms.points):
        rep.density_curves[f"a{k + 1}"] = density_curve(u, a, lam, center, radii)
    phases = phase_volume_perimeter(u, ms, tol, center, radii)
    rep.volume_curves = {f"a{k + 1}": v for k, v in phases.volume.items()}
    rep.perimeter_curves = {f"a{k + 1}": v for k, v in phases.perimeter.items()}
    if distances is None:
        distances = [d for d in DEFAULT_DISTANCES if d >= u.grid.h and abs(d / u.grid.h - round(d / u.grid.h)) < 1e-9]
    if distances:
        rep.log_modulus = log_modulus(u, distances)
    rep.fb_grad_stats = free_boundary_gradient(u, ms, tol_core, alpha_kind)
    if p is not None:
        rep.energy_curve = energy_profile(u, p, center, radii)
        usable = [(r, J) for r, J in rep.energy_curve if r >= R_MIN_FIT and J > 0.0]
        if len(usable) >= 3:
            rep.scaling_fit = scaling_fit(usable)
    return rep
