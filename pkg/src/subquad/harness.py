"""Command-line runner: validates a JSON experiment config, runs it, writes the artifacts.

Exit status: 0 when every declared check passes, 1 when a check fails, 2 for an invalid
config, 3 when the descent diverges.
"""
from __future__ import annotations

import argparse
import copy
import json
import logging
import math
import platform
import sys
import time
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path

import jsonschema
import numpy as np
import scipy
from threadpoolctl import threadpool_limits

from . import deadcore, diagnostics, oned
from .field import Field, Grid, init_field, total_energy
from .minimizer import DivergenceError, MinimizeConfig, continuation_alpha, minimize, radius_sweep
from .potential import MinimaSet, Potential, PotentialError
from .symmetry import build_group, equivariance_residual, positivity_project, stabilizer_region

log = logging.getLogger(__name__)

OK, CHECKS_FAILED, INVALID, DIVERGED = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


# -- schema ------------------------------------------------------------------------------
_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_ALPHA = {"type": "number"}
_POINTS = {"type": "array", "items": {"anyOf": [_NUM, {"type": "array", "items": _NUM, "minItems": 1}]}, "minItems": 2}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["experiment"],
    "additionalProperties": False,
    "properties": {
        "experiment": {"type": "string"},
        "description": {"type": "string"},
        "potential": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["subquadratic"]},
                "minima": _POINTS,
                "alpha": _ALPHA,
                "exponents": {"type": "array", "items": _ALPHA},
            },
        },
        "model": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"p": _NUM, "c": _POS, "delta": _POS},
        },
        "group": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["dihedral", "coordinate", "matrices"]},
                "k": {"type": "integer", "minimum": 1},
                "n": {"type": "integer", "minimum": 1},
                "elements": {"type": "array"},
            },
        },
        "a1": {"type": "array", "items": _NUM, "minItems": 1},
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"n": {"type": "integer", "minimum": 1, "maximum": 3}, "h": _POS, "L": _POS, "R": _POS},
        },
        "radii": {"type": "array", "items": _POS},
        "fitRange": {"type": "array", "items": _POS, "minItems": 2, "maxItems": 2},
        "minimizer": {"type": "object"},
        "tolCore": _POS,
        "tolPhase": _POS,
        "margin": {"type": "number", "minimum": 0},
        "refine": {"type": "boolean"},
        "checks": {"type": "object", "additionalProperties": _NUM},
        "seed": {"type": "integer"},
        "out": {"type": "string"},
    },
}


@dataclass(frozen=True)
class Experiment:
    name: str
    summary: str
    defaults: dict
    runner: object = field(repr=False)


EXPERIMENTS: dict = {}


def _experiment(name, summary, defaults):
    def wrap(fn):
        EXPERIMENTS[name] = Experiment(name, summary, defaults, fn)
        return fn

    return wrap


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        out[k] = _merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else copy.deepcopy(v)
    return out


def _alphas(cfg):
    pot = cfg.get("potential", {})
    vals = []
    if "alpha" in pot:
        vals.append(pot["alpha"])
    vals += list(pot.get("exponents", []))
    vals += list(cfg.get("minimizer", {}).get("alphaLadder", []))
    return vals


def validate_config(raw: dict) -> dict:
    """Schema and consistency checks; returns the config merged with experiment defaults."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    name = raw.get("experiment")
    if name not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {name!r}; choose from {sorted(EXPERIMENTS)}")
    for a in _alphas(raw):
        if not (isinstance(a, (int, float)) and 0.0 <= a < 2.0):
            raise ConfigError(f"alpha={a} is outside [0, 2); alpha >= 2 has no finite transition width")
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from None
    cfg = _merge(EXPERIMENTS[name].defaults, raw)
    if name == "connection1d" and cfg["potential"].get("alpha", 1.0) == 0.0:
        raise ConfigError("connection1d needs alpha in (0, 2); alpha = 0 is reached by gamma_limit")
    try:
        MinimizeConfig.from_dict(cfg.get("minimizer", {}))
        if "potential" in cfg and "minima" in cfg["potential"]:
            MinimaSet(_as_points(cfg["potential"]["minima"]))
        if "group" in cfg:
            group = build_group(cfg["group"])
            stabilizer_region(group, cfg["a1"])
            if len(cfg["a1"]) != group.n:
                raise ConfigError("a1 and the group act in different dimensions")
        if "model" in cfg and not 0.0 < cfg["model"]["p"] < 1.0:
            raise ConfigError("model.p must lie in (0, 1)")
        grid = cfg.get("grid", {})
        if "h" in grid:
            span = grid.get("L", grid.get("R"))
            if span is not None and abs(span / grid["h"] - round(span / grid["h"])) > 1e-9:
                raise ConfigError("grid extent must be a multiple of h")
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None


# -- result bundle ---------------------------------------------------------------------------
@dataclass
class Bundle:
    reports: dict = field(default_factory=dict)
    fields: dict = field(default_factory=dict)
    curves: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)

    def check(self, name, value, limit, op="<="):
        if value is None:
            passed = False
        elif op == "<=":
            passed = value <= limit
        elif op == ">=":
            passed = value >= limit
        elif op == "in":
            passed = limit[0] <= value <= limit[1]
        elif op == "==":
            passed = value == limit
        else:
            raise ValueError(f"unknown comparison {op!r}")
        self.checks[name] = {"value": value, "limit": limit, "op": op, "passed": bool(passed)}
        return passed

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks.values())


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        obj = float(obj)
        return obj if math.isfinite(obj) else repr(obj)
    return obj


def _dump(obj, path):
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _versions():
    try:
        own = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        own = "unknown"
    return {"package": own, "python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__}


def emit_outputs(bundle: Bundle, out_dir, config=None, status=None) -> list:
    """manifest.json plus fields/*.csv, curves/*.csv and reports/*.json; returns the paths written."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        written = []
        for name, u in sorted(bundle.fields.items()):
            written.append(u.to_csv(out / "fields" / f"{name}.csv"))
        for name, (header, rows) in sorted(bundle.curves.items()):
            written.append(diagnostics.write_curve_csv(out / "curves" / f"{name}.csv", header, rows))
        for name, rep in sorted(bundle.reports.items()):
            path = out / "reports" / f"{name}.json"
            _dump(rep, path)
            written.append(path)
        manifest = {
            "config": config,
            "versions": _versions(),
            "status": status,
            "checks": bundle.checks,
            "reports": bundle.reports,
            "files": [str(p.relative_to(out)) for p in written],
            "timing": bundle.timing,
        }
        path = out / "manifest.json"
        _dump({k: v for k, v in manifest.items() if v is not None or k == "config"}, path)
    except OSError as exc:
        raise OSError(f"cannot write outputs under {out}: {exc}") from exc
    return [path] + written


# -- helpers ---------------------------------------------------------------------------------
def _as_points(pts):
    return [[float(p)] if not isinstance(p, (list, tuple)) else [float(v) for v in p] for p in pts]


def _potential(cfg, minima=None, alpha=None):
    pot = cfg["potential"]
    pts = _as_points(pot["minima"]) if minima is None else minima
    exps = pot.get("exponents", pot.get("alpha")) if alpha is None else alpha
    return Potential.subquadratic(pts, exps)


def _minimizer(cfg):
    return MinimizeConfig.from_dict(cfg.get("minimizer", {}))


def _limit(cfg, name):
    return cfg["checks"][name]


def _field_1d(cfg, minima):
    g = cfg["grid"]
    grid = Grid(1, g["h"], g["L"])
    lo, hi = sorted(m[0] for m in minima)
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    return init_field(grid, "custom", lambda x: mid + half * np.clip(x[..., 0] / (0.4 * g["L"]), -1.0, 1.0))


def _crossings(x, u, lo, hi, tol):
    """Outermost points where u leaves lo + tol and reaches hi - tol, by linear interpolation."""
    def first_up(level):
        k = int(np.argmax(u > level))
        return x[k - 1] + (level - u[k - 1]) / (u[k] - u[k - 1]) * (x[k] - x[k - 1])

    return first_up(lo + tol), first_up(hi - tol)


def _radial_curve(u: Field):
    g = u.grid
    centre = tuple([g.half] * g.n)
    idx = list(centre)
    idx[0] = slice(g.half, None)
    rows = np.column_stack([g.axis[g.half:], u.values[tuple(idx)]])
    return [tuple(r) for r in rows]


# -- experiments -------------------------------------------------------------------------------
_ONE_D = {"potential": {"kind": "subquadratic", "minima": [-1.0, 1.0]}, "grid": {"n": 1, "h": 1e-3, "L": 5.0}}


@_experiment(
    "connection1d",
    "1D minimizer with Dirichlet data at the two wells, compared with the quadrature oracle",
    _merge(_ONE_D, {
        "potential": {"alpha": 1.0},
        "minimizer": {"tolGrad": 1e-6, "maxIters": 5000},
        "tolCore": 1e-4,
        "checks": {"linfVsOracle": 1e-2, "fbGradMean": 0.05, "equipartition": 1e-2, "containment": 1e-6},
    }),
)
def _connection1d(cfg, bundle, rng):
    alpha = cfg["potential"]["alpha"]
    minima = _as_points(cfg["potential"]["minima"])
    p = _potential(cfg)
    res = minimize(_field_1d(cfg, minima), p, _minimizer(cfg))
    u = res.field
    oracle = oned.exact_connection(alpha, tuple(m[0] for m in minima), cfg["grid"]["h"], cfg["grid"]["L"])
    linf = float(np.abs(u.values[:, 0] - oracle(u.grid.axis)).max())
    kind = diagnostics.ZERO if alpha == 0.0 else diagnostics.POSITIVE
    fb = diagnostics.free_boundary_gradient(u, minima, cfg["tolCore"], kind)
    eq = oned.equipartition_residual(u, p)
    hull = diagnostics.containment_check(u, minima)
    bundle.fields["u"] = u
    bundle.curves["oracle"] = (("x", "u"), list(zip(oracle.x.tolist(), oracle.u.tolist())))
    bundle.reports["minimize"] = res.summary()
    bundle.reports["oracle"] = oracle.summary()
    bundle.reports["diagnostics"] = {
        "linfVsOracle": linf,
        "fbGradStats": fb.to_dict(),
        "equipartition": eq.to_dict(),
        "containmentViolation": hull,
        "energyMinusSigma": res.energy["total"] - oracle.sigma,
    }
    bundle.check("linfVsOracle", linf, _limit(cfg, "linfVsOracle"))
    bundle.check("fbGradMean", fb.mean, _limit(cfg, "fbGradMean"))
    bundle.check("equipartition", eq.sup, _limit(cfg, "equipartition"))
    bundle.check("containment", hull, _limit(cfg, "containment"))


@_experiment(
    "deadcore_radial",
    "scalar model Delta v = c^2 v^p on a ball, dead core compared with the predicted radius",
    {
        "model": {"p": 0.5, "c": 1.0, "delta": 1.0},
        "grid": {"n": 2, "h": 0.02, "R": 10.0},
        "minimizer": {"tolGrad": 1e-6, "epsLadder": [0.1, 0.01, 1e-3, 1e-4, 1e-5]},
        "tolCore": 1e-6,
        "margin": 5.0,
        "checks": {},
    },
)
def _deadcore_radial(cfg, bundle, rng):
    m, g = cfg["model"], cfg["grid"]
    u0, pw = deadcore.model_problem_field(m["p"], m["c"], m["delta"], g["R"], g["h"], g["n"])
    res = minimize(u0, pw, _minimizer(cfg))
    R0 = deadcore.predicted_deadcore_radius(m["p"], m["c"], m["delta"], g["R"], g["n"])
    rep = deadcore.detect_deadcore(res.field, [[0.0]], cfg["tolCore"], R0, cfg["margin"] * g["h"])
    bundle.fields["v"] = res.field
    bundle.curves["radial"] = (("r", "v"), _radial_curve(res.field))
    bundle.reports["minimize"] = res.summary()
    bundle.reports["deadcore"] = rep.to_dict()
    entry = rep.per_minimum[0]
    bundle.check("predictedRadiusExists", R0 is not None, True, "==")
    if R0 is not None:
        bundle.check("containsPredictedCore", entry["containsPredictedCore"], True, "==")
        bundle.check("coreValues", entry["maxDeviationInPredictedRegion"], cfg["tolCore"])


_TRIPLE = {
    "potential": {"kind": "subquadratic", "alpha": 1.0},
    "group": {"kind": "dihedral", "k": 3},
    "a1": [1.0, 0.0],
    "minimizer": {"tolGrad": 1e-5, "maxIters": 4000, "equivariant": True, "equivariantElements": "lattice"},
    "tolCore": 1e-6,
    "tolPhase": 1e-6,
}


def _setup(cfg):
    setup = stabilizer_region(build_group(cfg["group"]), cfg["a1"])
    alpha = cfg["potential"].get("exponents", cfg["potential"].get("alpha"))
    return setup, Potential.subquadratic(setup.orbit, alpha)


def _diagnose_2d(cfg, bundle, u, p, setup, radii, prefix=""):
    rep = diagnostics.diagnose(u, p, setup.orbit, np.zeros(u.grid.n), radii, tol=cfg["tolPhase"], tol_core=cfg["tolCore"])
    lo, hi = cfg["fitRange"]
    rep_d = rep.to_dict()
    rep_d["exponents"] = rep.exponents(lo)
    rep_d["fitRange"] = [lo, hi]
    keep = [(r, J) for r, J in rep.energy_curve if lo <= r <= hi]
    rep_d["scalingFit"] = dict(zip(("slope", "intercept"), diagnostics.scaling_fit(keep))) if len(keep) >= 3 else None
    eqres = equivariance_residual(u, setup.group)
    fixed = float(np.abs(positivity_project(u, setup).values - u.values).max())
    rep_d["equivarianceResidual"] = eqres
    rep_d["positivityDefect"] = fixed
    bundle.reports[prefix + "diagnostics"] = rep_d
    for name, (header, rows) in rep.curves().items():
        bundle.curves[prefix + name] = (header, rows)
    return rep, rep_d


def _phase_growth(rep: diagnostics.DiagnosticsReport, lo, hi, vol_min, per_min):
    exps = {}
    count = 0
    for k in rep.volume_curves:
        v = diagnostics.fit_exponent([c for c in rep.volume_curves[k] if lo <= c[0] <= hi], lo)
        q = diagnostics.fit_exponent([c for c in rep.perimeter_curves[k] if lo <= c[0] <= hi], lo)
        exps[k] = {"volume": v, "perimeter": q}
        if v is not None and q is not None and v >= vol_min and q >= per_min:
            count += 1
    return count, exps


@_experiment(
    "triple_junction_2d",
    "equivariant 2D minimizer on a ball with affine boundary data; containment and growth curves",
    _merge(_TRIPLE, {
        "grid": {"n": 2, "h": 0.05, "R": 8.0},
        "fitRange": [4.0, 8.0],
        "checks": {"containment": 1e-3, "equivarianceFactor": 10.0},
    }),
)
def _triple_junction(cfg, bundle, rng):
    setup, p = _setup(cfg)
    g = cfg["grid"]
    grid = Grid(setup.group.n, g["h"], g["R"], g["R"])
    mcfg = _minimizer(cfg)
    res = minimize(init_field(grid, "affine", setup), p, mcfg, setup)
    u = res.field
    radii = cfg.get("radii") or [float(r) for r in range(2, int(g["R"]) + 1)]
    rep, rep_d = _diagnose_2d(cfg, bundle, u, p, setup, radii)
    bundle.fields["u"] = u
    bundle.reports["minimize"] = res.summary()
    if rep.containment_violation is not None:
        bundle.check("containment", rep.containment_violation, _limit(cfg, "containment"))
    if setup.group.lattice_exact:
        bundle.check("equivarianceResidual", rep_d["equivarianceResidual"], _limit(cfg, "equivarianceFactor") * g["h"] ** 2)
    if mcfg.positivity:
        bundle.check("positivityFixedPoint", rep_d["positivityDefect"], 0.0, "==")


@_experiment(
    "scaling_sweep",
    "independent equivariant runs on B_R for a list of radii; fits of J(R) and of phase growth",
    _merge(_TRIPLE, {
        "grid": {"n": 2, "h": 0.05},
        "radii": [4.0, 6.0, 8.0, 10.0, 12.0],
        "fitRange": [4.0, 12.0],
        "checks": {"slopeLow": 0.85, "slopeHigh": 1.15, "volumeExponent": 1.85, "perimeterExponent": 0.85,
                   "phases": 2, "containment": 1e-3},
    }),
)
def _scaling_sweep(cfg, bundle, rng):
    setup, p = _setup(cfg)
    radii = cfg["radii"]
    sweep = radius_sweep(p, setup, radii, _minimizer(cfg), cfg["grid"]["h"])
    fit = diagnostics.scaling_fit(sweep.table)
    hulls = [diagnostics.containment_check(r.field, setup.orbit) for r in sweep.results]
    largest = sweep.results[-1].field
    curve_radii = [float(r) for r in range(2, int(radii[-1]) + 1)]
    rep, rep_d = _diagnose_2d(cfg, bundle, largest, p, setup, curve_radii, prefix="largest_")
    lo, hi = cfg["fitRange"]
    count, exps = _phase_growth(rep, lo, hi, _limit(cfg, "volumeExponent"), _limit(cfg, "perimeterExponent"))
    for R, res in zip(radii, sweep.results):
        bundle.fields[f"u_R{R:g}"] = res.field
    bundle.curves["sweep"] = (("R", "J"), sweep.table)
    bundle.reports["sweep"] = {
        "table": sweep.table,
        "fit": {"slope": fit[0], "intercept": fit[1]},
        "containment": dict(zip((f"{R:g}" for R in radii), hulls)),
        "phaseExponents": exps,
        "runs": [r.summary() for r in sweep.results],
    }
    bundle.check("energySlope", fit[0], (_limit(cfg, "slopeLow"), _limit(cfg, "slopeHigh")), "in")
    bundle.check("phasesWithGrowth", count, _limit(cfg, "phases"), ">=")
    bundle.check("containment", max(hulls), _limit(cfg, "containment"))


def chord_slope_limit(alphas, chord):
    """Linear extrapolation to alpha = 0 from the last two rungs."""
    if len(alphas) < 2:
        return chord[-1]
    a1, a2 = alphas[-2], alphas[-1]
    return chord[-1] + (chord[-1] - chord[-2]) * a2 / (a1 - a2)


@_experiment(
    "gamma_limit",
    "1D alpha continuation towards the characteristic potential; slope, width and energy of the limit",
    _merge(_ONE_D, {
        "minimizer": {"tolGrad": 1e-6, "maxIters": 5000, "alphaLadder": [1.0, 0.5, 0.25, 0.1]},
        "tolCore": 1e-6,
        "checks": {"slope2Low": 1.90, "slope2High": 2.10, "widthRel": 0.05, "energyRel": 0.05},
    }),
)
def _gamma_limit(cfg, bundle, rng):
    minima = _as_points(cfg["potential"]["minima"])
    lo, hi = sorted(m[0] for m in minima)
    gap = hi - lo
    cont = continuation_alpha(_field_1d(cfg, minima), minima, _minimizer(cfg))
    rows = []
    for alpha, res in cont.rungs:
        u = res.field
        x, v = u.grid.axis, u.values[:, 0]
        left, right = _crossings(x, v, lo, hi, cfg["tolCore"])
        width = right - left
        mid = int(np.argmin(np.abs(v - 0.5 * (lo + hi))))
        centre = ((v[mid + 1] - v[mid - 1]) / (2.0 * u.grid.h)) ** 2
        rows.append({
            "alpha": alpha,
            "energy": res.energy["total"],
            "sigmaOracle": oned.energy_constant(alpha, (lo, hi)),
            "width": width,
            "widthOracle": oned.transition_width(alpha, (lo, hi)),
            "chordSlope2": (gap / width) ** 2,
            "centreSlope2": centre,
        })
    alphas = [r["alpha"] for r in rows]
    slope2 = chord_slope_limit(alphas, [r["chordSlope2"] for r in rows])
    sigma0, width0 = oned.energy_constant(0.0, (lo, hi)), oned.exact_connection(0.0, (lo, hi)).width
    final = cont.rungs[-1][1].field
    fb = diagnostics.free_boundary_gradient(final, minima, cfg["tolCore"], diagnostics.ZERO)
    bundle.fields["u"] = final
    bundle.curves["ladder"] = (("alpha", "energy", "width", "chordSlope2"),
                               [(r["alpha"], r["energy"], r["width"], r["chordSlope2"]) for r in rows])
    bundle.reports["continuation"] = cont.summary()
    bundle.reports["limit"] = {
        "rungs": rows,
        "slope2Extrapolated": slope2,
        "finalWidth": rows[-1]["width"],
        "finalEnergy": rows[-1]["energy"],
        "limitEnergyOfFinalField": cont.limit_energy,
        "sigma0": sigma0,
        "width0": width0,
        "fbGradStats": fb.to_dict(),
    }
    bundle.check("slope2", slope2, (_limit(cfg, "slope2Low"), _limit(cfg, "slope2High")), "in")
    bundle.check("widthRelError", abs(rows[-1]["width"] / width0 - 1.0), _limit(cfg, "widthRel"))
    bundle.check("energyRelError", abs(rows[-1]["energy"] / sigma0 - 1.0), _limit(cfg, "energyRel"))


@_experiment(
    "supersolution_check",
    "discrete Laplacian residual of the torsion-based supersolution on a ball, with one refinement",
    {
        "model": {"p": 0.5, "c": 1.0},
        "grid": {"n": 2, "h": 0.01},
        "refine": True,
        "checks": {"violation": 1e-3, "refinementRatio": 3.0},
    },
)
def _supersolution(cfg, bundle, rng):
    m, g = cfg["model"], cfg["grid"]
    R = g.get("R") or math.sqrt(g["n"]) * deadcore.onset_length(m["p"], m["c"])
    hs = [g["h"], g["h"] / 2.0] if cfg["refine"] else [g["h"]]
    checks = [deadcore.verify_supersolution(m["p"], m["c"], R, g["n"], h) for h in hs]
    prof = deadcore.supersolution_profile(m["p"], m["c"], R / math.sqrt(g["n"]))
    bundle.curves["profile"] = (("s", "X"), prof.to_rows())
    bundle.reports["supersolution"] = {
        "R": R,
        "deadCoreOnset": prof.dead_core_onset,
        "X0": prof.X0,
        "runs": [{"h": c.h, "violation": c.violation, "nodes": c.nodes} for c in checks],
    }
    bundle.check("violation", checks[0].violation, _limit(cfg, "violation"))
    if len(checks) > 1:
        ratio = checks[0].violation / checks[1].violation if checks[1].violation > 0 else math.inf
        bundle.reports["supersolution"]["refinementRatio"] = ratio
        bundle.check("refinementRatio", ratio, _limit(cfg, "refinementRatio"), ">=")


# -- orchestration -------------------------------------------------------------------------
def run_experiment(raw: dict, out=None, seed=None, threads=None):
    """Validate, run and (with ``out``) emit; returns (status, bundle, merged config)."""
    if seed is not None:
        raw = dict(raw, seed=int(seed))
    cfg = validate_config(raw)
    bundle = Bundle()
    rng = np.random.default_rng(cfg.get("seed", 0))
    t0 = time.perf_counter()
    try:
        with threadpool_limits(limits=threads):
            EXPERIMENTS[cfg["experiment"]].runner(cfg, bundle, rng)
        status = OK if bundle.passed else CHECKS_FAILED
    except (DivergenceError, FloatingPointError) as exc:
        bundle.reports["divergence"] = {"error": str(exc)}
        status = DIVERGED
    bundle.timing["seconds"] = time.perf_counter() - t0
    out = out or cfg.get("out")
    if out:
        emit_outputs(bundle, out, cfg, status)
    return status, bundle, cfg


def _print_checks(bundle):
    for name, c in bundle.checks.items():
        mark = "PASS" if c["passed"] else "FAIL"
        print(f"{mark} {name}: {c['value']!r} {c['op']} {c['limit']!r}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="subquad", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one experiment")
    run.add_argument("config")
    run.add_argument("--out", default=None)
    run.add_argument("--threads", type=int, default=None)
    run.add_argument("--seed", type=int, default=None)
    val = sub.add_parser("validate", help="check a config without running it")
    val.add_argument("config")
    sub.add_parser("list-experiments", help="print the available experiments")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")

    if args.command == "list-experiments":
        for name, exp in sorted(EXPERIMENTS.items()):
            print(f"{name:22s} {exp.summary}")
        return OK
    try:
        raw = load_config(args.config)
        if args.command == "validate":
            cfg = validate_config(raw)
            print(f"ok: {cfg['experiment']}")
            return OK
        status, bundle, cfg = run_experiment(raw, out=args.out, seed=args.seed, threads=args.threads)
    except (ConfigError, PotentialError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return INVALID
    _print_checks(bundle)
    if status == DIVERGED:
        print(f"diverged: {bundle.reports['divergence']['error']}", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
