"""Acceptance criteria 1-10, one PASS/FAIL line each (see the summary section of the pytest run)."""
import json
import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from subquad.deadcore import hat_c_constant
from subquad.harness import OK, run_experiment

ROOT = Path(__file__).resolve().parents[1]


def _timed(raw):
    t0 = time.perf_counter()
    status, bundle, cfg = run_experiment(raw)
    return status, bundle, cfg, time.perf_counter() - t0


def _config(name):
    return json.loads((ROOT / "configs" / f"{name}.json").read_text())


@pytest.fixture(scope="module")
def sweep():
    return _timed(_config("scaling_sweep"))


def test_criterion_01_connection_1d(criterion):
    status, bundle, cfg, seconds = _timed(_config("connection1d"))
    assert cfg["grid"] == {"n": 1, "h": 1e-3, "L": 5.0} and cfg["potential"]["alpha"] == 1.0
    linf = bundle.checks["linfVsOracle"]["value"]
    fb = bundle.checks["fbGradMean"]["value"]
    ok = linf <= 1e-2 and fb <= 0.05 and seconds <= 60.0
    assert criterion(1, "1D connection", ok, f"Linf={linf:.2e} fbGradMean={fb:.2e} time={seconds:.1f}s")


def test_criterion_02_deadcore_radius(criterion):
    status, bundle, cfg, _ = _timed(_config("deadcore_radial"))
    assert cfg["model"] == {"p": 0.5, "c": 1.0, "delta": 1.0}
    assert cfg["grid"] == {"n": 2, "h": 0.02, "R": 10.0} and cfg["margin"] == 5.0
    entry = bundle.reports["deadcore"]["perMinimum"][0]
    R0 = entry["predictedR0"]
    dev = entry["maxDeviationInPredictedRegion"]
    ok = (math.isclose(R0, 2 * math.sqrt(6), rel_tol=1e-12) and entry["containsPredictedCore"] is True
          and dev <= 1e-6)
    assert criterion(2, "dead core radius", ok,
                     f"R0={R0:.4f} contains={entry['containsPredictedCore']} coreMax={dev:.2e} "
                     f"inradius={entry['coreInradius']:.3f}")


def test_criterion_03_supersolution(criterion):
    status, bundle, cfg, _ = _timed(_config("supersolution_check"))
    rep = bundle.reports["supersolution"]
    coarse, fine = rep["runs"]
    assert coarse["h"] == 0.01 and fine["h"] == 0.005
    ratio = rep["refinementRatio"]
    ok = coarse["violation"] <= 1e-3 and ratio >= 3.0
    assert criterion(3, "supersolution", ok, f"violation={coarse['violation']:.2e} refinementRatio={ratio:.2f}")


def test_criterion_04_alpha_zero_free_boundary(criterion):
    status, bundle, cfg, seconds = _timed(_config("gamma_limit"))
    assert cfg["minimizer"]["alphaLadder"] == [1.0, 0.5, 0.25, 0.1]
    assert cfg["potential"]["minima"] == [-1.0, 1.0]
    lim = bundle.reports["limit"]
    slope2 = lim["slope2Extrapolated"]
    werr = abs(lim["finalWidth"] / math.sqrt(2) - 1.0)
    eerr = abs(lim["finalEnergy"] / (2 * math.sqrt(2)) - 1.0)
    ok = 1.90 <= slope2 <= 2.10 and werr <= 0.05 and eerr <= 0.05 and seconds <= 300.0
    assert criterion(4, "alpha=0 free boundary", ok,
                     f"slope2={slope2:.3f} widthErr={werr:.3f} energyErr={eerr:.3f} time={seconds:.1f}s")


@pytest.mark.slow
def test_criterion_05_containment(sweep, criterion):
    status, bundle, cfg, _ = sweep
    assert cfg["group"] == {"kind": "dihedral", "k": 3} and cfg["grid"]["h"] == 0.05 and 8.0 in cfg["radii"]
    hull = bundle.reports["sweep"]["containment"]["8"]
    assert criterion(5, "containment on B_8", hull <= 1e-3, f"maxHullDistance={hull:.2e}")


@pytest.mark.slow
def test_criterion_06_energy_scaling(sweep, criterion):
    status, bundle, cfg, _ = sweep
    assert min(cfg["radii"]) == 4.0 and max(cfg["radii"]) == 12.0
    slope = bundle.reports["sweep"]["fit"]["slope"]
    assert criterion(6, "energy scaling", 0.85 <= slope <= 1.15, f"slope={slope:.4f} over R={cfg['radii']}")


@pytest.mark.slow
def test_criterion_07_volume_perimeter(sweep, criterion):
    status, bundle, cfg, _ = sweep
    assert cfg["fitRange"] == [4.0, 12.0]
    exps = bundle.reports["sweep"]["phaseExponents"]
    good = [k for k, e in exps.items()
            if e["volume"] is not None and e["perimeter"] is not None
            and e["volume"] >= 1.85 and e["perimeter"] >= 0.85]
    detail = " ".join(f"{k}:vol={e['volume']:.3f},per={e['perimeter']:.3f}" for k, e in exps.items())
    assert criterion(7, "volume/perimeter growth", len(good) >= 2, f"{len(good)} phases; {detail}")


@pytest.mark.slow
def test_criterion_08_equivariance_positivity(criterion):
    status, bundle, cfg, _ = _timed(_config("coordinate_positivity"))
    assert cfg["group"]["kind"] == "coordinate" and cfg["minimizer"]["positivity"]
    h = cfg["grid"]["h"]
    diag = bundle.reports["diagnostics"]
    res, fixed = diag["equivarianceResidual"], diag["positivityDefect"]
    converged = bundle.reports["minimize"]["converged"]
    ok = converged and res <= 10 * h * h and fixed == 0.0
    assert criterion(8, "equivariance + positivity", ok,
                     f"converged={converged} residual={res:.2e} (limit {10 * h * h:.2e}) positivityDefect={fixed}")


def test_criterion_09_hat_c_endpoints(criterion):
    alphas = [0.05, 0.1, 1.0, 1.9, 1.95]
    vals = {a: hat_c_constant(a, 2, 1.0, 1.0, 1.0, 1.0) for a in alphas}
    mid = vals[1.0]
    ok = (all(np.isfinite(v) for v in vals.values()) and vals[0.05] >= mid and vals[1.95] >= mid
          and abs(mid - (8 + math.sqrt(6))) <= 1e-3)
    assert criterion(9, "hat C endpoints", ok, " ".join(f"{a}:{v:.4f}" for a, v in vals.items()))


def test_criterion_10_invariant_suite(criterion):
    done = subprocess.run([sys.executable, "-m", "pytest", "-q", "-m", "invariant", "-p", "no:cacheprovider",
                           str(ROOT / "tests")], capture_output=True, text=True, cwd=ROOT)
    tail = done.stdout.strip().splitlines()[-1] if done.stdout.strip() else done.stderr.strip()[-200:]
    assert criterion(10, "invariant suite", done.returncode == 0, tail)
