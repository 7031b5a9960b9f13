import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from scipy.integrate import quad, solve_ivp
from scipy.optimize import brentq

from subquad.deadcore import (
    DeadCoreError,
    PowerWell,
    detect_deadcore,
    hat_c_constant,
    model_problem_field,
    onset_length,
    predicted_deadcore_radius,
    supersolution_profile,
    torsion_ball,
    verify_supersolution,
)
from subquad.field import Grid, init_field
from subquad.minimizer import MinimizeConfig, minimize
from subquad.potential import MinimaSet

invariant = pytest.mark.invariant
LADDER = MinimizeConfig(tol_grad=1e-6, eps_ladder=(0.1, 0.01, 1e-3, 1e-4, 1e-5))


def first_integral_s0(p, c, X0):
    """s0 reached from X(0) = X0 by X'^2 / 2 = c^2 (X^(p+1) - X0^(p+1)) / (p+1)."""
    q = p + 1.0

    # X = X0 + w^2 removes the inverse square-root singularity at X0
    def integrand(w):
        if w == 0.0:
            return 2.0 / np.sqrt(2.0 * c * c * X0**p)
        gap = X0**q * np.expm1(q * np.log1p(w * w / X0))
        return 2.0 * w / np.sqrt(2.0 * c * c * gap / q)

    return quad(integrand, 0.0, np.sqrt(1.0 - X0), epsabs=0.0, epsrel=1e-12, limit=200)[0]


def test_torsion_examples():
    t = torsion_ball(1.0, 2)
    assert t.psi_max == 0.25
    ang = np.linspace(0, 2 * np.pi, 7)
    assert np.abs(t(np.stack([np.cos(ang), np.sin(ang)], axis=-1))).max() <= 1e-15
    g = Grid(2, 0.1, 1.0)
    psi = t(g.coords)
    lap = (psi[2:, 1:-1] + psi[:-2, 1:-1] + psi[1:-1, 2:] + psi[1:-1, :-2] - 4 * psi[1:-1, 1:-1]) / g.h**2
    assert np.abs(lap + 1.0).max() <= 1e-10
    with pytest.raises(DeadCoreError):
        torsion_ball(0.0, 2)


def test_profile_with_dead_core_onset_at_zero():
    s0 = 2 * np.sqrt(3)
    prof = supersolution_profile(0.5, 1.0, s0)
    assert prof.dead_core_onset == pytest.approx(0.0, abs=1e-14)
    assert np.abs(prof.X - prof.s**4 / 144).max() <= 1e-14
    assert prof.X[-1] == pytest.approx(1.0, abs=1e-8)


def test_profile_with_positive_dead_core():
    prof = supersolution_profile(0.5, 1.0, 5.0)
    sd = 5.0 - 2 * np.sqrt(3)
    assert prof.dead_core_onset == pytest.approx(sd)
    assert np.all(prof.X[prof.s <= sd] == 0.0)


@pytest.mark.parametrize("s0", [0.5, 1.0, 3.0])
def test_profile_without_dead_core(s0):
    prof = supersolution_profile(0.5, 1.0, s0)
    assert prof.X0 > 0.0
    assert prof.X[-1] == pytest.approx(1.0, abs=1e-8)
    assert first_integral_s0(0.5, 1.0, prof.X0) == pytest.approx(s0, rel=1e-8)


def test_profile_matches_direct_shooting():
    # a second route: bisection on X(0) with the equation integrated as is
    def miss(X0):
        rhs = lambda _, y: [y[1], max(y[0], 0.0) ** 0.5]
        return solve_ivp(rhs, (0, 1.5), [X0, 0.0], method="DOP853", rtol=1e-12, atol=1e-14).y[0, -1] - 1.0

    X0 = brentq(miss, 0.0, 1.0, xtol=1e-14)
    assert supersolution_profile(0.5, 1.0, 1.5).X0 == pytest.approx(X0, rel=1e-8)


def test_profile_validation():
    with pytest.raises(DeadCoreError):
        supersolution_profile(1.0, 1.0, 1.0)
    with pytest.raises(DeadCoreError):
        supersolution_profile(0.5, -1.0, 1.0)
    with pytest.raises(DeadCoreError):
        supersolution_profile(0.5, 1.0, 0.0)


def test_predicted_radius_examples():
    assert onset_length(0.5, 1.0) == pytest.approx(2 * np.sqrt(3))
    assert predicted_deadcore_radius(0.5, 1.0, 1.0, 10.0, 2) == pytest.approx(2 * np.sqrt(6))
    assert predicted_deadcore_radius(0.5, 1.0, 1.0, 3.0, 2) == pytest.approx(6 - 2 * np.sqrt(6))
    assert predicted_deadcore_radius(0.5, 1.0, 1.0, 2.0, 2) is None
    radii = [predicted_deadcore_radius(0.5, 1.0, d, 10.0, 2) for d in (1.0, 0.1, 1e-2, 1e-4)]
    assert all(a > b for a, b in zip(radii, radii[1:]))
    assert radii[-1] < 0.1 * radii[0]


def test_supersolution_residual_is_exactly_h2_over_144():
    # u_bar = r^4 / 576 and the 5-point Laplacian of r^4 is 16 r^2 + 4 h^2
    R = np.sqrt(2) * onset_length(0.5, 1.0)
    for h in (0.02, 0.01):
        check = verify_supersolution(0.5, 1.0, R, 2, h)
        assert check.violation == pytest.approx(h * h / 144, rel=1e-4)


def test_supersolution_violation_shrinks_with_h():
    R = np.sqrt(2) * onset_length(0.5, 1.0)
    coarse = verify_supersolution(0.5, 1.0, R, 2, 0.01)
    fine = verify_supersolution(0.5, 1.0, R, 2, 0.005)
    assert coarse.violation <= 1e-3
    assert coarse.violation / fine.violation >= 3.0


def test_supersolution_on_a_dead_core_is_zero_there():
    # s0 > d leaves a dead core of radius sqrt(2) (s0 - d) around the origin
    R = 8.0
    check = verify_supersolution(0.5, 1.0, R, 2, 0.05)
    assert check.violation <= 1e-3


def test_hat_c_examples():
    assert hat_c_constant(1.0, 2, 1, 1, 1, 1) == pytest.approx(8 + np.sqrt(6), abs=1e-12)
    assert hat_c_constant(1.0, 2, 1, 1, 1, 1) == pytest.approx(10.449, abs=1e-3)
    tail_hi = [hat_c_constant(a, 2, 1, 1, 1, 1) for a in (1.9, 1.99, 1.999)]
    tail_lo = [hat_c_constant(a, 2, 1, 1, 1, 1) for a in (0.1, 0.01, 0.001)]
    assert tail_hi[0] < tail_hi[1] < tail_hi[2]
    assert tail_lo[0] < tail_lo[1] < tail_lo[2]
    for bad in (0.0, 2.0):
        with pytest.raises(DeadCoreError):
            hat_c_constant(bad, 2, 1, 1, 1, 1)


def test_power_well_gradient():
    pw = PowerWell.model(0.5, 2.0)
    u = np.array([[-0.7], [0.0], [0.3]])
    g = pw.gradient(u)[:, 0]
    assert g[1] == 0.0
    h = 1e-7
    fd = (pw.value(u + h) - pw.value(u - h)) / (2 * h)
    assert np.abs(fd[[0, 2]] - g[[0, 2]]).max() <= 1e-6
    with pytest.raises(DeadCoreError):
        PowerWell(1.0, 2.0)


def test_constant_ball_core():
    R, h = 1.0, 0.1
    u = init_field(Grid(2, h, R, R), "constant", [1.0, 0.0])
    rep = detect_deadcore(u, MinimaSet([[1.0, 0.0], [-1.0, 0.0]]), 1e-6)
    assert rep.per_minimum[0]["coreInradius"] == pytest.approx(R - h)
    assert rep.per_minimum[0]["coreCellCount"] == int(u.free.sum())
    assert rep.per_minimum[1]["coreCellCount"] == 0


def test_sine_cores_start_at_free_boundary():
    edge = np.pi / (2 * np.sqrt(2))
    g = Grid(1, 1e-3, 3.0)
    u = init_field(g, "custom", lambda x: np.sin(np.sqrt(2) * np.clip(x[..., 0], -edge, edge)))
    rep = detect_deadcore(u, [[-1.0], [1.0]], 1e-12)
    expected = int(np.sum(u.free & (g.axis >= edge)))
    assert rep.per_minimum[1]["coreCellCount"] == expected
    assert rep.per_minimum[0]["coreCellCount"] == int(np.sum(u.free & (g.axis <= -edge)))
    core_x = g.axis[u.free & (np.abs(u.values[:, 0] - 1.0) <= 1e-12)]
    assert core_x.min() == pytest.approx(edge, abs=g.h)


def test_empty_report():
    u = init_field(Grid(1, 0.1, 1.0), "constant", [0.0])
    rep = detect_deadcore(u, [[-1.0], [1.0]], 1e-3)
    assert rep.empty
    with pytest.raises(DeadCoreError):
        detect_deadcore(u, [[-1.0], [1.0]], 0.0)


# -- properties ---------------------------------------------------------------------------
ps = st.floats(0.1, 0.9)
cs = st.floats(0.3, 3.0)


@invariant
@given(ps, cs, st.floats(0.05, 3.0))
def test_profile_invariants(p, c, ratio):
    s0 = ratio * onset_length(p, c)
    prof = supersolution_profile(p, c, s0)
    assert np.all(np.diff(prof.X) >= -1e-14)
    assert abs(prof.X[-1] - 1.0) <= 1e-8
    assert prof.X[0] >= 0.0
    ds = 1e-7 * s0
    assert abs(prof(np.array([ds]))[0] - prof(np.array([0.0]))[0]) / ds <= 1e-6


@invariant
@settings(max_examples=15)
@given(ps, cs)
def test_shooting_meets_closed_form_at_the_onset(p, c):
    d = onset_length(p, c)
    closed = supersolution_profile(p, c, d)
    shot = supersolution_profile(p, c, d * (1.0 - 1e-7))
    assert closed.X0 == 0.0 and shot.X0 > 0.0
    # compare on the normalized variable s / s0
    assert np.abs(closed.X - shot.X).max() <= 1e-6


@invariant
@settings(max_examples=20)
@given(ps, cs, st.floats(0.05, 0.95))
def test_shooting_agrees_with_first_integral(p, c, ratio):
    s0 = ratio * onset_length(p, c)
    prof = supersolution_profile(p, c, s0)
    if prof.X0 < 1e-12:
        return
    assert first_integral_s0(p, c, prof.X0) == pytest.approx(s0, rel=1e-6)


@invariant
@given(ps, cs, st.floats(0.05, 5.0), st.integers(1, 3))
def test_predicted_radius_is_continuous_at_branch_point(p, c, delta, n):
    c_hat = c / delta ** ((1 - p) / 2)
    reach = np.sqrt(n) * onset_length(p, c_hat)
    at = predicted_deadcore_radius(p, c, delta, reach, n)
    below = predicted_deadcore_radius(p, c, delta, reach * (1 - 1e-12), n)
    assert at == pytest.approx(reach, rel=1e-12)
    assert below == pytest.approx(reach, rel=1e-10)


def _reach(delta):
    return np.sqrt(2) * onset_length(0.5, 1.0 / delta ** 0.25)


@invariant
@settings(max_examples=6)
@given(st.floats(4.0, 9.0), st.floats(0.5, 1.5))
def test_model_problem_core_contains_prediction(R, delta):
    h = 0.1
    R = h * round(R / h)
    assume(R >= _reach(delta))
    R0 = predicted_deadcore_radius(0.5, 1.0, delta, R, 2)
    u0, pw = model_problem_field(0.5, 1.0, delta, R, h)
    u = minimize(u0, pw, LADDER).field
    entry = detect_deadcore(u, [[0.0]], 1e-6, R0).per_minimum[0]
    assert entry["containsPredictedCore"]
    assert entry["coreInradius"] >= 0.0


@pytest.mark.xfail(strict=True, reason="second branch 2R - reach predicts a core that grows as R shrinks; "
                   "the converged radial solution at R=4 has a smaller core")
@pytest.mark.parametrize("h", [0.05, 0.025])
def test_model_problem_core_second_branch(h):
    R = 4.0
    assert 0.5 * _reach(1.0) < R < _reach(1.0)
    R0 = predicted_deadcore_radius(0.5, 1.0, 1.0, R, 2)
    u0, pw = model_problem_field(0.5, 1.0, 1.0, R, h)
    u = minimize(u0, pw, LADDER).field
    entry = detect_deadcore(u, [[0.0]], 1e-6, R0).per_minimum[0]
    assert entry["containsPredictedCore"]
