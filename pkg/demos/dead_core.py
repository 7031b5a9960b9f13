"""Dead cores of the scalar model problem Delta v = c^2 v^p on a disc.

With 0 < p < 1 the absorption term is strong enough near v = 0 that the solution
vanishes identically on an interior region.  A comparison function built on the torsion
function of the disc predicts how far from the boundary that region must begin.  The
script checks the comparison function's residual, then solves the boundary value
problem by descent for several radii and prints the measured core next to the
prediction.  The prediction formula's second branch (for discs smaller than the
reach) overshoots the measured core; see the last rows.

    python demos/dead_core.py
"""
import math

from subquad.deadcore import (
    detect_deadcore,
    model_problem_field,
    onset_length,
    predicted_deadcore_radius,
    verify_supersolution,
)
from subquad.minimizer import MinimizeConfig, minimize

P, C, DELTA, N = 0.5, 1.0, 1.0, 2
reach = math.sqrt(N) * onset_length(P, C)
print(f"onset length d = {onset_length(P, C):.4f}, reach sqrt(n) d = {reach:.4f}")

for h in (0.02, 0.01, 0.005):
    chk = verify_supersolution(P, C, reach, N, h)
    print(f"comparison residual at h = {h:<6}: {chk.violation:.3e} over {chk.nodes} nodes")

ladder = MinimizeConfig(tol_grad=1e-6, eps_ladder=(0.1, 0.01, 1e-3, 1e-4, 1e-5))
h = 0.05
print("\n  R     core radius predicted   measured inradius   contained (margin 5h)")
for R in (10.0, 8.0, 6.0, 5.0, 4.5, 4.0):
    R0 = predicted_deadcore_radius(P, C, DELTA, R, N)
    u0, well = model_problem_field(P, C, DELTA, R, h, N)
    v = minimize(u0, well, ladder).field
    entry = detect_deadcore(v, [[0.0]], 1e-6, R0).per_minimum[0]
    predicted = "none" if R0 is None else f"{R - R0:8.3f}"
    print(f"{R:5.1f}   {predicted:>20}   {entry['coreInradius']:17.3f}   {entry['containsPredictedCore']}")
