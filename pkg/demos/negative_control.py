"""When the class condition fails, the continuity path leaves the cone.

omega0 = diag(1, 2) with Lambda = rho and a density of mean -1.5 makes the
value on one coordinate subtorus negative.  The solver notices the cone
margin crossing zero and stops with CONE_EXIT; raising the mean density to
0.5 restores positivity and the same solve converges.
"""

import numpy as np

from formeq.cone import class_positivity_subtorus, coordinate_subtori
from formeq.form_algebra import rho_power_bundle
from formeq.solver import continuity_solve, grid_coords, make_problem

X = grid_coords(2, 8)
for fbar in (-1.5, 0.5):
    f = fbar + 0.05 * np.cos(2 * np.pi * X[0])
    p = make_problem(2, 8, np.eye(2), np.diag([1.0, 2.0]), rho_power_bundle(np.eye(2), {1: 1.0}), f)
    vals = {Y: class_positivity_subtorus(p.omega0, p.bundle, p.kappa, Y) for Y in coordinate_subtori(2)}
    print("mean density %.1f, kappa = %.3f" % (fbar, p.kappa))
    for Y, v in vals.items():
        print("  subtorus %s: %.4f" % (Y, v))
    _, trace = continuity_solve(p, with_functional=False)
    print("  status:", trace.status)
    if trace.exit_point:
        print("  left the cone near t = %.4f (q_min %.2e)" % (trace.exit_point["t"], trace.exit_point["q_min"]))
    print()
