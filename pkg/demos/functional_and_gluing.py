"""The energy functional and gluing by a regularized maximum.

The functional is defined by integrating its first variation along a path
of potentials.  We check that the value does not depend on the path, that
the solver output is a local minimizer, and then glue two subsolutions.
"""

import numpy as np

from formeq.cone import cone_audit
from formeq.form_algebra import rho_power_bundle
from formeq.solver import (
    band_limited_field,
    complex_hessian,
    continuity_solve,
    grid_coords,
    make_problem,
    manufactured_problem,
)
from formeq.variational import (
    PotentialPath,
    functional_F,
    glue_subsolutions,
    path_functional,
    regularized_max,
)

jeq = rho_power_bundle(np.eye(2), {1: 1.0})
u_star = band_limited_field(2, 8, 1, seed=3, amplitude=0.004)
p = manufactured_problem(u_star, jeq, np.eye(2), 2 * np.eye(2), 1.0)

v = band_limited_field(2, 8, 1, seed=8, amplitude=0.002)
straight = path_functional(PotentialPath.straight(u_star, 64), p)
bent = path_functional(PotentialPath.through([np.zeros(p.shape), 0.5 * u_star + v, u_star], 32), p)
print("functional along a straight path %.12e, along a bent path %.12e" % (straight, bent))
print("closed form %.12e, shifted by 3: %.12e" % (functional_F(u_star, p), functional_F(u_star + 3, p)))

u, trace = continuity_solve(p, with_functional=False)
F0 = functional_F(u, p)
bumps = [functional_F(u + 1e-2 * band_limited_field(2, 8, 2, seed=j, amplitude=0.1), p) - F0 for j in range(5)]
print("increase under small perturbations of the solution:", ["%.2e" % b for b in bumps])

# regularized max: between max(t) and max(t + eta), exact shift, smooth
t, eta = np.array([0.0, 0.3, -1.0]), np.array([0.5, 0.5, 0.2])
print("\nregmax(%s) = %.6f, shifted by 2: %.6f" % (t, regularized_max(t, eta), regularized_max(t + 2, eta)))

N = 16
q = make_problem(2, N, np.eye(2), 20 * np.eye(2), jeq, 0.0)
c = np.cos(2 * np.pi * grid_coords(2, N)[0])
phi = band_limited_field(2, N, 1, seed=4, amplitude=0.05)
u1, u2 = phi + 0.5 * c, phi - 0.5 * c
m1, m2 = c > -0.5, c < 0.5
ctx = q.context()
q_in = min(cone_audit(q.omega0 + complex_hessian(w, 2), ctx)[2][m].min() for w, m in ((u1, m1), (u2, m2)))
g, H = glue_subsolutions([u1, u2], [m1, m2], 0.1, q)
print("glued potential: cone margin %.4f, inputs had %.4f on their patches" % (cone_audit(q.omega0 + H, ctx)[0], q_in))
