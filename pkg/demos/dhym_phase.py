"""Deformed Hermitian Yang-Mills through the form equation.

The phase theta comes from det(omega0 + i rho).  For theta below pi/(n-1)
the equation turns into F = kappa for a bundle built from rho, solved for
omega_hat = omega - cot(theta) rho.  We check the three residual forms on a
random matrix and solve on the torus.
"""

import numpy as np

from formeq.dhym import (
    DhymInstance,
    dhym_residuals,
    global_phase,
    h1_predicate,
    lambda_theta_bundle,
    solve_dhym,
)
from formeq.solver import band_limited_field

for c in (0.5, 1.0, 2.0):
    th = global_phase(c * np.eye(2), np.eye(2))
    print("omega0 = %.1f I: theta = %.4f, cot theta = %.4f" % (c, th, 1 / np.tan(th)))

for n in (3, 4):
    th = np.pi / (n - 1)
    print("n=%d at theta = pi/(n-1): density %.2e" % (n, lambda_theta_bundle(np.eye(n), th).f))

rng = np.random.default_rng(0)
X = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
om = X @ X.conj().T / 3 + 2 * np.eye(3)
inst = DhymInstance(3, np.eye(3), 3 * np.eye(3))
print("\nn=3, theta = %.4f, inside the theorem range: %s, H1: %s" % (
    inst.theta, inst.in_theorem_range(), h1_predicate(inst)))
print("direct, angle, reduced residuals at a random omega:", np.round(dhym_residuals(om, inst), 6))

inst = DhymInstance(2, np.eye(2), 2 * np.eye(2))
u0 = band_limited_field(2, 8, 1, seed=2, amplitude=0.01)
u, trace, res = solve_dhym(inst, 8, u_init=u0)
print("\ntorus solve from a perturbed start: %s in %d Newton steps" % (trace.status, trace.newton_total))
for k, v in res.items():
    print("  max |%s residual| = %.2e" % (k, np.abs(v).max()))
