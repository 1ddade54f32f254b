"""The cone condition on the diagonal J-equation family.

For Lambda = rho on C^2 and A = diag(a, b), the largest ray limit is
1/min(a, b).  A is a subsolution for kappa exactly when this is below kappa.
We compare the dual-matrix test, the sampled supremum and bounded roots, then
look at the density floor gamma_min.
"""

import numpy as np

from formeq.cone import (
    bounded_roots,
    gamma_min,
    gamma_min_derived,
    p_lambda,
    p_lambda_exact,
    subsolution_check,
)
from formeq.form_algebra import rho_power_bundle
from formeq.operator import OperatorContext

ctx = OperatorContext(rho_power_bundle(np.eye(2), {1: 1.0}), kappa=1.0)

print("   a     b   1/min  P_exact  P_sampled  q_min    bounded  verdict")
for a, b in [(2.0, 3.0), (1.2, 5.0), (1.0, 2.0), (0.8, 3.0), (0.5, 0.6)]:
    A = np.diag([a, b])
    rep = subsolution_check(A, ctx, samples=512)
    ps, _ = p_lambda(A, ctx, samples=512)
    ok, _ = bounded_roots(A, ctx, samples=64)
    verdict = "marginal" if rep.marginal else ("inside" if rep.passed else "outside")
    print("%5.2f %5.2f %7.4f %8.4f %9.4f %8.4f  %-7s  %s" % (
        a, b, 1 / min(a, b), rep.p_exact, ps, rep.q_min, ok, verdict))

# failing matrices come with a witness direction
rep = subsolution_check(np.diag([0.8, 3.0]), ctx, samples=512)
print("\nwitness covector for diag(0.8, 3):", np.round(np.abs(rep.witness_covector), 4))

# the density floor: closed form versus the bound before its final simplification
print("\nkappa/m   gamma_min   unsimplified")
for r in (0.25, 0.5, 1.0, 2.0, 4.0):
    print("%6.2f  %10.4f  %12.4f" % (r, gamma_min(r, 1, (2,), (1,)), gamma_min_derived(r, 1, (2,), (1,))))
print("For kappa/m < 1 the closed form exceeds the true floor; on the cone boundary the gap")
print("(F - kappa) det A equals m^2/kappa, which is the unsimplified value.")
A = np.diag([2.0, 3.0])
P, _ = p_lambda_exact(A, ctx)
print("diag(2, 3), kappa = P = %.3f: gap (F - kappa) det A = %.4f" % (P, (1 / 2 + 1 / 3 - P) * 6))
