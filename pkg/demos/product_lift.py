"""Lifting factor data to a product C^d x C^d.

Lambda_hat = rho^2 on C^3 lifts to a bundle on C^6 whose value splits into a
first-factor term and a trace term on the second factor.  A factor solution
omega_t = c I lifts to a subsolution of the doubled problem when c > 3/2.
"""

import numpy as np

from formeq.form_algebra import FormBundle, FormComponent
from formeq.hermitian_core import compound
from formeq.operator import F_ring
from formeq.product_lift import block_lower_bound, example_chain, lift_bundle, lifted_subsolution_check, two_term_F

d = 3
lhat = FormBundle(d, np.eye(d), {2: FormComponent(d, 2, compound(np.eye(d), 2))}, 0.0)
inst = lift_bundle(lhat, np.eye(d), d, k0=2)
print("lifted bundle on C^%d, degrees %s" % (inst.n, inst.bundle.degrees()))

rng = np.random.default_rng(1)
X = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
A = X @ X.conj().T / 6 + np.eye(6)
print("full evaluation %.12f, two-term formula %.12f" % (F_ring(A, inst.bundle), two_term_F(A, inst)))
lhs, rhs = block_lower_bound(inst, A[:3, :3], A[:3, 3:], A[3:, 3:])
print("block lower bound: %.6f >= %.6f" % (lhs, rhs))

print("\n   c   chain min eigenvalue")
for c in (1.3, 1.5, 1.6, np.sqrt(3), 2.5):
    L, R = example_chain(c)
    print("%5.3f  %+.5f" % (c, np.linalg.eigvalsh(L - R).min()))

c = np.sqrt(3.0)   # F(cI) = 3/c^2 = 1 on the factor
rep = lifted_subsolution_check(c * np.eye(d), np.eye(d), inst, samples=1024)
print("\nfactor solution sqrt(3) I lifts to a subsolution: %s (P = %.4f < 2)" % (rep.passed, rep.p_exact))
