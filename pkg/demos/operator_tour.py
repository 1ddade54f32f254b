"""Forms, minors and the operator F on a single Hermitian matrix.

Builds Lambda = rho + 0.5 rho^2/2! on C^3, evaluates F at a positive matrix
two ways (minor sums and top-degree wedge quotients), then checks the
gradient against finite differences.
"""

import numpy as np

from formeq.form_algebra import power_form, rho_power_bundle, wedge_coeffs
from formeq.hermitian_core import compound, sigma
from formeq.operator import F, F_by_wedges, OperatorContext, fd_gradient, grad_F, theta_total

rng = np.random.default_rng(3)
n = 3
rho = np.eye(n)
X = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
A = X @ X.conj().T / n + np.eye(n)

print("eigenvalues of A:", np.round(np.linalg.eigvalsh(A), 4))
print("sigma_2(A) =", round(sigma(A, 2), 6))

# minors of A^-1 are the k-th compound of the inverse
C2 = compound(np.linalg.inv(A), 2)
print("compound(A^-1, 2) is %dx%d" % C2.shape)

# rho ^ rho = 2 rho^2/2!, so the wedge of two degree-one identities is twice the identity on pairs
w = wedge_coeffs(np.eye(n), 1, np.eye(n), 1, n)
print("rho ^ rho on pairs:", np.round(np.diag(w).real, 3))
print("rho^2/2! on pairs: ", np.round(np.diag(power_form(rho, 2).coeffs).real, 3))

bundle = rho_power_bundle(rho, {1: 1.0, 2: 0.5}, f=0.25)
ctx = OperatorContext(bundle, kappa=1.0)
print("\nF by minors: %.15f" % F(A, ctx))
print("F by wedges: %.15f" % F_by_wedges(A, ctx))

G, Gfd = grad_F(A, ctx), fd_gradient(A, ctx)
print("gradient vs central differences, max rel gap %.2e" % (np.abs(G - Gfd).max() / np.abs(G).max()))

# F is convex along lines: the second-derivative form is nonnegative
B = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
print("Theta(A, B) = %.4e  (never negative)" % theta_total(A, bundle, B))

# and strictly decreasing in A
P = np.outer(X[:, 0], X[:, 0].conj())
print("F(A) - F(A + P) = %.4e > 0" % (F(A, ctx) - F(A + P, ctx)))
