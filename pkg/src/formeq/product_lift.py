"""Product lift: data on C^d x C^d built from factor data.

Indices 0..d-1 are the first factor (x), d..2d-1 the second (y).  The
lifted bundle is Lambda_hat pulled back from x plus rho_hat/d pulled back
from y, solved against kappa = 2.
"""

from dataclasses import dataclass, replace

import numpy as np

from .cone import check_OUP, p_lambda_exact, rank_one_limits, ring_value_from_inverse, subsolution_check
from .form_algebra import FormBundle, FormComponent, SplittingLabel, embed_coeffs, wedge_coeffs
from .hermitian_core import SingularMatrixError, compound, is_positive_definite
from .operator import F_ring, OperatorContext, checked_inverse, grad_F_ring

LIFT_KAPPA = 2.0


@dataclass
class LiftedInstance:
    d: int
    lhat: FormBundle
    rhohat: np.ndarray
    bundle: FormBundle
    splitting: SplittingLabel
    k0: int

    @property
    def n(self):
        return 2 * self.d

    @property
    def factor_y(self):
        """rho_hat/d as a degree-one bundle on the second factor."""
        return FormBundle(self.d, self.rhohat, {1: FormComponent(self.d, 1, self.rhohat / self.d)}, 0.0)

    def context(self):
        return OperatorContext(self.bundle, LIFT_KAPPA)

    def factor_context(self, kappa=1.0):
        return OperatorContext(self.lhat, kappa)

    def assemble(self, H, D, V):
        return np.block([[H, D], [np.conj(D.T), V]])


def lift_bundle(lhat, rhohat, d=None, k0=None):
    """Lifted 2d-dimensional bundle; the top degree and density of lhat are dropped."""
    rhohat = np.asarray(rhohat, dtype=complex)
    d = lhat.n if d is None else d
    if lhat.n != d or rhohat.shape != (d, d):
        raise ValueError("lhat and rhohat must live on C^%d" % d)
    if not 2 <= d <= 3:
        raise ValueError("lift supported for d in {2, 3}")
    n = 2 * d
    xs, ys = tuple(range(d)), tuple(range(d, n))
    comps = {}
    for k in lhat.degrees():
        comps[k] = FormComponent(n, k, embed_coeffs(lhat.coeff(k), d, k, n, xs))
    y1 = embed_coeffs(rhohat / d, d, 1, n, ys)
    comps[1] = comps[1] + FormComponent(n, 1, y1) if 1 in comps else FormComponent(n, 1, y1)
    rho = np.zeros((n, n), dtype=complex)
    rho[:d, :d] = rhohat
    rho[d:, d:] = rhohat
    if k0 is None:
        k0 = lhat.lowest_degree() if lhat.degrees() else 1
    split = SplittingLabel(n, [(xs, k0), (ys, 1)])
    return LiftedInstance(d, lhat, rhohat, FormBundle(n, rho, comps, 0.0), split, k0)


def lifted_m(m_prime, d):
    return min(m_prime, 1.0 / d)


def lifted_oup(inst, m_prime, samples=2000, seed=0):
    return check_OUP(inst.bundle, inst.splitting, lifted_m(m_prime, inst.d), samples, seed)


# ---------------------------------------------------------------------------
# block evaluation


def _blocks(A, d):
    A = np.asarray(A, dtype=complex)
    return A[..., :d, :d], A[..., :d, d:], A[..., d:, d:]


def schur_h(H, D, V):
    """H - D V^-1 D^dagger"""
    try:
        Vinv = checked_inverse(V)
    except SingularMatrixError:
        raise SingularMatrixError("V block is singular") from None
    return H - D @ Vinv @ np.conj(np.swapaxes(D, -1, -2))


def F1(H, inst):
    return F_ring(H, inst.lhat) if inst.lhat.degrees() else np.zeros(np.shape(H)[:-2])


def F2(V, inst):
    """<rho_hat/d, chi_V> = tr(rho_hat V^-1)/d"""
    Vinv = checked_inverse(V)
    return np.trace(inst.rhohat @ Vinv, axis1=-2, axis2=-1).real / inst.d


def two_term_F(A, inst):
    """F on the lifted bundle via the Schur block and the lower-right block of A^-1."""
    d = inst.d
    H, D, V = _blocks(A, d)
    Hs = schur_h(H, D, V)
    val = F1(Hs, inst)
    chi_v = checked_inverse(A)[..., d:, d:]
    return val + np.einsum("...ij,...ji->...", inst.rhohat, chi_v).real / d


def block_lower_bound(inst, H, D, V):
    """(lhs, rhs) = (F(A), F1(H - D V^-1 D^dagger) + F2(V))."""
    A = inst.assemble(H, D, V)
    if not is_positive_definite(A):
        raise ValueError("assembled matrix is not positive definite")
    lhs = float(F_ring(A, inst.bundle))
    rhs = float(F1(schur_h(H, D, V), inst) + F2(V, inst))
    return lhs, rhs


def ray_lower_bound(inst, A, directions):
    """Per direction b on the first factor: (lifted ray limit, factor ray limit + F2(V))."""
    d = inst.d
    b = np.asarray(directions, dtype=complex)
    H, D, V = _blocks(A, d)
    Hs = schur_h(H, D, V)
    lifted = np.concatenate([b, np.zeros_like(b)], axis=1)
    lhs = ring_value_from_inverse(rank_one_limits(A, lifted), inst.bundle)
    rhs = ring_value_from_inverse(rank_one_limits(Hs, b), inst.lhat) + F2(V, inst)
    return lhs, rhs


def p_lower_bound(inst, A):
    """(P on the lifted bundle, P1 of the Schur block + F2(V)) by the exact maximizers."""
    d = inst.d
    H, D, V = _blocks(A, d)
    Hs = schur_h(H, D, V)
    lhs, _ = p_lambda_exact(A, inst.context())
    rhs, _ = p_lambda_exact(Hs, inst.factor_context())
    return float(lhs), float(rhs + F2(V, inst))


def mixed_term_matrix(V, inst):
    """K[l, j] = top(Lambda_y ^ V^{d-2}/(d-2)! ^ e_l e_j^*) - top(Lambda_y ^ V^{d-1}/(d-1)!) V^-1[j, l].

    K is negative semidefinite; it equals det(V) times the gradient of F2.
    """
    d = inst.d
    V = np.asarray(V, dtype=complex)
    ly = inst.rhohat / d
    base = wedge_coeffs(compound(V, d - 2), d - 2, ly, 1, d)
    full = wedge_coeffs(compound(V, d - 1), d - 1, ly, 1, d)[0, 0]
    K = np.zeros((d, d), dtype=complex)
    for l in range(d):
        for j in range(d):
            E = np.zeros((d, d), dtype=complex)
            E[l, j] = 1.0
            K[l, j] = wedge_coeffs(base, d - 1, E, 1, d)[0, 0]
    return K - full * checked_inverse(V).T


def mixed_term_gradient(V, inst):
    """det(V) * grad F2(V) from the operator module, for comparison with mixed_term_matrix."""
    return np.linalg.det(V).real * grad_F_ring(V, inst.factor_y)


# ---------------------------------------------------------------------------
# subsolution transfer


def lifted_subsolution_check(omega_t, rhohat, inst, samples=2048, seed=0):
    """Cone check of blockdiag(omega_t, rho_hat) for the lifted bundle at kappa = 2.

    The factor cone condition for omega_t (kappa = 1) is checked first; a
    factor failure is propagated as a failed report.
    """
    omega_t = np.asarray(omega_t, dtype=complex)
    rhohat = np.asarray(rhohat, dtype=complex)
    factor = subsolution_check(omega_t, inst.factor_context(1.0), samples=samples, seed=seed)
    d = inst.d
    A = np.zeros((2 * d, 2 * d), dtype=complex)
    A[:d, :d] = omega_t
    A[d:, d:] = rhohat
    rep = subsolution_check(A, inst.context(), samples=samples, seed=seed)
    if not factor.passed:
        rep = replace(rep, passed=False)
    rep.factor = factor
    return rep


def example_chain(c, d=3):
    """Both sides of the strict inequality chain for Lambda_hat = rho^2, omega_t = c I, rho = I.

    Returns (2 Omega_0^[2d-1], (Lambda ^ Omega_0)^[2d-1]) as dual cone matrices,
    so the chain holds iff their difference is positive definite.
    """
    from .cone import cone_matrices

    rho = np.eye(d)
    lhat = FormBundle(d, rho, {2: FormComponent(d, 2, compound(rho, 2))}, 0.0)
    inst = lift_bundle(lhat, rho, d, k0=2)
    A = np.eye(2 * d, dtype=complex)
    A[:d, :d] *= c
    QL, Qw = cone_matrices(A, inst.bundle)
    return LIFT_KAPPA * Qw, QL


__all__ = [
    "LiftedInstance", "lift_bundle", "lifted_m", "lifted_oup", "schur_h", "F1", "F2",
    "two_term_F", "block_lower_bound", "ray_lower_bound", "p_lower_bound",
    "mixed_term_matrix", "mixed_term_gradient", "lifted_subsolution_check", "example_chain",
]
