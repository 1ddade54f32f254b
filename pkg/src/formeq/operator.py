"""The pointwise operator F(A) = (Lambda ^ exp omega)^[n] / (exp omega)^[n].

With chi the (1,1)-vector built from A^-1, F(A) = sum_k <Lambda^[k], chi^k/k!>
plus the volume term f det(rho) / det(A).  Every routine accepts a stack of
matrices ``(..., n, n)``; the density ``f`` may be a scalar or broadcast
against the stack.

Formulas are written for a general complex matrix A (the Hermitian case is
the one that matters), so that directional derivatives in non-Hermitian
directions make sense.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .form_algebra import FormBundle, FormComponent, chi_power, pairing, wedge_coeffs
from .hermitian_core import SingularMatrixError, compound, subset_index, subsets


@dataclass
class OperatorContext:
    bundle: FormBundle
    kappa: float

    def __post_init__(self):
        if not np.isfinite(self.kappa) or self.kappa <= 0:
            raise ValueError("kappa must be finite and positive")

    @property
    def n(self):
        return self.bundle.n


def _T(X):
    return np.swapaxes(X, -1, -2)


def checked_inverse(A, tol=None):
    """A^-1 with a singularity check on the smallest singular value."""
    A = np.asarray(A, dtype=complex)
    s = np.linalg.svd(A, compute_uv=False)
    tol = A.shape[-1] * np.finfo(float).eps if tol is None else tol
    bad = s[..., -1] <= tol * np.maximum(s[..., 0], 1e-300)
    if np.any(bad):
        raise SingularMatrixError("matrix is singular to working precision")
    return np.linalg.inv(A)


def _density(bundle, f):
    f = bundle.f if f is None else f
    return np.asarray(f, dtype=float) * np.linalg.det(bundle.rho).real


# ---------------------------------------------------------------------------
# values


def F_k(A, c):
    """<Lambda^[k], chi^k/k!> for the component c."""
    Ainv = checked_inverse(A)
    return pairing(c.coeffs, chi_power(Ainv, c.k)).real


def F_ring_analytic(A, bundle, Ainv=None):
    Ainv = checked_inverse(A) if Ainv is None else Ainv
    W = _T(Ainv)
    out = np.zeros(np.shape(A)[:-2], dtype=complex)
    for k in bundle.degrees():
        out = out + pairing(bundle.coeff(k), compound(W, k))
    return out


def F_analytic(A, ctx, f=None):
    """F as a holomorphic function of the entries of A (complex value)."""
    A = np.asarray(A, dtype=complex)
    Ainv = checked_inverse(A)
    return F_ring_analytic(A, ctx.bundle, Ainv) + _density(ctx.bundle, f) / np.linalg.det(A)


def F(A, ctx, f=None):
    """Sum_{k<n} F_k(A) + f det(rho) / det(A)."""
    return F_analytic(A, ctx, f).real


def F_ring(A, bundle):
    """F without the volume term."""
    return F_ring_analytic(A, bundle).real


def F_by_wedges(A, ctx, f=None):
    """Oracle: top(Lambda ^ exp omega) / top(exp omega) built from wedge products."""
    A = np.asarray(A, dtype=complex)
    n = A.shape[-1]
    num = 0.0
    for k in ctx.bundle.degrees():
        w = wedge_coeffs(ctx.bundle.coeff(k), k, compound(A, n - k), n - k, n)
        num = num + w[..., 0, 0]
    det = np.linalg.det(A)
    return (num / det + _density(ctx.bundle, f) / det).real


# ---------------------------------------------------------------------------
# first variation


@lru_cache(maxsize=None)
def _removal_table(n, k):
    """E[p, I, a] = sign of removing p from I when I minus p is subset a."""
    Sk, idx = subsets(n, k), subset_index(n, k - 1)
    E = np.zeros((n, len(Sk), len(idx)))
    for i, I in enumerate(Sk):
        for pos, p in enumerate(I):
            E[p, i, idx[I[:pos] + I[pos + 1:]]] = (-1) ** pos
    E.setflags(write=False)
    return E


def _d_by_dW(coeff, k, W):
    """S[p, q] = d/dW_pq of <coeff, compound(W, k)>."""
    n = W.shape[-1]
    E = _removal_table(n, k)
    M = compound(W, k - 1)
    left = np.einsum("pIa,IJ->pJa", E, coeff)
    right = np.einsum("...ab,qJb->...qJa", M, E)
    return np.einsum("pJa,...qJa->...pq", left, right)


def grad_F(A, ctx, f=None):
    """G[i, j] = dF/dA_ij, so that dF = sum_ij G_ij dA_ij."""
    A = np.asarray(A, dtype=complex)
    Ainv = checked_inverse(A)
    W = _T(Ainv)
    S = np.zeros(A.shape, dtype=complex)
    for k in ctx.bundle.degrees():
        S = S + _d_by_dW(ctx.bundle.coeff(k), k, W)
    G = -_T(Ainv @ S @ Ainv)
    vol = _density(ctx.bundle, f) / np.linalg.det(A)
    return G - np.asarray(vol)[..., None, None] * W


def grad_F_ring(A, bundle):
    """Gradient of the non-volume part only."""
    A = np.asarray(A, dtype=complex)
    Ainv = checked_inverse(A)
    W = _T(Ainv)
    S = np.zeros(A.shape, dtype=complex)
    for k in bundle.degrees():
        S = S + _d_by_dW(bundle.coeff(k), k, W)
    return -_T(Ainv @ S @ Ainv)


def directional(G, B):
    """sum_ij G_ij B_ij"""
    return np.sum(G * B, axis=(-2, -1))


# ---------------------------------------------------------------------------
# second variation


def _mixed_second(A, ctx, B, C, f=None):
    """d^2/ds dt F(A + sB + tC) at s = t = 0."""
    A = np.asarray(A, dtype=complex)
    n = A.shape[-1]
    Ainv = checked_inverse(A)
    W = _T(Ainv)
    P, Q = Ainv @ B @ Ainv, Ainv @ C @ Ainv
    Ws, Wt = -_T(P), -_T(Q)
    Wst = _T(P @ C @ Ainv + Q @ B @ Ainv)
    total = 0.0
    for k in ctx.bundle.degrees():
        coeff = ctx.bundle.coeff(k)
        if k >= 2:
            x = wedge_coeffs(compound(W, k - 2), k - 2, Ws, 1, n)
            x = wedge_coeffs(x, k - 1, Wt, 1, n)
            total = total + pairing(coeff, x)
        total = total + pairing(coeff, wedge_coeffs(compound(W, k - 1), k - 1, Wst, 1, n))
    dens = _density(ctx.bundle, f) / np.linalg.det(A)
    tB = np.trace(Ainv @ B, axis1=-2, axis2=-1)
    tC = np.trace(Ainv @ C, axis1=-2, axis2=-1)
    tBC = np.trace(Ainv @ B @ Ainv @ C, axis1=-2, axis2=-1)
    return total + dens * (tB * tC + tBC)


def hess_F_quadratic(A, ctx, B, f=None):
    """sum F^{ij,rs} B_ij conj(B_sr), the second derivative along (B, B^dagger)."""
    B = np.asarray(B, dtype=complex)
    return _mixed_second(A, ctx, B, np.conj(_T(B)), f).real


def hess_combined(A, ctx, B, f=None):
    """Hessian form plus the companion term sum_{i,s} G_is (B A^-1 B^dagger)_is."""
    A = np.asarray(A, dtype=complex)
    B = np.asarray(B, dtype=complex)
    Ainv = checked_inverse(A)
    Bd = np.conj(_T(B))
    extra = directional(grad_F(A, ctx, f), B @ Ainv @ Bd)
    return (_mixed_second(A, ctx, B, Bd, f) + extra).real


def theta_form(A, c, B):
    """<Lambda^[k], Theta_k(B, B)> for one component, assembled from zeta and xi.

    zeta has coefficients (A^-1 B A^-1)^T; xi collects what survives of the
    second derivative of A^-1 after the companion term is added.
    """
    A = np.asarray(A, dtype=complex)
    B = np.asarray(B, dtype=complex)
    n, k = A.shape[-1], c.k
    Ainv = checked_inverse(A)
    W = _T(Ainv)
    Cm = Ainv @ B @ Ainv
    zeta = _T(Cm)
    zeta_bar = np.conj(Cm)
    xi = _T(np.conj(_T(Cm)) @ A @ Cm)
    val = pairing(c.coeffs, wedge_coeffs(compound(W, k - 1), k - 1, xi, 1, n))
    if k >= 2:
        x = wedge_coeffs(compound(W, k - 2), k - 2, zeta_bar, 1, n)
        val = val + pairing(c.coeffs, wedge_coeffs(x, k - 1, zeta, 1, n))
    return val.real


def theta_total(A, bundle, B):
    return sum(theta_form(A, bundle.components[k], B) for k in bundle.degrees())


# ---------------------------------------------------------------------------
# finite-difference oracles


def fd_gradient(A, ctx, f=None, h=None):
    """Central differences of the holomorphic extension entry by entry."""
    A = np.asarray(A, dtype=complex)
    n = A.shape[-1]
    h = 1e-5 * (1 + np.linalg.norm(A)) if h is None else h
    G = np.zeros((n, n), dtype=complex)
    for i in range(n):
        for j in range(n):
            E = np.zeros((n, n), dtype=complex)
            E[i, j] = 1.0
            dre = (F_analytic(A + h * E, ctx, f) - F_analytic(A - h * E, ctx, f)) / (2 * h)
            dim = (F_analytic(A + 1j * h * E, ctx, f) - F_analytic(A - 1j * h * E, ctx, f)) / (2 * h)
            # holomorphic in A_ij: both routes estimate the same derivative
            G[i, j] = 0.5 * (dre - 1j * dim)
    return G


def fd_second(A, ctx, B, f=None, h=None):
    """Central second difference of F(A + sB + tB^dagger) in (s, t)."""
    A = np.asarray(A, dtype=complex)
    B = np.asarray(B, dtype=complex)
    Bd = np.conj(B.T)
    h = 1e-4 * (1 + np.linalg.norm(A)) / max(1.0, np.linalg.norm(B)) if h is None else h

    def g(s, t):
        return F_analytic(A + s * B + t * Bd, ctx, f)

    return ((g(h, h) - g(h, -h) - g(-h, h) + g(-h, -h)) / (4 * h * h)).real


def component_bundle(c, rho=None):
    """Bundle holding a single component (handy for F_k style calls)."""
    rho = np.eye(c.n) if rho is None else rho
    return FormBundle(c.n, rho, {c.k: c}, 0.0)


__all__ = [
    "OperatorContext", "FormComponent", "F", "F_k", "F_analytic", "F_ring", "F_by_wedges",
    "grad_F", "grad_F_ring", "hess_F_quadratic", "hess_combined", "theta_form",
    "theta_total", "fd_gradient", "fd_second", "checked_inverse", "directional",
]
