"""Deformed Hermitian Yang-Mills front end.

For the phase equation Re(omega + i rho)^n = cot(theta) Im(omega + i rho)^n
with supercritical phase, write omega_hat = omega - cot(theta) rho.  The
equation becomes F(omega_hat) = 1 for the data

    Lambda_theta = sum_{k>=2} sin((k-1) theta)/sin(theta) * (rho/sin theta)^k / k!

whose top degree is carried by the density f = sin((n-1) theta) / sin(theta)^(n+1)
(relative to rho^n/n!).
"""

from dataclasses import dataclass

import numpy as np

from .form_algebra import FormBundle, FormComponent
from .hermitian_core import compound, is_positive_definite
from .operator import F_ring, OperatorContext


class DegeneratePhaseError(ValueError):
    pass


def _cot(theta):
    return np.cos(theta) / np.sin(theta)


def arccot(x):
    """Branch with values in (0, pi)."""
    return np.pi / 2 - np.arctan(x)


def global_phase(omega0, rho, n=None):
    """theta in (0, pi) with cot(theta) = Re det(omega0 + i rho) / Im det(omega0 + i rho)."""
    omega0 = np.asarray(omega0, dtype=complex)
    rho = np.asarray(rho, dtype=complex)
    if n is not None and omega0.shape != (n, n):
        raise ValueError("omega0 must be %d x %d" % (n, n))
    z = np.linalg.det(omega0 + 1j * rho)
    scale = np.linalg.det(rho).real * (1 + np.linalg.norm(omega0)) ** omega0.shape[0]
    if abs(z.imag) <= 1e-14 * scale:
        raise DegeneratePhaseError("imaginary part vanishes; phase undefined")
    # arg of z modulo pi, in (0, pi): the Im sign fixes the branch
    return float(arccot(z.real / z.imag))


def lambda_theta_bundle(rho, theta, n=None):
    rho = np.asarray(rho, dtype=complex)
    n = rho.shape[0] if n is None else n
    if not 0 < theta < np.pi:
        raise ValueError("theta must lie in (0, pi)")
    s = np.sin(theta)
    comps = {}
    for k in range(2, n):
        w = np.sin((k - 1) * theta) / s / s ** k
        comps[k] = FormComponent(n, k, w * compound(rho, k))
    f = np.sin((n - 1) * theta) / s ** (n + 1)
    return FormBundle(n, rho, comps, f)


@dataclass
class DhymInstance:
    n: int
    rho: np.ndarray
    omega0: np.ndarray
    theta: float = None

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=complex)
        self.omega0 = np.asarray(self.omega0, dtype=complex)
        if not is_positive_definite(self.rho):
            raise ValueError("rho must be positive definite")
        if self.theta is None:
            self.theta = global_phase(self.omega0, self.rho, self.n)
        if not 0 < self.theta < np.pi:
            raise ValueError("phase outside (0, pi)")

    @property
    def cot(self):
        return _cot(self.theta)

    @property
    def omega_hat0(self):
        return self.omega0 - self.cot * self.rho

    @property
    def bundle(self):
        return lambda_theta_bundle(self.rho, self.theta, self.n)

    def in_theorem_range(self):
        """theta <= pi/(n-1), the range where the sine coefficients are nonnegative."""
        return self.n <= 2 or self.theta <= np.pi / (self.n - 1) + 1e-15

    def phase_defect(self):
        """|theta - phase of the classes|; zero when theta was derived."""
        return abs(self.theta - global_phase(self.omega0, self.rho))


def reduced_residual(omega_hat, inst):
    """Top coefficient of exp(omega_hat) ^ (1 - Lambda_theta), i.e. det(omega_hat)(1 - F)."""
    omega_hat = np.asarray(omega_hat, dtype=complex)
    b = inst.bundle
    det = np.linalg.det(omega_hat).real
    ring = F_ring(omega_hat, b) if b.degrees() else 0.0
    return det * (1 - ring) - b.f * np.linalg.det(inst.rho).real


def dhym_residuals(omega, inst):
    """(r_direct, r_angle, r_reduced) for a matrix or a stack of matrices.

    r_reduced is NaN where omega - cot(theta) rho is not positive.
    """
    omega = np.asarray(omega, dtype=complex)
    z = np.linalg.det(omega + 1j * inst.rho)
    r_direct = z.real - inst.cot * z.imag
    lam = generalized_eigenvalues(omega, inst.rho)
    r_angle = arccot(lam).sum(axis=-1) - inst.theta
    hat = omega - inst.cot * inst.rho
    r_reduced = reduced_residual(hat, inst)
    pos = np.linalg.eigvalsh(hat)[..., 0] > 0
    r_reduced = np.where(pos, r_reduced, np.nan)
    return r_direct, r_angle, r_reduced


def generalized_eigenvalues(omega, rho):
    """Eigenvalues of omega relative to rho, ascending."""
    w, U = np.linalg.eigh(rho)
    r = (U / np.sqrt(w)) @ U.conj().T
    return np.linalg.eigvalsh(r @ omega @ r)


def angle_consistency(omega, inst):
    """r_direct + R sin(r_angle)/sin(theta), R = |det(omega + i rho)|; zero identically."""
    r_direct, r_angle, _ = dhym_residuals(omega, inst)
    R = np.abs(np.linalg.det(np.asarray(omega, dtype=complex) + 1j * inst.rho))
    return r_direct + R * np.sin(r_angle) / np.sin(inst.theta)


def expansion_defect(omega, inst):
    """Coefficientwise check of (omega + i rho)^n/n! through omega_hat + e^{i theta} rho / sin theta.

    Returns the largest abs difference over all degrees k of the k-th power
    coefficients (minors) of the two sides.
    """
    from .form_algebra import wedge_coeffs

    omega = np.asarray(omega, dtype=complex)
    n = inst.n
    hat = omega - inst.cot * inst.rho
    r = inst.rho / np.sin(inst.theta)
    worst = 0.0
    for k in range(1, n + 1):
        lhs = compound(omega + 1j * inst.rho, k)
        rhs = 0.0
        for j in range(k + 1):
            rhs = rhs + np.exp(1j * (k - j) * inst.theta) * wedge_coeffs(
                compound(hat, j), j, compound(r, k - j), k - j, n)
        worst = max(worst, float(np.abs(lhs - rhs).max()))
    return worst


def h1_predicate(inst, samples=2000, seed=0):
    """Sine coefficients nonnegative and, for n >= 3, check_H1 with k0 = 2."""
    from .cone import check_H1

    n, th = inst.n, inst.theta
    coeffs = [np.sin((k - 1) * th) for k in range(2, n + 1)]
    ok = all(c >= -1e-15 for c in coeffs)
    if n >= 3:
        m = 0.5 / np.sin(th) ** 2
        rep = check_H1(inst.bundle, m, 2, samples=samples, seed=seed)
        ok = ok and rep.passed
    return bool(ok)


def reduced_problem(inst, N):
    """TorusProblem for F(omega_hat0 + i ddbar u) = 1 on the unit torus."""
    from .solver import TorusProblem

    b = inst.bundle
    hat = inst.omega_hat0
    if not is_positive_definite(hat):
        raise ValueError("omega0 - cot(theta) rho is not positive; class not Kahler")
    bundle = FormBundle(inst.n, inst.rho, dict(b.components), 0.0)
    return TorusProblem(inst.n, N, inst.rho, hat, bundle, float(b.f), 1.0)


def solve_dhym(inst, N, u_init=None, **kw):
    """Run continuity_solve on the reduced problem; returns (u, trace, residual fields)."""
    from .solver import continuity_solve, metric_field

    p = reduced_problem(inst, N)
    u, trace = continuity_solve(p, u_init=u_init, **kw)
    omega = metric_field(u, p) + inst.cot * inst.rho
    r_direct, r_angle, r_reduced = dhym_residuals(omega, inst)
    return u, trace, {"direct": r_direct, "angle": r_angle, "reduced": r_reduced}


def reduced_context(inst):
    b = inst.bundle
    return OperatorContext(b, 1.0)


__all__ = [
    "DhymInstance", "DegeneratePhaseError", "global_phase", "lambda_theta_bundle",
    "dhym_residuals", "reduced_residual", "angle_consistency", "expansion_defect",
    "h1_predicate", "reduced_problem", "solve_dhym", "arccot", "generalized_eigenvalues",
]
