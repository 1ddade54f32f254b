"""Registry of numerical invariants run by ``formeq verify``.

Each check draws its own instances from a seeded generator and reports the
number of instances and the largest observed error against a tolerance.
"""

import itertools
from dataclasses import dataclass

import numpy as np

from .hermitian_core import compound, mp_ray_limit, perm_sign, subsets, complement


@dataclass
class CheckResult:
    name: str
    count: int
    max_error: float
    tol: float

    @property
    def passed(self):
        return bool(self.max_error <= self.tol)

    def as_dict(self):
        return {"name": self.name, "count": self.count, "max_error": float(self.max_error),
                "tol": self.tol, "pass": self.passed}


REGISTRY = {}


def check(name, tol):
    def deco(fn):
        REGISTRY[name] = (fn, tol)
        return fn
    return deco


def random_pd(rng, n, shift=0.5, batch=None):
    shape = (n, n) if batch is None else (batch, n, n)
    X = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    return X @ np.conj(np.swapaxes(X, -1, -2)) / n + shift * np.eye(n)


def leibniz_det(M):
    """Determinant by the permutation expansion (stack-aware, no LAPACK)."""
    k = M.shape[-1]
    if k == 0:
        return np.ones(M.shape[:-2], dtype=M.dtype)
    out = 0
    for perm in itertools.permutations(range(k)):
        term = perm_sign(perm)
        for i, j in enumerate(perm):
            term = term * M[..., i, j]
        out = out + term
    return out


@check("minor_identity", 1e-10)
def _minor_identity(rng, scale=1):
    count, err = 0, 0.0
    for n in (2, 3, 4, 5):
        A = random_pd(rng, n, batch=25 * scale)
        det = leibniz_det(A)
        Ainv = np.linalg.inv(A)
        for k in range(1, n):
            lhs = compound(Ainv, k)               # rows J, columns I of A^-1
            for a, J in enumerate(subsets(n, k)):
                for b, I in enumerate(subsets(n, k)):
                    Ic, Jc = complement(n, I), complement(n, J)
                    sub = A[:, list(Ic)][:, :, list(Jc)]
                    s = perm_sign(I + Ic) * perm_sign(J + Jc)
                    rhs = s * leibniz_det(sub) / det
                    err = max(err, float(np.abs(lhs[:, a, b] - rhs).max()))
                    count += len(A)
    return count, err


@check("operator_vs_wedges", 1e-9)
def _operator(rng, scale=1):
    from .form_algebra import rho_power_bundle
    from .operator import F, F_by_wedges, OperatorContext

    err, count = 0.0, 0
    for _ in range(20 * scale):
        n = int(rng.integers(2, 5))
        rho = random_pd(rng, n)
        w = {k: float(rng.uniform(0, 1)) for k in range(1, n)}
        ctx = OperatorContext(rho_power_bundle(rho, w, float(rng.uniform(0, 1))), 1.0)
        A = random_pd(rng, n)
        a, b = F(A, ctx), F_by_wedges(A, ctx)
        err = max(err, abs(a - b) / max(1.0, abs(b)))
        count += 1
    return count, err


@check("gradient_vs_fd", 1e-6)
def _grad(rng, scale=1):
    from .form_algebra import rho_power_bundle
    from .operator import OperatorContext, fd_gradient, grad_F

    err = 0.0
    for _ in range(10 * scale):
        n = int(rng.integers(2, 5))
        rho = random_pd(rng, n)
        ctx = OperatorContext(rho_power_bundle(rho, {k: 1.0 for k in range(1, n)}, 0.5), 1.0)
        A = random_pd(rng, n)
        G, Gfd = grad_F(A, ctx), fd_gradient(A, ctx)
        err = max(err, float(np.abs(G - Gfd).max() / max(1e-12, np.abs(Gfd).max())))
    return 10 * scale, err


@check("hessian_vs_fd", 1e-5)
def _hess(rng, scale=1):
    from .form_algebra import rho_power_bundle
    from .operator import OperatorContext, fd_second, hess_F_quadratic

    err = 0.0
    for _ in range(10 * scale):
        n = int(rng.integers(2, 5))
        rho = random_pd(rng, n)
        ctx = OperatorContext(rho_power_bundle(rho, {k: 1.0 for k in range(1, n)}, 0.5), 1.0)
        A = random_pd(rng, n)
        B = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        a, b = hess_F_quadratic(A, ctx, B), fd_second(A, ctx, B)
        err = max(err, abs(a - b) / max(1e-12, abs(b)))
    return 10 * scale, err


@check("theta_nonnegative", 1e-12)
def _theta(rng, scale=1):
    from .form_algebra import rho_power_bundle
    from .operator import theta_total

    worst = 0.0
    for _ in range(50 * scale):
        n = int(rng.integers(2, 5))
        rho = random_pd(rng, n)
        b = rho_power_bundle(rho, {k: float(rng.uniform(0, 1)) for k in range(1, n)})
        A = random_pd(rng, n)
        B = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        worst = max(worst, -float(theta_total(A, b, B)))
    return 50 * scale, max(worst, 0.0)


@check("ray_limit", 1e-4)
def _ray(rng, scale=1):
    err = 0.0
    for _ in range(20 * scale):
        n = int(rng.integers(2, 6))
        r = int(rng.integers(1, n))
        A = random_pd(rng, n)
        X = rng.normal(size=(n, r)) + 1j * rng.normal(size=(n, r))
        V = X @ np.conj(X.T)
        big = np.linalg.inv(A + 1e6 * V)
        err = max(err, float(np.linalg.norm(big - mp_ray_limit(A, V))))
    return 20 * scale, err


@check("cone_criteria_agree", 1e-7)
def _cone(rng, scale=1):
    from .cone import p_lambda, p_lambda_exact
    from .form_algebra import rho_power_bundle
    from .operator import OperatorContext

    err = 0.0
    for _ in range(5 * scale):
        n = int(rng.integers(2, 4))
        rho = random_pd(rng, n)
        ctx = OperatorContext(rho_power_bundle(rho, {k: 1.0 for k in range(1, n)}), 1.0)
        A = random_pd(rng, n)
        pe, _ = p_lambda_exact(A, ctx)
        ps, _ = p_lambda(A, ctx, samples=512, seed=int(rng.integers(1 << 30)))
        err = max(err, abs(pe - ps) / max(1.0, abs(pe)))
    return 5 * scale, err


@check("dhym_identities", 1e-10)
def _dhym(rng, scale=1):
    from .dhym import DhymInstance, angle_consistency, dhym_residuals

    err, count = 0.0, 0
    for _ in range(50 * scale):
        n = int(rng.integers(2, 4))
        rho, om0, om = random_pd(rng, n), random_pd(rng, n, 2.0), random_pd(rng, n, 1.0)
        inst = DhymInstance(n, rho, om0)
        rd, _, rr = dhym_residuals(om, inst)
        s = 1 + abs(np.linalg.det(om + 1j * rho))
        if np.isfinite(rr):
            err = max(err, abs(rd - rr) / s)
        err = max(err, abs(angle_consistency(om, inst)) / s)
        count += 1
    return count, err


@check("regularized_max_properties", 1e-12)
def _regmax(rng, scale=1):
    from .variational import regularized_max

    err = 0.0
    for _ in range(100 * scale):
        l = int(rng.integers(1, 5))
        t = rng.normal(size=l)
        eta = rng.uniform(0.05, 1.0, size=l)
        M = regularized_max(t, eta)
        err = max(err, t.max() - M, M - (t + eta).max())
        a = float(rng.normal() * 3)
        err = max(err, abs(regularized_max(t + a, eta) - M - a))
        if l >= 2:
            t2 = t.copy()
            t2[0] = np.max(t[1:] - eta[1:]) - eta[0] - rng.uniform(0, 1)
            err = max(err, abs(regularized_max(t2, eta) - regularized_max(t2[1:], eta[1:])))
    return 100 * scale, max(err, 0.0)


@check("lifted_two_term", 1e-10)
def _lift(rng, scale=1):
    from .form_algebra import rho_power_bundle
    from .operator import F_ring
    from .product_lift import lift_bundle, two_term_F

    err = 0.0
    for _ in range(20 * scale):
        d = int(rng.integers(2, 4))
        rho = random_pd(rng, d)
        lhat = rho_power_bundle(rho, {k: float(rng.uniform(0, 1)) for k in range(1, d)})
        inst = lift_bundle(lhat, rho, d)
        A = random_pd(rng, 2 * d)
        err = max(err, abs(two_term_F(A, inst) - F_ring(A, inst.bundle)))
    return 20 * scale, err


def run_suite(seed=0, names=None, scale=1):
    out = []
    for name in sorted(REGISTRY) if names is None else names:
        fn, tol = REGISTRY[name]
        rng = np.random.default_rng([seed, sorted(REGISTRY).index(name)])
        count, err = fn(rng, scale)
        out.append(CheckResult(name, int(count), float(err), tol))
    return out
