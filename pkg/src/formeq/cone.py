"""Cone condition, ray limits and positivity hypotheses.

The cone at A is described by the (n-1,n-1)-form kappa*omega^{n-1}/(n-1)!
minus (Lambda ^ exp omega)^[n-1].  Its dual matrix Q (see
``form_algebra.dual_cone_matrix``) splits as kappa*Q_omega - Q_Lambda, and
for a rank-one direction B = v v^dagger the ray limit of F is the Rayleigh
quotient v^dagger Q_Lambda v / v^dagger Q_omega v.  That gives an exact value
of the supremum over rays; the sampled maximizer in :func:`p_lambda` works
directly from limits of (A + tB)^-1 instead, so the two can be compared.
"""

from dataclasses import dataclass, field
from math import comb

import numpy as np
from scipy import linalg as sla
from scipy import optimize
from scipy.special import ndtri
from scipy.stats import qmc

from .form_algebra import (
    FormComponent,
    SplittingLabel,
    dual_cone_matrix,
    pairing,
    positivity_probe,
    power_form,
    restrict_coeffs,
    wedge_coeffs,
)
from .hermitian_core import compound, hermitize, mp_ray_limit
from .operator import F, OperatorContext, checked_inverse

MARGINAL_BAND = 1e-7


@dataclass
class ConeReport:
    p_value: float
    q_min: float
    passed: bool
    witness_covector: np.ndarray = None
    radius_R: float = None
    p_exact: float = None
    marginal: bool = False
    agree: bool = True
    seed: int = 0

    def as_dict(self):
        w = self.witness_covector
        return {
            "p_value": float(self.p_value),
            "p_exact": None if self.p_exact is None else float(self.p_exact),
            "q_min": float(self.q_min),
            "pass": bool(self.passed),
            "marginal": bool(self.marginal),
            "agree": bool(self.agree),
            "radius_R": None if self.radius_R is None else float(self.radius_R),
            "witness_covector": None if w is None else [[float(z.real), float(z.imag)] for z in w],
            "seed": int(self.seed),
            "p_value_is_lower_bound": True,
        }


@dataclass
class PositivityThresholds:
    m: float
    gamma_min: float
    eps_h1: float
    eps_h2prime: float
    kappa0: float = None


@dataclass
class HypothesisReport:
    passed: bool
    failures: list = field(default_factory=list)
    probes: dict = field(default_factory=dict)
    eps: float = None
    f_min: float = None


def _T(X):
    return np.swapaxes(X, -1, -2)


# ---------------------------------------------------------------------------
# ray limits


def ring_value_from_inverse(M, bundle):
    """sum_k <Lambda^[k], chi^k/k!> with chi built from the (possibly singular) M."""
    W = _T(np.asarray(M, dtype=complex))
    out = np.zeros(W.shape[:-2])
    for k in bundle.degrees():
        out = out + pairing(bundle.coeff(k), compound(W, k)).real
    return out


def rank_one_limits(A, V):
    """lim (A + t v v^dagger)^-1 for each row v of V (shape (m, n))."""
    Ainv = checked_inverse(A)
    V = np.asarray(V, dtype=complex)
    Y = V @ Ainv.T                     # rows: (A^-1 v)^T
    s = np.einsum("mi,mi->m", np.conj(V), Y).real
    return Ainv[None] - Y[:, :, None] * np.conj(Y[:, None, :]) / s[:, None, None]


def ray_values(A, V, bundle):
    """Ray limits F_Lambda(A : v v^dagger) for each row of V."""
    return ring_value_from_inverse(rank_one_limits(A, V), bundle)


def ray_limit(A, B, ctx):
    """lim_{t -> inf} F(A + tB) for PSD B != 0; the volume term drops out."""
    B = np.asarray(B, dtype=complex)
    if np.linalg.norm(B - np.conj(B.T)) > 1e-12 * max(1.0, np.linalg.norm(B)):
        raise ValueError("direction B must be Hermitian")
    M = mp_ray_limit(A, B)
    return float(ring_value_from_inverse(M, ctx.bundle))


# ---------------------------------------------------------------------------
# dual cone matrices


def cone_matrices(A, bundle):
    """(Q_Lambda, Q_omega) for a stack of matrices A.

    Q_omega is the dual of omega^{n-1}/(n-1)! and Q_Lambda the dual of
    sum_k Lambda^[k] ^ omega^{n-1-k}/(n-1-k)!.
    """
    A = np.asarray(A, dtype=complex)
    n = A.shape[-1]
    if n == 1:
        one = np.ones(A.shape, dtype=complex)
        return np.zeros(A.shape, dtype=complex), one
    Qw = dual_cone_matrix(compound(A, n - 1))
    acc = np.zeros(A.shape[:-2] + (n, n), dtype=complex)
    for k in bundle.degrees():
        top = wedge_coeffs(bundle.coeff(k), k, compound(A, n - 1 - k), n - 1 - k, n)
        acc = acc + top
    QL = dual_cone_matrix(acc) if bundle.degrees() else np.zeros_like(Qw)
    return hermitize(QL), hermitize(Qw)


def cone_matrix(A, ctx):
    """Dual matrix of (kappa Omega - Lambda ^ Omega)^[n-1]."""
    QL, Qw = cone_matrices(A, ctx.bundle)
    return ctx.kappa * Qw - QL


def q_min(A, ctx):
    """Smallest eigenvalue of the cone matrix (stack-aware)."""
    return np.linalg.eigvalsh(cone_matrix(A, ctx))[..., 0]


def p_lambda_exact(A, ctx):
    """Supremum of rank-one ray limits as a generalized eigenvalue.

    Returns (value, maximizing direction v with B = v v^dagger).
    """
    A = np.asarray(A, dtype=complex)
    n = A.shape[-1]
    if n == 1:
        return 0.0, np.ones(1, dtype=complex)
    QL, Qw = cone_matrices(A, ctx.bundle)
    w, U = sla.eigh(QL, Qw)
    v = U[:, -1] / np.linalg.norm(U[:, -1])
    return float(w[-1]), v


def sample_directions(n, samples=4096, seed=0):
    """Scrambled Sobol points mapped to uniformly distributed unit vectors in C^n."""
    m = int(np.ceil(np.log2(max(samples, 2))))
    pts = qmc.Sobol(d=2 * n, scramble=True, seed=seed).random_base2(m)[:samples]
    g = ndtri(np.clip(pts, 1e-12, 1 - 1e-12))
    V = g[:, :n] + 1j * g[:, n:]
    return V / np.linalg.norm(V, axis=1, keepdims=True)


def p_lambda(A, ctx, samples=4096, seed=0, refine=8, steps=32):
    """Sampled supremum of ray limits over hyperplanes, with local refinement.

    The returned value is at least every sampled value and is a lower bound
    of the true supremum.  Returns (value, witness direction).
    """
    A = np.asarray(A, dtype=complex)
    n = A.shape[-1]
    if n == 1:
        return 0.0, np.ones(1, dtype=complex)
    V = sample_directions(n, samples, seed)
    vals = ray_values(A, V, ctx.bundle)
    order = np.argsort(vals)[::-1][:refine]
    best_val, best_v = float(vals[order[0]]), V[order[0]]

    def neg(x):
        v = x[:n] + 1j * x[n:]
        nv = np.linalg.norm(v)
        if nv < 1e-12:
            return 0.0
        return -float(ray_values(A, (v / nv)[None], ctx.bundle)[0])

    for j in order:
        x0 = np.concatenate([V[j].real, V[j].imag])
        res = optimize.minimize(neg, x0, method="BFGS", options={"maxiter": steps})
        if -res.fun > best_val:
            v = res.x[:n] + 1j * res.x[n:]
            best_val, best_v = float(-res.fun), v / np.linalg.norm(v)
    return best_val, best_v


# ---------------------------------------------------------------------------
# subsolution tests


def subsolution_check(A, ctx, samples=4096, seed=0, band=MARGINAL_BAND):
    """Cone audit at a single matrix: dual-matrix verdict versus sampled rays."""
    A = np.asarray(A, dtype=complex)
    q = float(q_min(A, ctx))
    p_ex, v_ex = p_lambda_exact(A, ctx)
    p_s, v_s = p_lambda(A, ctx, samples=samples, seed=seed)
    marginal = abs(p_ex - ctx.kappa) <= band
    passed = (q > 0) and not marginal
    agree = marginal or ((q > 0) == (p_s < ctx.kappa))
    witness = None if passed else (v_ex if p_ex >= p_s else v_s)
    return ConeReport(p_s, q, passed, witness, None, p_ex, marginal, agree, seed)


def cone_audit(A_grid, ctx):
    """Gridwise q_min; returns (min value, flat index of the minimizer, field)."""
    q = q_min(A_grid, ctx)
    j = int(np.argmin(q))
    return float(q.reshape(-1)[j]), j, q


def _slerp_unit(u, w, s):
    v = (1 - s) * u + s * w
    return v / np.linalg.norm(v)


def bounded_roots(A, ctx, samples=512, seed=0, t_max=1e14, blowup=1e10):
    """Criterion (2): are roots of F(A + B) = kappa over PSD rank-one B bounded?

    Roots are found by scalar solves on sampled rays.  When some ray has no
    root while a neighbour does, the segment between them is bisected; the
    roots blow up near the transition exactly when the bound fails.
    Returns (bounded, largest root seen).
    """
    from .solver import solve_ray

    A = np.asarray(A, dtype=complex)
    n = A.shape[-1]
    F0 = F(A, ctx)
    V = list(sample_directions(n, samples, seed))
    V.append(p_lambda(A, ctx, samples=max(32, samples // 2), seed=seed)[1])
    V.extend(np.eye(n, dtype=complex))
    roots = []
    for v in V:
        roots.append(solve_ray(A, np.outer(v, np.conj(v)), ctx, t_max=t_max))
    found = [t for t in roots if t is not None]
    t_big = max(found) if found else 0.0
    if F0 <= ctx.kappa:
        # decreasing along every ray when f >= 0: only t = 0 can be a root
        return t_big < blowup, t_big
    missing = [i for i, t in enumerate(roots) if t is None]
    if not missing:
        return t_big < blowup, t_big
    if not found:
        return False, np.inf
    u = V[missing[0]]
    w = V[[i for i, t in enumerate(roots) if t is not None][0]]
    lo, hi = 0.0, 1.0            # lo: no root, hi: root
    t_hi = None
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        v = _slerp_unit(u, w, mid)
        t = solve_ray(A, np.outer(v, np.conj(v)), ctx, t_max=t_max)
        if t is None:
            lo = mid
        else:
            hi, t_hi = mid, t
            if t >= blowup:
                break
    t_big = max(t_big, t_hi or 0.0)
    return t_big < blowup, t_big


def subsolution_radius(A, ctx, samples=512, seed=0):
    """R with |B| <= R for sampled unit rank-one rays, inflated by two."""
    from .solver import solve_ray

    rep = subsolution_check(A, ctx, samples=1024, seed=seed)
    if not rep.passed:
        raise ValueError("A is not a subsolution (q_min = %.3e)" % rep.q_min)
    A = np.asarray(A, dtype=complex)
    n = A.shape[-1]
    V = np.vstack([sample_directions(n, samples, seed), np.eye(n)])
    best = 0.0
    for v in V:
        t = solve_ray(A, np.outer(v, np.conj(v)), ctx)
        if t is not None:
            best = max(best, t)
    return 2.0 * best


# ---------------------------------------------------------------------------
# constants


def gamma_min(ratio, n_p, d, k):
    """The explicit constant gamma_min(ratio, n_p, d, k), evaluated as written."""
    d, k = tuple(d), tuple(k)
    if len(d) != n_p or len(k) != n_p:
        raise ValueError("d and k must have n_p entries")
    if ratio <= 0:
        raise ValueError("ratio must be positive")
    num = min(comb(di, ki - 1) * comb(di, ki) ** (1.0 / ki - 1) for di, ki in zip(d, k))
    for di, ki in zip(d, k):
        num *= comb(di, ki) ** (di / ki)
    den = max(di * comb(di, ki) ** (1.0 / ki) for di, ki in zip(d, k))
    den *= ratio ** sum(di / ki for di, ki in zip(d, k))
    den *= sum(ratio ** (1.0 / ki) for ki in k)
    return num / den


def gamma_min_derived(ratio, n_p, d, k):
    """The bound before its closed-form simplification:

    c0 * min_i ratio^(1 - 1/k_i) / (ratio^(sum d_i/k_i) * sum_i ratio^(-1/k_i)).

    Agrees with gamma_min at ratio = 1, is larger for ratio > 1 and smaller
    for ratio < 1, where gamma_min overstates the lower bound.
    """
    d, k = tuple(d), tuple(k)
    if len(d) != n_p or len(k) != n_p:
        raise ValueError("d and k must have n_p entries")
    if ratio <= 0:
        raise ValueError("ratio must be positive")
    c0 = gamma_min(1.0, n_p, d, k) * n_p
    num = c0 * min(ratio ** (1.0 - 1.0 / ki) for ki in k)
    den = ratio ** sum(di / ki for di, ki in zip(d, k)) * sum(ratio ** (-1.0 / ki) for ki in k)
    return num / den


def _as_splittings(splittings, n, k0):
    if splittings is None:
        if k0 is None:
            raise ValueError("give splittings or k0")
        return [(1, (n,), (k0,))]
    out = []
    for s in splittings:
        if isinstance(s, SplittingLabel):
            out.append((s.n_p, s.dims, s.labels))
        else:
            out.append((s[0], tuple(s[1]), tuple(s[2])))
    return out


def thresholds(ctx, m, omega0, splittings=None, k0=None):
    """Both families of floors for the density f.

    eps_h1 uses m/(4n+2) and gamma_min(2 kappa/m, ...); eps_h2prime uses
    m/(2n+1) and gamma_min(kappa/m, ...).  The minimum is taken over all
    supplied (n_p, d, k) labels.
    """
    if m <= 0:
        raise ValueError("m must be positive")
    rho = ctx.bundle.rho
    n = rho.shape[-1]
    kappa = ctx.kappa
    ratio_vol = np.linalg.det(omega0).real / np.linalg.det(rho).real
    kappa0 = kappa * ratio_vol
    labels = _as_splittings(splittings, n, k0)
    g = min(gamma_min(kappa / m, *lab) for lab in labels)
    e1 = min(min(m / (4 * n + 2) * gamma_min(2 * kappa / m, *lab), kappa * ratio_vol / 2)
             for lab in labels)
    e2 = min(min(m / (2 * n + 1) * gamma_min(kappa / m, *lab), kappa0 / 2) for lab in labels)
    return PositivityThresholds(m, g, e1, e2, kappa0)


# ---------------------------------------------------------------------------
# hypotheses


def _f_range(f):
    f = np.asarray(f, dtype=float)
    return float(f.min()), float(f.mean())


def check_H1(bundle, m, k0, kappa=None, omega0=None, samples=2000, seed=0):
    """k0-uniform positivity of the lower components plus the density floor."""
    n = bundle.n
    if not 1 <= k0 <= n - 1:
        raise ValueError("k0 must lie in 1..n-1")
    rep = HypothesisReport(True)
    for l in bundle.degrees():
        if l < k0 and np.abs(bundle.coeff(l)).max() > 1e-14:
            rep.passed = False
            rep.failures.append("component of degree %d below k0 is nonzero" % l)
    for l in range(1, n):
        c = bundle.coeff(l)
        if l == k0:
            c = c - power_form(bundle.rho, k0, m).coeffs
        res = positivity_probe(FormComponent(n, l, c), samples=samples, seed=seed)
        rep.probes[l] = res
        if not res.passed:
            rep.passed = False
            rep.failures.append("degree %d: Lambda - m rho^k0/k0! not positive" % l)
    f_min, f_mean = _f_range(bundle.f)
    rep.f_min = f_min
    if f_mean < -1e-14:
        rep.passed = False
        rep.failures.append("density has negative integral")
    if kappa is not None and omega0 is not None:
        ctx = OperatorContext(bundle, kappa)
        rep.eps = thresholds(ctx, m, omega0, k0=k0).eps_h1
        if f_min <= -rep.eps:
            rep.passed = False
            rep.failures.append("density floor %.3e below -eps = %.3e" % (f_min, -rep.eps))
    return rep


def check_OUP(bundle, splitting, m, samples=2000, seed=0):
    """Lambda - m * sum_i rho_i^{k_i}/k_i! >= 0 degree by degree."""
    n = bundle.n
    if not splitting.check_rho_orthogonal(bundle.rho):
        raise ValueError("splitting blocks are not rho-orthogonal")
    blocks = splitting.block_forms(bundle.rho)
    rep = HypothesisReport(True)
    for l in range(1, n):
        c = bundle.coeff(l).copy()
        involved = [i for i, (_, k) in enumerate(blocks) if k == l]
        for i in involved:
            c = c - power_form(blocks[i][0], l, m).coeffs
        res = positivity_probe(FormComponent(n, l, c), samples=samples, seed=seed)
        rep.probes[l] = res
        if not res.passed:
            rep.passed = False
            bad = involved
            if res.witness is not None and involved:
                w = res.witness
                bad = [i for i in involved
                       if pairing(power_form(blocks[i][0], l).coeffs, w).real > 1e-12]
            rep.failures.append({"degree": l, "blocks": bad})
    return rep


# ---------------------------------------------------------------------------
# flat-torus class positivity


def class_positivity_subtorus(omega_class, bundle, kappa, subtorus, f_mean=None):
    """[exp alpha].[kappa - Lambda].[Y] for a coordinate subtorus Y of the unit torus."""
    sel = subtorus
    if hasattr(sel, "basis") and getattr(sel, "basis", None) is not None:
        raise NotImplementedError("only coordinate subtori are supported")
    idx = tuple(sel.indices) if hasattr(sel, "indices") else tuple(sel)
    n = bundle.n
    d = len(idx)
    alpha = np.asarray(omega_class, dtype=complex)[np.ix_(idx, idx)]
    val = kappa * np.linalg.det(alpha).real if d else kappa
    for k in bundle.degrees():
        if k > d:
            continue
        ck = restrict_coeffs(bundle.coeff(k), n, k, idx)
        val -= wedge_coeffs(ck, k, compound(alpha, d - k), d - k, d)[0, 0].real
    if d == n:
        f = np.mean(bundle.f) if f_mean is None else f_mean
        val -= float(f) * np.linalg.det(bundle.rho).real
    return float(val)


def coordinate_subtori(n, proper=True):
    from itertools import combinations
    out = []
    for d in range(1, n + (0 if proper else 1)):
        out.extend(combinations(range(n), d))
    return out


# ---------------------------------------------------------------------------
# inequalities used by the estimates


def splitting_sums(A, splitting, rho, b=None):
    """sum_i <rho_i^{k_i}/k_i!, exp chi> for chi from A^-1 or from the hyperplane ker b."""
    A = np.asarray(A, dtype=complex)
    if b is None:
        M = checked_inverse(A)
    else:
        M = rank_one_limits(A, np.asarray(b)[None])[0]
    W = M.T
    total = 0.0
    for rho_i, k in splitting.block_forms(rho):
        total += pairing(power_form(rho_i, k).coeffs, compound(W, k)).real
    return float(total)


def key_lower_bound_sides(A, bundle, b, xi, m, gam):
    """Both sides of the lower bound for <Lambda, xi xi^dagger ^ exp chi_B>.

    chi_B is built from the hyperplane ker b.  The right side is
    m * gam * |<xi, b>|^2 / (det A * b^dagger A^-1 b).
    """
    A = np.asarray(A, dtype=complex)
    n = A.shape[-1]
    b = np.asarray(b, dtype=complex)
    xi = np.asarray(xi, dtype=complex)
    M = rank_one_limits(A, b[None])[0]
    W = M.T
    v = np.outer(xi, np.conj(xi))
    lhs = 0.0
    for k in bundle.degrees():
        x = wedge_coeffs(compound(W, k - 1), k - 1, v, 1, n)
        lhs += pairing(bundle.coeff(k), x).real
    Ainv = np.linalg.inv(A)
    bn = (b @ Ainv.T @ np.conj(b)).real
    rhs = m * gam * abs(b @ xi) ** 2 / (np.linalg.det(A).real * bn)
    return float(lhs), float(rhs)
