"""The global functional, its path integral form, and regularized-max gluing.

Grid potentials enter through A = omega0 + H[phi], H the spectral complex
Hessian, so "i ddbar phi" below always means the form with coefficient
matrix H[phi].  Integrals over the unit torus are grid means.
"""

from dataclasses import dataclass

import numpy as np

from .form_algebra import wedge_coeffs
from .hermitian_core import compound
from .operator import F
from .solver import (
    NonKahlerError,
    _check_kahler,
    complex_hessian,
    hessian_multipliers,
)


# ---------------------------------------------------------------------------
# the functional


def _top_lambda_minus_kappa(E, p, t):
    """top((Lambda_t - kappa) ^ E) for a list E of vector-valued degree components."""
    n = p.n
    bundle = p.path_bundle(t)
    val = -p.kappa * E[n][..., 0, 0]
    for k in bundle.degrees():
        val = val + wedge_coeffs(bundle.coeff(k), k, E[n - k], n - k, n)[..., 0, 0]
    val = val + p.path_f(t) * np.linalg.det(p.rho).real * E[0][..., 0, 0]
    return val.real


def functional_F(phi, p, t=1.0):
    """mean of phi (Lambda - kappa) ^ exp(omega0) ^ sum_c H^c/(c+1)! (top coefficient)."""
    phi = np.asarray(phi, dtype=float)
    n = p.n
    H = complex_hessian(phi, n)
    _check_kahler(p.omega0 + H)
    E = []
    for j in range(n + 1):
        acc = 0.0
        for c in range(j + 1):
            w = wedge_coeffs(compound(p.omega0, j - c), j - c, compound(H, c), c, n)
            acc = acc + w / (c + 1)
        E.append(acc)
    return float(np.mean(phi * _top_lambda_minus_kappa(E, p, t)))


def first_variation(phi, p, t=1.0):
    """Density of the first variation: top((Lambda - kappa) ^ exp omega_phi) = (F - kappa) det A."""
    A = p.omega0 + complex_hessian(phi, p.n)
    _check_kahler(A)
    det = np.linalg.det(A).real
    return (F(A, p.context(t), f=p.path_f(t)) - p.kappa) * det


def directional_derivative(phi, v, p, t=1.0):
    return float(np.mean(np.asarray(v) * first_variation(phi, p, t)))


# ---------------------------------------------------------------------------
# path integral form


@dataclass
class PotentialPath:
    """Piecewise-linear path through grid fields phi_j at parameters t_j, phi(0) = 0."""

    times: np.ndarray
    fields: list

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if len(self.times) != len(self.fields) or len(self.times) < 2:
            raise ValueError("need matching times and fields, at least two nodes")
        if self.times[0] != 0.0 or self.times[-1] != 1.0 or np.any(np.diff(self.times) <= 0):
            raise ValueError("times must increase from 0 to 1")
        if np.abs(self.fields[0]).max() > 0:
            raise ValueError("path must start at phi = 0")

    @classmethod
    def straight(cls, phi, nodes=64):
        ts = np.linspace(0, 1, nodes + 1)
        return cls(ts, [t * np.asarray(phi, dtype=float) for t in ts])

    @classmethod
    def through(cls, points, nodes=64):
        """Polygon through the given fields (first must be zero), nodes per leg."""
        legs = len(points) - 1
        ts, fs = [0.0], [np.asarray(points[0], dtype=float)]
        for i in range(legs):
            a, b = np.asarray(points[i], dtype=float), np.asarray(points[i + 1], dtype=float)
            for s in np.linspace(0, 1, nodes + 1)[1:]:
                ts.append((i + s) / legs)
                fs.append((1 - s) * a + s * b)
        return cls(np.array(ts), fs)

    @property
    def end(self):
        return self.fields[-1]

    def reparametrized(self, g):
        """Same polygon with node parameters t -> g(t) for increasing g with g(0)=0, g(1)=1."""
        return PotentialPath(g(self.times), list(self.fields))


def _integrand(phi, dphi, p, t):
    return float(np.mean(dphi * first_variation(phi, p, t)))


def path_functional(path, p, t=1.0, method="simpson"):
    """int_0^1 int phi_dot (Lambda - kappa) ^ exp(omega_phi) along the path.

    ``simpson`` integrates each linear leg with the midpoint rule pair
    (exact for integrands of degree <= 3 in the leg parameter); ``trapezoid``
    uses only the nodes.
    """
    total = 0.0
    fs = path.fields
    for j in range(len(fs) - 1):
        a, b = fs[j], fs[j + 1]
        d = b - a                      # derivative times leg length in t
        fa = _integrand(a, d, p, t)
        fb = _integrand(b, d, p, t)
        if method == "trapezoid":
            total += 0.5 * (fa + fb)
        elif method == "simpson":
            fm = _integrand(0.5 * (a + b), d, p, t)
            total += (fa + 4 * fm + fb) / 6.0
        else:
            raise ValueError("unknown method %r" % method)
    return total


def path_independence_check(phi, path_a, path_b, p, t=1.0, method="simpson"):
    for path in (path_a, path_b):
        if np.abs(path.end - phi).max() > 1e-12:
            raise ValueError("path does not end at phi")
    return abs(path_functional(path_a, p, t, method) - path_functional(path_b, p, t, method))


# ---------------------------------------------------------------------------
# second variation


def _dz(phi, n):
    """g_a = d phi / dz_a = (d_x - i d_y) phi / 2, spectrally."""
    N = phi.shape[0]
    k = np.fft.fftfreq(N, 1.0 / N)
    if N % 2 == 0:
        k[N // 2] = 0.0
    P = np.fft.fftn(phi)
    out = []
    for a in range(n):
        sx = [1] * (2 * n)
        sy = [1] * (2 * n)
        sx[a] = N
        sy[n + a] = N
        kx = k.reshape(sx)
        ky = k.reshape(sy)
        dx = np.fft.ifftn(2j * np.pi * kx * P).real
        dy = np.fft.ifftn(2j * np.pi * ky * P).real
        out.append(0.5 * (dx - 1j * dy))
    return np.stack(out, axis=-1)


def segment_convexity(phi0, phi1, p, ts=None, t=1.0):
    """d^2/ds^2 of the functional along phi0 + s(phi1 - phi0) at sample s values.

    Evaluated as mean(g^dagger Q(A_s) g) with Q the cone matrix and g = d(phi1 - phi0)/dz.
    Raises if an interior metric leaves the Kahler cone.
    """
    from .cone import cone_matrix

    ts = np.linspace(0, 1, 5) if ts is None else np.asarray(ts)
    n = p.n
    mult = hessian_multipliers(n, p.N)
    psi = np.asarray(phi1, dtype=float) - np.asarray(phi0, dtype=float)
    g = _dz(psi, n)
    H0 = complex_hessian(phi0, n, mult)
    Hd = complex_hessian(psi, n, mult)
    ctx = p.context(t)
    out = []
    for s in ts:
        A = p.omega0 + H0 + s * Hd
        _check_kahler(A)
        Q = cone_matrix(A, ctx)
        val = np.einsum("...i,...ij,...j->...", np.conj(g), Q, g).real
        out.append(float(val.mean()))
    return out


def cone_margin_along_segment(phi0, phi1, p, ts=None, t=1.0):
    from .cone import q_min

    ts = np.linspace(0, 1, 5) if ts is None else np.asarray(ts)
    H0 = complex_hessian(phi0, p.n)
    Hd = complex_hessian(np.asarray(phi1) - np.asarray(phi0), p.n)
    return [float(q_min(p.omega0 + H0 + s * Hd, p.context(t)).min()) for s in ts]


# ---------------------------------------------------------------------------
# regularized maximum


class _Kernel:
    """The bump c exp(-1/(1-s^2)) on (-1, 1) and its distribution function."""

    def __init__(self, nodes=20001):
        self.s = np.linspace(-1.0, 1.0, nodes)
        self.h = self.s[1] - self.s[0]
        self.gx, self.gw = np.polynomial.legendre.leggauss(8)
        raw = self._raw(self.s[:-1], self.s[1:])
        T = np.concatenate([[0.0], np.cumsum(raw)])
        self.c = 1.0 / T[-1]
        T = T * self.c
        self.T = 0.5 * (T + 1.0 - T[::-1])

    @staticmethod
    def bump(s):
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        m = np.abs(s) < 1
        out[m] = np.exp(-1.0 / (1.0 - s[m] ** 2))
        return out

    def _raw(self, a, b):
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        x = mid[..., None] + half[..., None] * self.gx
        return half * (self.bump(x) @ self.gw)

    def pdf(self, s):
        return self.c * self.bump(s)

    def cdf(self, s):
        s = np.clip(np.asarray(s, dtype=float), -1.0, 1.0)
        i = np.clip(np.floor((s + 1.0) / self.h).astype(int), 0, len(self.s) - 2)
        out = self.T[i] + self.c * self._raw(self.s[i], s)
        out = np.where(s >= 1.0, 1.0, np.where(s <= -1.0, 0.0, out))
        return out


_KERNEL = None


def kernel():
    global _KERNEL
    if _KERNEL is None:
        _KERNEL = _Kernel()
    return _KERNEL


def _quadrature(values, eta, order=64):
    """Nodes x, weights w (per point) covering [L, U] with breakpoints at t_j, t_j +- eta_j."""
    t = np.atleast_2d(np.asarray(values, dtype=float))
    eta = np.broadcast_to(np.asarray(eta, dtype=float), t.shape)
    L = np.max(t - eta, axis=1)
    U = np.max(t + eta, axis=1)
    bp = np.concatenate([t - eta, t, t + eta, L[:, None], U[:, None]], axis=1)
    bp = np.sort(np.clip(bp, L[:, None], U[:, None]), axis=1)
    a, b = bp[:, :-1], bp[:, 1:]
    gx, gw = np.polynomial.legendre.leggauss(order)
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    x = (mid[..., None] + half[..., None] * gx).reshape(len(t), -1)
    w = (half[..., None] * gw).reshape(len(t), -1)
    return t, eta, L, x, w


def regularized_max(values, eta, derivatives=0, chunk=1024):
    """Regularized maximum of each row of ``values`` (a single tuple is allowed).

    With derivatives=1 also returns the gradient, with 2 also the Hessian.
    """
    single = np.ndim(values) == 1
    vals = np.atleast_2d(np.asarray(values, dtype=float))
    eta = np.broadcast_to(np.asarray(eta, dtype=float), vals.shape)
    parts = [_regmax_rows(vals[i:i + chunk], eta[i:i + chunk], derivatives)
             for i in range(0, len(vals), chunk)]
    out = [np.concatenate([q[j] for q in parts]) for j in range(derivatives + 1)]
    if single:
        out = [o[0] for o in out]
    return out[0] if derivatives == 0 else tuple(out)


def _regmax_rows(values, eta, derivatives):
    K = kernel()
    t, eta, L, x, w = _quadrature(values, eta)
    s = (x[:, None, :] - t[:, :, None]) / eta[:, :, None]
    Fj = K.cdf(s)                                   # (P, l, Q)
    prod = np.prod(Fj, axis=1)
    M = L + np.sum(w * (1.0 - prod), axis=1)
    out = [M]
    if derivatives >= 1:
        pj = K.pdf(s) / eta[:, :, None]
        l = t.shape[1]
        others = np.empty_like(Fj)
        for i in range(l):
            others[:, i] = np.prod(np.delete(Fj, i, axis=1), axis=1)
        grad = np.einsum("pq,piq->pi", w, pj * others)
        out.append(grad)
        if derivatives >= 2:
            hess = np.zeros(t.shape + (l,))
            for i in range(l):
                for k in range(l):
                    if i == k:
                        continue
                    rest = np.prod(np.delete(Fj, [i, k], axis=1), axis=1)
                    hess[:, i, k] = -np.einsum("pq,pq->p", w, pj[:, i] * pj[:, k] * rest)
            for i in range(l):
                hess[:, i, i] = -hess[:, i].sum(axis=1)
            out.append(hess)
    return out


# ---------------------------------------------------------------------------
# gluing


class GluingRefused(ValueError):
    def __init__(self, violations):
        super().__init__("domination fails at %d boundary points" % len(violations))
        self.violations = violations


def _inner_boundary(mask):
    out = np.zeros_like(mask)
    for ax in range(mask.ndim):
        for sh in (1, -1):
            out |= mask & ~np.roll(mask, sh, axis=ax)
    return out


def glue_subsolutions(potentials, masks, eta, p, check=True):
    """Pointwise regularized maximum of potentials over the masks where each is active.

    Returns (glued field, complex Hessian of the glue by the chain rule).
    Raises GluingRefused when u_b + eta_b > max_{a != b}(u_a - eta_a) at a
    boundary point of U_b.
    """
    us = [np.asarray(u, dtype=float) for u in potentials]
    masks = [np.asarray(m, dtype=bool) for m in masks]
    eta = np.broadcast_to(np.asarray(eta, dtype=float), (len(us),))
    n = p.n
    cover = np.zeros(us[0].shape, dtype=bool)
    for m in masks:
        cover |= m
    if not cover.all():
        raise ValueError("masks do not cover the torus")
    if check:
        bad = []
        for b, mb in enumerate(masks):
            for idx in zip(*np.nonzero(_inner_boundary(mb))):
                best = -np.inf
                for a, ma in enumerate(masks):
                    if a != b and ma[idx]:
                        best = max(best, us[a][idx] - eta[a])
                if not us[b][idx] + eta[b] <= best:
                    bad.append({"potential": b, "index": [int(i) for i in idx],
                                "u": float(us[b][idx]), "bound": float(best)})
        if bad:
            raise GluingRefused(bad)
    mult = hessian_multipliers(n, p.N)
    Hs = [complex_hessian(u, n, mult) for u in us]
    gs = [_dz(u, n) for u in us]
    l = len(us)
    vals = np.stack([np.where(m, u, -np.inf) for u, m in zip(us, masks)], axis=-1).reshape(-1, l)
    glued = np.empty(vals.shape[0])
    H = np.zeros((vals.shape[0], n, n), dtype=complex)
    Hflat = [h.reshape(-1, n, n) for h in Hs]
    gflat = [g.reshape(-1, n) for g in gs]
    active = np.isfinite(vals)
    patterns = {tuple(r) for r in active}
    for pat in patterns:
        rows = np.nonzero((active == np.array(pat)).all(axis=1))[0]
        idx = [i for i in range(l) if pat[i]]
        M, dM, d2M = regularized_max(vals[rows][:, idx], eta[idx], derivatives=2)
        glued[rows] = M
        acc = np.zeros((len(rows), n, n), dtype=complex)
        for a, i in enumerate(idx):
            acc += dM[:, a, None, None] * Hflat[i][rows]
            for b, k in enumerate(idx):
                acc += d2M[:, a, b, None, None] * (gflat[i][rows][:, :, None]
                                                  * np.conj(gflat[k][rows][:, None, :]))
        H[rows] = acc
    shape = us[0].shape
    return glued.reshape(shape), H.reshape(shape + (n, n))


__all__ = [
    "functional_F", "first_variation", "directional_derivative", "PotentialPath",
    "path_functional", "path_independence_check", "segment_convexity",
    "regularized_max", "glue_subsolutions", "GluingRefused", "NonKahlerError",
]
