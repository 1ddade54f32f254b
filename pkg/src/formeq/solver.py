"""Scalar ray solves and the continuity-method solver on flat complex tori.

The torus is [0,1)^{2n} with real coordinates ordered x_1..x_n, y_1..y_n and
z_j = x_j + i y_j.  Grid fields have shape ``(N,) * 2n``.  Derivatives are
spectral, so a band-limited potential is differentiated exactly.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.sparse.linalg import LinearOperator, gmres

from .form_algebra import FormBundle, wedge_coeffs
from .hermitian_core import compound
from .operator import F, F_ring, OperatorContext, directional, grad_F

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# problems


@dataclass
class TorusProblem:
    n: int
    N: int
    rho: np.ndarray
    omega0: np.ndarray
    bundle: FormBundle
    f_grid: np.ndarray
    kappa: float

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=complex)
        self.omega0 = np.asarray(self.omega0, dtype=complex)
        f = np.asarray(self.f_grid, dtype=float)
        if f.ndim == 0:
            f = np.full((self.N,) * (2 * self.n), float(f))
        if f.shape != (self.N,) * (2 * self.n):
            raise ValueError("f_grid must have shape (N,)*2n")
        self.f_grid = f
        if self.bundle.n != self.n:
            raise ValueError("bundle dimension differs from n")

    @property
    def shape(self):
        return (self.N,) * (2 * self.n)

    @property
    def kappa0(self):
        return self.kappa * np.linalg.det(self.omega0).real / np.linalg.det(self.rho).real

    def normalization_defect(self):
        """Relative mismatch of kappa against the class identity."""
        k = kappa_from_parts(self.rho, self.omega0, self.bundle, float(self.f_grid.mean()))
        return abs(k - self.kappa) / abs(self.kappa)

    def path_bundle(self, t):
        """Data of the path at parameter t: t * Lambda_ring, density t f + (1-t) kappa0."""
        comps = {k: c * t for k, c in self.bundle.components.items()}
        return FormBundle(self.n, self.rho, comps, 0.0)

    def path_f(self, t):
        return t * self.f_grid + (1 - t) * self.kappa0

    def context(self, t=1.0):
        return OperatorContext(self.path_bundle(t), self.kappa)


def kappa_from_parts(rho, omega0, bundle, f_mean):
    n = bundle.n
    omega0 = np.asarray(omega0, dtype=complex)
    num = 0.0
    for k in bundle.degrees():
        num += wedge_coeffs(bundle.coeff(k), k, compound(omega0, n - k), n - k, n)[0, 0].real
    num += f_mean * np.linalg.det(rho).real
    return num / np.linalg.det(omega0).real


def kappa_from_classes(rho, omega0, bundle, f_grid):
    """kappa from kappa * int exp(omega0) = int Lambda ^ exp(omega0) on the unit torus."""
    k = kappa_from_parts(rho, omega0, bundle, float(np.mean(f_grid)))
    if not k > 0:
        raise ValueError("data admit no positive normalization (kappa = %.6g)" % k)
    return k


def make_problem(n, N, rho, omega0, bundle, f_grid, kappa=None):
    if kappa is None:
        kappa = kappa_from_classes(rho, omega0, bundle, f_grid)
    return TorusProblem(n, N, rho, omega0, bundle, f_grid, kappa)


# ---------------------------------------------------------------------------
# grids and spectral derivatives


def grid_coords(n, N):
    """Real coordinates (x_1..x_n, y_1..y_n) as 2n arrays on the grid."""
    x = np.arange(N) / N
    return np.meshgrid(*([x] * (2 * n)), indexing="ij")


def _wavenumbers(n, N):
    k = np.fft.fftfreq(N, 1.0 / N)
    k_odd = k.copy()
    if N % 2 == 0:
        k_odd[N // 2] = 0.0
    shape = [1] * (2 * n)
    full, odd = [], []
    for a in range(2 * n):
        s = list(shape)
        s[a] = N
        full.append(k.reshape(s))
        odd.append(k_odd.reshape(s))
    return full, odd


def hessian_multipliers(n, N):
    """Fourier multipliers m_ij with u_{i jbar} = ifft(m_ij * fft(u)), for i <= j."""
    full, odd = _wavenumbers(n, N)
    out = {}
    for i in range(n):
        for j in range(i, n):
            if i == j:
                m = -np.pi ** 2 * (full[i] ** 2 + full[n + i] ** 2)
                m = m + 0j
            else:
                kxi, kyi, kxj, kyj = odd[i], odd[n + i], odd[j], odd[n + j]
                m = -np.pi ** 2 * ((kxi * kxj + kyi * kyj) + 1j * (kxi * kyj - kyi * kxj))
            out[i, j] = np.broadcast_to(m, (N,) * (2 * n))
    return out


def complex_hessian(u, n, mult=None):
    """Spectral complex Hessian u_{i jbar}; returns shape grid + (n, n), Hermitian pointwise."""
    u = np.asarray(u, dtype=float)
    N = u.shape[0]
    mult = hessian_multipliers(n, N) if mult is None else mult
    U = np.fft.fftn(u)
    H = np.empty(u.shape + (n, n), dtype=complex)
    for (i, j), m in mult.items():
        h = np.fft.ifftn(m * U)
        if i == j:
            H[..., i, i] = h.real
        else:
            H[..., i, j] = h
            H[..., j, i] = np.conj(h)
    return H


def metric_field(u, p, mult=None):
    return p.omega0 + complex_hessian(u, p.n, mult)


class NonKahlerError(ValueError):
    def __init__(self, index, min_eig):
        super().__init__("metric not positive at grid point %s (min eigenvalue %.3e)"
                         % (index, min_eig))
        self.index = index
        self.min_eig = min_eig


def _check_kahler(A):
    w = np.linalg.eigvalsh(A)[..., 0]
    j = int(np.argmin(w))
    if w.reshape(-1)[j] <= 0:
        raise NonKahlerError(np.unravel_index(j, w.shape), float(w.reshape(-1)[j]))
    return float(w.reshape(-1)[j])


def residual(u, p, t=1.0, mult=None):
    """kappa - F(omega0 + i ddbar u) pointwise along the path at parameter t."""
    A = metric_field(u, p, mult)
    _check_kahler(A)
    ctx = p.context(t)
    return p.kappa - F(A, ctx, f=p.path_f(t))


def manufactured_problem(u_star, bundle, rho, omega0, kappa):
    """Problem whose exact discrete solution is u_star (f is solved for)."""
    u_star = np.asarray(u_star, dtype=float)
    n = bundle.n
    N = u_star.shape[0]
    A = np.asarray(omega0, dtype=complex) + complex_hessian(u_star, n)
    try:
        _check_kahler(A)
    except NonKahlerError as e:
        raise ValueError("u_star does not give a Kahler metric: %s" % e) from None
    det = np.linalg.det(A).real
    ring = F_ring(A, bundle) if bundle.degrees() else 0.0
    f = (kappa - ring) * det / np.linalg.det(rho).real
    bundle = FormBundle(n, np.asarray(rho, dtype=complex), dict(bundle.components), 0.0)
    return TorusProblem(n, N, rho, omega0, bundle, f, kappa)


def band_limited_field(n, N, modes, seed=0, amplitude=1.0):
    """Random real trigonometric polynomial with integer wavevectors |k_a| <= modes."""
    rng = np.random.default_rng(seed)
    X = grid_coords(n, N)
    u = np.zeros(X[0].shape)
    for _ in range(4 * n):
        kv = rng.integers(-modes, modes + 1, size=2 * n)
        if not kv.any():
            continue
        phase = sum(2 * np.pi * kv[a] * X[a] for a in range(2 * n))
        u += rng.normal() * np.cos(phase) + rng.normal() * np.sin(phase)
    u -= u.mean()
    s = np.abs(u).max()
    return amplitude * u / s if s > 0 else u


# ---------------------------------------------------------------------------
# scalar ray solve


def solve_ray(A0, B, ctx, f=None, t_max=1e14, tol=1e-12, scan=240):
    """Smallest t >= 0 with F(A0 + tB) = kappa, or None if there is none up to t_max."""
    A0 = np.asarray(A0, dtype=complex)
    B = np.asarray(B, dtype=complex)
    kappa = ctx.kappa

    def g(t):
        return F(A0 + t * B, ctx, f) - kappa

    g0 = g(0.0)
    if abs(g0) <= tol * max(1.0, kappa):
        return 0.0
    # beyond t |B| ~ 1e12 lambda_min(A0) the matrix is singular to working precision
    lam0 = float(np.linalg.eigvalsh(A0)[0])
    t_max = min(t_max, 1e12 * lam0 / max(np.linalg.norm(B, 2), 1e-300))
    ts = np.concatenate([[0.0], np.logspace(-8, np.log10(t_max), scan)])
    vals = F(A0[None] + ts[:, None, None] * B[None], ctx, f) - kappa
    sgn = np.sign(vals)
    change = np.nonzero(sgn[1:] * sgn[0] <= 0)[0]
    if len(change) == 0:
        return None
    j = change[0]
    a, b = ts[j], ts[j + 1]
    if vals[j + 1] == 0:
        return float(b)
    t = optimize.brentq(g, a, b, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    # Newton polish along the ray
    for _ in range(3):
        r = g(t)
        if abs(r) <= tol * max(1.0, kappa):
            break
        d = directional(grad_F(A0 + t * B, ctx, f), B).real
        if d == 0:
            break
        t_new = t - r / d
        if not (a <= t_new <= b) or abs(g(t_new)) >= abs(r):
            break
        t = t_new
    return float(t)


# ---------------------------------------------------------------------------
# continuity method


@dataclass
class StepRecord:
    t: float
    newton_iters: int
    residual_sup: float
    min_eig: float
    q_min: float
    functional: float


@dataclass
class SolveTrace:
    rows: list = field(default_factory=list)
    status: str = "RUNNING"
    message: str = ""
    exit_point: dict = None
    warnings: list = field(default_factory=list)
    newton_total: int = 0
    newton_history: list = field(default_factory=list)

    def table(self):
        return [[r.t, r.newton_iters, r.residual_sup, r.min_eig, r.q_min, r.functional]
                for r in self.rows]

    @property
    def converged(self):
        return self.status == "CONVERGED"


class _Linearization:
    """L v = sum_ij G_ij(x) v_{i jbar}(x) on mean-zero fields, plus a constant unknown."""

    def __init__(self, G, n, mult):
        self.G, self.n, self.mult = G, n, mult
        self.shape = G.shape[:-2]
        self.size = int(np.prod(self.shape))
        Gbar = G.reshape(-1, n, n).mean(axis=0)
        sym = np.zeros(self.shape, dtype=complex)
        for (i, j), m in mult.items():
            sym = sym + Gbar[i, j] * m
            if i != j:
                sym = sym + Gbar[j, i] * np.conj(m)
        sym = sym.real
        scale = np.abs(sym).max()
        inv = np.zeros_like(sym)
        ok = np.abs(sym) > 1e-12 * scale
        inv[ok] = 1.0 / sym[ok]
        self.inv_sym = inv

    def apply_L(self, v):
        H = complex_hessian(v.reshape(self.shape), self.n, self.mult)
        return np.einsum("...ij,...ij->...", self.G, H).real.reshape(-1)

    def matvec(self, x):
        v, c = x[:-1], x[-1]
        out = np.empty_like(x)
        out[:-1] = self.apply_L(v) - c
        out[-1] = v.mean()
        return out

    def precond(self, y):
        r, s = y[:-1], y[-1]
        m = r.mean()
        R = np.fft.fftn((r - m).reshape(self.shape))
        v = np.fft.ifftn(R * self.inv_sym).real.reshape(-1)
        out = np.empty_like(y)
        out[:-1] = v + s
        out[-1] = -m
        return out

    def solve(self, rhs, rtol=1e-10, maxiter=200):
        n = self.size + 1
        A = LinearOperator((n, n), matvec=self.matvec, dtype=float)
        M = LinearOperator((n, n), matvec=self.precond, dtype=float)
        b = np.concatenate([rhs.reshape(-1), [0.0]])
        x, info = gmres(A, b, M=M, rtol=rtol, atol=0.0, restart=60, maxiter=maxiter)
        return x[:-1].reshape(self.shape), info


def newton_phase(u, p, t, tol, max_iter=12, mult=None, history=None):
    """Damped Newton for the equation at path parameter t.  Returns (u, iters, ok, res_sup)."""
    ctx = p.context(t)
    f = p.path_f(t)
    mult = hessian_multipliers(p.n, p.N) if mult is None else mult
    A = metric_field(u, p, mult)
    lam = _check_kahler(A)
    R = p.kappa - F(A, ctx, f)
    r_sup = float(np.abs(R).max())
    it = 0
    while r_sup > tol:
        if it >= max_iter:
            return u, it, False, r_sup
        G = grad_F(A, ctx, f)
        lin = _Linearization(G, p.n, mult)
        du, info = lin.solve(R)
        du -= du.mean()
        alpha, accepted = 1.0, False
        while alpha >= 1.0 / 64:
            u_try = u + alpha * du
            A_try = metric_field(u_try, p, mult)
            lam_try = float(np.linalg.eigvalsh(A_try)[..., 0].min())
            if lam_try > 0.1 * lam:
                R_try = p.kappa - F(A_try, ctx, f)
                s_try = float(np.abs(R_try).max())
                if s_try < (1 - 1e-4 * alpha) * r_sup:
                    accepted = True
                    break
            alpha *= 0.5
        it += 1
        if not accepted:
            return u, it, False, r_sup
        u, A, lam, R, r_sup = u_try, A_try, lam_try, R_try, s_try
        if history is not None:
            history.append((t, it, r_sup, alpha))
    return u, it, True, r_sup


def _precondition_warnings(p, m=None, k0=None):
    from .cone import thresholds

    out = []
    if m is None or k0 is None:
        return out
    th = thresholds(p.context(1.0), m, p.omega0, k0=k0)
    fmin = float(p.f_grid.min())
    if fmin <= -th.eps_h2prime:
        out.append("density floor %.4g is below the H2' threshold -%.4g" % (fmin, th.eps_h2prime))
    if fmin <= -th.eps_h1:
        out.append("density floor %.4g is below the H1 threshold -%.4g" % (fmin, th.eps_h1))
    return out


def continuity_solve(p, u_init=None, t_start=0.0, tol=1e-11, mid_tol=1e-7, dt0=0.1,
                     dt_min=1e-4, newton_budget=200, m=None, k0=None, with_functional=True,
                     exit_resolution=1e-3):
    """March the continuity path from t_start to 1; returns (u, trace).

    The trace status is CONVERGED, CONE_EXIT (some grid point left the cone)
    or STALLED (step size fell below dt_min or the Newton budget ran out).
    A cone exit is bracketed to within exit_resolution in t before it is reported.
    """
    from .cone import cone_audit

    mult = hessian_multipliers(p.n, p.N)
    trace = SolveTrace()
    trace.warnings.extend(_precondition_warnings(p, m, k0))
    if p.normalization_defect() > 1e-10:
        trace.warnings.append("kappa normalization defect %.3e" % p.normalization_defect())
    u = np.zeros(p.shape) if u_init is None else np.asarray(u_init, dtype=float).copy()
    u -= u.mean()

    def record(t, u, iters, r_sup):
        A = metric_field(u, p, mult)
        lam = float(np.linalg.eigvalsh(A)[..., 0].min())
        ctx = p.context(t)
        q, j, _ = cone_audit(A, ctx)
        fv = float("nan")
        if with_functional:
            from .variational import functional_F
            fv = functional_F(u, p, t)
        trace.rows.append(StepRecord(t, iters, r_sup, lam, q, fv))
        return q, j

    def cone_exit(t, q, j):
        idx = np.unravel_index(j, p.shape)
        trace.status = "CONE_EXIT"
        trace.exit_point = {"t": t, "index": [int(i) for i in idx],
                            "x": [i / p.N for i in idx], "q_min": q}
        trace.message = "cone condition lost at t=%.6g" % t

    t = float(t_start)
    try:
        u, it, ok, r_sup = newton_phase(u, p, t, tol if t >= 1 else mid_tol, 30, mult,
                                        trace.newton_history)
    except NonKahlerError as e:
        trace.status, trace.message = "STALLED", str(e)
        return u, trace
    trace.newton_total += it
    if not ok:
        trace.status, trace.message = "STALLED", "Newton failed at the starting point"
        return u, trace
    q, j = record(t, u, it, r_sup)
    if q <= 0:
        cone_exit(t, q, j)
        return u, trace
    u_prev, t_prev = None, None
    dt = dt0
    t_bad = None                       # smallest t seen with q <= 0
    while t < 1.0:
        t_new = min(1.0, t + dt, t_bad if t_bad is not None else 1.0)
        if 1.0 - t_new < 1e-12:
            t_new = 1.0
        u_guess = u
        if u_prev is not None:
            u_guess = u + (u - u_prev) * (t_new - t) / (t - t_prev)
            try:
                _check_kahler(metric_field(u_guess, p, mult))
            except NonKahlerError:
                u_guess = u
        phase_tol = tol if t_new >= 1.0 else mid_tol
        try:
            u_new, it, ok, r_sup = newton_phase(u_guess, p, t_new, phase_tol, 12, mult,
                                                trace.newton_history)
        except NonKahlerError:
            it, ok = 0, False
        trace.newton_total += it
        if trace.newton_total > newton_budget:
            trace.status, trace.message = "STALLED", "Newton budget exhausted"
            return u, trace
        if not ok:
            dt *= 0.5
            if dt < dt_min:
                trace.status = "STALLED"
                trace.message = "step size below %.1e at t=%.6g" % (dt_min, t)
                return u, trace
            continue
        q, j = cone_audit(metric_field(u_new, p, mult), p.context(t_new))[:2]
        if q <= 0:
            # localize the crossing before reporting it
            if t_new - t > exit_resolution:
                t_bad = t_new
                dt = 0.5 * (t_new - t)
                continue
            record(t_new, u_new, it, r_sup)
            cone_exit(t_new, q, j)
            return u_new, trace
        u_prev, t_prev = u, t
        u, t = u_new, t_new
        record(t, u, it, r_sup)
        if it <= 2:
            dt = min(2 * dt, 0.5)
    trace.status = "CONVERGED"
    trace.message = "reached t=1 with sup residual %.3e" % trace.rows[-1].residual_sup
    return u, trace


# ---------------------------------------------------------------------------
# observational monitors


def monitor_estimates(u, p, N_thresh=10.0, mu=0.1, t=1.0):
    """sup|u|, sup|ddbar u|_rho and the gradient monitor G.H - mu (1 - tr G) where |ddbar u| is large."""
    mult = hessian_multipliers(p.n, p.N)
    H = complex_hessian(u, p.n, mult)
    w, U = np.linalg.eigh(p.rho)
    r = (U / np.sqrt(w)) @ U.conj().T
    Hn = np.linalg.norm(r @ H @ r, axis=(-2, -1))
    out = {"sup_u": float(np.abs(u).max()), "sup_ddbar_u": float(Hn.max()),
           "N": N_thresh, "mu": mu, "flagged_points": 0, "min_monitor": None}
    mask = Hn > N_thresh
    if mask.any():
        A = p.omega0 + H[mask]
        G = grad_F(A, p.context(t), f=p.path_f(t)[mask])
        lhs = np.einsum("...ij,...ij->...", G, H[mask]).real
        trG = np.trace(G, axis1=-2, axis2=-1).real
        val = lhs - mu * (1 - trG)
        out["flagged_points"] = int(mask.sum())
        out["min_monitor"] = float(val.min())
    return out
