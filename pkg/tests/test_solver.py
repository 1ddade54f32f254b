import numpy as np
import pytest

from formeq.cone import class_positivity_subtorus, coordinate_subtori
from formeq.form_algebra import FormBundle, rho_power_bundle
from formeq.operator import F, OperatorContext
from formeq.solver import (
    NonKahlerError,
    TorusProblem,
    band_limited_field,
    complex_hessian,
    continuity_solve,
    grid_coords,
    kappa_from_classes,
    make_problem,
    manufactured_problem,
    monitor_estimates,
    residual,
    solve_ray,
)

from conftest import rand_pd


def jeq_bundle(n=2, rho=None):
    return rho_power_bundle(np.eye(n) if rho is None else rho, {1: 1.0})


# --- normalization -------------------------------------------------------------


def test_kappa_examples():
    assert kappa_from_classes(np.eye(2), 2 * np.eye(2), jeq_bundle(), 0.0) == pytest.approx(1.0)
    empty = FormBundle(2, np.eye(2), {}, 0.0)
    assert kappa_from_classes(np.eye(2), np.eye(2), empty, np.full((4,) * 4, 3.0)) == pytest.approx(3.0)
    with pytest.raises(ValueError):
        kappa_from_classes(np.eye(2), np.eye(2), empty, -1.0)


def test_kappa_vs_grid_quadrature(rng):
    """kappa from wedges against the grid mean of F(omega0) det(omega0) with varying f."""
    n, N = 2, 6
    rho, omega0 = rand_pd(rng, n), rand_pd(rng, n)
    b = rho_power_bundle(rho, {1: 0.7})
    f = 1.0 + 0.3 * band_limited_field(n, N, 2, seed=3)
    kappa = kappa_from_classes(rho, omega0, b, f)
    dens = F(np.broadcast_to(omega0, f.shape + (n, n)), OperatorContext(b, 1.0), f=f)
    assert kappa == pytest.approx(float(np.mean(dens)), rel=1e-10)
    assert make_problem(n, N, rho, omega0, b, f).normalization_defect() < 1e-12


def test_problem_shape_validation():
    with pytest.raises(ValueError):
        TorusProblem(2, 4, np.eye(2), np.eye(2), jeq_bundle(), np.zeros((4, 4)), 1.0)


# --- scalar ray solve ----------------------------------------------------------


def test_solve_ray_examples():
    ctx = OperatorContext(jeq_bundle(), 1.0)
    assert solve_ray(np.eye(2), np.eye(2), ctx) == pytest.approx(1.0, rel=1e-12)
    assert solve_ray(np.diag([4.0, 4.0]), np.eye(2), ctx) is None


def test_solve_ray_random_roots(rng):
    for _ in range(20):
        n = int(rng.integers(2, 4))
        b = rho_power_bundle(rand_pd(rng, n), {k: float(rng.uniform(0.1, 1)) for k in range(1, n)})
        A = rand_pd(rng, n, shift=0.2)
        x = rng.normal(size=n) + 1j * rng.normal(size=n)
        B = np.outer(x, x.conj())
        ctx0 = OperatorContext(b, 1.0)
        kappa = 0.5 * (F(A, ctx0) + F(A + 1e8 * B, ctx0))
        ctx = OperatorContext(b, kappa)
        t = solve_ray(A, B, ctx)
        assert t is not None
        assert abs(F(A + t * B, ctx) - kappa) <= 1e-12 * max(1, kappa)


# --- spectral Hessian -------------------------------------------------------------


def test_hessian_of_constant_is_zero():
    assert np.abs(complex_hessian(np.full((8,) * 4, 2.5), 2)).max() < 1e-14


def test_hessian_n1_analytic():
    N, eps = 32, 0.3
    x, y = grid_coords(1, N)
    u = eps * np.cos(2 * np.pi * x) + eps * np.sin(2 * np.pi * (x + 2 * y))
    H = complex_hessian(u, 1)[..., 0, 0]
    expect = -eps * np.pi ** 2 * np.cos(2 * np.pi * x) - 5 * eps * np.pi ** 2 * np.sin(2 * np.pi * (x + 2 * y))
    np.testing.assert_allclose(H.real, expect, rtol=0, atol=1e-10 * np.abs(expect).max())


def test_hessian_n2_mixed_entry():
    N = 8
    X = grid_coords(2, N)                    # x1, x2, y1, y2
    phase = 2 * np.pi * (X[0] + X[3])
    H = complex_hessian(np.cos(phase), 2)
    np.testing.assert_allclose(H[..., 0, 1], -1j * np.pi ** 2 * np.cos(phase), atol=1e-11)
    np.testing.assert_allclose(H[..., 0, 0], -np.pi ** 2 * np.cos(phase), atol=1e-11)


def test_hessian_hermitian(rng):
    u = band_limited_field(2, 8, 3, seed=11)
    H = complex_hessian(u, 2)
    assert np.abs(H - np.conj(np.swapaxes(H, -1, -2))).max() == 0


# --- residual and manufactured problems ---------------------------------------------


def test_manufactured_zero_gives_constant_f():
    omega0 = np.diag([2.0, 3.0])
    p = manufactured_problem(np.zeros((4,) * 4), jeq_bundle(), np.eye(2), omega0, 1.5)
    expect = 1.5 * 6.0 - 5.0
    np.testing.assert_allclose(p.f_grid, expect)


def test_manufactured_n1_closed_form():
    N = 32
    x, y = grid_coords(1, N)
    u = 0.1 * np.sin(2 * np.pi * x)
    b = FormBundle(1, np.eye(1), {}, 0.0)
    p = manufactured_problem(u, b, np.eye(1), np.eye(1), 2.0)
    uzz = -0.1 * np.pi ** 2 * np.sin(2 * np.pi * x)
    np.testing.assert_allclose(p.f_grid, 2.0 * (1 + uzz), atol=1e-12)


def test_manufactured_residual_and_slope(rng):
    n, N = 2, 8
    u = band_limited_field(n, N, 1, seed=5, amplitude=0.02)
    p = manufactured_problem(u, jeq_bundle(), np.eye(n), 2 * np.eye(n), 1.0)
    assert np.abs(residual(u, p)).max() <= 1e-12
    v = band_limited_field(n, N, 1, seed=6)
    r1 = np.abs(residual(u + 1e-4 * v, p)).max()
    r2 = np.abs(residual(u + 2e-4 * v, p)).max()
    assert r2 / r1 == pytest.approx(2.0, rel=1e-2)


def test_manufactured_rejects_non_kahler():
    u = band_limited_field(1, 16, 1, seed=1, amplitude=10.0)
    with pytest.raises(ValueError):
        manufactured_problem(u, FormBundle(1, np.eye(1), {}, 0.0), np.eye(1), np.eye(1), 1.0)


def test_residual_reports_non_kahler_point():
    p = make_problem(1, 16, np.eye(1), np.eye(1), FormBundle(1, np.eye(1), {}, 0.0), 1.0)
    u = band_limited_field(1, 16, 1, seed=1, amplitude=10.0)
    with pytest.raises(NonKahlerError) as e:
        residual(u, p)
    assert e.value.min_eig <= 0


# --- continuity method ------------------------------------------------------------


def test_t0_with_omega0_equal_rho_needs_no_newton():
    p = make_problem(2, 8, np.eye(2), np.eye(2), jeq_bundle(), 1.0)
    u, trace = continuity_solve(p, dt0=1.0)
    assert trace.rows[0].t == 0 and trace.rows[0].newton_iters == 0


def solve_manufactured(n, N, seed, amplitude, **kw):
    u_star = band_limited_field(n, N, 1, seed=seed, amplitude=amplitude)
    b = jeq_bundle(n) if n > 1 else FormBundle(1, np.eye(1), {}, 0.0)
    p = manufactured_problem(u_star, b, np.eye(n), 2 * np.eye(n), 1.0)
    u, trace = continuity_solve(p, **kw)
    return u_star, u, trace, p


def test_manufactured_n1():
    u_star, u, trace, p = solve_manufactured(1, 32, 1, 0.05)
    assert trace.converged
    assert np.abs(u - u_star).max() <= 1e-8
    assert all(r.min_eig > 0 and r.q_min > 0 for r in trace.rows)


def test_manufactured_n2_small_grid():
    u_star, u, trace, p = solve_manufactured(2, 8, 2, 0.01)
    assert trace.converged
    assert np.abs(u - u_star).max() <= 1e-8
    assert trace.rows[-1].residual_sup <= 1e-11


def test_newton_residual_monotone():
    _, _, trace, _ = solve_manufactured(2, 8, 2, 0.01)
    hist = trace.newton_history
    for a, b in zip(hist, hist[1:]):
        if a[0] == b[0] and b[1] == a[1] + 1:
            assert b[2] < a[2]


def test_doubling_grid_does_not_change_error():
    errs = []
    for N in (16, 32):
        X = grid_coords(1, N)
        u_star = 0.02 * np.cos(2 * np.pi * X[0]) + 0.01 * np.sin(2 * np.pi * (X[0] - X[1]))
        p = manufactured_problem(u_star, FormBundle(1, np.eye(1), {}, 0.0), np.eye(1), np.eye(1), 1.0)
        u, trace = continuity_solve(p, with_functional=False)
        errs.append(np.abs(u - u_star).max())
    assert abs(errs[0] - errs[1]) <= 1e-9


def test_gauge_two_initial_guesses():
    u_star = band_limited_field(1, 32, 1, seed=4, amplitude=0.05)
    p = manufactured_problem(u_star, FormBundle(1, np.eye(1), {}, 0.0), np.eye(1), np.eye(1), 1.0)
    u1, t1 = continuity_solve(p)
    u2, t2 = continuity_solve(p, u_init=0.01 * band_limited_field(1, 32, 1, seed=9))
    assert t1.converged and t2.converged
    assert np.abs(u1 - u2).max() <= 1e-8


def negative_control(fbar):
    n, N = 2, 8
    X = grid_coords(n, N)
    f = fbar + 0.05 * np.cos(2 * np.pi * X[0])
    return make_problem(n, N, np.eye(n), np.diag([1.0, 2.0]), jeq_bundle(), f)


def test_negative_control_cone_exit():
    p = negative_control(-1.5)
    vals = [class_positivity_subtorus(p.omega0, p.bundle, p.kappa, Y) for Y in coordinate_subtori(2)]
    assert min(vals) < 0
    u, trace = continuity_solve(p, with_functional=False)
    assert trace.status == "CONE_EXIT"
    assert trace.exit_point["t"] < 1.0 and trace.exit_point["q_min"] <= 0


def test_restored_control_converges():
    p = negative_control(0.5)
    vals = [class_positivity_subtorus(p.omega0, p.bundle, p.kappa, Y) for Y in coordinate_subtori(2)]
    assert min(vals) > 0
    u, trace = continuity_solve(p, with_functional=False)
    assert trace.converged
    assert all(r.q_min > 0 for r in trace.rows)


def test_precondition_warning_is_reported():
    p = negative_control(-1.5)
    _, trace = continuity_solve(p, m=1.0, k0=1, with_functional=False)
    assert any("threshold" in w for w in trace.warnings)


def test_monitor_estimates():
    p = make_problem(2, 8, np.eye(2), 2 * np.eye(2), jeq_bundle(), 1.0)
    rep = monitor_estimates(np.zeros(p.shape), p)
    assert rep["sup_u"] == 0 and rep["sup_ddbar_u"] == 0 and rep["flagged_points"] == 0
    u = band_limited_field(2, 8, 1, seed=3, amplitude=0.1)
    rep = monitor_estimates(u, p, N_thresh=0.1)
    assert rep["flagged_points"] > 0 and np.isfinite(rep["min_monitor"])
