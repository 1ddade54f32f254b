import numpy as np
import pytest
from hypothesis import given, strategies as st

from formeq.cone import check_H1
from formeq.dhym import (
    DegeneratePhaseError,
    DhymInstance,
    angle_consistency,
    arccot,
    dhym_residuals,
    expansion_defect,
    global_phase,
    h1_predicate,
    lambda_theta_bundle,
    reduced_problem,
    solve_dhym,
)
from formeq.solver import band_limited_field

from conftest import rand_pd


def test_global_phase_examples():
    assert global_phase(np.eye(2), np.eye(2)) == pytest.approx(np.pi / 2)
    for c in (0.5, 2.0, 3.0):
        th = global_phase(c * np.eye(2), np.eye(2))
        assert 1 / np.tan(th) == pytest.approx((c * c - 1) / (2 * c))


def test_global_phase_degenerate():
    # det(omega0 + i rho) real: n = 2, omega0 = 0 gives -det(rho)
    with pytest.raises(DegeneratePhaseError):
        global_phase(np.zeros((2, 2)), np.eye(2))


@given(st.integers(2, 4), st.integers(0, 2 ** 31), st.floats(0.2, 5.0))
def test_global_phase_scale_invariant(n, seed, s):
    rng = np.random.default_rng(seed)
    om, rho = rand_pd(rng, n, 1.0), rand_pd(rng, n)
    assert global_phase(s * om, s * rho) == pytest.approx(global_phase(om, rho), abs=1e-10)


def test_arccot_branch():
    assert arccot(1.0) == pytest.approx(np.pi / 4)
    assert arccot(-1.0) == pytest.approx(3 * np.pi / 4)
    assert 0 < arccot(-1e8) < np.pi


def test_lambda_theta_examples():
    b = lambda_theta_bundle(np.eye(2), np.pi / 2)
    assert b.degrees() == [] and b.f == pytest.approx(1.0)
    for n in (3, 4):
        th = np.pi / (n - 1)
        assert abs(lambda_theta_bundle(np.eye(n), th).f) < 1e-14
        assert lambda_theta_bundle(np.eye(n), th + 0.05).f < 0
    with pytest.raises(ValueError):
        lambda_theta_bundle(np.eye(3), np.pi)


def test_residuals_zero_at_identity():
    inst = DhymInstance(2, np.eye(2), np.eye(2))
    rd, ra, rr = dhym_residuals(np.eye(2), inst)
    assert abs(rd) < 1e-14 and abs(ra) < 1e-14 and abs(rr) < 1e-14


@pytest.mark.parametrize("lam", [0.3, 1.0, 2.5, 7.0])
def test_residuals_diag_family(lam):
    inst = DhymInstance(2, np.eye(2), np.eye(2), theta=2 * arccot(lam))
    rd, ra, rr = dhym_residuals(lam * np.eye(2), inst)
    assert max(abs(rd), abs(ra), abs(rr)) < 1e-12


@given(st.integers(2, 4), st.integers(0, 2 ** 31))
def test_residual_identities(n, seed):
    rng = np.random.default_rng(seed)
    rho, om0, om = rand_pd(rng, n), rand_pd(rng, n, 2.0), rand_pd(rng, n, 1.0)
    inst = DhymInstance(n, rho, om0)
    rd, ra, rr = dhym_residuals(om, inst)
    z = np.linalg.det(om + 1j * rho)
    scale = 1 + abs(z)
    # sin(theta) Re - cos(theta) Im equals sin(theta) times the reduced coefficient
    lhs = np.sin(inst.theta) * z.real - np.cos(inst.theta) * z.imag
    if np.isfinite(rr):
        assert abs(lhs - np.sin(inst.theta) * rr) <= 1e-10 * scale
    assert abs(rd * np.sin(inst.theta) - lhs) <= 1e-10 * scale
    assert abs(angle_consistency(om, inst)) <= 1e-10 * scale
    assert expansion_defect(om, inst) <= 1e-10 * scale


def test_direct_zero_iff_angle_zero(rng):
    for _ in range(20):
        rho = rand_pd(rng, 3)
        om = rand_pd(rng, 3, 1.0)
        inst = DhymInstance(3, rho, om)          # phase taken from om itself
        rd, ra, _ = dhym_residuals(om, inst)
        assert abs(rd) < 1e-10 * (1 + abs(np.linalg.det(om + 1j * rho)))
        assert abs(ra) < 1e-12


def test_reduced_flagged_when_not_positive():
    inst = DhymInstance(2, np.eye(2), np.eye(2), theta=0.2)   # cot = 4.9
    _, _, rr = dhym_residuals(np.eye(2), inst)
    assert np.isnan(rr)
    with pytest.raises(ValueError):
        reduced_problem(inst, 4)


@pytest.mark.parametrize("n", [3, 4])
def test_h1_in_theorem_range(n):
    for th in np.linspace(0.1, np.pi / (n - 1), 5):
        inst = DhymInstance(n, np.eye(n), 3 * np.eye(n), theta=th)
        assert inst.in_theorem_range()
        assert h1_predicate(inst, samples=500)
        assert check_H1(inst.bundle, 0.5 / np.sin(th) ** 2, 2, samples=500).passed
    out = DhymInstance(n, np.eye(n), 3 * np.eye(n), theta=np.pi / (n - 1) + 0.3)
    assert not out.in_theorem_range() and not h1_predicate(out, samples=500)


def test_phase_defect_zero_when_derived(rng):
    inst = DhymInstance(3, rand_pd(rng, 3), rand_pd(rng, 3, 2.0))
    assert inst.phase_defect() < 1e-12


def test_solve_quarter_turn():
    """theta = pi/2, n = 2: the reduced equation is det(omega_hat) = det(rho)."""
    om0 = np.diag([2.0, 0.5])
    inst = DhymInstance(2, np.eye(2), om0)
    assert inst.theta == pytest.approx(np.pi / 2)
    u0 = band_limited_field(2, 8, 1, seed=1, amplitude=0.01)
    u, trace, res = solve_dhym(inst, 8, u_init=u0)
    assert trace.converged
    assert np.abs(res["angle"]).max() <= 1e-7
    assert np.abs(res["direct"]).max() <= 1e-9


def test_solve_supercritical_phase():
    inst = DhymInstance(2, np.eye(2), 2 * np.eye(2))
    u0 = band_limited_field(2, 8, 1, seed=2, amplitude=0.01)
    u, trace, res = solve_dhym(inst, 8, u_init=u0)
    assert trace.converged
    assert np.abs(res["angle"]).max() <= 1e-7
    np.testing.assert_allclose(res["direct"], res["reduced"], atol=1e-12)
