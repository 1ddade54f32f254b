import numpy as np
import pytest
from hypothesis import given, strategies as st

from formeq.form_algebra import FormBundle, FormComponent, rho_power_bundle
from formeq.hermitian_core import SingularMatrixError, compound
from formeq.operator import F_ring
from formeq.product_lift import (
    F2,
    block_lower_bound,
    example_chain,
    lift_bundle,
    lifted_m,
    lifted_oup,
    lifted_subsolution_check,
    mixed_term_gradient,
    mixed_term_matrix,
    p_lower_bound,
    ray_lower_bound,
    two_term_F,
)

from conftest import rand_complex, rand_pd


def rho_squared(d=3):
    return FormBundle(d, np.eye(d), {2: FormComponent(d, 2, compound(np.eye(d), 2))}, 0.0)


def random_lift(rng, d):
    rho = rand_pd(rng, d)
    lhat = rho_power_bundle(rho, {k: float(rng.uniform(0.1, 1)) for k in range(1, d)})
    return lift_bundle(lhat, rho, d)


def test_lift_rho_squared_components():
    inst = lift_bundle(rho_squared(), np.eye(3), 3, k0=2)
    b = inst.bundle
    assert b.n == 6 and b.degrees() == [1, 2]
    c1 = b.coeff(1)
    np.testing.assert_allclose(c1[:3, :3], 0, atol=0)
    np.testing.assert_allclose(c1[3:, 3:], np.eye(3) / 3)
    # degree 2 lives on pairs inside the first factor, with identity coefficients
    c2 = b.coeff(2)
    from formeq.hermitian_core import subsets
    idx = subsets(6, 2)
    for a, I in enumerate(idx):
        for bb, J in enumerate(idx):
            inside = max(I) < 3 and max(J) < 3
            assert c2[a, bb] == pytest.approx(1.0 if inside and I == J else 0.0)
    assert [(s.indices, k) for s, k in inst.splitting.blocks] == [((0, 1, 2), 2), ((3, 4, 5), 1)]


def test_lift_of_zero_keeps_only_y():
    lhat = FormBundle(2, np.eye(2), {}, 0.0)
    inst = lift_bundle(lhat, np.eye(2), 2)
    assert inst.bundle.degrees() == [1]
    A = np.diag([1.0, 2.0, 3.0, 4.0])
    assert F_ring(A, inst.bundle) == pytest.approx((1 / 3 + 1 / 4) / 2)


def test_lift_rejects_large_d():
    with pytest.raises(ValueError):
        lift_bundle(FormBundle(4, np.eye(4), {}, 0.0), np.eye(4), 4)


def test_lifted_oup_constant():
    assert lifted_m(0.8, 3) == pytest.approx(1 / 3)
    assert lifted_m(0.2, 2) == pytest.approx(0.2)
    inst = lift_bundle(rho_squared(), np.eye(3), 3, k0=2)
    assert lifted_oup(inst, 1.0, samples=400).passed


@given(st.sampled_from([2, 3]), st.integers(0, 2 ** 31))
def test_two_term_structure(d, seed):
    rng = np.random.default_rng(seed)
    inst = random_lift(rng, d)
    A = rand_pd(rng, 2 * d)
    assert abs(two_term_F(A, inst) - F_ring(A, inst.bundle)) <= 1e-10 * (1 + abs(F_ring(A, inst.bundle)))


def test_block_lower_bound_equality_at_zero_D(rng):
    for d in (2, 3):
        inst = random_lift(rng, d)
        H, V = rand_pd(rng, d), rand_pd(rng, d)
        lhs, rhs = block_lower_bound(inst, H, np.zeros((d, d)), V)
        assert lhs == pytest.approx(rhs, abs=1e-12)


def test_block_lower_bound_quadratic_gap(rng):
    d = 3
    inst = random_lift(rng, d)
    H, V = rand_pd(rng, d, 1.0), rand_pd(rng, d, 1.0)
    D0 = rand_complex(rng, d)
    D0 /= np.linalg.norm(D0, 2)
    gaps = []
    for eps in (0.2, 0.1, 0.05, 0.025):
        lhs, rhs = block_lower_bound(inst, H, eps * D0, V)
        assert lhs >= rhs - 1e-10
        gaps.append(lhs - rhs)
    ratios = np.array(gaps[:-1]) / np.array(gaps[1:])
    assert np.all(np.abs(ratios - 4) < 0.6)


def test_block_lower_bound_random(rng):
    for _ in range(40):
        d = int(rng.integers(2, 4))
        inst = random_lift(rng, d)
        A = rand_pd(rng, 2 * d)
        lhs, rhs = block_lower_bound(inst, A[:d, :d], A[:d, d:], A[d:, d:])
        assert lhs >= rhs - 1e-10


def test_block_lower_bound_errors(rng):
    inst = random_lift(rng, 2)
    with pytest.raises(ValueError):
        block_lower_bound(inst, -np.eye(2), np.zeros((2, 2)), np.eye(2))
    with pytest.raises(SingularMatrixError):
        F2(np.zeros((2, 2)), inst)


def test_ray_and_p_lower_bounds(rng):
    for _ in range(10):
        d = int(rng.integers(2, 4))
        inst = random_lift(rng, d)
        A = rand_pd(rng, 2 * d)
        b = rand_complex(rng, d)[:3]
        lhs, rhs = ray_lower_bound(inst, A, b)
        assert np.all(lhs >= rhs - 1e-10)
        pl, pr = p_lower_bound(inst, A)
        assert pl >= pr - 1e-9


def test_mixed_term_matrix(rng):
    for _ in range(20):
        d = int(rng.integers(2, 4))
        inst = random_lift(rng, d)
        V = rand_pd(rng, d)
        K = mixed_term_matrix(V, inst)
        np.testing.assert_allclose(K, mixed_term_gradient(V, inst), atol=1e-10)
        assert np.linalg.eigvalsh((K + K.conj().T) / 2).max() <= 1e-12


def test_example_chain_threshold():
    # the chain holds exactly for c > 3/2
    for c, ok in ((1.4, False), (1.49, False), (1.51, True), (np.sqrt(3), True), (3.0, True)):
        L, R = example_chain(c)
        assert (np.linalg.eigvalsh(L - R).min() > 0) == ok


def test_lifted_check_from_factor_solution():
    inst = lift_bundle(rho_squared(), np.eye(3), 3, k0=2)
    c = np.sqrt(3.0)           # F(cI) = 3/c^2 = 1
    assert F_ring(c * np.eye(3), inst.lhat) == pytest.approx(1.0)
    rep = lifted_subsolution_check(c * np.eye(3), np.eye(3), inst, samples=600)
    assert rep.passed and rep.factor.passed


def test_lifted_check_rho_alone():
    d = 3
    lhat = FormBundle(d, np.eye(d), {1: FormComponent(d, 1, np.eye(d) / d)}, 0.0)
    inst = lift_bundle(lhat, np.eye(d), d)
    assert F_ring(np.eye(2 * d), inst.bundle) == pytest.approx(2.0)
    rep = lifted_subsolution_check(np.eye(d), np.eye(d), inst, samples=600)
    assert rep.passed
    assert 2 - rep.p_exact == pytest.approx(2 - (2 * d - 1) / d, abs=1e-9)


def test_lifted_check_broken_factor():
    inst = lift_bundle(rho_squared(), np.eye(3), 3, k0=2)
    rep = lifted_subsolution_check(0.9 * np.eye(3), np.eye(3), inst, samples=600)
    assert not rep.factor.passed and not rep.passed
