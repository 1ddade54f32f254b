import numpy as np
import pytest
from hypothesis import given, strategies as st

from formeq.cone import cone_audit
from formeq.form_algebra import FormBundle, rho_power_bundle
from formeq.solver import (
    NonKahlerError,
    band_limited_field,
    complex_hessian,
    continuity_solve,
    grid_coords,
    make_problem,
    manufactured_problem,
)
from formeq.variational import (
    GluingRefused,
    PotentialPath,
    directional_derivative,
    functional_F,
    glue_subsolutions,
    kernel,
    path_functional,
    path_independence_check,
    regularized_max,
    segment_convexity,
)


@pytest.fixture(scope="module")
def jeq2():
    """n = 2 J-equation problem with a manufactured solution."""
    u_star = band_limited_field(2, 8, 1, seed=3, amplitude=0.004)
    return manufactured_problem(u_star, rho_power_bundle(np.eye(2), {1: 1.0}), np.eye(2),
                                2 * np.eye(2), 1.0), u_star


@pytest.fixture(scope="module")
def vol1():
    u_star = band_limited_field(1, 32, 1, seed=2, amplitude=0.05)
    return manufactured_problem(u_star, FormBundle(1, np.eye(1), {}, 0.0), np.eye(1), np.eye(1),
                                1.0), u_star


# --- the functional ------------------------------------------------------------


def test_functional_zero_and_shift(jeq2):
    p, u = jeq2
    assert functional_F(np.zeros(p.shape), p) == 0
    base = functional_F(u, p)
    for c in (-1.0, 0.3, 5.0):
        assert abs(functional_F(u + c, p) - base) <= 1e-10


def test_functional_rejects_non_kahler(vol1):
    p, _ = vol1
    with pytest.raises(NonKahlerError):
        functional_F(band_limited_field(1, 32, 1, seed=1, amplitude=10.0), p)


@pytest.mark.parametrize("which", ["jeq2", "vol1"])
def test_straight_path_matches_closed_form(which, request):
    p, u = request.getfixturevalue(which)
    phi = 0.7 * u
    val = path_functional(PotentialPath.straight(phi, 64), p, method="trapezoid")
    ref = functional_F(phi, p)
    assert val == pytest.approx(ref, rel=1e-8, abs=1e-14)


def test_path_independence(jeq2):
    p, u = jeq2
    v = band_limited_field(2, 8, 1, seed=8, amplitude=0.002)
    a = PotentialPath.straight(u, 64)
    b = PotentialPath.through([np.zeros(p.shape), 0.5 * u + v, u], 32)
    assert path_independence_check(u, a, b, p) <= 1e-7
    assert path_independence_check(u, a, a.reparametrized(lambda t: t ** 2), p) <= 1e-9


def test_trapezoid_converges_second_order(jeq2):
    p, u = jeq2
    v = band_limited_field(2, 8, 1, seed=8, amplitude=0.002)
    ref = functional_F(u, p)
    errs = [abs(path_functional(PotentialPath.through([np.zeros(p.shape), 0.5 * u + v, u], k), p,
                                method="trapezoid") - ref) for k in (4, 8)]
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)


def test_path_validation():
    with pytest.raises(ValueError):
        PotentialPath([0.0, 1.0], [np.ones(3), np.ones(3)])
    with pytest.raises(ValueError):
        PotentialPath([0.0, 0.5], [np.zeros(3), np.ones(3)])


def test_first_variation_matches_fd(jeq2):
    p, u = jeq2
    phi = 0.5 * u
    for seed in range(3):
        v = band_limited_field(2, 8, 1, seed=20 + seed, amplitude=1.0)
        # the functional is a cubic along lines for n = 2, so one Richardson step is exact
        D = lambda h: (functional_F(phi + h * v, p) - functional_F(phi - h * v, p)) / (2 * h)
        fd = (4 * D(5e-3) - D(1e-2)) / 3
        assert directional_derivative(phi, v, p) == pytest.approx(fd, rel=1e-7)


# --- second variation -------------------------------------------------------------


def test_second_variation_zero_for_constant(jeq2):
    p, u = jeq2
    assert np.allclose(segment_convexity(u, u + 1.0, p), 0.0, atol=1e-15)


def test_second_variation_positive_and_matches_fd(jeq2):
    p, u = jeq2
    v = band_limited_field(2, 8, 1, seed=31, amplitude=0.003)
    vals = segment_convexity(u, u + v, p, ts=[0.0, 0.5, 1.0])
    assert min(vals) > 0
    h = 1e-3
    f = [functional_F(u + s * v, p) for s in (-h, 0.0, h)]
    fd = (f[0] - 2 * f[1] + f[2]) / h ** 2
    assert vals[0] == pytest.approx(fd, rel=1e-4)


def test_solution_is_local_minimizer(vol1):
    p, u_star = vol1
    u, trace = continuity_solve(p, with_functional=False)
    assert trace.converged
    F0 = functional_F(u, p)
    for j in range(5):
        v = band_limited_field(1, 32, 2, seed=100 + j)
        assert functional_F(u + 1e-2 * v, p) >= F0


# --- regularized maximum -------------------------------------------------------------


def test_kernel_is_a_symmetric_distribution():
    K = kernel()
    assert K.cdf(np.array([-1.0, 0.0, 1.0])) == pytest.approx([0.0, 0.5, 1.0], abs=1e-14)
    s = np.linspace(-1, 1, 200001)
    w = K.pdf(s)
    assert np.trapezoid(w, s) == pytest.approx(1.0, abs=1e-9)
    assert np.trapezoid(s * w, s) == pytest.approx(0.0, abs=1e-12)


def test_regmax_single_argument():
    for t in (-2.0, 0.0, 3.7):
        assert regularized_max([t], [0.4]) == pytest.approx(t, abs=1e-13)


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=5), st.data())
def test_regmax_bounds_and_translation(ts, data):
    t = np.array(ts)
    eta = np.array(data.draw(st.lists(st.floats(0.05, 1.0), min_size=len(ts), max_size=len(ts))))
    a = data.draw(st.floats(-10, 10))
    M = regularized_max(t, eta)
    assert t.max() - 1e-12 <= M <= (t + eta).max() + 1e-12
    assert regularized_max(t + a, eta) == pytest.approx(M + a, abs=1e-12)


@given(st.lists(st.floats(-3, 3), min_size=2, max_size=5), st.floats(0.0, 2.0), st.data())
def test_regmax_dominated_argument_drops(ts, gap, data):
    t = np.array(ts)
    eta = np.array(data.draw(st.lists(st.floats(0.05, 1.0), min_size=len(ts), max_size=len(ts))))
    t[0] = np.max(t[1:] - eta[1:]) - eta[0] - gap
    assert regularized_max(t, eta) == pytest.approx(regularized_max(t[1:], eta[1:]), abs=1e-12)


@given(st.lists(st.floats(-1, 1), min_size=2, max_size=4), st.integers(0, 2 ** 31))
def test_regmax_derivatives(ts, seed):
    rng = np.random.default_rng(seed)
    t = np.array(ts)
    eta = rng.uniform(0.3, 1.0, size=len(t))
    M, g, H = regularized_max(t, eta, derivatives=2)
    assert np.all(g >= -1e-14) and g.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.linalg.eigvalsh(H)[0] >= -1e-10
    d = rng.normal(size=len(t))
    h = 1e-5
    fd = (regularized_max(t + h * d, eta) - regularized_max(t - h * d, eta)) / (2 * h)
    assert g @ d == pytest.approx(fd, abs=1e-7)


def test_regmax_batch_matches_rows(rng):
    V = rng.normal(size=(2500, 3))
    out = regularized_max(V, [0.2, 0.3, 0.4])
    for i in (0, 1023, 1024, 2499):
        assert out[i] == pytest.approx(regularized_max(V[i], [0.2, 0.3, 0.4]), abs=1e-15)


# --- gluing ---------------------------------------------------------------------------


def glue_setup(N=8):
    n = 2
    p = make_problem(n, N, np.eye(2), 20 * np.eye(2), rho_power_bundle(np.eye(2), {1: 1.0}), 0.0)
    X = grid_coords(n, N)
    phi = band_limited_field(n, N, 1, seed=4, amplitude=0.05)
    c = np.cos(2 * np.pi * X[0])
    return p, phi, c


def test_glue_equal_copies():
    p, phi, c = glue_setup()
    full = np.ones(p.shape, dtype=bool)
    g, _ = glue_subsolutions([phi, phi], [full, full], 0.1, p, check=False)
    assert np.all(g >= phi - 1e-12) and np.all(g <= phi + 0.1 + 1e-12)


def test_glue_refuses_non_dominating():
    p, phi, c = glue_setup()
    with pytest.raises(GluingRefused) as e:
        glue_subsolutions([phi + 0.5 * c, phi - 0.5 * c], [c > -0.8, c < 0.8], 0.4, p)
    assert e.value.violations and "index" in e.value.violations[0]


def test_glue_keeps_cone_margin():
    p, phi, c = glue_setup()
    u1, u2 = phi + 0.5 * c, phi - 0.5 * c
    m1, m2 = c > -0.8, c < 0.8
    ctx = p.context()
    qs = []
    for u, m in ((u1, m1), (u2, m2)):
        _, _, field = cone_audit(p.omega0 + complex_hessian(u, 2), ctx)
        qs.append(field[m].min())
    g, H = glue_subsolutions([u1, u2], [m1, m2], 0.1, p)
    q, _, _ = cone_audit(p.omega0 + H, ctx)
    assert q >= min(qs) - 1e-8
    assert np.all(g >= np.maximum(np.where(m1, u1, -np.inf), np.where(m2, u2, -np.inf)) - 1e-12)


def test_glue_requires_cover():
    p, phi, c = glue_setup()
    with pytest.raises(ValueError):
        glue_subsolutions([phi, phi], [c > 0.5, c > 0.6], 0.1, p)
