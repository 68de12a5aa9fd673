import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from nlrk.grid import DomainSpec, build_grid
from nlrk.kernels import eval_window
from nlrk.rk_basis import (RKBasis, discrete_norm, interpolant, moment_system, moments_1d,
                           projector, shape_eval, tensor_eval, verify_correction_constant)
from nlrk.symbols import beta_symbol


def make_basis(h=(1 / 8, 1 / 16), delta=0.1):
    return RKBasis(build_grid(DomainSpec.unit_box(len(h), delta), h))


def interior_points(rng, n=200, lo=0.0, hi=1.0, d=2):
    return rng.uniform(lo, hi, size=(n, d))


def test_support_is_twice_spacing():
    b = make_basis()
    assert b.a == (0.25, 0.125)


def test_shape_function_examples():
    b = make_basis()
    k = np.array([3, 5])
    xk = k * np.array(b.grid.h)
    assert shape_eval(b, k, xk)[0] == pytest.approx((2 / 3) ** 2)
    assert shape_eval(b, k, xk + [b.grid.h[0], 0])[0] == pytest.approx(1 / 6 * 2 / 3)
    assert shape_eval(b, k, xk + [2 * b.grid.h[0], 0.01])[0] == 0.0
    assert shape_eval(b, k, xk + [0.0, 2.5 * b.grid.h[1]])[0] == 0.0


def test_partition_of_unity(rng):
    b = make_basis()
    f = interpolant(b, np.ones(b.grid.shape))
    assert np.max(np.abs(f(interior_points(rng)) - 1)) < 1e-12


def test_at_most_4d_terms(rng):
    b = make_basis()
    x = interior_points(rng, 30)
    k = b.grid.all_indices()
    vals = np.array([shape_eval(b, kk, x) for kk in k])
    assert np.max(np.count_nonzero(vals, axis=0)) <= 4**2


@settings(max_examples=10, deadline=None)
@given(coef=st.lists(st.floats(-3, 3), min_size=3, max_size=3))
def test_linear_reproduction(coef):
    b = make_basis()
    ell = lambda x: coef[0] + coef[1] * x[:, 0] + coef[2] * x[:, 1]
    x = np.random.default_rng(1).uniform(0, 1, (50, 2))
    assert np.max(np.abs(projector(b, ell)(x) - ell(x))) < 1e-12


@settings(max_examples=10, deadline=None)
@given(a=st.lists(st.floats(-2, 2), min_size=6, max_size=6))
def test_quadratic_shift(a):
    b = make_basis()
    h = np.array(b.grid.h)
    q = lambda x: (a[0] * x[:, 0] ** 2 + a[1] * x[:, 1] ** 2 + a[2] * x[:, 0] * x[:, 1]
                   + a[3] * x[:, 0] + a[4] * x[:, 1] + a[5])
    x = np.random.default_rng(2).uniform(0, 1, (20, 2))
    shift = (a[0] * h[0] ** 2 + a[1] * h[1] ** 2) / 3
    assert np.max(np.abs(projector(b, q)(x) - q(x) - shift)) < 1e-12


def test_quadratic_example():
    b = make_basis()
    x = np.random.default_rng(3).uniform(0, 1, (20, 2))
    p = projector(b, lambda y: np.sum(y**2, axis=1))
    assert np.allclose(p(x), np.sum(x**2, 1) + (1 / 64 + 1 / 256) / 3, atol=1e-13, rtol=0)


@pytest.mark.parametrize("h", [1.0, 0.3, 1 / 16])
def test_moment_constants(h, rng):
    x = rng.uniform(-3, 3, 100)
    m = moments_1d(x, h, 2 * h)
    expected = np.array([1.0, 0.0, h**2 / 3, 0.0])
    assert np.max(np.abs(m - expected)) < 1e-12 * max(1.0, h**2)


def test_moment_matrix_1d_h1():
    g = build_grid(DomainSpec.unit_box(1, 0.5), (1.0,))
    ms = moment_system(g, 2.0, np.array([0.37]))
    assert np.allclose(ms.M, [[1, 0], [0, 1 / 3]], atol=1e-14)
    assert np.allclose(ms.b, [1, 0], atol=1e-14)


def test_correction_constant_only_for_a_equal_2h():
    g = make_basis().grid
    assert verify_correction_constant(g, 2 * np.array(g.h))
    assert not verify_correction_constant(g, 1.5 * np.array(g.h))
    g1 = build_grid(DomainSpec.unit_box(1, 0.5), (0.25,))
    assert verify_correction_constant(g1, 0.5)
    assert not verify_correction_constant(g1, 0.375)


def test_interpolant_derivatives_match_finite_differences(rng):
    b = make_basis()
    c = rng.standard_normal(b.grid.shape)
    f = interpolant(b, c)
    x = rng.uniform(0.1, 0.9, (20, 2))
    e = 1e-5
    fd = (f(x + [e, 0]) - f(x - [e, 0])) / (2 * e)
    assert np.allclose(f(x, deriv=(1, 0)), fd, rtol=1e-6, atol=1e-6)
    fd2 = (f(x + [0, e]) - 2 * f(x) + f(x - [0, e])) / e**2
    assert np.allclose(f(x, deriv=(0, 2)), fd2, rtol=1e-3, atol=1e-2)


def test_projector_sine_rate():
    errs, hs = [], [1 / 8, 1 / 16, 1 / 32, 1 / 64]
    x = np.random.default_rng(4).uniform(0, 1, (400, 1))
    for h in hs:
        b = RKBasis(build_grid(DomainSpec.unit_box(1, 0.1), (h,)))
        p = projector(b, lambda y: np.sin(np.pi * y[:, 0]))
        errs.append(np.max(np.abs(p(x) - np.sin(np.pi * x[:, 0]))))
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert abs(slope - 2) <= 0.1


@pytest.mark.parametrize("deriv", [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)])
def test_synchronized_convergence_at_nodes(deriv):
    f = lambda x: np.sin(np.pi * x[:, 0]) * np.cos(1.3 * x[:, 1])

    def exact(x):
        a, c = np.pi * x[:, 0], 1.3 * x[:, 1]
        dx = [np.sin(a), np.pi * np.cos(a), -np.pi**2 * np.sin(a)][deriv[0]]
        dy = [np.cos(c), -1.3 * np.sin(c), -1.69 * np.cos(c)][deriv[1]]
        return dx * dy

    hs = [1 / 8, 1 / 16, 1 / 32, 1 / 64]
    errs = []
    for h in hs:
        b = make_basis((h, h / 2))
        k = b.grid.all_indices()
        x = b.grid.coords(k)
        inside = np.all((x > 0) & (x < 1), axis=1)
        p = projector(b, f)
        errs.append(np.max(np.abs(p(x[inside], deriv=deriv) - exact(x[inside]))))
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert abs(slope - 2) <= 0.3


def test_tensor_eval_matches_pointwise(rng):
    b = make_basis()
    c = rng.standard_normal(b.grid.shape)
    p1, p2 = rng.uniform(0, 1, 7), rng.uniform(0, 1, 5)
    T = tensor_eval(b, c, [p1, p2])
    X = np.stack(np.meshgrid(p1, p2, indexing="ij"), -1).reshape(-1, 2)
    assert np.allclose(T.ravel(), interpolant(b, c)(X), atol=1e-13)


def test_discrete_norm_zero_and_single_coefficient():
    g = build_grid(DomainSpec.unit_box(1, 0.25), (1.0,))
    b = RKBasis(g)
    assert discrete_norm(b, np.zeros(g.shape)) == 0.0
    c = np.zeros(g.shape)
    c[3] = 1.0
    ref = np.sqrt(integrate.quad(lambda t: 2 * eval_window(t) ** 2 * 2, 0, 1, points=[0.5])[0])
    assert discrete_norm(b, c) == pytest.approx(ref, abs=1e-10)


def test_discrete_norm_exact_against_adaptive_1d(rng):
    g = build_grid(DomainSpec.unit_box(1, 0.2), (0.25,))
    b = RKBasis(g)
    c = rng.standard_normal(g.shape)
    f = interpolant(b, c)
    k = g.all_indices()[:, 0]
    lo, hi = (k.min() - 2) * 0.25, (k.max() + 2) * 0.25
    brk = np.arange(lo, hi + 1e-12, 0.25)
    ref = sum(integrate.quad(lambda t: f(np.array([[t]]))[0] ** 2, a, z, epsabs=1e-14)[0]
              for a, z in zip(brk[:-1], brk[1:]))
    assert discrete_norm(b, c) == pytest.approx(np.sqrt(ref), rel=1e-10)


def test_norm_equivalence_bounds(rng):
    """|u|_h / (sqrt(prod h) ||u||_l2) lies in [sqrt(min beta), 1] for the lattice factor beta."""
    b = make_basis((0.125, 0.0625))
    hprod = np.prod(b.grid.h)
    bmin = beta_symbol(np.array([[np.pi, np.pi]]))[0]
    ratios = []
    for _ in range(50):
        c = np.zeros(b.grid.shape)
        c[4:-4, 4:-4] = rng.standard_normal((b.grid.shape[0] - 8, b.grid.shape[1] - 8))
        ratios.append(discrete_norm(b, c) / (np.sqrt(hprod) * np.linalg.norm(c)))
    ratios = np.array(ratios)
    assert np.all(ratios >= np.sqrt(bmin) - 1e-12)
    assert np.all(ratios <= 1 + 1e-12)
