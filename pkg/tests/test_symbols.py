import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nlrk.grid import DomainSpec, build_grid
from nlrk.kernels import make_kernel
from nlrk.operators import MeshfreeRule
from nlrk.quadrature import build_symmetric_set, rk_weights
from nlrk.symbols import (beta_symbol, lambda_delta, lambda_delta_eps, lattice_sum,
                          scan_comparison, xi_grid)

DELTA = 0.125
H = (0.125, 0.0625)


@pytest.fixture(scope="module")
def setting():
    k = make_kernel("constant", DELTA)
    g = build_grid(DomainSpec.unit_box(2, DELTA), H)
    pset = build_symmetric_set(DELTA, DELTA / 3)
    return k, g, MeshfreeRule(pset, rk_weights(pset, k))


def test_lambda_delta_origin_and_small_frequency():
    k = make_kernel("constant", DELTA)
    assert lambda_delta(k, np.zeros((1, 2)))[0] == 0.0
    xi = np.array([[1e-3, 2e-3], [0.5, -0.3], [1.0, 0.0]])
    assert np.allclose(lambda_delta(k, xi), np.sum(xi**2, 1), rtol=0.05)


@settings(max_examples=30, deadline=None)
@given(r=st.floats(0.0, 80.0), a=st.floats(0, 2 * np.pi), b=st.floats(0, 2 * np.pi))
def test_lambda_delta_even_and_isotropic(r, a, b):
    k = make_kernel("constant", DELTA)
    xi = np.array([[r * np.cos(a), r * np.sin(a)], [-r * np.cos(a), -r * np.sin(a)],
                   [r * np.cos(b), r * np.sin(b)]])
    v = lambda_delta(k, xi)
    assert np.all(v >= 0)
    assert v[0] == v[1]
    assert v[0] == pytest.approx(v[2], rel=1e-12, abs=1e-300)


@settings(max_examples=20, deadline=None)
@given(delta=st.floats(0.01, 1.0), t=st.floats(0.1, 4.0), z=st.floats(0.0, 200.0))
def test_lambda_delta_homogeneity(delta, t, z):
    k = make_kernel("poly:2", delta)
    xi = np.array([[z, 0.3 * z]])
    lhs = lambda_delta(k.with_delta(t * delta), xi)[0]
    rhs = lambda_delta(k, t * xi)[0] / t**2
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-300)


def test_closed_form_agrees_with_quadrature(rng):
    k = make_kernel("constant", 0.2)
    xi = rng.uniform(-300, 300, (200, 2))
    xi[:5] *= 1e-6
    assert np.allclose(lambda_delta(k, xi, "closed"), lambda_delta(k, xi), rtol=1e-11, atol=0)
    with pytest.raises(ValueError, match="constant"):
        lambda_delta(make_kernel("poly:1", 0.2), xi, "closed")


def test_lambda_eps_origin_limit_and_positivity(setting, rng):
    k, _, rule = setting
    assert lambda_delta_eps(k, rule.pset, rule.weights, np.zeros((1, 2)))[0] == 0.0
    small = np.array([[1e-3, 0.0], [0.0, 2e-3]])
    assert np.allclose(lambda_delta_eps(k, rule.pset, rule.weights, small), np.sum(small**2, 1),
                       rtol=1e-6)
    xi = rng.uniform(-100, 100, (500, 2))
    assert np.all(lambda_delta_eps(k, rule.pset, rule.weights, xi) >= 0)


def test_split_accelerated_direct_agree(setting):
    k, g, _ = setting
    xi = xi_grid(9)
    for kind in ["G", "C"]:
        split = lattice_sum(kind, k, g, xi).values
        acc = lattice_sum(kind, k, g, xi, method="accelerated").values
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            direct = lattice_sum(kind, k, g, xi, method="direct").values
        assert np.max(np.abs(acc - split) / split) < 1e-7
        assert np.max(np.abs(direct - split) / split) < 1e-5


def test_split_independent_of_radius(setting):
    k, g, _ = setting
    xi = xi_grid(9)
    a = lattice_sum("C", k, g, xi, R=5).values
    b = lattice_sum("C", k, g, xi, R=20).values
    assert np.max(np.abs(a - b) / b) < 1e-12


def test_poly_profile_radius_convergence(setting):
    _, g, _ = setting
    k = make_kernel("poly:2", DELTA)
    xi = xi_grid(3)
    a = lattice_sum("C", k, g, xi, R=10).values
    b = lattice_sum("C", k, g, xi, R=20).values
    assert np.max(np.abs(a - b) / b) < 1e-8


def test_eps_poisson_matches_direct(setting):
    k, g, rule = setting
    xi = xi_grid(9)
    exact = lattice_sum("C_eps", k, g, xi, rule=rule)
    assert exact.method == "poisson"
    errs = []
    for R in [5, 10, 20]:
        with pytest.warns(RuntimeWarning, match="tail"):
            direct = lattice_sum("C_eps", k, g, xi, R=R, rule=rule, method="direct")
        err = np.abs(direct.values - exact.values) / exact.values
        assert np.all(err <= direct.tail_estimate)
        errs.append(err.max())
    assert errs[0] > errs[1] > errs[2] and errs[2] < 1e-5


def test_direct_tail_estimate_bounds_error(setting):
    k, g, _ = setting
    xi = xi_grid(5)
    for kind in ["G", "C"]:
        ref = lattice_sum(kind, k, g, xi).values
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            direct = lattice_sum(kind, k, g, xi, R=8, method="direct")
        assert np.all(np.abs(direct.values - ref) / ref <= direct.tail_estimate + 1e-13)


@settings(max_examples=10, deadline=None)
@given(delta=st.floats(0.05, 0.3), ratio=st.sampled_from([2.0, 3.0, 4.5]))
def test_lattice_sums_nonnegative(delta, ratio):
    k = make_kernel("constant", delta)
    g = build_grid(DomainSpec.unit_box(2, delta), H)
    pset = build_symmetric_set(delta, delta / ratio)
    scan = scan_comparison(k, g, MeshfreeRule(pset, rk_weights(pset, k)), xi_grid(7), R=8)
    for v in scan.values.values():
        assert np.all(v >= 0)


def test_small_frequency_lattice(setting):
    # near the origin the r = 0 term dominates and the lattice factors tend to one
    k, g, _ = setting
    xi = np.array([[1e-3, 5e-4], [-2e-3, 1e-3]])
    ref = np.prod(H) * lambda_delta(k, xi / np.asarray(H))
    for kind in ["G", "C"]:
        assert np.allclose(lattice_sum(kind, k, g, xi).values, ref, rtol=0.05)


def test_one_dimensional_ratio():
    k = make_kernel("constant", 0.1, 1)
    g = build_grid(DomainSpec.unit_box(1, 0.1), (0.05,))
    xi = xi_grid(41, 1)
    ratio = lattice_sum("C", k, g, xi).values / lattice_sum("G", k, g, xi).values
    assert ratio.min() >= 1.0


def test_tail_warning_and_radius_guard(setting):
    k, g, _ = setting
    xi = xi_grid(5)
    with pytest.raises(ValueError, match="at least 5"):
        lattice_sum("C", k, g, xi, R=4, method="direct")
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        lattice_sum("C", k, g, xi, R=20)
    with pytest.raises(ValueError, match="meshfree"):
        lattice_sum("C_eps", k, g, xi)


def test_beta_symbol_and_grid():
    assert beta_symbol(np.zeros((1, 2)))[0] == pytest.approx(1.0)
    assert np.all(beta_symbol(xi_grid(11)) > 0)
    xi = xi_grid(5)
    assert len(xi) == 24
    assert not np.any(np.all(xi == 0, axis=1))
    with pytest.raises(ValueError):
        xi_grid(4)
