import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nlrk.grid import DomainSpec, build_grid, classify_nodes, restrict


def unit(d, delta):
    return DomainSpec.unit_box(d, delta)


def test_unknown_count_anisotropic():
    dom = unit(2, 1 / 8)
    part = classify_nodes(build_grid(dom, (1 / 4, 1 / 8)), dom)
    assert part.n_unknown == 21
    xs = sorted({tuple(v) for v in (part.unknown * [1 / 4, 1 / 8])[:, :1]})
    assert np.allclose(np.array(xs).ravel(), [0.25, 0.5, 0.75])


def test_single_unknown_1d():
    dom = unit(1, 1 / 4)
    part = classify_nodes(build_grid(dom, (1 / 2,)), dom)
    assert part.unknown.tolist() == [[1]]


def test_spacing_attributes():
    g = build_grid(unit(2, 1 / 8), (1 / 8, 1 / 16))
    assert g.h_max == 1 / 8
    assert g.hat_h == (1.0, 0.5)


@pytest.mark.parametrize("h", [(0.1, 0.0), (-0.1, 0.1), (1.0, 1 / 32)])
def test_bad_spacing_rejected(h):
    with pytest.raises(ValueError):
        build_grid(unit(2, 0.1), h)


def test_anisotropy_limit_is_inclusive():
    build_grid(unit(2, 0.1), (1 / 4, 1 / 64))


def test_boundary_node_constrained():
    dom = unit(2, 1 / 4)
    g = build_grid(dom, (1 / 8, 1 / 8))
    part = classify_nodes(g, dom)
    unknown = {tuple(k) for k in part.unknown}
    constrained = {tuple(k) for k in part.constrained}
    assert (0, 4) in constrained          # x1 = 0 lies on the boundary
    assert (4, 4) in unknown              # (1/2, 1/2)
    assert (-1, 4) in constrained         # (-1/8, 1/2), within delta + 2h


def test_partition_disjoint_and_complete():
    dom = unit(2, 0.15)
    g = build_grid(dom, (0.1, 0.05))
    part = classify_nodes(g, dom)
    u = {tuple(k) for k in part.unknown}
    c = {tuple(k) for k in part.constrained}
    assert not u & c
    k = g.all_indices()
    near = dom.distance(g.coords(k)) <= (dom.delta + 2 * g.h_max) * (1 + 1e-12)
    assert {tuple(v) for v in k[near]} == u | c


def test_ordering_lexicographic_and_pure():
    dom = unit(2, 0.1)
    g = build_grid(dom, (0.1, 0.05))
    p1, p2 = classify_nodes(g, dom), classify_nodes(g, dom)
    assert np.array_equal(p1.unknown, p2.unknown)
    order = np.lexsort(p1.unknown.T[::-1])
    assert np.array_equal(order, np.arange(p1.n_unknown))


def test_restrict_examples():
    dom = unit(2, 1 / 8)
    g = build_grid(dom, (1 / 4, 1 / 8))
    part = classify_nodes(g, dom)
    assert np.all(restrict(lambda x: np.ones(len(x)), g, part.unknown) == 1.0)
    vals = restrict(lambda x: x[:, 0], g, part.unknown)
    assert np.allclose(vals, np.repeat([0.25, 0.5, 0.75], 7))
    u = lambda x: np.sum(x**2 * (1 - x**2), axis=1)
    assert restrict(u, g, np.array([[2, 4]]))[0] == pytest.approx(0.375, abs=1e-15)


def test_interaction_layer_membership():
    dom = unit(2, 0.2)
    pts = np.array([[0.5, 0.5], [-0.1, 0.5], [-0.3, 0.5], [1.1, 1.1], [1.15, 1.15]])
    assert dom.in_interaction_layer(pts).tolist() == [False, True, False, True, False]


@settings(max_examples=40, deadline=None)
@given(h1=st.sampled_from([1 / 4, 1 / 8, 1 / 10, 1 / 16]),
       ratio=st.sampled_from([1.0, 2.0, 4.0]),
       delta=st.floats(0.01, 0.4))
def test_node_enumeration_properties(h1, ratio, delta):
    dom = unit(2, delta)
    g = build_grid(dom, (h1, h1 / ratio))
    k = g.all_indices()
    x = g.coords(k)
    # bijection between indices and coordinates
    assert np.array_equal(np.rint(x / np.asarray(g.h)).astype(int), k)
    pad = delta + 2 * g.h_max
    assert np.all(x >= -pad - 1e-12) and np.all(x <= 1 + pad + 1e-12)
    part = classify_nodes(g, dom)
    # every interior node's delta-ball, widened by the basis support, is covered
    covered = {tuple(v) for v in part.unknown} | {tuple(v) for v in part.constrained}
    reach = np.ceil((delta + 2 * np.asarray(g.h)) / np.asarray(g.h)).astype(int)
    for kk in part.unknown[:: max(1, part.n_unknown // 5)]:
        for off in [(-reach[0], -reach[1]), (reach[0], reach[1]), (-reach[0], 0), (0, reach[1])]:
            m = kk + np.array(off)
            if np.linalg.norm(off * np.asarray(g.h)) <= delta + 2 * g.h_max:
                assert tuple(m) in covered
