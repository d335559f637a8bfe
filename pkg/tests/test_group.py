import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from heisenlab import group
from heisenlab.group import Lattice, LatticeElement

coord = st.floats(-50, 50, allow_nan=False, allow_infinity=False)
point = st.tuples(coord, coord, coord).map(np.array)


def test_product_matches_matrix_oracle():
    a, b = np.array([1.0, 2.0, 3.0]), np.array([4.0, 5.0, 6.0])
    assert group.mul(a, b).tolist() == [5.0, 7.0, 14.0]
    m = group.to_matrix(a) @ group.to_matrix(b)
    assert np.array_equal(group.from_matrix(m), group.mul(a, b))


def test_inverse_of_example():
    assert group.inv([1.0, 2.0, 3.0]).tolist() == [-1.0, -2.0, -1.0]
    assert group.inv([0.0, 0.0, 0.0]).tolist() == [0.0, 0.0, 0.0]


@settings(max_examples=200, deadline=None)
@given(point, point, point)
def test_associativity(p, q, r):
    lhs = group.mul(group.mul(p, q), r)
    rhs = group.mul(p, group.mul(q, r))
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12 * (1 + np.abs(lhs).max()))


@settings(max_examples=200, deadline=None)
@given(point)
def test_inverse_both_sides(p):
    scale = 1 + np.abs(p).max() ** 2
    assert np.abs(group.mul(p, group.inv(p))).max() <= 1e-12 * scale
    assert np.abs(group.mul(group.inv(p), p)).max() <= 1e-12 * scale


@settings(max_examples=100, deadline=None)
@given(point, point)
def test_commutator_is_central(p, q):
    c = group.commutator(p, q)
    scale = 1 + np.abs(p).max() * np.abs(q).max()
    assert abs(c[0]) + abs(c[1]) <= 1e-12 * scale
    assert c[2] == pytest.approx(p[0] * q[1] - p[1] * q[0], abs=1e-11 * scale)


def test_reduce_example():
    gamma, q = group.reduce([1.5, -0.25, 0.8], Lattice(1))
    assert gamma.tolist() == [1.0, -1.0, 0.0]
    assert np.allclose(q, [0.5, 0.75, 0.05], atol=1e-15)


@settings(max_examples=300, deadline=None)
@given(point, st.integers(1, 6))
def test_reduce_round_trip(p, k):
    lat = Lattice(k)
    gamma, q = group.reduce(p, lat)
    assert 0 <= q[0] < 1 and 0 <= q[1] < 1 and 0 <= q[2] < 1 / k
    g = lat.nearest(gamma, tol=1e-9)
    assert g is not None and np.array_equal(g.as_array(), gamma)
    assert np.allclose(group.mul(gamma, q), p, atol=1e-12 * (1 + np.abs(p).max() ** 2))


def test_reduce_vectorized_matches_pointwise():
    rng = np.random.default_rng(3)
    pts = rng.uniform(-20, 20, (50, 3))
    gam, q = group.reduce(pts, Lattice(3))
    for p, g1, q1 in zip(pts, gam, q):
        g2, q2 = group.reduce(p, Lattice(3))
        assert np.array_equal(g1, g2) and np.array_equal(q1, q2)


def test_lattice_element_exact_product():
    a = LatticeElement(1, 2, 1, 3)
    b = LatticeElement(-4, 5, 2, 3)
    prod = a * b
    assert prod.z == Fraction(1, 3) + Fraction(2, 3) + 1 * 5
    assert (a * a.inverse()) == LatticeElement(0, 0, 0, 3)
    assert np.allclose(prod.as_array(), group.mul(a.as_array(), b.as_array()))


@pytest.mark.parametrize("k", [0, -1])
def test_lattice_rejects_bad_index(k):
    with pytest.raises(ValueError):
        Lattice(k)


def test_lattice_membership():
    lat = Lattice(2)
    assert lat.contains_exact(1, -3, Fraction(1, 2))
    assert not lat.contains_exact(1, -3, Fraction(1, 3))
    assert lat.nearest([0.4, 0.0, 0.0]) is None


def test_exp_log_inverse():
    rng = np.random.default_rng(0)
    w = rng.normal(size=(100, 3)) * 5
    assert np.allclose(group.log_h(group.exp_h(w)), w, atol=1e-12)
    # one-parameter subgroups: exp(sw) exp(tw) = exp((s+t)w)
    assert np.allclose(group.mul(group.exp_h(0.3 * w), group.exp_h(0.7 * w)), group.exp_h(w), atol=1e-12)


def test_frame_round_trip_and_left_invariance():
    rng = np.random.default_rng(1)
    p, v = rng.normal(size=(20, 3)), rng.normal(size=(20, 3))
    assert np.allclose(group.frame_to_ambient(p, group.frame_coords(p, v)), v)
    # left translation by g has derivative with Z-row (0, g_x, 1); frame coordinates are preserved
    g = np.array([1.7, -0.4, 2.0])
    dL = np.array([[1, 0, 0], [0, 1, 0], [0, g[0], 1.0]])
    assert np.allclose(group.frame_coords(group.mul(g, p), v @ dL.T), group.frame_coords(p, v))


def test_commutator_path_length():
    z = 2.25
    pts = group.commutator_path(z)
    assert np.allclose(pts[-1], [0, 0, z])
    assert group.path_length(pts) == pytest.approx(4 * math.sqrt(z), rel=1e-12)
