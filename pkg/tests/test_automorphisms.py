import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from heisenlab import group
from heisenlab.automorphisms import (GMatrix, NotAnAutomorphism, algebraic_part, conjugate_to_diagonal,
                                     displacement_sup, eigenvalues_2x2, from_derivative,
                                     is_partially_hyperbolic, lattice_normalizer, preserves_lattice,
                                     swap_automorphism)
from heisenlab.group import Lattice

EXAMPLE = GMatrix(((2, 1), (1, 1)))
SQ5 = math.sqrt(5)

small_int = st.integers(-3, 3)


def sl2z():
    """Random SL(2, Z) matrices as products of elementary moves."""
    moves = st.lists(st.sampled_from([((1, 1), (0, 1)), ((1, 0), (1, 1)), ((0, -1), (1, 0))]),
                     min_size=1, max_size=6)
    return moves.map(lambda ms: np.linalg.multi_dot([np.eye(2)] + [np.array(m) for m in ms] + [np.eye(2)]))


def test_example_automorphism_quadratic_part():
    phi = from_derivative(EXAMPLE)
    assert phi.quad == (1.0, 1.0, 0.5)
    assert phi.c == 1.0
    assert phi([1.0, 2.0, 3.0]).tolist() == [4.0, 3.0, 3 + 1 + 2 + 0.5 * 4]


def test_example_lattice_preservation():
    phi = from_derivative(EXAMPLE)
    assert preserves_lattice(phi, Lattice(2))
    assert not preserves_lattice(phi, Lattice(1))


@settings(max_examples=60, deadline=None)
@given(sl2z(), small_int, small_int)
def test_from_derivative_is_homomorphism(A, alpha, beta):
    phi = from_derivative(GMatrix(A, alpha, beta))
    rng = np.random.default_rng(0)
    p, q = rng.uniform(-3, 3, (2, 20, 3))
    lhs = phi(group.mul(p, q))
    rhs = group.mul(phi(p), phi(q))
    assert np.allclose(lhs, rhs, atol=1e-9)
    # derivative in the frame is the constant GMatrix
    assert np.allclose(phi.frame_derivative(p), GMatrix(A, alpha, beta).matrix, atol=1e-9)


def test_inverse_and_compose():
    phi = from_derivative(GMatrix(((2, 1), (1, 1)), 0.5, -1.0))
    p = np.random.default_rng(2).normal(size=(10, 3))
    assert np.allclose(phi.inverse()(phi(p)), p, atol=1e-12)
    assert np.allclose(phi.compose(phi)(p), phi(phi(p)), atol=1e-10)


def test_swap_exchanges_projections():
    p = np.random.default_rng(4).normal(size=(5, 3))
    assert np.allclose(group.proj_u(swap_automorphism()(p)), group.proj_s(p))


def test_eigenvalue_oracle():
    big, small = eigenvalues_2x2(EXAMPLE.A)
    assert big == pytest.approx((3 + SQ5) / 2, abs=1e-15)
    assert small == pytest.approx((3 - SQ5) / 2, abs=1e-15)
    ok, eig = is_partially_hyperbolic(EXAMPLE)
    assert ok and eig[2] == 1.0


@pytest.mark.parametrize("A", [((1, 0), (0, 1)), ((1, 1), (0, 1)), ((0, -1), (1, 0)), ((2, 0), (0, 2))])
def test_non_hyperbolic_rejected(A):
    ok, _ = is_partially_hyperbolic(GMatrix(A))
    assert not ok
    with pytest.raises(NotAnAutomorphism):
        conjugate_to_diagonal(GMatrix(A))


def test_normal_form_of_example_matrix():
    P, D = conjugate_to_diagonal(EXAMPLE)
    T = EXAMPLE.matrix
    got = P.matrix @ T @ np.linalg.inv(P.matrix)
    want = np.diag([(3 - SQ5) / 2, (3 + SQ5) / 2, 1.0])
    assert np.abs(got - want).max() < 1e-10
    assert np.allclose(D.matrix, want)


def test_normal_form_removes_shear():
    T = GMatrix(((2, 1), (1, 1)), 0.7, -0.3)
    P, _ = conjugate_to_diagonal(T)
    got = P.matrix @ T.matrix @ np.linalg.inv(P.matrix)
    assert np.abs(got[2, :2]).max() < 1e-12
    assert np.abs(got[:2, :2] - np.diag(np.diag(got[:2, :2]))).max() < 1e-12


def test_algebraic_part_of_automorphism_itself():
    phi = from_derivative(EXAMPLE)
    got = algebraic_part(phi, Lattice(2), rng=0)
    assert got.A == phi.A and got.quad == phi.quad and got.alpha == 0.0
    assert displacement_sup(phi, got, Lattice(2), rng=0) < 1e-14


def test_lattice_normalizer_sends_generators_home():
    phi = from_derivative(EXAMPLE)
    k = 2
    a, b, c = phi(Lattice(k).generators)
    N = lattice_normalizer(a, b, c, k)
    assert np.allclose(N(np.stack([a, b, c])), Lattice(k).generators, atol=1e-10)


def test_lattice_normalizer_rejects_bad_relation():
    with pytest.raises(ValueError):
        lattice_normalizer([1, 0, 0], [0, 1, 0], [0, 0, 0.3], 2)
