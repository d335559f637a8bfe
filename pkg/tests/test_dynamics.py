from dataclasses import replace

import numpy as np
import pytest

from conftest import system
from heisenlab import group
from heisenlab.automorphisms import GMatrix
from heisenlab.dynamics import (Perturbation, Term, estimate_bundle, estimate_constants,
                                estimate_splitting, invariance_residuals, make_system)
from heisenlab.group import Lattice
from heisenlab.scenario import Scenario, ScenarioError, example_scenario, standard_perturbation

LAM = (3 + 5 ** 0.5) / 2


def _pts(n=50, seed=0, scale=3.0):
    return np.random.default_rng(seed).uniform(-scale, scale, (n, 3))


def test_perturbation_margin_enforced():
    with pytest.raises(ValueError, match="too large"):
        Perturbation((Term("X", 1, 0, "cos", 0.1),))
    with pytest.raises(ValueError):
        Term("W", 1, 0, "cos", 0.01)
    assert standard_perturbation(0.05).lipschitz_bound == pytest.approx(2 * np.pi * 0.05)


def test_perturbation_inverse_round_trip():
    psi = standard_perturbation(0.05)
    p = _pts(200)
    assert np.abs(psi.inverse(psi(p)) - p).max() < 1e-12


@pytest.mark.parametrize("normal", [False, True])
def test_lift_round_trip(amplitude, normal):
    f = system(amplitude, normal)
    p = _pts()
    assert np.abs(f.apply_inverse(f.apply(p)) - p).max() < 1e-10


def test_lattice_equivariance(amplitude):
    f = system(amplitude)
    phi = f.algebraic_part
    p = _pts(20)
    for g in Lattice(2).generators:
        lhs = f.apply(group.mul(g, p))
        rhs = group.mul(phi(g), f.apply(p))
        assert np.abs(lhs - rhs).max() < 1e-12 * (1 + np.abs(rhs).max())


def test_normal_form_equivariance_under_conjugated_lattice():
    f = system(0.03, True)
    phi = f.algebraic_part
    p = _pts(20)
    for g in Lattice(2).generators:
        d = f.deck(g)
        lhs = f.apply(group.mul(d, p))
        rhs = group.mul(phi(d), f.apply(p))
        assert np.abs(lhs - rhs).max() < 1e-10


@pytest.mark.parametrize("normal", [False, True])
def test_jacobian_against_finite_differences(normal):
    f = system(0.05, normal)
    p = _pts(10, seed=1, scale=1.0)
    jac = f.jacobian(p)
    h = 1e-6
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        fd = (f.apply(p + e) - f.apply(p - e)) / (2 * h)
        assert np.abs(jac[..., :, j] - fd).max() < 1e-6


def test_derivative_chain_rule():
    f = system(0.05)
    p = _pts(10, seed=2, scale=1.0)
    two = f.derivative_frame(f.apply(p)) @ f.derivative_frame(p)
    g = make_system(GMatrix(((2, 1), (1, 1))), standard_perturbation(0.05), Lattice(2))
    g2 = replace(g, power=2)
    assert np.abs(g2.derivative_frame(p) - two).max() < 1e-9


def test_unperturbed_splitting_is_eigenframe():
    f = system(0.0, True)
    split = estimate_splitting(f, _pts(20), 40)
    ref_s, ref_u, ref_c = f.frame_eigenvectors()
    for e, ref in ((split.eS, ref_s), (split.eU, ref_u), (split.eC, ref_c)):
        cos = np.abs(e @ ref)
        assert np.arccos(np.minimum(cos, 1.0)).max() < 1e-10
    assert np.allclose(f.frame_eigenvectors(), np.eye(3)[[0, 1, 2]])


def test_perturbed_splitting_is_invariant():
    f = system(0.03, True)
    res = invariance_residuals(f, _pts(30), 40)
    assert max(res.values()) < 1e-6


def test_bundle_consistency_with_full_splitting():
    f = system(0.03, True)
    p = _pts(10)
    split = estimate_splitting(f, p, 30)
    for name, b in (("eU", "u"), ("eS", "s"), ("eC", "c")):
        assert np.abs(estimate_bundle(f, p, 30, b) - getattr(split, name)).max() < 1e-12


def test_constants_unperturbed_match_eigenvalues():
    c = estimate_constants(system(0.0, True), 50, 20, rng=0)
    assert c.ok
    assert np.allclose(c.as_tuple(), (1 / LAM, 1, 1, LAM, 1), atol=1e-10)


def test_constants_perturbed_dominated():
    c = estimate_constants(system(0.05, True), 100, 20, rng=0)
    assert c.ok and c.mu <= LAM + 0.05 and c.margin > 0.1


def test_scenario_gate():
    with pytest.raises(ScenarioError):
        example_scenario(1.0)
    with pytest.raises(ScenarioError, match="preserve"):
        example_scenario(0.0, k=1)
    with pytest.raises(ScenarioError):
        Scenario.from_json({"lattice": {"k": 0}, "matrix": {"A": [[2, 1], [1, 1]]}})
    with pytest.raises(ScenarioError, match="partially hyperbolic"):
        Scenario.from_json({"lattice": {"k": 1}, "matrix": {"A": [[1, 1], [0, 1]]}})


def test_scenario_json_round_trip():
    sc = example_scenario(0.03, seed=7)
    again = Scenario.from_json(sc.to_json())
    assert again.to_json() == sc.to_json()
    p = _pts(5)
    assert np.array_equal(again.system().apply(p), sc.system().apply(p))
