"""Scenario files: lattice, matrix, perturbation and seed, validated at load."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .automorphisms import GMatrix, from_derivative, is_partially_hyperbolic, preserves_lattice
from .dynamics import NilDiffeo, Perturbation, Term, make_system, normal_form
from .group import Lattice

EXAMPLE_MATRIX = ((2.0, 1.0), (1.0, 1.0))


class ScenarioError(ValueError):
    """Input rejected at the gate (exit code 2 on the command line)."""


@dataclass
class Scenario:
    lattice: Lattice
    matrix: GMatrix
    perturbation: Perturbation = field(default_factory=Perturbation)
    seed: int = 0
    tolerances: dict = field(default_factory=dict)
    horizons: dict = field(default_factory=dict)

    def __post_init__(self):
        ok, eig = is_partially_hyperbolic(self.matrix)
        if not ok:
            raise ScenarioError(f"matrix is not partially hyperbolic (eigenvalues {eig})")
        if not preserves_lattice(from_derivative(self.matrix), self.lattice):
            raise ScenarioError(f"automorphism does not preserve Gamma_{self.lattice.k}")

    def system(self) -> NilDiffeo:
        return make_system(self.matrix, self.perturbation, self.lattice)

    def normal_form(self) -> NilDiffeo:
        return normal_form(self.system())

    def to_json(self) -> dict:
        out = {"lattice": self.lattice.to_json(), "matrix": self.matrix.to_json(),
               "perturbation": self.perturbation.to_json(), "seed": int(self.seed)}
        if self.tolerances:
            out["tolerances"] = dict(self.tolerances)
        if self.horizons:
            out["horizons"] = dict(self.horizons)
        return out

    @classmethod
    def from_json(cls, data: dict) -> "Scenario":
        try:
            k = int(data["lattice"]["k"])
            if k < 1:
                raise ScenarioError(f"lattice index must be >= 1, got {k}")
            lattice = Lattice(k)
            matrix = GMatrix.from_json(data["matrix"])
            pert = Perturbation.from_json(data.get("perturbation", []))
        except ScenarioError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioError(f"invalid scenario: {exc}") from None
        return cls(lattice, matrix, pert, int(data.get("seed", 0)),
                   dict(data.get("tolerances", {})), dict(data.get("horizons", {})))

    @classmethod
    def load(cls, path) -> "Scenario":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ScenarioError(f"cannot read scenario {path}: {exc}") from None
        return cls.from_json(data)


def standard_perturbation(amplitude: float) -> Perturbation:
    """Three-term trigonometric perturbation whose invertibility margin is 2 pi amplitude."""
    a = float(amplitude)
    return Perturbation((Term("X", 1, 0, "cos", 0.4 * a), Term("Y", 0, 1, "sin", 0.4 * a),
                         Term("Z", 1, 1, "cos", 0.2 * a)))


def example_scenario(amplitude: float = 0.0, k: int = 2, seed: int = 0) -> Scenario:
    """The automorphism with derivative [[2,1],[1,1]] on Gamma_k, plus the standard perturbation."""
    try:
        pert = standard_perturbation(amplitude)
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None
    return Scenario(Lattice(k), GMatrix(EXAMPLE_MATRIX), pert, seed)
