"""Partially hyperbolic maps on Heisenberg nilmanifolds: group arithmetic, automorphism
normal forms, invariant splittings, slab and growth verifiers, and conjugacies."""
from .report import VERSION as __version__

__all__ = ["__version__"]
