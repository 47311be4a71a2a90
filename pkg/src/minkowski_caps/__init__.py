"""Discrete Minkowski problem solver and convex bodies bounded by a K = 1 surface and flat discs."""

from __future__ import annotations

from .errors import MinkowskiCapsError
from .pipeline import ConstructionConfig, construct, run_sweep
from .polytope import ConvexPolytope, SupportVector, realize
from .profile import PunctureSet, build_density, find_equilibrium_weights, minimum_n
from .solver import MinkowskiProblem, SolveOptions, solve
from .spherical import build_grid

__version__ = "0.1.0"

__all__ = [
    "ConstructionConfig", "ConvexPolytope", "MinkowskiCapsError", "MinkowskiProblem",
    "PunctureSet", "SolveOptions", "SupportVector", "build_density", "build_grid",
    "construct", "find_equilibrium_weights", "minimum_n", "realize", "run_sweep", "solve",
]
