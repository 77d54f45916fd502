"""Finite-difference laboratory for sign-changing Lane-Emden solutions.

Solves -Δu = |u|^{p-1} u with zero Dirichlet data on planar domains,
targeting least-energy nodal solutions, and verifies their large-p
concentration behaviour: energy and sup-norm limits, Liouville blow-up
profiles, Green's-function limit fields, nodal-line boundary contact, and
Pohozaev identities.
"""

from .elliptic import ConvergenceError, poisson_solve, smallest_eigenpairs
from .geometry import DomainSpec, Field, Grid, GeometryError, build_grid
from .nehari import NodalSolution, SolverOptions, morse_index, solve_least_energy_nodal

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError",
    "DomainSpec",
    "Field",
    "GeometryError",
    "Grid",
    "NodalSolution",
    "SolverOptions",
    "build_grid",
    "morse_index",
    "poisson_solve",
    "smallest_eigenpairs",
    "solve_least_energy_nodal",
    "__version__",
]
