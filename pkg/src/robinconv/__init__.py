"""Positive solutions of Robin p-Laplacian problems with convection.

P1 finite elements on simplicial meshes, the principal Robin eigenpair, a
frozen-convection solver for the epsilon-perturbed problem, continuation to
epsilon = 0, and Picone-identity diagnostics against collapse.
"""
from .assembly import AuxiliaryProblem, ProblemSpec
from .eigen import EigenOptions, EigenPair, coercivity_margin, principal_eigenpair
from .mesh import Mesh, build_interval_mesh, build_rectangle_mesh
from .picone import collapse_test, picone_density, picone_integral
from .reaction import (
    ExampleReactionParams,
    ReactionSpec,
    check_all,
    default_grid,
    example_reaction,
    linear_reaction,
    zero_reaction,
)
from .solver import (
    EpsilonSchedule,
    SolverOptions,
    check_solution,
    continuation_run,
    solve_auxiliary,
)

__version__ = "0.1.0"
