"""Interior-penalty DG solver for 2D linear elasticity with a posteriori
error bounds."""

from .mesh import Mesh, build_structured, refine_nested, quality_report, validate
from .material import StiffnessTensor, spectral_bounds
from .space import DgSpace, DgField, project_function, project_cross_mesh
from .assembly import PenaltyConfig, assemble_ah, assemble_extended_A
from .linsolve import solve_spd, SolverError

__all__ = [
    "Mesh", "build_structured", "refine_nested", "quality_report", "validate",
    "StiffnessTensor", "spectral_bounds",
    "DgSpace", "DgField", "project_function", "project_cross_mesh",
    "PenaltyConfig", "assemble_ah", "assemble_extended_A",
    "solve_spd", "SolverError",
]

__version__ = "0.1.0"
