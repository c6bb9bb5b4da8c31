"""Wave-equation solver with C^1/C^2 Hermite collocation time integrators."""

from .mesh import DIRICHLET, NEUMANN, Mesh, Rect, build_rect_mesh, refine_uniform
from .fespace import (FeSpace, assemble_mass, assemble_stiffness, build_space,
                      eval_field, h1_seminorm, interpolate, l2_norm)
from .linalg import (DirectSolver, LinOp, SolveFailure, SolveReport, cg_solve,
                     direct_solve, gmres_solve, make_precond_P)
from .problem import WaveProblem, mms_u1, mms_u2, problem_by_name, shm_problem
from .timebasis import (CUBIC, QUINTIC, HermiteBasis, SlabCoeffs, basis_eval,
                        hermite_basis, hermite_coeffs_of, slab_eval)

__all__ = [
    "DIRICHLET", "NEUMANN", "Mesh", "Rect", "build_rect_mesh", "refine_uniform",
    "FeSpace", "assemble_mass", "assemble_stiffness", "build_space",
    "eval_field", "h1_seminorm", "interpolate", "l2_norm",
    "DirectSolver", "LinOp", "SolveFailure", "SolveReport", "cg_solve",
    "direct_solve", "gmres_solve", "make_precond_P",
    "WaveProblem", "mms_u1", "mms_u2", "problem_by_name", "shm_problem",
    "CUBIC", "QUINTIC", "HermiteBasis", "SlabCoeffs", "basis_eval",
    "hermite_basis", "hermite_coeffs_of", "slab_eval",
]
