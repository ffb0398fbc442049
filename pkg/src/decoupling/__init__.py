"""Block-operator splitting schemes for coupled linear evolution problems."""
from .blockalg import (BlockOperator, BlockVector, Metric, NormKind, StructureError,
                       alternating_triangular_split, column_split, extract_diagonal, inner,
                       norm_in, row_split, triangular_parts)
from .linsolve import CGSolver, SolveReport, SolverError, cg_solve, power_max_eig
from .schemes import (SchemeKind, SchemeSpec, StabilityWarning, SteppingState, TimeGrid,
                      first_step_init, integrate, make_stepper, run, step, trajectory)

__all__ = [
    "BlockOperator", "BlockVector", "Metric", "NormKind", "StructureError",
    "alternating_triangular_split", "column_split", "extract_diagonal", "inner", "norm_in",
    "row_split", "triangular_parts",
    "CGSolver", "SolveReport", "SolverError", "cg_solve", "power_max_eig",
    "SchemeKind", "SchemeSpec", "StabilityWarning", "SteppingState", "TimeGrid",
    "first_step_init", "integrate", "make_stepper", "run", "step", "trajectory",
]
