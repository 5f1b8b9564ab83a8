"""MILP representation, MPS output and solver backends."""

from .enumeration import MAX_BINARIES, TooManyBinaries, propagate_binaries, solve_enumeration
from .external import BackendConfig, SolverError, parse_solution_text, solve_external
from .model import (FEAS_TOL, INT_TOL, Constraint, LinearModel, Sense, Solution, Status,
                    VarKind)
from .mps import emit_mps, write_mps
from .simplex import solve_simplex

__all__ = [
    "BackendConfig", "Constraint", "FEAS_TOL", "INT_TOL", "LinearModel", "MAX_BINARIES",
    "Sense", "Solution", "SolverError", "Status", "TooManyBinaries", "VarKind", "emit_mps",
    "make_solver", "parse_solution_text", "propagate_binaries", "solve_enumeration",
    "solve_external", "solve_simplex", "write_mps",
]


def make_solver(backend="external", **kwargs):
    """Return a ``model -> Solution`` callable.

    ``backend`` is ``"external"`` (HiGHS adapter or ``$CFE_SOLVER_CMD``),
    ``"reference"`` (exhaustive enumeration), or a :class:`BackendConfig`.
    """
    if isinstance(backend, BackendConfig):
        return lambda model: solve_external(model, backend)
    if backend == "external":
        cfg = BackendConfig.from_env(**kwargs)
        return lambda model: solve_external(model, cfg)
    if backend == "reference":
        return lambda model: solve_enumeration(model, **kwargs)
    if callable(backend):
        return backend
    raise ValueError(f"unknown solver backend {backend!r}")
