"""Run an external MILP solver through files: MPS in, ``name value`` lines out."""

from __future__ import annotations

import logging
import math
import os
import shlex
import subprocess
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path

from .model import FEAS_TOL, INT_TOL, LinearModel, Solution, Status
from .mps import write_mps

log = logging.getLogger(__name__)

ENV_VAR = "CFE_SOLVER_CMD"
DEFAULT_TEMPLATE = f"{shlex.quote(sys.executable)} -m flexcfe.milp.highs_adapter {{mps}} {{sol}}"


class SolverError(RuntimeError):
    """The backend failed to run or produced an unreadable solution file."""


@dataclass(frozen=True)
class BackendConfig:
    command_template: str = DEFAULT_TEMPLATE
    timeout: float = 600.0
    feasibility_tol: float = FEAS_TOL
    integrality_tol: float = INT_TOL

    def __post_init__(self):
        for ph in ("{mps}", "{sol}"):
            if ph not in self.command_template:
                raise ValueError(f"command_template must contain the {ph} placeholder")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")

    @classmethod
    def from_env(cls, **kwargs) -> "BackendConfig":
        """Default backend, overridden by ``$CFE_SOLVER_CMD`` when set."""
        template = os.environ.get(ENV_VAR)
        if template:
            kwargs["command_template"] = template
        return cls(**kwargs)


def parse_solution_text(text: str, model: LinearModel) -> Solution:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise SolverError("empty solution file")
    head = lines[0].lower()
    if head in ("infeasible", "unbounded", "limit") and len(lines) == 1:
        return Solution(Status(head))
    parts = lines[0].split()
    if len(parts) != 2 or parts[0] != "objective":
        raise SolverError(f"solution file must start with 'objective <value>', got {lines[0]!r}")
    try:
        objective = float(parts[1])
        values = {}
        for ln in lines[1:]:
            name, val = ln.split()
            values[name] = float(val)
    except ValueError as exc:
        raise SolverError(f"unparseable solution line: {exc}") from None
    unknown = set(values) - set(model.var_names)
    if unknown:
        raise SolverError(f"solution names unknown variables, e.g. {sorted(unknown)[:3]}")
    missing = [n for n in model.var_names if n not in values]
    if missing:
        log.warning("solver omitted %d variables (e.g. %s); defaulting them to 0",
                    len(missing), missing[0])
        for n in missing:
            values[n] = 0.0
    return Solution(Status.OPTIMAL, {n: values[n] for n in model.var_names}, objective)


def solve_external(model: LinearModel, backend: BackendConfig | None = None) -> Solution:
    """Write ``model`` to MPS, run the backend command and read its solution."""
    backend = backend or BackendConfig.from_env()
    with tempfile.TemporaryDirectory(prefix="flexcfe-") as tmp:
        mps_path = Path(tmp) / "model.mps"
        sol_path = Path(tmp) / "model.sol"
        write_mps(model, mps_path)
        argv = [tok.replace("{mps}", str(mps_path)).replace("{sol}", str(sol_path))
                for tok in shlex.split(backend.command_template)]
        try:
            proc = subprocess.run(argv, capture_output=True, text=True, timeout=backend.timeout)
        except FileNotFoundError as exc:
            raise SolverError(f"solver command not found: {argv[0]}") from exc
        except subprocess.TimeoutExpired as exc:
            raise SolverError(f"solver timed out after {backend.timeout:g} s") from exc
        if proc.returncode != 0:
            raise SolverError(f"solver exited with code {proc.returncode}: "
                              f"{proc.stderr.strip()[-500:]}")
        if not sol_path.exists():
            raise SolverError("solver did not write a solution file")
        solution = parse_solution_text(sol_path.read_text(), model)
    if solution.optimal:
        _check_bounds(model, solution, backend)
    return solution


def _check_bounds(model: LinearModel, solution: Solution, backend: BackendConfig) -> None:
    tol = max(backend.feasibility_tol, backend.integrality_tol) * 10
    for j, name in enumerate(model.var_names):
        v = solution.values[name]
        if not math.isfinite(v) or v < model.lower[j] - tol or v > model.upper[j] + tol:
            raise SolverError(f"solver value {v} for {name} is outside its bounds")
