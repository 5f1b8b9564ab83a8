"""In-memory MILP representation shared by every solver backend."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import sparse

FEAS_TOL = 1e-7
INT_TOL = 1e-5


class VarKind(str, Enum):
    CONTINUOUS = "continuous"
    BINARY = "binary"


class Sense(str, Enum):
    LE = "<="
    EQ = "="
    GE = ">="


class Status(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    LIMIT = "limit"


@dataclass
class Constraint:
    name: str
    coefs: dict  # var index -> coefficient
    sense: Sense
    rhs: float


class LinearModel:
    """Minimisation MILP with named variables and named rows.

    Variables and rows keep insertion order, which fixes the MPS layout.
    """

    def __init__(self, name: str = "model"):
        self.name = name
        self.var_names: list[str] = []
        self.kinds: list[VarKind] = []
        self.lower: list[float] = []
        self.upper: list[float] = []
        self.constraints: list[Constraint] = []
        self.objective: dict[int, float] = {}
        self.objective_constant = 0.0
        self._index: dict[str, int] = {}
        self._row_names: set[str] = set()

    # -- construction -----------------------------------------------------
    def add_var(self, name: str, kind=VarKind.CONTINUOUS, lower: float = 0.0,
                upper: float = math.inf) -> int:
        if name in self._index:
            raise ValueError(f"duplicate variable name {name!r}")
        kind = VarKind(kind)
        if kind is VarKind.BINARY:
            lower, upper = max(0.0, lower), min(1.0, upper)
        if lower > upper:
            raise ValueError(f"variable {name!r} has lower {lower} > upper {upper}")
        idx = len(self.var_names)
        self._index[name] = idx
        self.var_names.append(name)
        self.kinds.append(kind)
        self.lower.append(float(lower))
        self.upper.append(float(upper))
        return idx

    def add_constraint(self, name: str, coefs: dict, sense, rhs: float) -> int:
        if name in self._row_names:
            raise ValueError(f"duplicate constraint name {name!r}")
        row = {}
        n = len(self.var_names)
        for j, a in coefs.items():
            if isinstance(j, str):
                j = self._index[j]
            if not 0 <= j < n:
                raise ValueError(f"constraint {name!r} references unknown variable {j}")
            if a != 0:
                row[j] = row.get(j, 0.0) + float(a)
        self._row_names.add(name)
        self.constraints.append(Constraint(name, row, Sense(sense), float(rhs)))
        return len(self.constraints) - 1

    def add_objective(self, j, coef: float) -> None:
        if isinstance(j, str):
            j = self._index[j]
        if coef:
            self.objective[j] = self.objective.get(j, 0.0) + float(coef)

    def index(self, name: str) -> int:
        return self._index[name]

    def __contains__(self, name: str) -> bool:
        return name in self._index

    # -- queries ----------------------------------------------------------
    @property
    def n_vars(self) -> int:
        return len(self.var_names)

    @property
    def n_constraints(self) -> int:
        return len(self.constraints)

    @property
    def binary_indices(self) -> list[int]:
        return [j for j, k in enumerate(self.kinds) if k is VarKind.BINARY]

    @property
    def n_binaries(self) -> int:
        return len(self.binary_indices)

    def copy(self) -> "LinearModel":
        new = LinearModel(self.name)
        new.var_names = list(self.var_names)
        new.kinds = list(self.kinds)
        new.lower = list(self.lower)
        new.upper = list(self.upper)
        new.constraints = [Constraint(c.name, dict(c.coefs), c.sense, c.rhs)
                           for c in self.constraints]
        new.objective = dict(self.objective)
        new.objective_constant = self.objective_constant
        new._index = dict(self._index)
        new._row_names = set(self._row_names)
        return new

    def fix(self, name_or_index, value: float) -> None:
        j = self._index[name_or_index] if isinstance(name_or_index, str) else name_or_index
        self.lower[j] = self.upper[j] = float(value)

    def objective_value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return self.objective_constant + sum(c * x[j] for j, c in self.objective.items())

    def to_arrays(self):
        """Return ``(c, A, row_lo, row_hi, lb, ub, integrality)`` with A in CSR form."""
        n = self.n_vars
        c = np.zeros(n)
        for j, v in self.objective.items():
            c[j] = v
        rows, cols, vals = [], [], []
        lo = np.empty(self.n_constraints)
        hi = np.empty(self.n_constraints)
        for i, con in enumerate(self.constraints):
            for j, a in con.coefs.items():
                rows.append(i)
                cols.append(j)
                vals.append(a)
            lo[i] = con.rhs if con.sense is not Sense.LE else -np.inf
            hi[i] = con.rhs if con.sense is not Sense.GE else np.inf
        A = sparse.csr_matrix((vals, (rows, cols)), shape=(self.n_constraints, n))
        integrality = np.array([k is VarKind.BINARY for k in self.kinds], dtype=int)
        return c, A, lo, hi, np.array(self.lower), np.array(self.upper), integrality

    def max_violation(self, x) -> float:
        """Largest bound, row or integrality violation of point ``x``."""
        x = np.asarray(x, dtype=float)
        _, A, lo, hi, lb, ub, integ = self.to_arrays()
        worst = 0.0
        if x.size:
            worst = max(worst, float(np.max(np.maximum(lb - x, 0))),
                        float(np.max(np.maximum(x - ub, 0))))
            if integ.any():
                xi = x[integ.astype(bool)]
                worst = max(worst, float(np.max(np.abs(xi - np.round(xi)))))
        if self.n_constraints:
            act = A @ x
            worst = max(worst, float(np.max(np.maximum(lo - act, 0))),
                        float(np.max(np.maximum(act - hi, 0))))
        return worst


@dataclass
class Solution:
    status: Status
    values: dict = field(default_factory=dict)
    objective: float = math.nan

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL

    def __getitem__(self, name: str) -> float:
        return self.values[name]

    def vector(self, model: LinearModel) -> np.ndarray:
        return np.array([self.values.get(n, 0.0) for n in model.var_names])


def solution_from_vector(model: LinearModel, x, status=Status.OPTIMAL) -> Solution:
    x = np.asarray(x, dtype=float)
    return Solution(Status(status), dict(zip(model.var_names, x.tolist())),
                    float(model.objective_value(x)))
