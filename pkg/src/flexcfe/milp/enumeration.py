"""Exhaustive reference MILP solver: every binary assignment, LP for each.

Assignments are visited depth first (0 before 1) and a subtree is dropped
when its LP relaxation cannot beat the incumbent, so the search is exact and
ties resolve to the lexicographically smallest assignment.
"""

from __future__ import annotations

import math

import numpy as np

from .model import FEAS_TOL, LinearModel, Sense, Solution, Status, VarKind
from .simplex import solve_simplex

MAX_BINARIES = 20


class TooManyBinaries(ValueError):
    pass


def propagate_binaries(model: LinearModel, lower, upper, max_passes: int = 50) -> bool:
    """Tighten binary bounds implied by single rows, in place.

    Returns False when the bounds become contradictory.
    """
    binary = [k is VarKind.BINARY for k in model.kinds]
    for _ in range(max_passes):
        changed = False
        for con in model.constraints:
            for sign, active in ((1.0, con.sense in (Sense.LE, Sense.EQ)),
                                 (-1.0, con.sense in (Sense.GE, Sense.EQ))):
                if not active:
                    continue
                # sign * row <= sign * rhs
                rhs = sign * con.rhs
                min_terms = {}
                n_inf = 0
                total = 0.0
                for j, a in con.coefs.items():
                    a = sign * a
                    v = a * (lower[j] if a > 0 else upper[j])
                    if math.isinf(v):
                        n_inf += 1
                    else:
                        total += v
                    min_terms[j] = v
                for j, a in con.coefs.items():
                    if not binary[j] or lower[j] == upper[j]:
                        continue
                    a = sign * a
                    own = min_terms[j]
                    if n_inf - (1 if math.isinf(own) else 0) > 0:
                        continue
                    rest = total - (0.0 if math.isinf(own) else own)
                    tol = FEAS_TOL * max(1.0, abs(rhs))
                    if a > 0 and rest + a > rhs + tol:
                        upper[j] = 0.0
                        changed = True
                    elif a < 0 and rest > rhs + tol:
                        lower[j] = 1.0
                        changed = True
                    if lower[j] > upper[j]:
                        return False
        if not changed:
            return True
    return True


def free_binaries(model: LinearModel, lower=None, upper=None) -> list[int]:
    lower = model.lower if lower is None else lower
    upper = model.upper if upper is None else upper
    return [j for j in model.binary_indices if lower[j] < upper[j]]


def solve_enumeration(model: LinearModel, max_binaries: int = MAX_BINARIES,
                      presolve: bool = True) -> Solution:
    """Exact MILP optimum by enumerating binary assignments.

    Binaries already fixed by their bounds (or by single-row implications
    when ``presolve`` is on) are not counted against ``max_binaries``.
    """
    lower = list(model.lower)
    upper = list(model.upper)
    if presolve and not propagate_binaries(model, lower, upper):
        return Solution(Status.INFEASIBLE)
    free = free_binaries(model, lower, upper)
    if len(free) > max_binaries:
        raise TooManyBinaries(
            f"{len(free)} free binaries exceed the enumeration cap of {max_binaries}")

    best = None
    best_obj = math.inf
    stack = [(0, lower, upper)]
    while stack:
        depth, lo, hi = stack.pop()
        relax = solve_simplex(model, lo, hi)
        if relax.status is Status.UNBOUNDED:
            return relax
        if not relax.optimal:
            continue
        if relax.objective >= best_obj - 1e-9 * max(1.0, abs(best_obj)):
            continue
        if depth == len(free):
            best, best_obj = relax, relax.objective
            continue
        j = free[depth]
        for value in (1.0, 0.0):  # pushed in reverse so 0 is explored first
            lo2, hi2 = list(lo), list(hi)
            lo2[j] = hi2[j] = value
            stack.append((depth + 1, lo2, hi2))
    if best is None:
        return Solution(Status.INFEASIBLE)
    for j in model.binary_indices:
        name = model.var_names[j]
        best.values[name] = float(np.round(best.values[name]))
    return best
