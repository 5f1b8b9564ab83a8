"""Dense two-phase primal simplex (Bland's rule).

This is the reference LP solver behind :func:`solve_enumeration`. It is
meant for small models (a few hundred rows) where exactness matters more
than speed.
"""

from __future__ import annotations

import math

import numpy as np

from .model import FEAS_TOL, LinearModel, Sense, Solution, Status, solution_from_vector

PIVOT_TOL = 1e-10


class _StandardForm:
    """min c'y s.t. A y = b, y >= 0 with x = offset + M y."""

    def __init__(self, model: LinearModel, lower=None, upper=None):
        n = model.n_vars
        lower = np.array(model.lower if lower is None else lower, dtype=float)
        upper = np.array(model.upper if upper is None else upper, dtype=float)
        cols = []  # (var index, sign)
        offset = np.zeros(n)
        bound_rows = []  # (column index, ub - lb)
        for j in range(n):
            lo, hi = lower[j], upper[j]
            if math.isfinite(lo):
                offset[j] = lo
                cols.append((j, 1.0))
                if math.isfinite(hi):
                    bound_rows.append((len(cols) - 1, hi - lo))
            elif math.isfinite(hi):
                offset[j] = hi
                cols.append((j, -1.0))
            else:
                cols.append((j, 1.0))
                cols.append((j, -1.0))
        k = len(cols)
        M = np.zeros((n, k))
        for col, (j, s) in enumerate(cols):
            M[j, col] = s

        rows, rhs, slack_sign = [], [], []
        for con in model.constraints:
            a = np.zeros(n)
            for j, v in con.coefs.items():
                a[j] = v
            rows.append(a @ M)
            rhs.append(con.rhs - a @ offset)
            slack_sign.append({Sense.LE: 1.0, Sense.GE: -1.0, Sense.EQ: 0.0}[con.sense])
        for col, width in bound_rows:
            r = np.zeros(k)
            r[col] = 1.0
            rows.append(r)
            rhs.append(width)
            slack_sign.append(1.0)

        m = len(rows)
        n_slack = sum(1 for s in slack_sign if s != 0)
        A = np.zeros((m, k + n_slack))
        b = np.array(rhs, dtype=float)
        if m:
            A[:, :k] = np.array(rows)
        col = k
        for i, s in enumerate(slack_sign):
            if s != 0:
                A[i, col] = s
                col += 1
        c = np.zeros(k + n_slack)
        obj = np.zeros(n)
        for j, v in model.objective.items():
            obj[j] = v
        c[:k] = obj @ M
        neg = b < 0
        A[neg] *= -1
        b[neg] *= -1
        self.A, self.b, self.c = A, b, c
        self.M, self.offset, self.k = M, offset, k

    def to_x(self, y):
        return self.offset + self.M @ y[: self.k]


def _pivot(tab, r, col):
    tab[r] /= tab[r, col]
    others = np.abs(tab[:, col]) > 0
    others[r] = False
    tab[others] -= np.outer(tab[others, col], tab[r])


def _run(tab, basis, n_cols, max_iter):
    """Minimise the reduced-cost row ``tab[-1]`` over the first n_cols columns."""
    m = len(basis)
    for _ in range(max_iter):
        red = tab[-1, :n_cols]
        entering = np.nonzero(red < -1e-9)[0]
        if entering.size == 0:
            return "optimal"
        col = entering[0]  # Bland: smallest index
        column = tab[:m, col]
        pos = column > PIVOT_TOL
        if not pos.any():
            return "unbounded"
        ratios = np.full(m, np.inf)
        ratios[pos] = tab[:m, -1][pos] / column[pos]
        best = ratios.min()
        ties = np.nonzero(ratios <= best + 1e-12 * max(1.0, abs(best)))[0]
        r = min(ties, key=lambda i: basis[i])
        _pivot(tab, r, col)
        basis[r] = col
    return "limit"


def solve_simplex(model: LinearModel, lower=None, upper=None, max_iter: int = 50_000) -> Solution:
    """Solve the LP relaxation of ``model`` (binaries treated as continuous in their bounds).

    ``lower``/``upper`` override the model's variable bounds without copying it.
    """
    lower = model.lower if lower is None else lower
    upper = model.upper if upper is None else upper
    if any(lo > hi + FEAS_TOL for lo, hi in zip(lower, upper)):
        return Solution(Status.INFEASIBLE)
    sf = _StandardForm(model, lower, upper)
    A, b, c = sf.A, sf.b, sf.c
    m, n = A.shape
    if m == 0:
        if np.any(c < -1e-12):
            return Solution(Status.UNBOUNDED)
        return solution_from_vector(model, sf.to_x(np.zeros(n)))

    # initial basis: reuse +1 slack columns where possible, artificials elsewhere
    basis = [-1] * m
    for col in range(sf.k, n):
        rows = np.nonzero(A[:, col])[0]
        if rows.size == 1 and A[rows[0], col] > 0 and basis[rows[0]] == -1:
            basis[rows[0]] = col
    art_rows = [i for i in range(m) if basis[i] == -1]
    n_art = len(art_rows)
    tab = np.zeros((m + 1, n + n_art + 1))
    tab[:m, :n] = A
    tab[:m, -1] = b
    for a, i in enumerate(art_rows):
        tab[i, n + a] = 1.0
        basis[i] = n + a

    if n_art:
        tab[-1, n:n + n_art] = 1.0
        for i in art_rows:
            tab[-1] -= tab[i]
        status = _run(tab, basis, n + n_art, max_iter)
        if status == "limit":
            return Solution(Status.LIMIT)
        scale = max(1.0, float(np.max(np.abs(b))))
        if -tab[-1, -1] > FEAS_TOL * scale:
            return Solution(Status.INFEASIBLE)
        # drive zero-level artificials out of the basis
        keep = []
        for i in range(m):
            if basis[i] >= n:
                cand = np.nonzero(np.abs(tab[i, :n]) > 1e-9)[0]
                if cand.size:
                    _pivot(tab, i, cand[0])
                    basis[i] = cand[0]
                    keep.append(i)
            else:
                keep.append(i)
        tab = np.vstack([tab[keep], tab[-1:]])
        basis = [basis[i] for i in keep]
        tab = np.delete(tab, np.s_[n:n + n_art], axis=1)
        m = len(basis)

    tab[-1, :] = 0.0
    tab[-1, :n] = c
    for i, bcol in enumerate(basis):
        if c[bcol] != 0:
            tab[-1] -= c[bcol] * tab[i]
    status = _run(tab, basis, n, max_iter)
    if status == "unbounded":
        return Solution(Status.UNBOUNDED)
    if status == "limit":
        return Solution(Status.LIMIT)
    y = np.zeros(n)
    for i, bcol in enumerate(basis):
        y[bcol] = tab[i, -1]
    y = np.maximum(y, 0.0)
    return solution_from_vector(model, sf.to_x(y))
