"""Estimator-style wrapper around the F-CFE builders."""

from __future__ import annotations

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ..domain import ForecastBundle, SystemConfig, TimeGrid
from ..milp import make_solver
from .deterministic import PlanError, build_fcfe, extract_plan
from .stochastic import ScenarioSet, build_stochastic_fcfe, extract_stoch_plan


class FCFEPlanner(BaseEstimator):
    """Solve the F-CFE program for one planning window.

    ``fit(ForecastBundle)`` solves the deterministic program and
    ``fit(ScenarioSet)`` the stochastic one. After fitting, ``status_`` holds
    the solver status; ``plan_`` and ``objective_`` are set only when the
    solve was optimal (an infeasible window is a result, not an error).
    """

    def __init__(self, grid=None, config=None, solver="external", enforce_budget=True):
        self.grid = grid
        self.config = config
        self.solver = solver
        self.enforce_budget = enforce_budget

    def fit(self, X, y=None):
        grid = self.grid if self.grid is not None else TimeGrid()
        config = self.config if self.config is not None else SystemConfig()
        solve = make_solver(self.solver)
        if isinstance(X, ScenarioSet):
            model, vi = build_stochastic_fcfe(grid, config, X, self.enforce_budget)
        elif isinstance(X, ForecastBundle):
            model, vi = build_fcfe(grid, config, X)
        else:
            raise TypeError(f"expected a ForecastBundle or ScenarioSet, got {type(X).__name__}")
        solution = solve(model)
        self.model_, self.var_index_, self.solution_ = model, vi, solution
        self.status_ = solution.status
        self.plan_ = None
        self.objective_ = None
        if solution.optimal:
            self.plan_ = (extract_stoch_plan(solution, vi, X) if isinstance(X, ScenarioSet)
                          else extract_plan(solution, vi, grid))
            self.objective_ = solution.objective
        return self

    def first_day(self):
        """The executable first-day slice of the fitted plan."""
        check_is_fitted(self, "status_")
        if self.plan_ is None:
            raise PlanError(f"no plan: solver status {self.status_.value}")
        plan = getattr(self.plan_, "first_stage", self.plan_)
        return plan.first_day(self.grid if self.grid is not None else TimeGrid())
