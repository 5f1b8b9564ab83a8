"""Deterministic and two-stage stochastic F-CFE programs."""

from .common import VarIndex
from .deterministic import (Plan, PlanError, Violation, build_fcfe, extract_plan, plan_cost,
                            validate_plan)
from .estimator import FCFEPlanner
from .stochastic import (ScenarioSet, StochPlan, build_stochastic_fcfe, expected_recourse_cost,
                         extract_stoch_plan, fix_first_stage, scenario_balance_residuals)

__all__ = [
    "FCFEPlanner", "Plan", "PlanError", "ScenarioSet", "StochPlan", "VarIndex", "Violation",
    "build_fcfe", "build_stochastic_fcfe", "expected_recourse_cost", "extract_plan",
    "extract_stoch_plan", "fix_first_stage", "plan_cost", "scenario_balance_residuals",
    "validate_plan",
]
