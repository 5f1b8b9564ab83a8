from dataclasses import replace

import numpy as np
import pytest

from flexcfe._validation import ValidationError
from flexcfe.domain import ForecastBundle, GreenSource, ModelConstants, Tariff, TimeGrid
from flexcfe.milp import Solution, Status
from flexcfe.planning import (FCFEPlanner, ScenarioSet, build_fcfe, build_stochastic_fcfe,
                              expected_recourse_cost, extract_plan, extract_stoch_plan,
                              fix_first_stage, scenario_balance_residuals)
from flexcfe.planning.stochastic import stochastic_objective_of
from flexcfe.scenarios import BlockCovarianceEstimator, draw_scenarios

from helpers import config, synthetic


def matched_prices(cfg):
    """RT rates equal to DA rates and no status floor."""
    return replace(cfg, tariff=Tariff(4.22, 4.22, 3.90, 3.90),
                   sources=tuple(GreenSource(s.id, s.buy_da, s.buy_da, s.allocation)
                                 for s in cfg.sources),
                   constants=ModelConstants(epsilon_status=0.0))


@pytest.fixture(scope="module")
def instance():
    grid = TimeGrid(60, 1, 24, 2)
    _, forecast, history = synthetic(grid, 2, seed=12)
    em = BlockCovarianceEstimator(block_size=24).fit(history).error_model_
    return grid, forecast, draw_scenarios(forecast, em, 4, seed=1)


def test_single_scenario_matches_deterministic(highs, instance):
    grid, forecast, _ = instance
    for cfg in (matched_prices(config(1)), matched_prices(config(1, no_sell=True))):
        det_model, _ = build_fcfe(grid, cfg, forecast)
        model, _ = build_stochastic_fcfe(grid, cfg, ScenarioSet.from_forecast(forecast))
        det, stoch = highs(det_model), highs(model)
        assert stoch.objective == pytest.approx(det.objective, abs=1e-6)


def test_variable_count_grows_per_scenario(instance):
    grid, forecast, scen = instance
    for cfg in (config(1), config(1, n_sources=2), config(1, no_sell=True)):
        N = cfg.n_sources
        counts = {}
        for S in (1, 2, 4):
            sub = ScenarioSet(scen.renew[:S], scen.load[:S], forecast)
            counts[S] = build_stochastic_fcfe(grid, cfg, sub)[0].n_vars
        base = counts[1] - grid.T * (N + 2)
        for S, n in counts.items():
            assert n == base + S * grid.T * (N + 2)


def test_big_m_warning(instance):
    grid, forecast, _ = instance
    scen = ScenarioSet(forecast.p_renew[None], 4 * forecast.p_load[None], forecast)
    with pytest.warns(UserWarning, match="big_m"):
        build_stochastic_fcfe(grid, config(1), scen)


def test_fix_first_stage(highs, instance):
    grid, forecast, scen = instance
    cfg = config(1)
    model, vi = build_stochastic_fcfe(grid, cfg, scen)
    opt = highs(model)
    own = extract_stoch_plan(opt, vi, scen)
    again = stochastic_objective_of(own.first_stage, model, vi, highs)
    assert again.objective == pytest.approx(opt.objective, abs=1e-6)

    det_model, det_vi = build_fcfe(grid, cfg, forecast)
    det = extract_plan(highs(det_model), det_vi, grid)
    fixed = stochastic_objective_of(det, model, vi, highs)
    if fixed.optimal:
        assert fixed.objective >= opt.objective - 1e-6

    all_cb = replace(own.first_stage, u=np.ones_like(own.first_stage.u))
    assert stochastic_objective_of(all_cb, model, vi, highs).status is Status.INFEASIBLE

    short = replace(det, pchg=det.pchg[:-1])
    with pytest.raises(ValidationError):
        fix_first_stage(model, vi, short)


def test_non_anticipativity_and_balance(highs, instance):
    grid, _, scen = instance
    for cfg in (config(1), config(1, no_sell=True)):
        model, vi = build_stochastic_fcfe(grid, cfg, scen)
        plan = extract_stoch_plan(highs(model), vi, scen)
        assert plan.first_stage.pchg.shape == (grid.T,)  # one copy, shared by all scenarios
        assert np.max(np.abs(scenario_balance_residuals(plan, scen))) <= 1e-6
        if cfg.policy.no_sell:
            assert not plan.psell_rt.any() and not plan.first_stage.psell.any()
        else:
            assert not plan.pcurt.any()
        assert plan.da_cost + plan.expected_recourse == pytest.approx(plan.objective)


def test_rt_purchases_follow_committed_status(highs, instance):
    grid, _, scen = instance
    model, vi = build_stochastic_fcfe(grid, config(1), scen)
    plan = extract_stoch_plan(highs(model), vi, scen)
    fs = plan.first_stage
    assert np.all(plan.png_rt[:, fs.xng < 0.5] <= 1e-7)
    assert np.all(plan.pg_rt[:, 0, fs.xg[0] < 0.5] <= 1e-7)


def _recourse_fixture(n_scen=2):
    grid = TimeGrid(15, 4, 1, 1)
    forecast = ForecastBundle(np.zeros(4), np.ones(4))
    scen = ScenarioSet(np.zeros((n_scen, 4)), np.ones((n_scen, 4)), forecast)
    model, vi = build_stochastic_fcfe(grid, config(0), scen)
    return scen, vi, Solution(Status.OPTIMAL, dict.fromkeys(model.var_names, 0.0), 0.0)


def test_expected_recourse_examples():
    scen, vi, sol = _recourse_fixture()
    assert expected_recourse_cost(sol, vi, scen) == 0.0
    sol.values[vi.png_rt[0, 0]] = 4.0
    assert expected_recourse_cost(sol, vi, scen) == pytest.approx(2.25)
    sol.values[vi.png_rt[0, 0]] = 0.0
    sol.values[vi.psell_rt[1, 2]] = 4.0
    assert expected_recourse_cost(sol, vi, scen) < 0


def test_budget_opt_out(highs, instance):
    grid, forecast, scen = instance
    cfg = config(2, allocations=[50.0])
    model, _ = build_stochastic_fcfe(grid, cfg, scen)
    assert highs(model).status is Status.INFEASIBLE
    model, _ = build_stochastic_fcfe(grid, cfg, scen, enforce_budget=False)
    assert highs(model).optimal


def test_scenario_set_validation():
    with pytest.raises(ValidationError):
        ScenarioSet(np.ones((2, 3)), np.ones((2, 4)))
    with pytest.raises(ValidationError):
        ScenarioSet(-np.ones((1, 3)), np.ones((1, 3)))
    with pytest.raises(ValidationError):
        ScenarioSet(np.ones((1, 3)), np.ones((1, 3))).check(TimeGrid(60, 1, 4, 1))
    s = ScenarioSet(np.ones((4, 3)), np.ones((4, 3)))
    assert s.n == 4 and s.probabilities.sum() == pytest.approx(1.0)


def test_planner_on_scenarios(instance):
    grid, _, scen = instance
    est = FCFEPlanner(grid=grid, config=config(1)).fit(scen)
    assert est.plan_.n_scenarios == scen.n
    assert est.first_day().pchg.shape == (24,)
