from dataclasses import replace

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from flexcfe.domain import (CompliancePolicy, ForecastBundle, ModelConstants, SystemConfig,
                            Tariff, TimeGrid)
from flexcfe.milp import Solution, Status, solve_enumeration
from flexcfe.planning import (FCFEPlanner, Plan, PlanError, build_fcfe, extract_plan,
                              plan_cost, validate_plan)

from helpers import COMPLEMENTARITY_TOL, complementarity, config, micro_forecast, synthetic


def zero_solution(model):
    return Solution(Status.OPTIMAL, dict.fromkeys(model.var_names, 0.0), 0.0)


def solve(solver, grid, cfg, forecast):
    model, vi = build_fcfe(grid, cfg, forecast)
    sol = solver(model)
    return model, vi, sol


def check_plan(plan, grid, cfg, forecast):
    assert validate_plan(plan, grid, cfg, forecast) == []
    assert complementarity(plan) <= COMPLEMENTARITY_TOL


def empty_plan(grid, n_sources=1, no_sell=False):
    T = grid.T
    z = np.zeros(T)
    return Plan(np.zeros((n_sources, T)), z.copy(), z.copy(), np.zeros(grid.D),
                np.zeros((n_sources, T)), z.copy(), z.copy(), z.copy(), z.copy(), z.copy(),
                np.full(T + 1, 50.0), z.copy(), z.copy(), z.copy(), z.copy(), 0.0,
                no_sell=no_sell)


def test_binary_count_default_grid():
    g = TimeGrid()
    _, forecast, _ = synthetic(g, 7)
    model, _ = build_fcfe(g, SystemConfig(), forecast)
    assert model.n_binaries == 168 * 2 + 672 + 1344 + 7 == 2359


def test_all_days_cf_forces_green_only(highs, hour_grid):
    _, forecast, _ = synthetic(hour_grid, 2, seed=2)
    cfg = config(2)
    _, vi, sol = solve(highs, hour_grid, cfg, forecast)
    plan = extract_plan(sol, vi, hour_grid)
    assert plan.u.tolist() == [0, 0] and plan.xng.sum() == 0 and plan.png.max() == 0
    assert plan.cf_blocks == [1, 2]
    check_plan(plan, hour_grid, cfg, forecast)


def test_zero_instance_costs_nothing(highs):
    g = TimeGrid(60, 1, 4, 2)
    cfg = config(1, soc_init=40.0)
    forecast = ForecastBundle(np.zeros(g.T), np.zeros(g.T))
    _, vi, sol = solve(highs, g, cfg, forecast)
    plan = extract_plan(sol, vi, g)
    assert sol.objective == pytest.approx(0.0, abs=1e-9)
    for arr in (plan.pg, plan.png, plan.pchg, plan.pdchg, plan.pnet_plus, plan.pnet_minus):
        assert np.allclose(arr, 0.0, atol=1e-9)


def test_extract_expands_mtu_values():
    g = TimeGrid(days=1)
    _, forecast, _ = synthetic(g, 1)
    model, vi = build_fcfe(g, config(0), forecast)
    sol = zero_solution(model)
    sol.values[vi.png[2]] = 5.0
    sol.values[vi.xg[0, 0]] = 0.999999
    plan = extract_plan(sol, vi, g)
    assert plan.png[8:12].tolist() == [5.0] * 4
    assert plan.png.sum() == 20.0
    assert plan.xg[0, :4].tolist() == [1.0] * 4
    assert plan.cf_blocks == [1]


def test_extract_rejects_non_optimal_and_fractional():
    g = TimeGrid(60, 1, 4, 1)
    model, vi = build_fcfe(g, config(0), ForecastBundle(np.ones(4), np.ones(4)))
    with pytest.raises(PlanError):
        extract_plan(Solution(Status.INFEASIBLE), vi, g)
    sol = zero_solution(model)
    sol.values[vi.v[0]] = 0.5
    with pytest.raises(PlanError, match="fractional"):
        extract_plan(sol, vi, g)


def test_validate_reports_hand_violations(highs, hour_grid):
    _, forecast, _ = synthetic(hour_grid, 2, seed=3)
    cfg = config(1)
    _, vi, sol = solve(highs, hour_grid, cfg, forecast)
    plan = extract_plan(sol, vi, hour_grid)
    check_plan(plan, hour_grid, cfg, forecast)

    cf_day = plan.cf_blocks[0] - 1
    bad = replace(plan, xng=plan.xng.copy(), png=plan.png.copy())
    t = cf_day * hour_grid.slots_per_day + 3
    bad.xng[t], bad.png[t] = 1.0, 2.0
    names = {v.constraint for v in validate_plan(bad, hour_grid, cfg, forecast)}
    assert "cb_link" in names

    bad = replace(plan, soc=plan.soc.copy())
    bad.soc[5] += 1.0
    hits = [v for v in validate_plan(bad, hour_grid, cfg, forecast)
            if v.constraint == "soc_recurrence"]
    assert [v.index for v in hits] == [5, 6]


def test_plan_cost_examples():
    g = TimeGrid(15, 4, 24, 1)
    tariff = Tariff()
    plan = empty_plan(g)
    assert plan_cost(plan, tariff, config(0).sources, g) == 0.0
    buy = replace(plan, png=plan.png.copy())
    buy.png[0] = 4.0
    assert plan_cost(buy, tariff, config(0).sources, g) == pytest.approx(4.22)
    sell = replace(plan, psell=plan.psell.copy())
    sell.psell[0] = 4.0
    assert plan_cost(sell, tariff, config(0).sources, g) == pytest.approx(-3.90)
    assert plan_cost(replace(sell, no_sell=True), tariff, config(0).sources, g) == 0.0


def test_budget_respected_and_infeasible_when_too_small(highs, hour_grid):
    _, forecast, _ = synthetic(hour_grid, 2, seed=5)
    cfg = config(1, allocations=[490.0])
    _, vi, sol = solve(highs, hour_grid, cfg, forecast)
    plan = extract_plan(sol, vi, hour_grid)
    assert hour_grid.dt * plan.pg.sum() <= 490.0 + 1e-6
    check_plan(plan, hour_grid, cfg, forecast)

    _, vi, sol = solve(highs, hour_grid, config(2, allocations=[5.0]), forecast)
    assert sol.status is Status.INFEASIBLE
    with pytest.raises(PlanError):
        extract_plan(sol, vi, hour_grid)


def test_hourly_compliance_mode(highs, hour_grid):
    _, forecast, _ = synthetic(hour_grid, 2, seed=6)
    cfg = replace(config(0), policy=CompliancePolicy(mode="hourly", cf_required=40))
    model, vi, sol = solve(highs, hour_grid, cfg, forecast)
    assert vi.u.shape == (hour_grid.H,)
    plan = extract_plan(sol, vi, hour_grid)
    assert len(plan.cf_blocks) >= 40
    check_plan(plan, hour_grid, cfg, forecast)


def test_slot_level_exports_option(highs):
    g = TimeGrid(15, 4, 24, 1)
    _, forecast, _ = synthetic(g, 1, seed=1)
    cfg = replace(config(1), constants=ModelConstants(hourly_exports=False))
    model, vi, sol = solve(highs, g, cfg, forecast)
    assert vi.pnet_plus.shape == (g.T,)
    assert validate_plan(extract_plan(sol, vi, g), g, cfg, forecast) == []


def test_no_sell_drops_export_revenue(highs, hour_grid):
    _, forecast, _ = synthetic(hour_grid, 2, seed=7)
    cfg = config(1, no_sell=True)
    _, vi, sol = solve(highs, hour_grid, cfg, forecast)
    plan = extract_plan(sol, vi, hour_grid)
    assert plan.no_sell and not plan.psell.any()
    assert plan_cost(plan, cfg.tariff, cfg.sources, hour_grid) == pytest.approx(sol.objective)


@settings(max_examples=15, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.lists(st.floats(0, 15), min_size=8, max_size=8),
       st.lists(st.floats(0, 35), min_size=8, max_size=8),
       st.integers(0, 2), st.booleans())
def test_optimal_plans_are_valid_and_priced(highs, renew, load, cf, no_sell):
    g = TimeGrid(60, 1, 4, 2)
    forecast = ForecastBundle(np.array(renew), np.array(load))
    cfg = config(cf, no_sell=no_sell)
    _, vi, sol = solve(highs, g, cfg, forecast)
    assert sol.optimal
    plan = extract_plan(sol, vi, g)
    check_plan(plan, g, cfg, forecast)
    assert plan_cost(plan, cfg.tariff, cfg.sources, g) == pytest.approx(sol.objective,
                                                                         abs=1e-6)
    assert len(plan.cf_blocks) >= cf


@settings(max_examples=8, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.lists(st.integers(0, 1), min_size=8, max_size=8),
       st.lists(st.integers(0, 2), min_size=8, max_size=8))
def test_enumeration_oracle_on_pinned_micro_instances(highs, selector, battery):
    g = TimeGrid(60, 1, 4, 2)
    model, vi = build_fcfe(g, config(1), micro_forecast())
    for t in range(g.T):
        model.fix(vi.v[t], selector[t])
        model.fix(vi.xchg[t], battery[t] == 1)
        model.fix(vi.xdchg[t], battery[t] == 2)
    exact = solve_enumeration(model, max_binaries=12)
    external = highs(model)
    assert exact.status == external.status
    if exact.optimal:
        assert exact.objective == pytest.approx(external.objective, abs=1e-6)


def test_planner_estimator(hour_grid):
    _, forecast, _ = synthetic(hour_grid, 2, seed=8)
    est = FCFEPlanner(grid=hour_grid, config=config(1))
    assert clone(est).get_params()["grid"] == hour_grid
    est.fit(forecast)
    assert est.status_ is Status.OPTIMAL and est.objective_ == pytest.approx(est.plan_.objective)
    day = est.first_day()
    assert day.pchg.shape == (24,) and day.soc.shape == (25,)
    with pytest.raises(TypeError):
        est.fit(np.zeros(3))

    infeasible = FCFEPlanner(grid=hour_grid, config=config(2, allocations=[1.0])).fit(forecast)
    assert infeasible.plan_ is None and infeasible.status_ is Status.INFEASIBLE
    with pytest.raises(PlanError):
        infeasible.first_day()
