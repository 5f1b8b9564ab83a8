"""Daily receding-horizon simulation with real-time settlement.

Each day: plan over ``D`` days, execute the first day against actuals,
settle deviations in real time, carry the realized SoC into the next day.
"""

from __future__ import annotations

import datetime as dt
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from ._validation import ValidationError
from .domain import ComplianceMode, ForecastBundle, SystemConfig, TimeGrid, price_table
from .milp import Solution, make_solver
from .planning.deterministic import Plan, build_fcfe, extract_plan
from .planning.stochastic import StochPlan, build_stochastic_fcfe, extract_stoch_plan
from .scenarios import ErrorModel, draw_scenarios

log = logging.getLogger(__name__)

BALANCE_TOL = 1e-9
ENERGY_TOL = 1e-9


class Mode(str, Enum):
    IDEAL = "ideal"
    DETERMINISTIC = "deterministic"
    STOCHASTIC = "stochastic"

    @classmethod
    def parse(cls, value) -> "Mode":
        aliases = {"det": "deterministic", "stoch": "stochastic"}
        return cls(aliases.get(value, value))


@dataclass(frozen=True)
class DataProvider:
    """Calendar series for a rolling run.

    ``actuals`` and ``forecasts`` are contiguous series starting at ``start``
    (whole days). The forecast for a calendar day is the same whichever
    planning window it falls in. ``error_model`` is required for the
    stochastic mode and must cover one planning horizon.
    """

    actuals: ForecastBundle
    forecasts: ForecastBundle
    slots_per_day: int
    start: dt.date = dt.date(2024, 1, 1)
    error_model: ErrorModel | None = None

    def __post_init__(self):
        if len(self.actuals) != len(self.forecasts):
            raise ValidationError("actuals and forecasts differ in length", "provider")
        if len(self.actuals) % self.slots_per_day:
            raise ValidationError("series must cover whole days", "provider")

    @property
    def num_days(self) -> int:
        return len(self.actuals) // self.slots_per_day

    def _slice(self, bundle: ForecastBundle, day: int, days: int) -> ForecastBundle:
        if day < 0 or day + days > self.num_days:
            raise ValidationError(f"data covers {self.num_days} days; requested days "
                                  f"{day + 1}..{day + days}", "provider")
        sl = slice(day * self.slots_per_day, (day + days) * self.slots_per_day)
        return ForecastBundle(bundle.p_renew[sl], bundle.p_load[sl])

    def horizon_forecast(self, day: int, days: int) -> ForecastBundle:
        return self._slice(self.forecasts, day, days)

    def horizon_actuals(self, day: int, days: int) -> ForecastBundle:
        return self._slice(self.actuals, day, days)

    def date(self, day: int) -> dt.date:
        return self.start + dt.timedelta(days=day)


@dataclass
class RealizedDay:
    """Executed flows of one day (kW per slot) and its settlement.

    ``export_da``/``export_rt`` hold sells under sell-back and curtailment
    under no-sell. ``png_rt`` includes ``emergency``.
    """

    day: int
    date: dt.date
    renew: np.ndarray
    load: np.ndarray
    pchg: np.ndarray
    pdchg: np.ndarray
    soc: np.ndarray
    pg_da: np.ndarray
    png_da: np.ndarray
    export_da: np.ndarray
    pg_rt: np.ndarray
    png_rt: np.ndarray
    emergency: np.ndarray
    export_rt: np.ndarray
    cf_blocks: np.ndarray  # per compliance block within the day (1 for daily mode)
    da_cost: float
    rt_cost: float
    no_sell: bool
    plan_status: str = "optimal"
    planned_cf: np.ndarray | None = None

    @property
    def cf(self) -> bool:
        return bool(np.all(self.cf_blocks))

    @property
    def cost(self) -> float:
        return self.da_cost + self.rt_cost

    def balance_residual(self) -> np.ndarray:
        supply = (self.pg_da.sum(axis=0) + self.png_da + self.pg_rt.sum(axis=0) + self.png_rt
                  + self.renew + self.pdchg)
        demand = self.load + self.pchg + self.export_da + self.export_rt
        return supply - demand

    def energy(self, dt_hours: float) -> dict:
        e = lambda x: float(dt_hours * np.sum(x))  # noqa: E731
        return {
            "green_da": e(self.pg_da), "green_rt": e(self.pg_rt),
            "nongreen_da": e(self.png_da), "nongreen_rt": e(self.png_rt),
            "emergency": e(self.emergency),
            "export_da": e(self.export_da), "export_rt": e(self.export_rt),
            "charge": e(self.pchg), "discharge": e(self.pdchg),
            "renew": e(self.renew), "load": e(self.load),
        }


ENERGY_KEYS = ("green_da", "green_rt", "nongreen_da", "nongreen_rt", "emergency",
               "export_da", "export_rt", "charge", "discharge", "renew", "load")


@dataclass
class Ledger:
    grid: TimeGrid
    config: SystemConfig
    mode: Mode
    days: list = field(default_factory=list)
    failures: list = field(default_factory=list)  # (day, status) of non-optimal solves

    @property
    def day_grid(self) -> TimeGrid:
        return self.grid.with_days(1)

    def totals(self) -> dict:
        out = dict.fromkeys(ENERGY_KEYS, 0.0)
        for d in self.days:
            for k, v in d.energy(self.grid.dt).items():
                out[k] += v
        out["da_cost"] = float(sum(d.da_cost for d in self.days))
        out["rt_cost"] = float(sum(d.rt_cost for d in self.days))
        out["net_cost"] = out["da_cost"] + out["rt_cost"]
        return out

    def monthly_costs(self) -> dict:
        out: dict = {}
        for d in self.days:
            key = d.date.strftime("%Y-%m")
            out[key] = out.get(key, 0.0) + d.cost
        return out

    def yearly_costs(self) -> dict:
        out: dict = {}
        for d in self.days:
            key = str(d.date.year)
            out[key] = out.get(key, 0.0) + d.cost
        return out

    def balance_gap(self) -> float:
        """Aggregate energy identity residual (kWh); zero when flows close."""
        t = self.totals()
        supply = (t["green_da"] + t["green_rt"] + t["nongreen_da"] + t["nongreen_rt"]
                  + t["renew"] + t["discharge"])
        return supply - t["charge"] - t["export_da"] - t["export_rt"] - t["load"]

    def rows(self) -> list[dict]:
        """One flat record per executed day."""
        out = []
        for d in self.days:
            row = {"day": d.day + 1, "date": d.date.isoformat(), "cf": int(d.cf),
                   "plan_status": d.plan_status}
            row.update(d.energy(self.grid.dt))
            row.update({"soc_end": float(d.soc[-1]), "da_cost": d.da_cost,
                        "rt_cost": d.rt_cost, "net_cost": d.cost})
            out.append(row)
        return out

    def summary(self) -> dict:
        return {
            "mode": self.mode.value,
            "compliance_mode": self.config.policy.mode.value,
            "cf_required": self.config.policy.cf_required,
            "export_policy": self.config.policy.export_policy.value,
            "days": len(self.days),
            "achieved_cf_percent": cf_accounting(self) if self.days else None,
            "totals": self.totals(),
            "monthly_cost": self.monthly_costs(),
            "yearly_cost": self.yearly_costs(),
            "failures": [{"day": k + 1, "status": s} for k, s in self.failures],
        }


def _day_plan(committed, grid: TimeGrid) -> Plan:
    first = committed.first_stage if isinstance(committed, StochPlan) else committed
    return first if first.pchg.size == grid.slots_per_day else first.first_day(grid)


def _idle_plan(config: SystemConfig, grid: TimeGrid) -> Plan:
    """No commitments: battery idle at its current SoC (fallback after a failed solve)."""
    n = grid.slots_per_day
    N = config.n_sources
    y = grid.mtus_per_day if config.policy.mode is ComplianceMode.HOURLY else 1
    z = np.zeros(n)
    return Plan(np.zeros((N, n)), z, z, np.ones(y), np.zeros((N, n)), z, z, z, z, z,
                np.full(n + 1, config.battery.soc_init), z, z, z, z, np.nan,
                config.policy.mode, config.policy.no_sell)


def realize_first_day(committed, actuals: ForecastBundle, config: SystemConfig,
                      grid: TimeGrid, remaining_allocation: Sequence[float] | None = None,
                      day: int = 0, date: dt.date | None = None,
                      plan_status: str = "optimal") -> RealizedDay:
    """Settle one executed day against actuals.

    ``committed`` is a plan (deterministic or stochastic, full horizon or
    already sliced to one day). Shortfalls are bought in real time from
    committed green sources in ascending RT price order within their
    remaining allocation, then as RT non-green where non-green is committed;
    anything left is an emergency non-green purchase that revokes the CF
    status of its block. Surpluses are sold at the RT rate or curtailed.
    """
    n = grid.slots_per_day
    plan = _day_plan(committed, grid)
    if len(actuals) != n:
        raise ValidationError(f"expected {n} actual slots, got {len(actuals)}", "actuals")
    day_grid = grid.with_days(1)
    prices = price_table(config, day_grid)
    no_sell = config.policy.no_sell
    N = config.n_sources
    dt_h = grid.dt

    # solver round-off can leave -1e-15 purchases
    pg_da, png_da = np.maximum(plan.pg, 0.0), np.maximum(plan.png, 0.0)
    if no_sell:
        planned_curt = plan.pnet_minus if np.all(np.isfinite(plan.pnet_minus)) else np.zeros(n)
        export_da = np.maximum(planned_curt, 0.0).copy()
    else:
        export_da = np.maximum(plan.psell, 0.0)

    remaining = np.array([np.inf if not s.limited else s.allocation for s in config.sources],
                         dtype=float)
    if remaining_allocation is not None:
        remaining = np.asarray(remaining_allocation, dtype=float).copy()
    remaining -= dt_h * pg_da.sum(axis=1)
    remaining = np.maximum(remaining, 0.0)

    pg_rt = np.zeros((N, n))
    png_rt = np.zeros(n)
    emergency = np.zeros(n)
    export_rt = np.zeros(n)
    imbalance = (actuals.p_load + plan.pchg + export_da) \
        - (actuals.p_renew + plan.pdchg + pg_da.sum(axis=0) + png_da)
    for t in range(n):
        need = imbalance[t]
        if need > 0:
            for i in np.argsort(prices.g_rt[:, t], kind="stable"):
                if need <= 0:
                    break
                if plan.xg[i, t] < 0.5:
                    continue
                take = min(need, remaining[i] / dt_h)
                if take > 0:
                    pg_rt[i, t] = take
                    remaining[i] -= take * dt_h
                    need -= take
            if need > 0 and plan.xng[t] > 0.5:
                png_rt[t] = need
                need = 0.0
            if need > 0:
                emergency[t] = need
                png_rt[t] += need
        elif need < 0:
            export_rt[t] = -need

    nongreen = (png_da > ENERGY_TOL) | (png_rt > ENERGY_TOL)
    if config.policy.mode is ComplianceMode.HOURLY:
        cf_blocks = ~nongreen.reshape(grid.mtus_per_day, grid.slots_per_mtu).any(axis=1)
    else:
        cf_blocks = np.array([not nongreen.any()])

    da_cost = dt_h * float(np.sum(prices.ng_da * png_da) + np.sum(prices.g_da * pg_da))
    rt_cost = dt_h * float(np.sum(prices.ng_rt * png_rt) + np.sum(prices.g_rt * pg_rt))
    if not no_sell:
        da_cost -= dt_h * float(np.sum(prices.sell_da * export_da))
        rt_cost -= dt_h * float(np.sum(prices.sell_rt * export_rt))

    soc = np.empty(n + 1)
    soc[0] = config.battery.soc_init  # carried state, not the solver's rounded copy
    soc[1:] = soc[0] + np.cumsum(config.battery.soc_step(plan.pchg, plan.pdchg, dt_h))
    return RealizedDay(
        day=day, date=date or dt.date(2024, 1, 1) + dt.timedelta(days=day),
        renew=actuals.p_renew.copy(), load=actuals.p_load.copy(),
        pchg=plan.pchg.copy(), pdchg=plan.pdchg.copy(), soc=soc,
        pg_da=pg_da, png_da=png_da, export_da=export_da, pg_rt=pg_rt, png_rt=png_rt,
        emergency=emergency, export_rt=export_rt, cf_blocks=cf_blocks,
        da_cost=da_cost, rt_cost=rt_cost, no_sell=no_sell, plan_status=plan_status,
        planned_cf=1 - plan.u,
    )


def plan_window(grid: TimeGrid, config: SystemConfig, forecast: ForecastBundle,
                solver: Callable[..., Solution]):
    model, vi = build_fcfe(grid, config, forecast)
    sol = solver(model)
    return sol, (extract_plan(sol, vi, grid) if sol.optimal else None)


def plan_window_stochastic(grid: TimeGrid, config: SystemConfig, scenarios, solver,
                           enforce_budget: bool = True):
    model, vi = build_stochastic_fcfe(grid, config, scenarios, enforce_budget)
    sol = solver(model)
    return sol, (extract_stoch_plan(sol, vi, scenarios) if sol.optimal else None)


def run_rolling(grid: TimeGrid, config: SystemConfig, provider: DataProvider, mode,
                num_days: int, seed: int = 0, solver: Callable | None = None,
                n_scenarios: int = 20, enforce_budget: bool = True) -> Ledger:
    """Simulate ``num_days`` executed days, re-planning every day over ``grid.D`` days."""
    mode = Mode.parse(mode)
    if num_days < 1:
        raise ValidationError("must be >= 1", "num_days")
    if provider.slots_per_day != grid.slots_per_day:
        raise ValidationError("provider resolution does not match the grid", "provider")
    needed = num_days + grid.D - 1
    if provider.num_days < needed:
        raise ValidationError(f"need {needed} days of data for {num_days} executed days on a "
                              f"{grid.D}-day horizon, provider has {provider.num_days}",
                              "provider")
    if mode is Mode.STOCHASTIC:
        if provider.error_model is None:
            raise ValidationError("stochastic mode needs an error model", "provider")
        if provider.error_model.T != grid.T:
            raise ValidationError(f"error model covers T={provider.error_model.T}, "
                                  f"grid has T={grid.T}", "provider.error_model")
    solver = solver or make_solver("external")
    ledger = Ledger(grid, config, mode)
    soc = config.battery.soc_init

    for day in range(num_days):
        cfg = replace(config, battery=replace(config.battery, soc_init=float(soc)))
        if mode is Mode.IDEAL:
            sol, plan = plan_window(grid, cfg, provider.horizon_actuals(day, grid.D), solver)
        elif mode is Mode.DETERMINISTIC:
            sol, plan = plan_window(grid, cfg, provider.horizon_forecast(day, grid.D), solver)
        else:
            scen = draw_scenarios(provider.horizon_forecast(day, grid.D), provider.error_model,
                                  n_scenarios, [seed, day], config.pv_capacity)
            sol, plan = plan_window_stochastic(grid, cfg, scen, solver, enforce_budget)
        if plan is None:
            log.warning("day %d: planning returned %s; settling in real time only",
                        day + 1, sol.status.value)
            ledger.failures.append((day, sol.status.value))
            plan = _idle_plan(cfg, grid)
        realized = realize_first_day(plan, provider.horizon_actuals(day, 1), cfg, grid,
                                     day=day, date=provider.date(day),
                                     plan_status=sol.status.value)
        ledger.days.append(realized)
        soc = float(realized.soc[-1])
    return ledger


def cf_accounting(ledger: Ledger, policy=None) -> float:
    """Achieved CF percentage over executed days (or MTUs in hourly mode)."""
    if not ledger.days:
        raise ValidationError("ledger is empty", "ledger")
    flags = np.concatenate([d.cf_blocks for d in ledger.days])
    return 100.0 * float(flags.sum()) / flags.size


def summarize_energy(ledger: Ledger) -> dict:
    """One energy-summary row (kWh) labelled by mode and CF target."""
    t = ledger.totals()
    no_sell = ledger.config.policy.no_sell
    label = "curtailed" if no_sell else "export"
    return {
        "mode": ledger.mode.value,
        "cf_target": ledger.config.policy.cf_required,
        "green_da": t["green_da"], "green_rt": t["green_rt"],
        "nongreen_da": t["nongreen_da"], "nongreen_rt": t["nongreen_rt"],
        f"{label}_da": t["export_da"], f"{label}_rt": t["export_rt"],
        "battery_charge": t["charge"], "battery_discharge": t["discharge"],
        "emergency": t["emergency"], "solar": t["renew"], "load": t["load"],
        "net_cost": t["net_cost"], "achieved_cf_percent": cf_accounting(ledger),
    }


__all__ = ["DataProvider", "Ledger", "Mode", "RealizedDay", "cf_accounting",
           "realize_first_day", "run_rolling", "summarize_energy"]
