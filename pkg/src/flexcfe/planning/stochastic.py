"""Two-stage stochastic F-CFE: day-ahead commitments plus per-scenario recourse."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .._validation import ValidationError
from ..domain import ForecastBundle, SystemConfig, TimeGrid, price_table
from ..milp import INT_TOL, LinearModel, Solution
from .common import VarIndex, _tag, add_sourcing, add_status_and_battery, add_vars, name_width
from .deterministic import Plan, PlanError, _values, extract_plan


@dataclass(frozen=True)
class ScenarioSet:
    """``N`` equally likely (renew, load) realizations over one planning horizon.

    ``renew`` and ``load`` have shape ``(N, T)``. ``forecast`` is the point
    forecast the scenarios were drawn around, when known.
    """

    renew: np.ndarray
    load: np.ndarray
    forecast: ForecastBundle | None = None

    def __post_init__(self):
        renew = np.atleast_2d(np.asarray(self.renew, dtype=float))
        load = np.atleast_2d(np.asarray(self.load, dtype=float))
        if renew.shape != load.shape:
            raise ValidationError("renew and load scenario arrays differ in shape", "scenarios")
        if renew.shape[0] < 1 or renew.shape[1] < 1:
            raise ValidationError("scenario set is empty", "scenarios")
        if not (np.all(np.isfinite(renew)) and np.all(np.isfinite(load))):
            raise ValidationError("scenario series must be finite", "scenarios")
        if renew.min() < 0 or load.min() < 0:
            raise ValidationError("scenario series must be nonnegative", "scenarios")
        object.__setattr__(self, "renew", renew)
        object.__setattr__(self, "load", load)

    @classmethod
    def from_forecast(cls, forecast: ForecastBundle) -> "ScenarioSet":
        return cls(forecast.p_renew[None, :], forecast.p_load[None, :], forecast)

    @property
    def n(self) -> int:
        return self.renew.shape[0]

    @property
    def probabilities(self) -> np.ndarray:
        return np.full(self.n, 1.0 / self.n)

    def __len__(self):
        return self.n

    def scenario(self, k: int) -> ForecastBundle:
        return ForecastBundle(self.renew[k], self.load[k])

    def check(self, grid: TimeGrid) -> "ScenarioSet":
        if self.renew.shape[1] != grid.T:
            raise ValidationError(f"scenario length {self.renew.shape[1]} != T={grid.T}",
                                  "scenarios")
        return self


def build_stochastic_fcfe(grid: TimeGrid, config: SystemConfig, scenarios: ScenarioSet,
                          enforce_budget: bool = True):
    """Assemble the two-stage program over ``scenarios``.

    First stage: statuses, DA purchases and DA export (MTU blocked), battery
    and SoC, CF-block selection. Second stage, per scenario and slot: RT
    green per source, RT non-green and either RT export (sell-back) or
    curtailment (no-sell). The objective is the DA cost plus the sample mean
    of the RT costs.
    """
    scenarios.check(grid)
    prices = price_table(config, grid)
    policy = config.policy
    N, T, H, S = config.n_sources, grid.T, grid.H, scenarios.n
    reference_load = (scenarios.forecast.p_load if scenarios.forecast is not None
                      else scenarios.load.mean(axis=0))
    big_m = config.constants.resolve_big_m(reference_load.max(), config.battery)
    worst = float(scenarios.load.max()) + config.battery.charge_rate_max
    if worst > big_m:
        warnings.warn(f"a scenario needs up to {worst:g} kW of import but big_m={big_m:g} kW; "
                      "big_m is too small for this scenario set", stacklevel=2)
    eps = config.constants.epsilon_status
    w = name_width(grid)
    mtu = grid.mtu_of_slot
    dt = grid.dt

    model = LinearModel("fcfe_stoch")
    vi = VarIndex(grid, N, policy.mode, policy.no_sell, big_m, True, n_scenarios=S)
    vi.extra["prices"] = prices
    add_status_and_battery(model, grid, config, vi, w)
    vi.pg = add_vars(model, "Pgda", (N, H), upper=big_m, width=w)
    vi.png = add_vars(model, "Pngda", H, upper=big_m, width=w)
    if not policy.no_sell:
        vi.psell_da = add_vars(model, "Psellda", H, width=w)
    for h in range(H):
        tag = _tag(w, h)
        for i in range(N):
            add_sourcing(model, vi.xg[i, h], vi.pg[i, h], big_m, eps, f"gsrc_{i + 1}_{tag}")
        add_sourcing(model, vi.xng[h], vi.png[h], big_m, eps, f"ngsrc_{tag}")

    vi.pg_rt = np.empty((S, N, T), dtype=object)
    vi.png_rt = np.empty((S, T), dtype=object)
    recourse = np.empty((S, T), dtype=object)
    for s in range(S):
        vi.pg_rt[s] = add_vars(model, f"Pgrt_{s + 1}", (N, T), width=w)
        vi.png_rt[s] = add_vars(model, f"Pngrt_{s + 1}", T, width=w)
        recourse[s] = add_vars(model, f"{'Pcurt' if policy.no_sell else 'Psellrt'}_{s + 1}",
                               T, width=w)
    if policy.no_sell:
        vi.pcurt = recourse
    else:
        vi.psell_rt = recourse

    idx = model.index
    for s in range(S):
        net_load = scenarios.load[s] - scenarios.renew[s]
        for t in range(T):
            tag = f"{s + 1}_{_tag(w, t)}"
            h = mtu[t]
            row = {idx(vi.png[h]): 1.0, idx(vi.png_rt[s, t]): 1.0,
                   idx(vi.pdchg[t]): 1.0, idx(vi.pchg[t]): -1.0, idx(recourse[s, t]): -1.0}
            for i in range(N):
                row[idx(vi.pg[i, h])] = 1.0
                row[idx(vi.pg_rt[s, i, t])] = 1.0
            if vi.psell_da is not None:
                row[idx(vi.psell_da[h])] = -1.0
            model.add_constraint(f"bal_{tag}", row, "=", float(net_load[t]))
            for i in range(N):
                add_sourcing(model, vi.xg[i, h], vi.pg_rt[s, i, t], big_m, 0.0,
                             f"gsrcrt_{i + 1}_{tag}")
            add_sourcing(model, vi.xng[h], vi.png_rt[s, t], big_m, 0.0, f"ngsrcrt_{tag}")
        if enforce_budget:
            per_mtu = grid.slots_per_mtu * dt
            for i, src in enumerate(config.sources):
                if src.limited:
                    row = {idx(n): per_mtu for n in vi.pg[i]}
                    row.update({idx(n): dt for n in vi.pg_rt[s, i]})
                    model.add_constraint(f"budget_{i + 1}_{s + 1}", row, "<=",
                                         float(src.allocation))

    spm = grid.slots_per_mtu
    for h in range(H):
        sl = slice(h * spm, (h + 1) * spm)
        model.add_objective(vi.png[h], dt * prices.ng_da[sl].sum())
        for i in range(N):
            model.add_objective(vi.pg[i, h], dt * prices.g_da[i, sl].sum())
        if vi.psell_da is not None:
            model.add_objective(vi.psell_da[h], -dt * prices.sell_da[sl].sum())
    weight = dt / S
    for s in range(S):
        for t in range(T):
            model.add_objective(vi.png_rt[s, t], weight * prices.ng_rt[t])
            for i in range(N):
                model.add_objective(vi.pg_rt[s, i, t], weight * prices.g_rt[i, t])
            if vi.psell_rt is not None:
                model.add_objective(vi.psell_rt[s, t], -weight * prices.sell_rt[t])
    return model, vi


@dataclass
class StochPlan:
    """First-stage plan plus the per-scenario recourse of a stochastic solve.

    Second-stage arrays are ``(S, T)`` (green: ``(S, N_source, T)``); the
    array not used by the export policy is all zeros.
    """

    first_stage: Plan
    pg_rt: np.ndarray
    png_rt: np.ndarray
    psell_rt: np.ndarray
    pcurt: np.ndarray
    objective: float
    expected_recourse: float
    meta: dict = field(default_factory=dict)

    @property
    def n_scenarios(self) -> int:
        return self.png_rt.shape[0]

    @property
    def da_cost(self) -> float:
        return self.objective - self.expected_recourse


def expected_recourse_cost(solution: Solution, vi: VarIndex, scenarios: ScenarioSet) -> float:
    """Sample mean over scenarios of the real-time cost (THB)."""
    prices = vi.extra["prices"]
    dt = vi.grid.dt
    total = 0.0
    for s in range(scenarios.n):
        total += float(np.sum(prices.ng_rt * _values(solution, vi.png_rt[s])))
        total += float(np.sum(prices.g_rt * _values(solution, vi.pg_rt[s])))
        if vi.psell_rt is not None:
            total -= float(np.sum(prices.sell_rt * _values(solution, vi.psell_rt[s])))
    return dt * total / scenarios.n


def extract_stoch_plan(solution: Solution, vi: VarIndex, scenarios: ScenarioSet,
                       integrality_tol: float = INT_TOL) -> StochPlan:
    if not solution.optimal:
        raise PlanError(f"no plan in a solution with status {solution.status.value}")
    first = extract_plan(solution, vi, vi.grid, integrality_tol)
    S, T = vi.n_scenarios, vi.grid.T
    pg_rt = _values(solution, vi.pg_rt)
    png_rt = _values(solution, vi.png_rt)
    zeros = np.zeros((S, T))
    psell_rt = _values(solution, vi.psell_rt) if vi.psell_rt is not None else zeros
    pcurt = _values(solution, vi.pcurt) if vi.pcurt is not None else zeros.copy()
    recourse = expected_recourse_cost(solution, vi, scenarios)
    return StochPlan(first, pg_rt, png_rt, psell_rt, pcurt, float(solution.objective), recourse)


def scenario_balance_residuals(plan: StochPlan, scenarios: ScenarioSet) -> np.ndarray:
    """Per-scenario, per-slot balance residual (kW); zero when feasible."""
    fs = plan.first_stage
    supply = (fs.pg.sum(axis=0) + fs.png + plan.pg_rt.sum(axis=1) + plan.png_rt
              + scenarios.renew + fs.pdchg)
    demand = scenarios.load + fs.pchg + fs.psell + plan.psell_rt + plan.pcurt
    return supply - demand


def _per_mtu(series: np.ndarray, grid: TimeGrid, reduce=np.min) -> np.ndarray:
    series = np.asarray(series, dtype=float)
    return reduce(series.reshape(series.shape[:-1] + (grid.H, grid.slots_per_mtu)), axis=-1)


def fix_first_stage(model: LinearModel, vi: VarIndex, plan: Plan) -> LinearModel:
    """Copy of ``model`` with every first-stage variable pinned to ``plan``.

    ``plan`` is slot-expanded (deterministic or stochastic). MTU quantities
    are read from the first slot of each MTU; a committed export that varies
    within an MTU is committed at its minimum over the MTU.
    """
    grid = vi.grid
    T = grid.T
    if plan.pchg.shape != (T,) or plan.pg.shape != (vi.n_sources, T):
        raise ValidationError(f"plan dimensions do not match the model (T={T}, "
                              f"N_source={vi.n_sources})", "plan")
    if plan.u.shape != vi.u.shape:
        raise ValidationError(f"plan has {plan.u.size} compliance blocks, model has "
                              f"{vi.u.size}", "plan.u")
    first = np.arange(0, T, grid.slots_per_mtu)
    pinned = {
        "xg": plan.xg[:, first], "xng": plan.xng[first], "v": plan.v, "u": plan.u,
        "pchg": plan.pchg, "pdchg": plan.pdchg, "xchg": plan.xchg, "xdchg": plan.xdchg,
        "soc": plan.soc, "pg": _per_mtu(plan.pg, grid), "png": _per_mtu(plan.png, grid),
    }
    if vi.psell_da is not None:
        pinned["psell_da"] = _per_mtu(plan.psell, grid)
    out = model.copy()
    for key, values in pinned.items():
        names = getattr(vi, key)
        if names.shape != np.shape(values):
            raise ValidationError(f"shape {np.shape(values)} != {names.shape}", f"plan.{key}")
        for name, value in zip(names.ravel(), np.ravel(values)):
            if name not in out:
                raise ValidationError(f"model has no variable {name!r}", f"plan.{key}")
            j = out.index(name)
            lo, hi = out.lower[j], out.upper[j]
            value = float(value)
            # snap solver drift onto the box; a real violation leaves lower > upper,
            # which every backend reports as infeasible
            if lo - 1e-9 <= value <= hi + 1e-9:
                value = min(max(value, lo), hi)
            out.lower[j], out.upper[j] = max(lo, value), min(hi, value)
    return out


def stochastic_objective_of(plan: Plan, model: LinearModel, vi: VarIndex, solver) -> Solution:
    """Solve ``model`` with the first stage pinned to ``plan``."""
    return solver(fix_first_stage(model, vi, plan))


__all__ = ["ScenarioSet", "StochPlan", "build_stochastic_fcfe", "expected_recourse_cost",
           "extract_stoch_plan", "fix_first_stage", "scenario_balance_residuals",
           "stochastic_objective_of"]
