"""Deterministic F-CFE program: build, extract, validate and price plans."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..domain import ComplianceMode, ForecastBundle, SystemConfig, TimeGrid, price_table
from ..milp import INT_TOL, LinearModel, Solution
from .common import VarIndex, _tag, add_sourcing, add_status_and_battery, add_vars, name_width


class PlanError(RuntimeError):
    """Raised when a plan is requested from a non-optimal solution."""


def build_fcfe(grid: TimeGrid, config: SystemConfig, forecast: ForecastBundle):
    """Assemble the deterministic F-CFE MILP.

    Returns ``(model, var_index)``. Purchases are hourly blocked by using one
    variable per MTU; the CB-block linking uses one row per MTU (every slot
    of an MTU shares the same status variable). With
    ``constants.hourly_exports`` the import/export parts of the net power are
    MTU variables too, so the battery absorbs intra-hour variation.
    """
    forecast.check(grid)
    prices = price_table(config, grid)
    policy = config.policy
    N, T, H = config.n_sources, grid.T, grid.H
    big_m = config.constants.resolve_big_m(forecast.p_load.max(), config.battery)
    eps = config.constants.epsilon_status
    w = name_width(grid)

    model = LinearModel("fcfe")
    hourly = config.constants.hourly_exports
    vi = VarIndex(grid, N, policy.mode, policy.no_sell, big_m, hourly)
    add_status_and_battery(model, grid, config, vi, w)
    vi.pg = add_vars(model, "Pg", (N, H), upper=big_m, width=w)
    vi.png = add_vars(model, "Png", H, upper=big_m, width=w)
    vi.pnet = add_vars(model, "Pnet", T, lower=-math.inf, width=w)
    vi.pnet_plus = add_vars(model, "Pnetp", H if hourly else T, width=w)
    vi.pnet_minus = add_vars(model, "Pnetm", H if hourly else T, width=w)
    idx = model.index
    mtu = grid.mtu_of_slot
    part = mtu if hourly else np.arange(T)

    for h in range(H):
        tag = _tag(w, h)
        for i in range(N):
            add_sourcing(model, vi.xg[i, h], vi.pg[i, h], big_m, eps, f"gsrc_{i + 1}_{tag}")
        add_sourcing(model, vi.xng[h], vi.png[h], big_m, eps, f"ngsrc_{tag}")

    net_load = forecast.p_load - forecast.p_renew
    for t in range(T):
        tag = _tag(w, t)
        pn, pp, pm = idx(vi.pnet[t]), idx(vi.pnet_plus[part[t]]), idx(vi.pnet_minus[part[t]])
        model.add_constraint(f"bal_{tag}",
                             {pn: 1.0, idx(vi.pchg[t]): -1.0, idx(vi.pdchg[t]): 1.0},
                             "=", float(net_load[t]))
        if not hourly or t % grid.slots_per_mtu == 0:
            buy = {pp: 1.0, idx(vi.png[mtu[t]]): -1.0}
            for i in range(N):
                buy[idx(vi.pg[i, mtu[t]])] = -1.0
            model.add_constraint(f"buy_{_tag(w, part[t])}", buy, "=", 0.0)
        model.add_constraint(f"split_{tag}", {pn: 1.0, pp: -1.0, pm: 1.0}, "=", 0.0)
        model.add_constraint(f"absup_{tag}", {pn: 1.0, pp: -1.0, pm: -1.0}, "<=", 0.0)
        model.add_constraint(f"abslo_{tag}", {pn: -1.0, pp: -1.0, pm: -1.0}, "<=", 0.0)

    per_mtu = grid.slots_per_mtu * grid.dt
    for i, src in enumerate(config.sources):
        if src.limited:
            model.add_constraint(f"budget_{i + 1}", {idx(n): per_mtu for n in vi.pg[i]},
                                 "<=", float(src.allocation))

    dt = grid.dt
    for h in range(H):
        sl = slice(h * grid.slots_per_mtu, (h + 1) * grid.slots_per_mtu)
        model.add_objective(vi.png[h], dt * prices.ng_da[sl].sum())
        for i in range(N):
            model.add_objective(vi.pg[i, h], dt * prices.g_da[i, sl].sum())
    if not policy.no_sell:
        for t in range(T):
            model.add_objective(vi.pnet_minus[part[t]], -dt * prices.sell_da[t])
    return model, vi


@dataclass
class Plan:
    """Slot-resolution view of a solved plan.

    ``u`` is per compliance block (day or MTU); 0 marks a carbon-free block.
    ``psell`` is the committed export per slot (P_net^- in the deterministic
    program, the DA sell in the stochastic one; zero under no-sell).
    """

    xg: np.ndarray
    xng: np.ndarray
    v: np.ndarray
    u: np.ndarray
    pg: np.ndarray
    png: np.ndarray
    pchg: np.ndarray
    pdchg: np.ndarray
    xchg: np.ndarray
    xdchg: np.ndarray
    soc: np.ndarray
    pnet: np.ndarray
    pnet_plus: np.ndarray
    pnet_minus: np.ndarray
    psell: np.ndarray
    objective: float
    mode: ComplianceMode = ComplianceMode.DAILY
    no_sell: bool = False
    big_m: float = math.inf
    meta: dict = field(default_factory=dict)

    @property
    def cf_blocks(self) -> list[int]:
        """1-based indices of carbon-free days (or MTUs in hourly mode)."""
        return [int(k) + 1 for k in np.nonzero(self.u < 0.5)[0]]

    def first_day(self, grid: TimeGrid) -> "Plan":
        """Slice the plan to the first day (slot series and SoC trajectory)."""
        n = grid.slots_per_day
        y = grid.mtus_per_day if self.mode is ComplianceMode.HOURLY else 1
        return Plan(self.xg[:, :n], self.xng[:n], self.v[:n], self.u[:y], self.pg[:, :n],
                    self.png[:n], self.pchg[:n], self.pdchg[:n], self.xchg[:n],
                    self.xdchg[:n], self.soc[:n + 1], self.pnet[:n], self.pnet_plus[:n],
                    self.pnet_minus[:n], self.psell[:n], math.nan, self.mode, self.no_sell,
                    self.big_m, dict(self.meta))


def _values(solution: Solution, names: np.ndarray) -> np.ndarray:
    return np.vectorize(lambda n: solution.values[n], otypes=[float])(names) \
        if names.size else np.zeros(names.shape)


def _binary(solution: Solution, names: np.ndarray, tol: float) -> np.ndarray:
    vals = _values(solution, names)
    rounded = np.round(vals)
    bad = np.abs(vals - rounded) > max(tol, 1e-3)
    if bad.any():
        raise PlanError(f"binary variable {names[bad].ravel()[0]} has fractional value "
                        f"{vals[bad].ravel()[0]:g}")
    return rounded


def extract_plan(solution: Solution, vi: VarIndex, grid: TimeGrid,
                 integrality_tol: float = INT_TOL) -> Plan:
    """Slot-expanded plan from an optimal solution of :func:`build_fcfe`."""
    if not solution.optimal:
        raise PlanError(f"no plan in a solution with status {solution.status.value}")
    mtu = grid.mtu_of_slot
    T = grid.T
    if vi.pnet is not None:
        part = mtu if vi.hourly_exports else np.arange(T)
        pnet = _values(solution, vi.pnet)
        pplus = _values(solution, vi.pnet_plus)[part]
        pminus = _values(solution, vi.pnet_minus)[part]
        psell = np.zeros(T) if vi.no_sell else pminus.copy()
    else:
        pnet = pplus = pminus = np.full(T, np.nan)
        psell = (_values(solution, vi.psell_da)[mtu] if vi.psell_da is not None
                 else np.zeros(T))
    return Plan(
        xg=_binary(solution, vi.xg, integrality_tol)[:, mtu],
        xng=_binary(solution, vi.xng, integrality_tol)[mtu],
        v=_binary(solution, vi.v, integrality_tol),
        u=_binary(solution, vi.u, integrality_tol),
        pg=_values(solution, vi.pg)[:, mtu],
        png=_values(solution, vi.png)[mtu],
        pchg=_values(solution, vi.pchg),
        pdchg=_values(solution, vi.pdchg),
        xchg=_binary(solution, vi.xchg, integrality_tol),
        xdchg=_binary(solution, vi.xdchg, integrality_tol),
        soc=_values(solution, vi.soc),
        pnet=pnet, pnet_plus=pplus, pnet_minus=pminus, psell=psell,
        objective=float(solution.objective),
        mode=vi.mode, no_sell=vi.no_sell, big_m=vi.big_m,
        meta={"hourly_exports": vi.hourly_exports},
    )


@dataclass(frozen=True)
class Violation:
    constraint: str
    index: int | None  # 1-based slot / MTU / day / source, None for global rows
    residual: float

    def __str__(self):
        where = "" if self.index is None else f"[{self.index}]"
        return f"{self.constraint}{where}: residual {self.residual:.3g}"


def validate_plan(plan: Plan, grid: TimeGrid, config: SystemConfig,
                  forecast: ForecastBundle, tol: float = 1e-6) -> list[Violation]:
    """Re-check every constraint of the deterministic program on ``plan``.

    An empty list means feasible within ``tol`` (kW, kWh or SoC points).
    """
    out: list[Violation] = []
    bat = config.battery
    T, spm = grid.T, grid.slots_per_mtu
    big_m = plan.big_m
    eps = config.constants.epsilon_status

    def report(name, residuals, offset=1):
        residuals = np.atleast_1d(np.asarray(residuals, dtype=float))
        for k in np.nonzero(residuals > tol)[0]:
            out.append(Violation(name, int(k) + offset, float(residuals[k])))

    # hourly blocking: every MTU-blocked series is constant within an MTU
    blocked = [("hourly_xng", plan.xng), ("hourly_png", plan.png)]
    if plan.meta.get("hourly_exports", config.constants.hourly_exports):
        blocked += [("hourly_import", plan.pnet_plus), ("hourly_export", plan.pnet_minus)]
    for name, series in blocked:
        blocks = series.reshape(grid.H, spm)
        report(name, blocks.max(axis=1) - blocks.min(axis=1))
    for i in range(config.n_sources):
        for name, series in (("hourly_xg", plan.xg[i]), ("hourly_pg", plan.pg[i])):
            blocks = series.reshape(grid.H, spm)
            report(f"{name}_{i + 1}", blocks.max(axis=1) - blocks.min(axis=1))

    for name, arr in (("binary_xng", plan.xng), ("binary_v", plan.v), ("binary_u", plan.u),
                      ("binary_xchg", plan.xchg), ("binary_xdchg", plan.xdchg),
                      ("binary_xg", plan.xg.ravel())):
        report(name, np.abs(arr - np.round(arr)) + np.maximum(arr - 1, 0)
               + np.maximum(-arr, 0))

    # battery
    report("chgmax", plan.pchg - bat.charge_rate_max * plan.xchg)
    report("dchgmax", plan.pdchg - bat.discharge_rate_max * plan.xdchg)
    report("chg_nonneg", -plan.pchg)
    report("dchg_nonneg", -plan.pdchg)
    report("chg_ramp", np.abs(np.diff(plan.pchg)) - bat.chg_ramp, offset=2)
    report("dchg_ramp", np.abs(np.diff(plan.pdchg)) - bat.dchg_ramp, offset=2)
    report("chg_dchg_excl", plan.xchg + plan.xdchg - 1)
    step = bat.soc_step(plan.pchg, plan.pdchg, grid.dt)
    report("soc_recurrence", np.abs(plan.soc[1:] - plan.soc[:-1] - step))
    report("soc_init", abs(plan.soc[0] - bat.soc_init))
    report("soc_min", bat.soc_min - plan.soc[1:], offset=2)
    report("soc_max", plan.soc[1:] - bat.soc_max, offset=2)
    last = np.arange(1, grid.D + 1) * grid.slots_per_day
    report("terminal_soc", bat.terminal_soc - plan.soc[last])

    # balance and import/export split
    net = forecast.p_load + plan.pchg - forecast.p_renew - plan.pdchg
    report("power_balance", np.abs(plan.pnet - net))
    buys = plan.png + plan.pg.sum(axis=0)
    report("import_sum", np.abs(plan.pnet_plus - buys))
    report("net_split", np.abs(plan.pnet - plan.pnet_plus + plan.pnet_minus))
    report("net_nonneg", np.maximum(-plan.pnet_plus, -plan.pnet_minus))
    report("abs_relax", np.abs(plan.pnet) - plan.pnet_plus - plan.pnet_minus)

    # sourcing rules
    for i in range(config.n_sources):
        report(f"green_upper_{i + 1}", plan.pg[i] - big_m * plan.xg[i])
        report(f"green_lower_{i + 1}", eps * plan.xg[i] - plan.pg[i])
        report(f"green_v_{i + 1}", plan.xg[i] - plan.v)
    report("nongreen_upper", plan.png - big_m * plan.xng)
    report("nongreen_lower", eps * plan.xng - plan.png)
    report("v_exclusive", plan.v + plan.xng - 1)
    for i, src in enumerate(config.sources):
        if src.limited:
            used = grid.dt * plan.pg[i].sum()
            report("green_budget", [used - src.allocation], offset=i + 1)

    # CF-block selection
    Y = config.policy.blocks(grid)
    report("cb_count", [plan.u.sum() - (Y - config.policy.cf_required)], offset=1)
    block = grid.day_of_slot if plan.mode is ComplianceMode.DAILY else grid.mtu_of_slot
    report("cb_link", plan.xng - plan.u[block])
    return out


def plan_cost(plan: Plan, tariff, sources, grid: TimeGrid) -> float:
    """Net cost of a plan at day-ahead rates (THB)."""
    from ..domain import SystemConfig

    prices = price_table(SystemConfig(tariff=tariff, sources=tuple(sources)), grid)
    dt = grid.dt
    cost = dt * float(np.sum(prices.ng_da * plan.png))
    cost += dt * float(np.sum(prices.g_da * plan.pg))
    if not plan.no_sell:
        cost -= dt * float(np.sum(prices.sell_da * plan.psell))
    return cost

