"""Time indexing, physical parameters, tariffs and compliance policy.

Every type here is a frozen dataclass and validates itself on construction.
Defaults describe the reference building: a 100 kWh battery, 15 kWp of PV
and rates in THB/kWh.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple, Sequence

import numpy as np

from ._validation import ValidationError, check_series, expand_price


@dataclass(frozen=True)
class TimeGrid:
    """Slot / market-time-unit / day indexing of a planning horizon."""

    slot_minutes: int = 15
    slots_per_mtu: int = 4
    mtus_per_day: int = 24
    days: int = 7

    def __post_init__(self):
        for name in ("slot_minutes", "slots_per_mtu", "mtus_per_day", "days"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ValidationError(f"must be an integer >= 1, got {value!r}", name)

    @property
    def slots_per_day(self) -> int:
        return self.slots_per_mtu * self.mtus_per_day

    @property
    def T(self) -> int:
        return self.days * self.slots_per_day

    @property
    def H(self) -> int:
        return self.days * self.mtus_per_day

    @property
    def D(self) -> int:
        return self.days

    @property
    def dt(self) -> float:
        """Slot length in hours."""
        return self.slot_minutes / 60.0

    def with_days(self, days: int) -> "TimeGrid":
        return TimeGrid(self.slot_minutes, self.slots_per_mtu, self.mtus_per_day, days)

    # 0-based helpers used by the builders
    @property
    def mtu_of_slot(self) -> np.ndarray:
        return np.arange(self.T) // self.slots_per_mtu

    @property
    def day_of_slot(self) -> np.ndarray:
        return np.arange(self.T) // self.slots_per_day

    @property
    def day_of_mtu(self) -> np.ndarray:
        return np.arange(self.H) // self.mtus_per_day


def build_time_grid(slot_minutes: int = 15, slots_per_mtu: int = 4,
                    mtus_per_day: int = 24, days: int = 7) -> TimeGrid:
    return TimeGrid(slot_minutes, slots_per_mtu, mtus_per_day, days)


class SlotMaps(NamedTuple):
    """1-based slot->mtu and slot->day maps plus the set of last slots of each day.

    ``slot_to_mtu[t - 1]`` is the MTU of slot ``t``.
    """

    slot_to_mtu: np.ndarray
    slot_to_day: np.ndarray
    last_slots: frozenset


def slot_maps(grid: TimeGrid) -> SlotMaps:
    t = np.arange(1, grid.T + 1)
    mtu = -(-t // grid.slots_per_mtu)
    day = -(-t // grid.slots_per_day)
    last = frozenset(d * grid.slots_per_day for d in range(1, grid.days + 1))
    return SlotMaps(mtu, day, last)


@dataclass(frozen=True)
class BatteryParams:
    capacity: float = 100.0
    eta_c: float = 0.95
    eta_d: float = 0.8835
    charge_rate_max: float = 50.0
    discharge_rate_max: float = 50.0
    chg_ramp: float = 20.0
    dchg_ramp: float = 20.0
    soc_min: float = 20.0
    soc_max: float = 80.0
    terminal_soc: float = 40.0
    soc_init: float = 50.0

    def __post_init__(self):
        if not self.capacity > 0:
            raise ValidationError("must be > 0", "battery.capacity")
        for name in ("eta_c", "eta_d"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ValidationError(f"must lie in (0, 1], got {v}", f"battery.{name}")
        for name in ("charge_rate_max", "discharge_rate_max", "chg_ramp", "dchg_ramp"):
            if getattr(self, name) < 0:
                raise ValidationError("must be >= 0", f"battery.{name}")
        if not 0 <= self.soc_min <= self.terminal_soc <= self.soc_max <= 100:
            raise ValidationError(
                "require 0 <= soc_min <= terminal_soc <= soc_max <= 100, got "
                f"{self.soc_min}, {self.terminal_soc}, {self.soc_max}",
                "battery.terminal_soc",
            )
        if not 0 <= self.soc_init <= 100:
            raise ValidationError("must lie in [0, 100]", "battery.soc_init")

    def soc_step(self, p_chg, p_dchg, dt: float):
        """SoC increment (percentage points) for one slot."""
        return 100.0 / self.capacity * (self.eta_c * np.asarray(p_chg) * dt
                                        - np.asarray(p_dchg) * dt / self.eta_d)


@dataclass(frozen=True)
class GreenSource:
    """A green energy seller. ``allocation=None`` means an unlimited budget."""

    id: str
    buy_da: object = 4.55
    buy_rt: object = 4.75
    allocation: float | None = None

    def __post_init__(self):
        for name in ("buy_da", "buy_rt"):
            if np.any(np.asarray(getattr(self, name), dtype=float) <= 0):
                raise ValidationError("prices must be positive", f"sources.{self.id}.{name}")
        if self.allocation is not None and self.allocation < 0:
            raise ValidationError("must be >= 0", f"sources.{self.id}.allocation")

    @property
    def limited(self) -> bool:
        return self.allocation is not None and math.isfinite(self.allocation)


@dataclass(frozen=True)
class Tariff:
    nongreen_buy_da: object = 4.22
    nongreen_buy_rt: object = 4.50
    sell_da: object = 3.90
    sell_rt: object = 3.80

    def __post_init__(self):
        for name in ("nongreen_buy_da", "nongreen_buy_rt", "sell_da", "sell_rt"):
            if np.any(np.asarray(getattr(self, name), dtype=float) <= 0):
                raise ValidationError("prices must be positive", f"tariff.{name}")


class ComplianceMode(str, Enum):
    DAILY = "daily"
    HOURLY = "hourly"


class ExportPolicy(str, Enum):
    SELL_BACK = "sell_back"
    NO_SELL = "no_sell"


@dataclass(frozen=True)
class CompliancePolicy:
    """Keep at least ``cf_required`` carbon-free days (or MTUs) out of ``horizon``.

    ``horizon=None`` resolves to the grid's D (daily) or H (hourly).
    """

    mode: ComplianceMode = ComplianceMode.DAILY
    cf_required: int = 7
    horizon: int | None = None
    export_policy: ExportPolicy = ExportPolicy.SELL_BACK

    def __post_init__(self):
        object.__setattr__(self, "mode", ComplianceMode(self.mode))
        object.__setattr__(self, "export_policy", ExportPolicy(self.export_policy))
        if self.cf_required < 0:
            raise ValidationError("must be >= 0", "policy.cf_required")
        if self.horizon is not None and self.cf_required > self.horizon:
            raise ValidationError(
                f"cf_required={self.cf_required} exceeds horizon={self.horizon}",
                "policy.cf_required",
            )

    def blocks(self, grid: TimeGrid) -> int:
        """Number of compliance blocks (Y) on ``grid``."""
        expected = grid.D if self.mode is ComplianceMode.DAILY else grid.H
        if self.horizon is not None and self.horizon != expected:
            raise ValidationError(
                f"horizon must equal {expected} for {self.mode.value} mode on this grid, "
                f"got {self.horizon}",
                "policy.horizon",
            )
        if self.cf_required > expected:
            raise ValidationError(
                f"cf_required={self.cf_required} exceeds horizon={expected}",
                "policy.cf_required",
            )
        return expected

    @property
    def no_sell(self) -> bool:
        return self.export_policy is ExportPolicy.NO_SELL


@dataclass(frozen=True)
class ModelConstants:
    """Big-M, status lower bound and export blocking.

    ``big_m=None`` picks 1.5*(max load + charge rate). ``hourly_exports``
    holds the committed export constant within an MTU, like every other
    day-ahead quantity; ``False`` lets it vary per slot.
    """

    big_m: float | None = None
    epsilon_status: float = 1e-3
    hourly_exports: bool = True

    def __post_init__(self):
        if self.epsilon_status < 0:
            raise ValidationError("must be >= 0", "constants.epsilon_status")
        if self.big_m is not None:
            if not self.big_m > 0:
                raise ValidationError("must be > 0", "constants.big_m")
            if self.epsilon_status >= self.big_m:
                raise ValidationError("must be much smaller than big_m",
                                      "constants.epsilon_status")

    def resolve_big_m(self, max_load: float, battery: BatteryParams) -> float:
        needed = float(max_load) + battery.charge_rate_max
        if self.big_m is None:
            return max(1.5 * needed, 1.0)
        if self.big_m < needed:
            warnings.warn(
                f"big_m={self.big_m:g} kW is below the peak feasible import {needed:g} kW; "
                "purchases may be cut off",
                stacklevel=3,
            )
        return float(self.big_m)


@dataclass(frozen=True)
class ForecastBundle:
    p_renew: np.ndarray
    p_load: np.ndarray

    def __post_init__(self):
        renew = np.asarray(self.p_renew, dtype=float)
        load = np.asarray(self.p_load, dtype=float)
        if renew.shape != load.shape or renew.ndim != 1:
            raise ValidationError("p_renew and p_load must be 1-D series of equal length",
                                  "forecast")
        check_series(renew, renew.shape[0], "forecast.p_renew")
        check_series(load, load.shape[0], "forecast.p_load")
        object.__setattr__(self, "p_renew", renew)
        object.__setattr__(self, "p_load", load)

    def __len__(self):
        return self.p_renew.shape[0]

    def check(self, grid: TimeGrid) -> "ForecastBundle":
        if len(self) != grid.T:
            raise ValidationError(f"expected length T={grid.T}, got {len(self)}", "forecast")
        return self


def green_sellers(n: int = 1, allocations: Sequence[float | None] | None = None):
    """The three default green sellers (DA 4.55/5.20/5.75, RT 4.75/5.40/5.95)."""
    da = (4.55, 5.20, 5.75)
    rt = (4.75, 5.40, 5.95)
    if not 1 <= n <= 3:
        raise ValueError("the tariff table lists three green sellers")
    allocations = list(allocations) if allocations is not None else [None] * n
    return tuple(GreenSource(f"green{i + 1}", da[i], rt[i], allocations[i]) for i in range(n))


@dataclass(frozen=True)
class SystemConfig:
    battery: BatteryParams = field(default_factory=BatteryParams)
    tariff: Tariff = field(default_factory=Tariff)
    sources: tuple = field(default_factory=green_sellers)
    policy: CompliancePolicy = field(default_factory=CompliancePolicy)
    constants: ModelConstants = field(default_factory=ModelConstants)
    pv_capacity: float = 15.0

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple(self.sources))
        if not self.sources:
            raise ValidationError("at least one green source is required", "sources")
        ids = [s.id for s in self.sources]
        if len(set(ids)) != len(ids):
            raise ValidationError("source ids must be unique", "sources")
        if self.pv_capacity < 0:
            raise ValidationError("must be >= 0", "pv_capacity")

    @property
    def n_sources(self) -> int:
        return len(self.sources)

    def replace(self, **changes) -> "SystemConfig":
        from dataclasses import replace

        return replace(self, **changes)

    def with_policy(self, **changes) -> "SystemConfig":
        from dataclasses import replace

        return replace(self, policy=replace(self.policy, **changes))

    def prices(self, grid: TimeGrid) -> "PriceTable":
        return price_table(self, grid)


class PriceTable(NamedTuple):
    """All tariffs expanded to length-T arrays; green arrays have shape (N_source, T)."""

    ng_da: np.ndarray
    ng_rt: np.ndarray
    sell_da: np.ndarray
    sell_rt: np.ndarray
    g_da: np.ndarray
    g_rt: np.ndarray


def price_table(config: SystemConfig, grid: TimeGrid) -> PriceTable:
    t = config.tariff
    table = PriceTable(
        expand_price(t.nongreen_buy_da, grid, "tariff.nongreen_buy_da"),
        expand_price(t.nongreen_buy_rt, grid, "tariff.nongreen_buy_rt"),
        expand_price(t.sell_da, grid, "tariff.sell_da"),
        expand_price(t.sell_rt, grid, "tariff.sell_rt"),
        np.array([expand_price(s.buy_da, grid, f"sources.{s.id}.buy_da") for s in config.sources]),
        np.array([expand_price(s.buy_rt, grid, f"sources.{s.id}.buy_rt") for s in config.sources]),
    )
    validate_tariff(table, config)
    return table


def validate_tariff(table: PriceTable, config: SystemConfig) -> None:
    """Reject sell_da >= any DA buy rate; warn on RT rates better than DA."""
    if np.any(table.sell_da >= table.ng_da):
        raise ValidationError("sell_da must be strictly below nongreen_buy_da in every slot",
                              "tariff.sell_da")
    for i, src in enumerate(config.sources):
        if np.any(table.sell_da >= table.g_da[i]):
            raise ValidationError(f"sell_da must be strictly below the DA rate of {src.id}",
                                  "tariff.sell_da")
    if np.any(table.ng_rt < table.ng_da) or np.any(table.g_rt < table.g_da):
        warnings.warn("a real-time buy rate is cheaper than its day-ahead rate", stacklevel=3)
    if np.any(table.sell_rt > table.sell_da):
        warnings.warn("the real-time sell rate exceeds the day-ahead sell rate", stacklevel=3)
