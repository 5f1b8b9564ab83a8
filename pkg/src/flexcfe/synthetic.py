"""Synthetic building data: PV output, office load and their day-ahead forecasts.

Solar is ``alpha * irradiance`` with irradiance = clear-sky bell x seasonal
factor x cloud multiplier. Load is an office profile plus a cooling term
that follows irradiance, so forecast errors of the two series correlate.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass

import numpy as np

from .domain import ForecastBundle, TimeGrid


@dataclass(frozen=True)
class SyntheticDataSpec:
    pv_capacity: float = 15.0
    load_peak: float = 35.0
    alpha: float = 0.015           # kW per W/m2
    clear_sky_peak: float = 1000.0  # W/m2
    sunrise: float = 6.0
    sunset: float = 18.5
    base_load: float = 9.0
    office_load: float = 14.0
    cooling_load: float = 10.0
    cloud_noise: float = 0.12      # intra-day cloud variability
    load_noise: float = 0.8        # kW
    forecast_cloud_error: float = 0.15
    renew_bias: float = -0.03
    load_bias: float = 0.02
    history_days: int = 60
    start: dt.date = dt.date(2024, 6, 1)
    seed: int = 0

    def __post_init__(self):
        for name in ("pv_capacity", "load_peak", "alpha", "clear_sky_peak"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0 <= self.sunrise < self.sunset <= 24:
            raise ValueError("need 0 <= sunrise < sunset <= 24")


def _clear_sky(hours: np.ndarray, spec: SyntheticDataSpec) -> np.ndarray:
    x = (hours - spec.sunrise) / (spec.sunset - spec.sunrise)
    bell = np.where((x > 0) & (x < 1), np.sin(np.pi * np.clip(x, 0, 1)), 0.0)
    return bell ** 1.3


def _smooth(x: np.ndarray, width: int) -> np.ndarray:
    if width <= 1:
        return x
    kernel = np.ones(width) / width
    pad = np.pad(x, (width // 2, width - 1 - width // 2), mode="edge")
    return np.convolve(pad, kernel, mode="valid")


def _ar1(rng, n: int, rho: float, sigma: float) -> np.ndarray:
    out = np.empty(n)
    prev = 0.0
    innov = rng.normal(0.0, sigma * np.sqrt(1 - rho ** 2), n)
    for k in range(n):
        prev = rho * prev + innov[k]
        out[k] = prev
    return out


def _simulate(spec: SyntheticDataSpec, grid: TimeGrid, first_day: int, num_days: int, rng):
    """Raw (unscaled) actual and forecast series for ``num_days`` days."""
    spd = grid.slots_per_day
    n = num_days * spd
    slot_hours = (np.arange(n) % spd) * grid.dt + grid.dt / 2
    day = first_day + np.arange(n) // spd
    dates = [spec.start + dt.timedelta(days=int(d)) for d in range(first_day, first_day + num_days)]
    doy = np.array([d.timetuple().tm_yday for d in dates])
    weekday = np.array([d.weekday() < 5 for d in dates])

    clear = _clear_sky(slot_hours, spec) * spec.clear_sky_peak
    # drier months are sunnier; rainy season (Jun-Oct) is cloudier
    season = (0.97 + 0.03 * np.cos(2 * np.pi * (doy - 60) / 365.0))[day - first_day]
    daily_cloud = np.clip(rng.beta(5, 1.6, num_days), 0.15, 1.0)
    intra = _ar1(rng, n, rho=0.9, sigma=spec.cloud_noise)
    cloud = np.clip(daily_cloud[day - first_day] + intra, 0.05, 1.0)
    irradiance = clear * season * cloud

    occupied = np.clip((slot_hours - 7.5) / 1.0, 0, 1) * np.clip((18.5 - slot_hours) / 1.0, 0, 1)
    occupied *= np.where(weekday, 1.0, 0.25)[day - first_day]
    cooling = spec.cooling_load * irradiance / spec.clear_sky_peak * (0.4 + 0.6 * occupied)
    noise = _ar1(rng, n, rho=0.8, sigma=spec.load_noise)
    load = spec.base_load + spec.office_load * occupied + cooling + noise

    cloud_fc = np.clip(daily_cloud + rng.normal(0, spec.forecast_cloud_error, num_days), 0.1, 1.0)
    irr_fc = clear * season * cloud_fc[day - first_day]
    cooling_fc = spec.cooling_load * irr_fc / spec.clear_sky_peak * (0.4 + 0.6 * occupied)
    load_fc = _smooth(spec.base_load + spec.office_load * occupied + cooling_fc, grid.slots_per_mtu)
    return irradiance, load, irr_fc, load_fc


def gen_synthetic(spec: SyntheticDataSpec, grid: TimeGrid, num_days: int):
    """Generate ``(actuals, forecasts, error_history)``.

    ``actuals`` and ``forecasts`` cover ``num_days`` consecutive days (the
    forecast of each calendar day is the one used whenever that day falls in
    a planning window). ``error_history`` has one row per historical issue
    day and ``2T`` columns: renew errors then load errors over a ``grid``
    horizon, taken from an independent period before ``spec.start``.
    """
    if num_days < 1:
        raise ValueError("num_days must be >= 1")
    streams = np.random.SeedSequence(spec.seed).spawn(2)
    main_rng, hist_rng = (np.random.default_rng(s) for s in streams)
    irr, load, irr_fc, load_fc = _simulate(spec, grid, 0, num_days, main_rng)

    solar_scale = spec.alpha
    load_scale = spec.load_peak / max(load.max(), 1e-9)

    def finish(irr_a, load_a, irr_f, load_f):
        renew = np.clip(irr_a * solar_scale, 0, spec.pv_capacity)
        renew_fc = np.clip(irr_f * solar_scale * (1 + spec.renew_bias), 0, spec.pv_capacity)
        return (ForecastBundle(renew, np.maximum(load_a * load_scale, 0)),
                ForecastBundle(renew_fc, np.maximum(load_f * load_scale * (1 + spec.load_bias), 0)))

    actuals, forecasts = finish(irr, load, irr_fc, load_fc)

    hist_days = max(spec.history_days, grid.D + 1)
    h_irr, h_load, h_irr_fc, h_load_fc = _simulate(spec, grid, -hist_days, hist_days, hist_rng)
    h_act, h_fc = finish(h_irr, h_load, h_irr_fc, h_load_fc)
    e_renew = h_act.p_renew - h_fc.p_renew
    e_load = h_act.p_load - h_fc.p_load
    spd, T = grid.slots_per_day, grid.T
    rows = [np.concatenate([e_renew[k * spd:k * spd + T], e_load[k * spd:k * spd + T]])
            for k in range(hist_days - grid.D + 1)]
    return actuals, forecasts, np.array(rows)


def day_dates(spec: SyntheticDataSpec, num_days: int) -> list[dt.date]:
    return [spec.start + dt.timedelta(days=k) for k in range(num_days)]
