"""Shared builders for the test suite."""

from dataclasses import replace

import numpy as np

from flexcfe.domain import (CompliancePolicy, ForecastBundle, SystemConfig, TimeGrid,
                            green_sellers)
from flexcfe.synthetic import SyntheticDataSpec, gen_synthetic

COMPLEMENTARITY_TOL = 1e-6


def synthetic(grid: TimeGrid, days: int, seed: int = 0):
    return gen_synthetic(SyntheticDataSpec(seed=seed), grid, days)


def config(cf: int, n_sources: int = 1, allocations=None, no_sell: bool = False,
           **battery) -> SystemConfig:
    cfg = SystemConfig(sources=green_sellers(n_sources, allocations),
                       policy=CompliancePolicy(cf_required=cf,
                                               export_policy="no_sell" if no_sell
                                               else "sell_back"))
    if battery:
        cfg = replace(cfg, battery=replace(cfg.battery, **battery))
    return cfg


def complementarity(plan) -> float:
    return float(np.max(np.minimum(plan.pnet_plus, plan.pnet_minus)))


def micro_forecast() -> ForecastBundle:
    return ForecastBundle(np.array([0, 6, 8, 1, 0, 5, 9, 2.0]),
                          np.array([10, 12, 9, 11, 8, 13, 10, 9.0]))
