"""Command-line entry points.

Exit codes: 0 success, 2 validation error, 3 solver failure, 4 infeasible.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from ._validation import ValidationError
from .domain import ExportPolicy, ForecastBundle
from .io import (SAMPLE_ERRORS, RunConfig, load_config, load_forecast_csv, load_matrix_csv,
                 read_error_model, read_ledger_json, supply_stack_rows, write_error_model,
                 write_forecast_csv, write_ledger_csv, write_ledger_json, write_matrix_csv,
                 write_rows_csv)
from .milp import SolverError, Status, TooManyBinaries
from .planning import (ScenarioSet, build_fcfe, build_stochastic_fcfe, extract_plan,
                       extract_stoch_plan)
from .rolling import DataProvider, Mode, cf_accounting, run_rolling, summarize_energy
from .scenarios import BlockCovarianceEstimator, draw_scenarios
from .synthetic import SyntheticDataSpec, gen_synthetic

EXIT_OK, EXIT_VALIDATION, EXIT_SOLVER, EXIT_INFEASIBLE = 0, 2, 3, 4

log = logging.getLogger("flexcfe")


class Infeasible(Exception):
    pass


# -- helpers -------------------------------------------------------------------

def _config(args) -> RunConfig:
    cfg = load_config(args.config)
    system = cfg.system
    policy = system.policy
    if getattr(args, "cf_days", None) is not None:
        policy = replace(policy, cf_required=args.cf_days)
    if getattr(args, "no_sell", False):
        policy = replace(policy, export_policy=ExportPolicy.NO_SELL)
    system = replace(system, policy=replace(policy))
    system.policy.blocks(cfg.grid)
    if getattr(args, "solver", None):
        cfg = replace(cfg, solver=replace(cfg.solver, backend=args.solver))
    return replace(cfg, system=system)


def _path(arg, cfg: RunConfig, key: str, what: str) -> Path:
    value = arg or cfg.paths.get(key)
    if not value:
        raise ValidationError(f"no {what} given (flag or config paths.{key})", key)
    return Path(value)


def _write_json(path, data) -> None:
    text = json.dumps(data, indent=2, sort_keys=True)
    if path:
        Path(path).write_text(text + "\n")
    else:
        print(text)


def _plan_payload(plan, objective, grid, extra=None) -> dict:
    first = getattr(plan, "first_stage", plan)
    data = {
        "status": "optimal",
        "objective": objective,
        "u": first.u.astype(int).tolist(),
        "cf_blocks": first.cf_blocks,
        "series": {k: np.asarray(getattr(first, k)).tolist()
                   for k in ("pg", "png", "psell", "pchg", "pdchg", "soc", "xg", "xng")},
        "grid": {"slot_minutes": grid.slot_minutes, "slots_per_mtu": grid.slots_per_mtu,
                 "mtus_per_day": grid.mtus_per_day, "days": grid.days},
    }
    data.update(extra or {})
    return data


def _solve(model, cfg: RunConfig):
    sol = cfg.solver.make()(model)
    if sol.status is Status.INFEASIBLE:
        raise Infeasible("the planning problem is infeasible")
    if not sol.optimal:
        raise SolverError(f"solver returned status {sol.status.value}")
    return sol


# -- subcommands ---------------------------------------------------------------

def cmd_plan(args) -> int:
    cfg = _config(args)
    forecast, _ = _horizon(args, cfg)
    model, vi = build_fcfe(cfg.grid, cfg.system, forecast)
    sol = _solve(model, cfg)
    plan = extract_plan(sol, vi, cfg.grid)
    _write_json(args.out, _plan_payload(plan, sol.objective, cfg.grid))
    return EXIT_OK


def _horizon(args, cfg: RunConfig):
    """First planning horizon of a forecast CSV covering at least ``D`` whole days."""
    path = _path(args.forecast, cfg, "forecast", "forecast CSV")
    forecast, start = load_forecast_csv(path, cfg.grid, "days")
    T = cfg.grid.T
    if len(forecast) < T:
        raise ValidationError(f"expected at least {T} rows, got {len(forecast)}", str(path))
    if len(forecast) > T:
        log.info("forecast covers %d slots; planning over the first %d", len(forecast), T)
        forecast = ForecastBundle(forecast.p_renew[:T], forecast.p_load[:T])
    return forecast, start


def _error_model(path, cfg: RunConfig, block: int | None = None):
    value = path or cfg.scenarios.error_model
    if not value:
        raise ValidationError("no error model given (--error-model or scenarios.error_model)",
                              "error_model")
    return read_error_model(value, block)


def cmd_plan_stoch(args) -> int:
    cfg = _config(args)
    forecast, _ = _horizon(args, cfg)
    em = _error_model(args.error_model, cfg)
    n = args.scenarios or cfg.scenarios.n
    seed = cfg.scenarios.seed if args.seed is None else args.seed
    scen = draw_scenarios(forecast, em, n, seed, cfg.system.pv_capacity)
    model, vi = build_stochastic_fcfe(cfg.grid, cfg.system, scen, cfg.scenarios.enforce_budget)
    sol = _solve(model, cfg)
    plan = extract_stoch_plan(sol, vi, scen)
    _write_json(args.out, _plan_payload(plan, sol.objective, cfg.grid, {
        "expected_recourse": plan.expected_recourse, "scenarios": n, "seed": seed}))
    return EXIT_OK


def _provider(args, cfg: RunConfig, days_needed: int) -> DataProvider:
    grid = cfg.grid
    if args.synthetic_seed is not None:
        spec = SyntheticDataSpec(seed=args.synthetic_seed, pv_capacity=cfg.system.pv_capacity)
        actuals, forecasts, _ = gen_synthetic(spec, grid, days_needed)
        start = spec.start
    else:
        actuals, start = load_forecast_csv(_path(args.actuals, cfg, "actuals", "actuals CSV"),
                                           grid, "days")
        forecasts, fstart = load_forecast_csv(
            _path(args.forecast, cfg, "forecast", "forecast CSV"), grid, "days")
        if fstart != start or len(forecasts) != len(actuals):
            raise ValidationError("actuals and forecast CSVs must cover the same slots",
                                  "forecast")
        start = start.date()
    em = None
    if Mode.parse(args.mode) is Mode.STOCHASTIC:
        em = _error_model(args.error_model, cfg)
    return DataProvider(actuals, forecasts, grid.slots_per_day, start, em)


def cmd_roll(args) -> int:
    cfg = _config(args)
    mode = Mode.parse(args.mode)
    provider = _provider(args, cfg, args.days + cfg.grid.D - 1)
    n = args.scenarios or cfg.scenarios.n
    ledger = run_rolling(cfg.grid, cfg.system, provider, mode, args.days,
                         seed=cfg.scenarios.seed if args.seed is None else args.seed,
                         solver=cfg.solver.make(), n_scenarios=n,
                         enforce_budget=cfg.scenarios.enforce_budget)
    if args.out:
        write_ledger_json(args.out, ledger)
    if args.csv:
        write_ledger_csv(args.csv, ledger)
    summary = ledger.summary()
    print(json.dumps({k: summary[k] for k in ("mode", "cf_required", "days",
                                              "achieved_cf_percent")}
                     | {"net_cost": summary["totals"]["net_cost"]}, sort_keys=True))
    return EXIT_OK


def cmd_estimate_cov(args) -> int:
    cfg = _config(args)
    if args.errors or cfg.paths.get("errors"):
        errors = load_matrix_csv(_path(args.errors, cfg, "errors", "error history CSV"))
    else:
        log.info("no error history given; using the shipped sample")
        errors = load_matrix_csv(SAMPLE_ERRORS)
    a = cfg.admm
    est = BlockCovarianceEstimator(
        block_size=args.block, rho=args.rho if args.rho is not None else a.rho,
        epsilon=args.epsilon if args.epsilon is not None else a.epsilon,
        max_iters=args.max_iters or a.max_iters,
        tol_primal=args.tol if args.tol is not None else a.tol_primal,
        tol_dual=args.tol if args.tol is not None else a.tol_dual,
        offdiag=a.offdiag).fit(errors)
    if not est.converged_:
        log.warning("ADMM stopped after %d iterations without meeting the tolerance",
                    est.n_iter_)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_error_model(out, est.error_model_)
    print(json.dumps({"converged": bool(est.converged_), "iterations": int(est.n_iter_),
                      "epsilon": est.epsilon_, "min_eigenvalue": est.error_model_.min_eigenvalue(),
                      "dimension": int(errors.shape[1]), "samples": int(errors.shape[0]),
                      "sigma": str(out)}, sort_keys=True))
    return EXIT_OK


def cmd_scenarios(args) -> int:
    cfg = _config(args)
    forecast, start = _horizon(args, cfg)
    em = _error_model(args.error_model, cfg)
    n = args.n or cfg.scenarios.n
    seed = cfg.scenarios.seed if args.seed is None else args.seed
    scen: ScenarioSet = draw_scenarios(forecast, em, n, seed, cfg.system.pv_capacity)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for k in range(scen.n):
        write_forecast_csv(out / f"scenario_{k + 1:03d}.csv", scen.scenario(k), start,
                           cfg.grid.slot_minutes)
    print(json.dumps({"scenarios": scen.n, "seed": seed, "dir": str(out)}))
    return EXIT_OK


def cmd_synth(args) -> int:
    cfg = _config(args)
    spec = SyntheticDataSpec(seed=args.seed, pv_capacity=cfg.system.pv_capacity)
    actuals, forecasts, history = gen_synthetic(spec, cfg.grid, args.days)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_forecast_csv(out / "actuals.csv", actuals, spec.start, cfg.grid.slot_minutes)
    write_forecast_csv(out / "forecast.csv", forecasts, spec.start, cfg.grid.slot_minutes)
    write_matrix_csv(out / "errors.csv", history)
    print(json.dumps({"days": args.days, "seed": args.seed, "dir": str(out),
                      "error_history_shape": list(history.shape)}))
    return EXIT_OK


def cmd_report(args) -> int:
    ledgers = [read_ledger_json(p) for p in args.ledger]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_rows_csv(out / "energy_summary.csv", [summarize_energy(lg) for lg in ledgers])
    write_rows_csv(out / "achieved_cf.csv", [
        {"mode": lg.mode.value, "cf_target": lg.config.policy.cf_required,
         "achieved_cf_percent": round(cf_accounting(lg), 1)} for lg in ledgers])
    cost_rows = []
    for lg in ledgers:
        for month, cost in lg.monthly_costs().items():
            cost_rows.append({"mode": lg.mode.value, "cf_target": lg.config.policy.cf_required,
                              "month": month, "net_cost": cost})
    write_rows_csv(out / "monthly_cost.csv", cost_rows)
    for k, lg in enumerate(ledgers):
        tag = f"{lg.mode.value}_cf{lg.config.policy.cf_required}"
        write_rows_csv(out / f"supply_stack_{k + 1}_{tag}.csv", supply_stack_rows(lg))
    _write_json(out / "summary.json", [lg.summary() for lg in ledgers])
    print(json.dumps({"ledgers": len(ledgers), "dir": str(out)}))
    return EXIT_OK


# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="flexcfe", description=__doc__.splitlines()[0])
    p.add_argument("--log-level", default="WARNING")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, policy=True):
        sp.add_argument("--config", help="JSON run config (default: shipped config)")
        sp.add_argument("--solver", choices=("external", "reference"))
        if policy:
            sp.add_argument("--cf-days", type=int, dest="cf_days",
                            help="carbon-free blocks required (X)")
            sp.add_argument("--no-sell", action="store_true", dest="no_sell")

    sp = sub.add_parser("plan", help="deterministic plan over one horizon")
    common(sp)
    sp.add_argument("--forecast")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_plan)

    sp = sub.add_parser("plan-stoch", help="two-stage stochastic plan over one horizon")
    common(sp)
    sp.add_argument("--forecast")
    sp.add_argument("--scenarios", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--error-model", dest="error_model")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_plan_stoch)

    sp = sub.add_parser("roll", help="daily rolling simulation")
    common(sp)
    sp.add_argument("--mode", default="det",
                    choices=("ideal", "det", "stoch", "deterministic", "stochastic"))
    sp.add_argument("--days", type=int, required=True)
    sp.add_argument("--actuals")
    sp.add_argument("--forecast")
    sp.add_argument("--synthetic-seed", type=int, dest="synthetic_seed",
                    help="generate synthetic data instead of reading CSVs")
    sp.add_argument("--error-model", dest="error_model")
    sp.add_argument("--scenarios", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", help="ledger JSON")
    sp.add_argument("--csv", help="per-day ledger CSV")
    sp.set_defaults(func=cmd_roll)

    sp = sub.add_parser("estimate-cov", help="structured error covariance by ADMM")
    common(sp, policy=False)
    sp.add_argument("--errors")
    sp.add_argument("--block", type=int, default=96)
    sp.add_argument("--rho", type=float)
    sp.add_argument("--tol", type=float)
    sp.add_argument("--epsilon", type=float)
    sp.add_argument("--max-iters", type=int, dest="max_iters")
    sp.add_argument("--out", required=True, help="sigma CSV (mean and meta written alongside)")
    sp.set_defaults(func=cmd_estimate_cov)

    sp = sub.add_parser("scenarios", help="sample scenarios around a forecast")
    common(sp, policy=False)
    sp.add_argument("--forecast")
    sp.add_argument("--error-model", dest="error_model")
    sp.add_argument("--n", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_scenarios)

    sp = sub.add_parser("synth", help="generate synthetic actuals, forecasts and errors")
    common(sp, policy=False)
    sp.add_argument("--days", type=int, default=30)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("report", help="tables and plot data from ledger JSON files")
    sp.add_argument("--ledger", nargs="+", required=True)
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Infeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (SolverError, TooManyBinaries) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
