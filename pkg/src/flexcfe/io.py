"""Configuration, time-series CSV, error-model and ledger serialization."""

from __future__ import annotations

import csv
import datetime as dt
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from ._validation import ValidationError
from .domain import (BatteryParams, CompliancePolicy, ForecastBundle, GreenSource,
                     ModelConstants, SystemConfig, Tariff, TimeGrid, price_table)
from .milp import BackendConfig, make_solver
from .rolling import Ledger, Mode, RealizedDay
from .scenarios import AdmmSettings, ErrorModel


def _data_path(name: str) -> Path:
    return Path(str(resources.files("flexcfe") / "data" / name))


DEFAULT_CONFIG = _data_path("default_config.json")
SCHEMA_PATH = _data_path("config_schema.json")
SAMPLE_ERRORS = _data_path("sample_errors.csv")


def config_schema() -> dict:
    return json.loads(SCHEMA_PATH.read_text())


# -- configuration -----------------------------------------------------------

@dataclass(frozen=True)
class SolverSettings:
    backend: str = "external"
    command_template: str | None = None
    timeout: float = 600.0
    feasibility_tol: float = 1e-7
    integrality_tol: float = 1e-5
    max_binaries: int = 20

    def make(self):
        """The ``model -> Solution`` callable described by these settings."""
        if self.backend == "reference":
            return make_solver("reference", max_binaries=self.max_binaries)
        kwargs = dict(timeout=self.timeout, feasibility_tol=self.feasibility_tol,
                      integrality_tol=self.integrality_tol)
        if self.command_template:
            return make_solver(BackendConfig(self.command_template, **kwargs))
        return make_solver("external", **kwargs)


@dataclass(frozen=True)
class ScenarioSettings:
    n: int = 20
    seed: int = 0
    error_model: str | None = None
    enforce_budget: bool = True


@dataclass(frozen=True)
class RunConfig:
    grid: TimeGrid = field(default_factory=TimeGrid)
    system: SystemConfig = field(default_factory=SystemConfig)
    solver: SolverSettings = field(default_factory=SolverSettings)
    scenarios: ScenarioSettings = field(default_factory=ScenarioSettings)
    admm: AdmmSettings = field(default_factory=AdmmSettings)
    paths: dict = field(default_factory=dict)


def _schema_error(err: jsonschema.ValidationError) -> ValidationError:
    path = ".".join(str(p) for p in err.absolute_path) or "<root>"
    return ValidationError(err.message, path)


def parse_config(data: dict, base_dir: Path | None = None) -> RunConfig:
    """Validate a config mapping against the schema and the domain invariants."""
    validator = jsonschema.Draft202012Validator(config_schema())
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        raise _schema_error(errors[0])

    grid = TimeGrid(**data.get("grid", {}))
    battery = BatteryParams(**data.get("battery", {}))
    tariff = Tariff(**data.get("tariff", {}))
    sources = tuple(GreenSource(**s) for s in data.get("sources", [])) or None
    policy = CompliancePolicy(**data.get("policy", {}))
    constants = ModelConstants(**data.get("constants", {}))
    kwargs = dict(battery=battery, tariff=tariff, policy=policy, constants=constants)
    if sources:
        kwargs["sources"] = sources
    if "pv_capacity" in data:
        kwargs["pv_capacity"] = data["pv_capacity"]
    system = SystemConfig(**kwargs)
    policy.blocks(grid)
    price_table(system, grid)

    base = base_dir or Path.cwd()
    paths = {k: (str((base / v).resolve()) if v else None)
             for k, v in data.get("paths", {}).items()}
    scen = dict(data.get("scenarios", {}))
    if scen.get("error_model"):
        scen["error_model"] = str((base / scen["error_model"]).resolve())
    return RunConfig(grid, system, SolverSettings(**data.get("solver", {})),
                     ScenarioSettings(**scen), AdmmSettings(**data.get("admm", {})), paths)


def load_config(path=None) -> RunConfig:
    """Load and validate a JSON run configuration (the shipped default if ``path`` is None)."""
    path = Path(path) if path is not None else DEFAULT_CONFIG
    if not path.is_file():
        raise ValidationError(f"config file not found: {path}", "config")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"invalid JSON: {exc}", "config") from exc
    return parse_config(data, path.parent)


# -- time series -------------------------------------------------------------

def _parse_ts(text: str, row: int, path) -> dt.datetime:
    try:
        return dt.datetime.fromisoformat(text.strip())
    except ValueError as exc:
        raise ValidationError(f"row {row}: bad ISO-8601 timestamp {text!r}", str(path)) from exc


def read_timeseries(path, columns, slot_minutes: int, nonneg: bool = True):
    """Read ``timestamp,<columns...>`` rows at a fixed spacing.

    Returns ``(timestamps, {column: array})``. Gaps, duplicates, unordered
    timestamps and (optionally) negative values raise ``ValidationError``.
    """
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"file not found: {path}", str(path))
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in ("timestamp", *columns) if c not in header]
        if missing:
            raise ValidationError(f"missing column(s) {missing}; header is {header}", str(path))
        stamps, values = [], {c: [] for c in columns}
        for k, rec in enumerate(reader, start=2):
            stamps.append(_parse_ts(rec["timestamp"], k, path))
            for c in columns:
                try:
                    values[c].append(float(rec[c]))
                except (TypeError, ValueError) as exc:
                    raise ValidationError(f"row {k}: non-numeric {c}={rec[c]!r}",
                                          str(path)) from exc
    if not stamps:
        raise ValidationError("no data rows", str(path))
    step = dt.timedelta(minutes=slot_minutes)
    seen = set()
    for k in range(1, len(stamps)):
        if stamps[k] in seen or stamps[k] == stamps[k - 1]:
            raise ValidationError(f"duplicate timestamp {stamps[k].isoformat()}", str(path))
        seen.add(stamps[k - 1])
        if stamps[k] < stamps[k - 1]:
            raise ValidationError(f"timestamps not increasing at {stamps[k].isoformat()}",
                                  str(path))
        if stamps[k] - stamps[k - 1] != step:
            gap = stamps[k] - stamps[k - 1]
            if gap % step:
                raise ValidationError(f"spacing {gap} before {stamps[k].isoformat()} is not "
                                      f"{slot_minutes} minutes", str(path))
            missing = [stamps[k - 1] + j * step for j in range(1, gap // step)]
            shown = ", ".join(t.isoformat() for t in missing[:5])
            more = f" (+{len(missing) - 5} more)" if len(missing) > 5 else ""
            raise ValidationError(f"gap: missing timestamp(s) {shown}{more}", str(path))
    arrays = {c: np.asarray(v, dtype=float) for c, v in values.items()}
    for c, arr in arrays.items():
        if not np.all(np.isfinite(arr)):
            raise ValidationError(f"non-finite value in column {c}", str(path))
        if nonneg and np.any(arr < 0):
            k = int(np.argmax(arr < 0))
            raise ValidationError(f"negative {c} {arr[k]:g} at {stamps[k].isoformat()}",
                                  str(path))
    return stamps, arrays


def _check_length(n: int, grid: TimeGrid, length, path) -> None:
    if length == "days":
        if n % grid.slots_per_day:
            raise ValidationError(f"{n} rows is not a whole number of days "
                                  f"({grid.slots_per_day} slots each)", str(path))
    elif n != (grid.T if length is None else length):
        raise ValidationError(f"expected {grid.T if length is None else length} rows, got {n}",
                              str(path))


def load_series_csv(path, grid: TimeGrid, column: str = "value", nonneg: bool = True,
                    length=None) -> np.ndarray:
    """Dense series from a ``timestamp,value`` CSV.

    ``length=None`` requires exactly ``T`` rows; ``"days"`` accepts any whole
    number of days; an integer requires that many rows.
    """
    _, arrays = read_timeseries(path, [column], grid.slot_minutes, nonneg)
    _check_length(arrays[column].size, grid, length, path)
    return arrays[column]


def load_forecast_csv(path, grid: TimeGrid, length=None):
    """``(ForecastBundle, first timestamp)`` from a ``timestamp,p_renew,p_load`` CSV."""
    stamps, arrays = read_timeseries(path, ["p_renew", "p_load"], grid.slot_minutes)
    _check_length(stamps.__len__(), grid, length, path)
    return ForecastBundle(arrays["p_renew"], arrays["p_load"]), stamps[0]


def _timestamps(start, n: int, slot_minutes: int) -> list[str]:
    start = start if isinstance(start, dt.datetime) else dt.datetime.combine(start, dt.time())
    step = dt.timedelta(minutes=slot_minutes)
    return [(start + k * step).isoformat() for k in range(n)]


def write_series_csv(path, values, start, slot_minutes: int, column: str = "value") -> None:
    values = np.asarray(values, dtype=float)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", column])
        for ts, v in zip(_timestamps(start, values.size, slot_minutes), values):
            w.writerow([ts, repr(float(v))])


def write_forecast_csv(path, bundle: ForecastBundle, start, slot_minutes: int) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "p_renew", "p_load"])
        for ts, r, ld in zip(_timestamps(start, len(bundle), slot_minutes), bundle.p_renew,
                             bundle.p_load):
            w.writerow([ts, repr(float(r)), repr(float(ld))])


# -- matrices and error models ----------------------------------------------

def load_matrix_csv(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"file not found: {path}", str(path))
    try:
        M = np.loadtxt(path, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise ValidationError(f"not a numeric CSV matrix: {exc}", str(path)) from exc
    if not np.all(np.isfinite(M)):
        raise ValidationError("matrix contains non-finite values", str(path))
    return M


def write_matrix_csv(path, M) -> None:
    np.savetxt(path, np.atleast_2d(M), delimiter=",", fmt="%.17g")


def _sidecars(path: Path):
    stem = path.with_suffix("")
    return Path(f"{stem}.mean.csv"), Path(f"{stem}.meta.json")


def write_error_model(path, model: ErrorModel) -> None:
    """Write sigma to ``path`` plus ``<stem>.mean.csv`` and ``<stem>.meta.json``."""
    path = Path(path)
    mean_path, meta_path = _sidecars(path)
    write_matrix_csv(path, model.sigma)
    write_matrix_csv(mean_path, model.mu[None, :])
    meta_path.write_text(json.dumps({"block_size": model.block_size,
                                     "num_blocks": model.num_blocks,
                                     "psd_floor": model.psd_floor}, indent=2))


def read_error_model(path, block_size: int | None = None) -> ErrorModel:
    """Inverse of :func:`write_error_model`; a missing mean file means zero mean."""
    path = Path(path)
    sigma = load_matrix_csv(path)
    mean_path, meta_path = _sidecars(path)
    meta = json.loads(meta_path.read_text()) if meta_path.is_file() else {}
    n = sigma.shape[0]
    r = block_size or meta.get("block_size")
    if r is None:
        raise ValidationError("block size unknown: pass it or keep the .meta.json file",
                              str(path))
    if n % (2 * r):
        raise ValidationError(f"dimension {n} is not a multiple of 2*block_size", str(path))
    mu = load_matrix_csv(mean_path).ravel() if mean_path.is_file() else np.zeros(n)
    return ErrorModel(mu, sigma, r, n // (2 * r), meta.get("psd_floor", 1e-8))


# -- ledgers -------------------------------------------------------------------

_DAY_ARRAYS = ("renew", "load", "pchg", "pdchg", "soc", "pg_da", "png_da", "export_da",
               "pg_rt", "png_rt", "emergency", "export_rt", "cf_blocks")


def ledger_to_dict(ledger: Ledger) -> dict:
    """Full ledger (summary plus per-slot flows) as JSON-ready data."""
    g = ledger.grid
    days = []
    for d in ledger.days:
        rec = {"day": d.day, "date": d.date.isoformat(), "da_cost": d.da_cost,
               "rt_cost": d.rt_cost, "no_sell": d.no_sell, "plan_status": d.plan_status,
               "planned_cf": None if d.planned_cf is None else np.asarray(d.planned_cf).tolist()}
        for k in _DAY_ARRAYS:
            rec[k] = np.asarray(getattr(d, k)).tolist()
        days.append(rec)
    return {
        "grid": {"slot_minutes": g.slot_minutes, "slots_per_mtu": g.slots_per_mtu,
                 "mtus_per_day": g.mtus_per_day, "days": g.days},
        "summary": ledger.summary(),
        "days": days,
    }


def ledger_from_dict(data: dict, config: SystemConfig | None = None) -> Ledger:
    s = data["summary"]
    grid = TimeGrid(**data["grid"])
    config = config or SystemConfig(policy=CompliancePolicy(
        mode=s["compliance_mode"], cf_required=s["cf_required"],
        export_policy=s["export_policy"]))
    ledger = Ledger(grid, config, Mode(s["mode"]))
    for rec in data["days"]:
        arrays = {k: np.asarray(rec[k], dtype=bool if k == "cf_blocks" else float)
                  for k in _DAY_ARRAYS}
        planned = None if rec["planned_cf"] is None else np.asarray(rec["planned_cf"])
        ledger.days.append(RealizedDay(
            day=rec["day"], date=dt.date.fromisoformat(rec["date"]), da_cost=rec["da_cost"],
            rt_cost=rec["rt_cost"], no_sell=rec["no_sell"], plan_status=rec["plan_status"],
            planned_cf=planned, **arrays))
    ledger.failures = [(f["day"] - 1, f["status"]) for f in s.get("failures", [])]
    return ledger


def write_ledger_json(path, ledger: Ledger) -> None:
    Path(path).write_text(json.dumps(ledger_to_dict(ledger), indent=1, sort_keys=True))


def read_ledger_json(path) -> Ledger:
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"file not found: {path}", str(path))
    return ledger_from_dict(json.loads(path.read_text()))


def write_rows_csv(path, rows: list[dict]) -> None:
    if not rows:
        Path(path).write_text("")
        return
    with Path(path).open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)


def write_ledger_csv(path, ledger: Ledger) -> None:
    write_rows_csv(path, ledger.rows())


def supply_stack_rows(ledger: Ledger) -> list[dict]:
    """Per-slot executed flows, ready for a supply-stack plot."""
    g = ledger.grid
    rows = []
    for d in ledger.days:
        stamps = _timestamps(d.date, g.slots_per_day, g.slot_minutes)
        for t, ts in enumerate(stamps):
            rows.append({
                "timestamp": ts, "solar": d.renew[t], "load": d.load[t],
                "green_da": float(d.pg_da[:, t].sum()), "green_rt": float(d.pg_rt[:, t].sum()),
                "nongreen_da": d.png_da[t], "nongreen_rt": d.png_rt[t],
                "emergency": d.emergency[t], "export_da": d.export_da[t],
                "export_rt": d.export_rt[t], "charge": d.pchg[t], "discharge": d.pdchg[t],
                "soc": d.soc[t + 1],
            })
    return rows
