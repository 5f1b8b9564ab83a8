import csv
import datetime as dt
import json

import numpy as np
import pytest

from flexcfe._validation import ValidationError
from flexcfe.domain import ForecastBundle, TimeGrid
from flexcfe.io import (DEFAULT_CONFIG, SAMPLE_ERRORS, ledger_to_dict, load_config,
                        load_forecast_csv, load_matrix_csv, load_series_csv, parse_config,
                        read_error_model, read_ledger_json, supply_stack_rows, write_error_model,
                        write_forecast_csv, write_ledger_json, write_rows_csv, write_series_csv)
from flexcfe.rolling import DataProvider, Mode, run_rolling
from flexcfe.scenarios import ErrorModel
from flexcfe.synthetic import SyntheticDataSpec, gen_synthetic

from helpers import config, synthetic

START = dt.datetime(2024, 1, 1)


def base_config():
    return json.loads(DEFAULT_CONFIG.read_text())


def test_default_config_values():
    cfg = load_config()
    b = cfg.system.battery
    assert (b.capacity, b.eta_c, b.eta_d) == (100.0, 0.95, 0.8835)
    assert (b.soc_min, b.soc_max, b.chg_ramp, b.dchg_ramp) == (20.0, 80.0, 20.0, 20.0)
    assert cfg.grid.T == 672 and cfg.system.policy.cf_required == 7
    assert not cfg.system.sources[0].limited


def test_config_rejections(tmp_path):
    data = base_config()
    data["tariff"]["sell_da"] = 4.30
    with pytest.raises(ValidationError, match="sell_da"):
        parse_config(data)
    data = base_config()
    data["battery"]["eta_c"] = "high"
    with pytest.raises(ValidationError) as err:
        parse_config(data)
    assert err.value.path == "battery.eta_c"
    data = base_config()
    data["policy"]["cf_required"] = 8
    with pytest.raises(ValidationError):
        parse_config(data)
    with pytest.raises(ValidationError, match="not found"):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(ValidationError, match="JSON"):
        load_config(bad)


def test_omitted_allocation_is_unlimited():
    data = base_config()
    data["sources"] = [{"id": "a", "buy_da": 4.55, "buy_rt": 4.75},
                       {"id": "b", "buy_da": 5.2, "buy_rt": 5.4, "allocation": 100.0}]
    cfg = parse_config(data)
    assert [s.limited for s in cfg.system.sources] == [False, True]


def test_config_paths_resolve_against_file(tmp_path):
    data = base_config()
    data["paths"] = {"forecast": "inputs/f.csv"}
    path = tmp_path / "run.json"
    path.write_text(json.dumps(data))
    assert load_config(path).paths["forecast"] == str(tmp_path / "inputs" / "f.csv")


def test_forecast_csv_round_trip(tmp_path):
    g = TimeGrid()
    _, fc, _ = synthetic(g, 7)
    path = tmp_path / "f.csv"
    write_forecast_csv(path, fc, START, 15)
    with path.open() as fh:
        assert sum(1 for _ in fh) == 673
    back, first = load_forecast_csv(path, g)
    assert first == START
    assert np.array_equal(back.p_renew, fc.p_renew) and np.array_equal(back.p_load, fc.p_load)


def _write_rows(path, rows, header=("timestamp", "value")):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def test_series_csv_errors(tmp_path):
    g = TimeGrid(60, 1, 4, 1)
    stamps = [(START + dt.timedelta(hours=k)).isoformat() for k in range(5)]
    path = tmp_path / "s.csv"
    _write_rows(path, [[stamps[k], 1.0] for k in (0, 1, 3, 4)])
    with pytest.raises(ValidationError, match=stamps[2]):
        load_series_csv(path, g)
    _write_rows(path, [[stamps[k], 1.0] for k in (0, 1, 1, 2)])
    with pytest.raises(ValidationError, match="duplicate"):
        load_series_csv(path, g)
    _write_rows(path, [[stamps[k], 1.0 - 2 * (k == 2)] for k in range(4)])
    with pytest.raises(ValidationError, match="negative"):
        load_series_csv(path, g)
    assert load_series_csv(path, g, nonneg=False)[2] == -1.0
    _write_rows(path, [[stamps[k], 1.0] for k in range(3)])
    with pytest.raises(ValidationError, match="expected 4 rows"):
        load_series_csv(path, g)
    _write_rows(path, [[stamps[k], 1.0] for k in range(4)], header=("timestamp", "kw"))
    with pytest.raises(ValidationError, match="missing column"):
        load_series_csv(path, g)
    with pytest.raises(ValidationError, match="not found"):
        load_series_csv(tmp_path / "none.csv", g)


def test_series_csv_round_trip(tmp_path):
    g = TimeGrid(60, 1, 4, 2)
    values = np.array([0.1, 2.5, 1e-17, 3.0, 4.0, 5.0, 6.0, 1 / 3])
    write_series_csv(tmp_path / "v.csv", values, START, 60)
    assert np.array_equal(load_series_csv(tmp_path / "v.csv", g), values)
    assert load_series_csv(tmp_path / "v.csv", g, length="days").size == 8


def test_error_model_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    A = rng.normal(size=(8, 8))
    em = ErrorModel(rng.normal(size=8), A @ A.T + np.eye(8), 2, 2, psd_floor=0.5)
    write_error_model(tmp_path / "sigma.csv", em)
    back = read_error_model(tmp_path / "sigma.csv")
    assert np.array_equal(back.sigma, em.sigma) and np.array_equal(back.mu, em.mu)
    assert (back.block_size, back.num_blocks, back.psd_floor) == (2, 2, 0.5)
    (tmp_path / "sigma.meta.json").unlink()
    with pytest.raises(ValidationError, match="block size"):
        read_error_model(tmp_path / "sigma.csv")
    assert read_error_model(tmp_path / "sigma.csv", block_size=4).num_blocks == 1
    with pytest.raises(ValidationError):
        read_error_model(tmp_path / "sigma.csv", block_size=3)


def test_sample_errors_shipped():
    E = load_matrix_csv(SAMPLE_ERRORS)
    assert E.shape == (59, 384)


@pytest.fixture(scope="module")
def short_ledger():
    from flexcfe.milp import make_solver
    g = TimeGrid(60, 1, 24, 2)
    act, fc, _ = synthetic(g, 3, seed=2)
    return run_rolling(g, config(1), DataProvider(act, fc, 24), Mode.DETERMINISTIC, 2,
                       solver=make_solver("external"))


def test_ledger_json_round_trip(tmp_path, short_ledger):
    write_ledger_json(tmp_path / "l.json", short_ledger)
    back = read_ledger_json(tmp_path / "l.json")
    assert ledger_to_dict(back) == ledger_to_dict(short_ledger)
    assert back.mode is Mode.DETERMINISTIC and back.totals() == short_ledger.totals()


def test_report_csvs_load_back(tmp_path, short_ledger):
    rows = supply_stack_rows(short_ledger)
    assert len(rows) == 48
    write_rows_csv(tmp_path / "stack.csv", rows)
    g = TimeGrid(60, 1, 24, 2)
    soc = load_series_csv(tmp_path / "stack.csv", g, column="soc")
    assert np.allclose(soc[:24], short_ledger.days[0].soc[1:])
    write_rows_csv(tmp_path / "empty.csv", [])
    assert (tmp_path / "empty.csv").read_text() == ""


def test_synthetic_shape_and_levels():
    g = TimeGrid()
    act, fc, hist = gen_synthetic(SyntheticDataSpec(seed=1), g, 14)
    assert len(act) == 14 * 96 and hist.shape[1] == 2 * g.T
    assert 31.5 <= act.p_load.max() <= 38.5
    assert 13.5 <= act.p_renew.max() <= 16.5
    night = np.r_[0:20, 80:96]  # 00:00-05:00 and 20:00-24:00
    assert not act.p_renew.reshape(14, 96)[:, night].any()
    assert not fc.p_renew.reshape(14, 96)[:, night].any()
    again = gen_synthetic(SyntheticDataSpec(seed=1), g, 14)
    assert np.array_equal(again[0].p_load, act.p_load) and np.array_equal(again[2], hist)
    other = gen_synthetic(SyntheticDataSpec(seed=2), g, 14)
    assert not np.array_equal(other[0].p_load, act.p_load)


def test_synthetic_errors_correlate():
    g = TimeGrid(60, 1, 24, 1)
    _, _, hist = gen_synthetic(SyntheticDataSpec(seed=3, history_days=200), g, 1)
    noon = 12
    r = np.corrcoef(hist[:, noon], hist[:, g.T + noon])[0, 1]
    assert r > 0.2  # cloudier than forecast: less PV and less cooling load, and vice versa


def test_forecast_bundle_from_csv_rejects_negative(tmp_path):
    path = tmp_path / "f.csv"
    write_forecast_csv(path, ForecastBundle(np.ones(4), np.ones(4)), START, 60)
    text = path.read_text().replace("1.0\n", "-1.0\n", 1)
    path.write_text(text)
    with pytest.raises(ValidationError, match="negative"):
        load_forecast_csv(path, TimeGrid(60, 1, 4, 1))
