import json
import subprocess
import sys

import pandas as pd
import pytest

import vppsched.cli as cli
from vppsched.cli import (ENV_PREFIX, EXIT_DATA, EXIT_INFEASIBLE, EXIT_OK, EXIT_SOLVER, RunConfig, _money, main,
                          read_output_csv)
from vppsched.grm import SchedulingError
from vppsched.market_data import DataError, write_market_csv
from vppsched.synthetic import make_forecast, make_history

DATE = "2015-01-31"
# wall-clock figures; everything else is reproducible
TIMED = {"metrics.json", "schedule.json", "solver_metrics.csv"}


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    hist = make_history(days=40)
    write_market_csv(hist, d / "history.csv")
    write_market_csv(make_forecast(hist), d / "forecast.csv")
    cfg = {"history_csv": "history.csv", "forecast_csv": "forecast.csv", "variants": ["DETPK", "DETC2"],
           "horizon": 48, "dates": [DATE], "time_limit": 60, "history_days": 30, "candidate_days": 14}
    (d / "cfg.json").write_text(json.dumps(cfg))
    return d


def simulate(data_dir, cwd, monkeypatch, *flags):
    monkeypatch.chdir(cwd)
    return main(["simulate", "--config", str(data_dir / "cfg.json"), "--out", "out", *flags])


@pytest.fixture(scope="module")
def two_runs(data_dir, tmp_path_factory):
    mp = pytest.MonkeyPatch()
    runs = [tmp_path_factory.mktemp("run_a"), tmp_path_factory.mktemp("run_b")]
    codes = [simulate(data_dir, r, mp) for r in runs]
    mp.undo()
    return codes, [r / "out" for r in runs]


def test_simulate_writes_reports(two_runs):
    codes, (out, _) = two_runs
    assert codes == [EXIT_OK, EXIT_OK]
    for name in ("income_by_variant.csv", "income_by_market.csv", "wind_schedule.csv", "solver_metrics.csv"):
        assert (out / name).is_file(), name
    by_variant = read_output_csv(out / "income_by_variant.csv")
    assert "ratio_to_detpk" in by_variant.columns
    assert by_variant.set_index("variant").loc["DETPK", "ratio_to_detpk"] == 1.0
    assert set(read_output_csv(out / "wind_schedule.csv")["variant"]) == {"DETPK", "DETC2"}
    assert (out / "DETC2" / DATE / "redispatch.csv").is_file()
    assert not (out / "DETPK" / DATE / "redispatch.csv").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["dates"] == [DATE] and len(manifest["config_sha256"]) == 64


def test_simulate_is_reproducible(two_runs):
    _, (a, b) = two_runs
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    assert files == sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    for f in files:
        if f.name not in TIMED:
            assert (a / f).read_bytes() == (b / f).read_bytes(), f


def test_every_csv_round_trips(two_runs):
    _, (out, _) = two_runs
    for p in out.rglob("*.csv"):
        df = read_output_csv(p)
        again = p.with_suffix(".again")
        df.to_csv(again, index=False)
        assert again.read_bytes() == p.read_bytes(), p


def test_degradation_off_writes_ablation(data_dir, tmp_path, monkeypatch):
    assert simulate(data_dir, tmp_path, monkeypatch, "--degradation", "off", "--variants", "DETPK") == EXIT_OK
    abl = read_output_csv(tmp_path / "out" / "degradation_ablation.csv")
    assert list(abl["date"]) == [DATE] and "delta" in abl.columns


def test_bad_variant_is_data_error(data_dir, tmp_path, monkeypatch):
    assert simulate(data_dir, tmp_path, monkeypatch, "--variants", "DETC9") == EXIT_DATA


# validate ------------------------------------------------------------------------

def _config(tmp_path, frame, name="history.csv"):
    write_market_csv(frame, tmp_path / name)
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"history_csv": name}))
    return cfg


def test_validate_clean(tmp_path, capsys):
    assert main(["validate", "--config", str(_config(tmp_path, make_history(days=3)))]) == EXIT_OK
    assert "0 violation(s)" in capsys.readouterr().out


def test_validate_reports_bad_mu(tmp_path, capsys):
    df = make_history(days=3)
    df.iloc[5, df.columns.get_loc("mu_up")] = 1.3
    assert main(["validate", "--config", str(_config(tmp_path, df))]) == EXIT_DATA
    out = capsys.readouterr().out
    assert "1 violation(s)" in out
    assert "history.csv:7: mu_up:" in out


def test_validate_missing_header(tmp_path, capsys):
    df = make_history(days=2)
    cfg = _config(tmp_path, df)
    lines = (tmp_path / "history.csv").read_text().splitlines()
    (tmp_path / "history.csv").write_text("\n".join(lines[1:]) + "\n")
    assert main(["validate", "--config", str(cfg)]) == EXIT_DATA
    assert "history.csv:1:" in capsys.readouterr().err


def test_simulate_refuses_invalid_inputs(tmp_path, capsys):
    df = make_history(days=3)
    df.iloc[0, df.columns.get_loc("wind_mwh")] = 99.0
    assert main(["simulate", "--config", str(_config(tmp_path, df)), "--out", str(tmp_path / "o")]) == EXIT_DATA
    assert not (tmp_path / "o").exists()


# configuration ----------------------------------------------------------------------

def test_precedence_json_env_flags(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"horizon": 96, "scenarios": 5, "gap": 0.05}))
    env = {ENV_PREFIX + "SCENARIOS": "4", ENV_PREFIX + "GAP": "0.02"}
    c = RunConfig.load(str(cfg), env=env, overrides={"gap": 0.001})
    assert (c["horizon"], c["scenarios"], c["gap"]) == (96, 4, 0.001)


def test_env_flag_parsing():
    c = RunConfig.load(None, env={ENV_PREFIX + "DEGRADATION": "off", ENV_PREFIX + "VARIANTS": "DETPK, GRMC3"})
    assert c["degradation"] is False and c["variants"] == ["DETPK", "GRMC3"]


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"horizn": 48}))
    with pytest.raises(DataError):
        RunConfig.load(str(cfg), env={})


def test_paths_resolve_against_config_dir(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"history_csv": "h.csv"}))
    assert RunConfig.load(str(cfg), env={}).path("history_csv") == tmp_path / "h.csv"


@pytest.mark.parametrize("status, code", [("infeasible", EXIT_INFEASIBLE), ("time_limit", EXIT_SOLVER)])
def test_solver_failures_map_to_exit_codes(status, code, monkeypatch):
    def fail(cfg, out=None):
        raise SchedulingError("scheduling model not solved", status)

    monkeypatch.setitem(cli.COMMANDS, "schedule", fail)
    assert main(["schedule"]) == code


def test_money_rounding_only_on_currency():
    df = pd.DataFrame({"income": [1.23456], "ratio_to_detpk": [0.123456], "gap_mean": [0.001234]})
    out = _money(df)
    assert out.iloc[0].tolist() == [1.23, 0.123456, 0.001234]


def test_module_entry_point(tmp_path):
    cfg = _config(tmp_path, make_history(days=2))
    proc = subprocess.run([sys.executable, "-m", "vppsched", "validate", "--config", str(cfg)],
                          capture_output=True, text=True)
    assert proc.returncode == EXIT_OK, proc.stderr
    assert "0 violation(s)" in proc.stdout
