"""Command-line entry point.

Settings come from a JSON config file, then ``VPPSCHED_*`` environment
variables, then command-line flags (later wins). Exit codes: 0 success,
2 data or usage error, 3 solver failure, 4 infeasible model.
"""
from __future__ import annotations

import argparse
import io
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import pandas as pd

from .battery import BatteryParams, DegradationCurveTable, default_curve_table
from .harness import (VARIANTS, DayFailure, RunPlan, comparison_table, degradation_ablation, grm_inputs_for, horizon_sensitivity,
                      run_comparison, run_day, write_day, write_manifest)
from .grm import SchedulingError, solve_grm
from .market_data import CaseLibrary, DataError, read_market_csv, select_representative_cases, validate_frame
from .milp import INFEASIBLE, SolveOptions

log = logging.getLogger("vppsched")

EXIT_OK, EXIT_DATA, EXIT_SOLVER, EXIT_INFEASIBLE = 0, 2, 3, 4
ENV_PREFIX = "VPPSCHED_"

DEFAULTS = {
    "history_csv": None, "forecast_csv": None, "curve_table_csv": None,
    "battery": {}, "wind_capacity": 33.0, "soc_initial": 4.0,
    "variants": ["DETPK", "DETC1", "DETC2", "DETC3", "GRMC1", "GRMC2", "GRMC3"],
    "horizon": 72, "scenarios": 3, "time_limit": 1800.0, "gap": 0.01, "degradation": True,
    "workers": 1, "seed": 0, "out": "results", "dates": None, "max_cases": 81, "bins": 3,
    "history_days": 365, "candidate_days": 60, "chain_soc": False, "backend": "highs",
    "sensitivity_horizons": [24, 48, 72, 96, 120, 144, 168],
}
_CASTS = {"horizon": int, "scenarios": int, "time_limit": float, "gap": float, "workers": int, "seed": int,
          "wind_capacity": float, "soc_initial": float, "max_cases": int, "bins": int, "history_days": int,
          "candidate_days": int}


def _parse_bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("on", "true", "1", "yes"):
        return True
    if s in ("off", "false", "0", "no"):
        return False
    raise ValueError(f"expected on/off, got {v!r}")


def _parse_list(v):
    return [x.strip() for x in v.split(",") if x.strip()] if isinstance(v, str) else list(v)


@dataclass
class RunConfig:
    values: dict = field(default_factory=lambda: dict(DEFAULTS))
    base_dir: Path = Path(".")

    def __getitem__(self, k):
        return self.values[k]

    def path(self, key) -> Path | None:
        v = self.values.get(key)
        if not v:
            return None
        p = Path(v)
        return p if p.is_absolute() else self.base_dir / p

    @classmethod
    def load(cls, config_path: str | None, env=None, overrides: dict | None = None) -> "RunConfig":
        vals = dict(DEFAULTS)
        base = Path(".")
        if config_path:
            p = Path(config_path)
            try:
                data = json.loads(p.read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError) as exc:
                raise DataError(f"{p}: cannot read config ({exc})") from exc
            unknown = set(data) - set(DEFAULTS)
            if unknown:
                raise DataError(f"{p}: unknown config keys {sorted(unknown)}")
            vals.update(data)
            base = p.parent
        env = os.environ if env is None else env
        for k in DEFAULTS:
            ev = env.get(ENV_PREFIX + k.upper())
            if ev is not None:
                vals[k] = ev
        for k, v in (overrides or {}).items():
            if v is not None:
                vals[k] = v
        for k, cast in _CASTS.items():
            vals[k] = cast(vals[k])
        vals["degradation"] = _parse_bool(vals["degradation"])
        vals["chain_soc"] = _parse_bool(vals["chain_soc"])
        vals["variants"] = _parse_list(vals["variants"])
        bad = [v for v in vals["variants"] if v not in VARIANTS]
        if bad:
            raise DataError(f"unknown variants {bad}; choose from {', '.join(VARIANTS)}")
        if vals["dates"] is not None:
            vals["dates"] = _parse_list(vals["dates"])
        return cls(vals, base)

    # derived objects
    def battery(self) -> BatteryParams:
        return BatteryParams(**{**BatteryParams.case_study().__dict__, **self["battery"]})

    def curves(self) -> DegradationCurveTable:
        p = self.path("curve_table_csv")
        return DegradationCurveTable.from_csv(p) if p else default_curve_table(self.battery())

    def plan(self, variant: str | None = None) -> RunPlan:
        return RunPlan(
            variant=variant or self["variants"][0], horizon=self["horizon"], m=self["scenarios"],
            options=SolveOptions(self["time_limit"], self["gap"]), degradation=self["degradation"],
            backend=self["backend"], battery=self.battery(), curves=self.curves(),
            wind_capacity=self["wind_capacity"], soc_initial=self["soc_initial"],
            chain_soc=self["chain_soc"], seed=self["seed"],
        )

    def library(self) -> CaseLibrary:
        h = self.path("history_csv")
        if h is None:
            raise DataError("config needs history_csv")
        return CaseLibrary.from_csv(h, self.path("forecast_csv"), history_days=self["history_days"],
                                    candidate_days=self["candidate_days"])

    def case_dates(self, lib: CaseLibrary, horizon: int) -> list[pd.Timestamp]:
        eligible = lib.eligible_dates(horizon)
        if not eligible:
            raise DataError(f"no day has a full year of history and {horizon} hours of data ahead")
        if self["dates"]:
            dates = [pd.Timestamp(d) for d in self["dates"]]
            missing = [str(d.date()) for d in dates if d not in set(eligible)]
            if missing:
                raise DataError(f"requested dates lack history or look-ahead data: {missing}")
            return dates
        span = lib.history.loc[eligible[0]: eligible[-1] + pd.Timedelta(hours=23)]
        return select_representative_cases(span, self["bins"])[: self["max_cases"]]


# commands ------------------------------------------------------------------------

def cmd_validate(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    violations = []
    counts = {}
    for key in ("history_csv", "forecast_csv"):
        p = cfg.path(key)
        if p is None:
            continue
        df = read_market_csv(p)
        counts[str(p)] = len(df)
        violations += validate_frame(df, cfg["wind_capacity"], str(p))
    p = cfg.path("curve_table_csv")
    if p is not None:
        try:
            DegradationCurveTable.from_csv(p).check_battery(cfg.battery())
        except ValueError as exc:
            violations.append(f"{p}: {exc}")
    if not counts:
        raise DataError("config names no input files")
    for f, n in counts.items():
        print(f"{f}: {n} rows", file=out)
    for v in violations:
        print(str(v), file=out)
    print(f"{len(violations)} violation(s)", file=out)
    return EXIT_OK if not violations else EXIT_DATA


def _days(cfg: RunConfig, horizon: int):
    lib = cfg.library()
    return [lib.market_day(d, horizon) for d in cfg.case_dates(lib, horizon)]


def cmd_schedule(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    plan = cfg.plan()
    day = _days(cfg, plan.horizon)[0]
    inputs = grm_inputs_for(plan, day)
    sol = solve_grm(inputs, plan.options, plan.backend)
    d = Path(cfg["out"]) / plan.variant / str(day.date.date())
    d.mkdir(parents=True, exist_ok=True)
    sol.write(d / "schedule.csv", d / "schedule.json")
    inputs.scenarios.to_csv(d / "scenarios.csv")
    print(f"{plan.variant} {day.date.date()}: objective {sol.expected_objective:.2f} EUR, "
          f"storage value {sol.soc_value:.2f} EUR/MWh, gap {sol.gap:.4f} -> {d}", file=out)
    return EXIT_OK


def cmd_redispatch(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    plan = cfg.plan()
    day = _days(cfg, plan.horizon)[0]
    res = run_day(plan, day)
    d = write_day(res, cfg["out"])
    print(f"{plan.variant} {day.date.date()}: realized income {res.ledger.total:.2f} EUR -> {d}", file=out)
    return EXIT_OK


def _money(df: pd.DataFrame) -> pd.DataFrame:
    out = df.copy()
    for c in out.columns:
        if out[c].dtype.kind == "f" and not c.startswith(("ratio", "gap", "wall", "abs_rel", "delta")):
            out[c] = out[c].round(2)
    return out


def read_output_csv(path) -> pd.DataFrame:
    """Parser for every CSV this package emits; floats come back bit-exact."""
    return pd.read_csv(path, float_precision="round_trip")


def write_reports(results: dict, variants, days, out_dir: Path) -> list[Path]:
    """Income per variant, income per market, scheduled vs realized wind, solver metrics."""
    out_dir.mkdir(parents=True, exist_ok=True)
    table = comparison_table(results, variants)
    realized = {d.date: d.wind_realized for d in days}
    markets, wind = [], []
    for v in variants:
        for r in results[v]:
            date = str(r.date.date())
            for k, val in r.ledger.totals.items():
                markets.append({"variant": v, "date": date, "market": k, "income_eur": val})
            sched = r.grm.schedule()["p_w"].to_numpy()
            for t in range(24):
                wind.append({"variant": v, "date": date, "t": t, "scheduled_wind_mwh": float(sched[t]),
                             "realized_wind_mwh": float(realized[r.date][t])})
    by_market = (pd.DataFrame(markets, columns=["variant", "date", "market", "income_eur"])
            .groupby(["variant", "market"], sort=False, as_index=False)["income_eur"].mean())
    reports = {
        "income_by_variant.csv": _money(table[["variant", "days", "mean_corrected_income", "ratio_to_detpk"]]),
        "income_by_market.csv": _money(by_market),
        "wind_schedule.csv": pd.DataFrame(wind),
        "solver_metrics.csv": table[["variant", "days", "wall_mean_s", "wall_std_s", "gap_mean", "gap_std"]],
    }
    paths = []
    for name, df in reports.items():
        paths.append(out_dir / name)
        df.to_csv(paths[-1], index=False)
    return paths


def _check_inputs(cfg: RunConfig) -> None:
    buf = io.StringIO()
    if cmd_validate(cfg, buf) != EXIT_OK:
        raise DataError("input validation failed:\n" + buf.getvalue().strip())


def cmd_simulate(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    _check_inputs(cfg)
    plan = cfg.plan()
    days = _days(cfg, plan.horizon)
    variants = cfg["variants"]
    table, results = run_comparison(plan, variants, days, cfg["workers"])
    out_dir = Path(cfg["out"])
    for v in results:
        for r in results[v]:
            write_day(r, out_dir)
    paths = write_reports(results, variants, days, out_dir)
    if not cfg["degradation"]:
        paths.append(out_dir / "degradation_ablation.csv")
        degradation_ablation(plan, days).to_csv(paths[-1], index=False)
    write_manifest(out_dir, cfg.values, {"seed": cfg["seed"]}, {"dates": [str(d.date.date()) for d in days]})
    print(_money(table).to_string(index=False), file=out)
    for p in paths:
        print(f"wrote {p}", file=out)
    return EXIT_OK


def cmd_compare(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    plan = cfg.plan()
    days = _days(cfg, plan.horizon)
    table, _ = run_comparison(plan, cfg["variants"], days, cfg["workers"])
    out_dir = Path(cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    _money(table).to_csv(out_dir / "comparison.csv", index=False)
    print(_money(table).to_string(index=False), file=out)
    return EXIT_OK


def cmd_ablate(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    plan = cfg.plan()
    days = _days(cfg, plan.horizon)
    abl = degradation_ablation(plan, days)
    out_dir = Path(cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    abl.to_csv(out_dir / "degradation_ablation.csv", index=False)
    print(abl.to_string(index=False), file=out)
    return EXIT_OK


def cmd_sensitivity(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    horizons = [int(h) for h in cfg["sensitivity_horizons"]]
    plan = cfg.plan()
    days = _days(cfg, max(horizons))
    frames = [horizon_sensitivity(d, horizons, plan) for d in days]
    df = pd.concat(frames, ignore_index=True)
    out_dir = Path(cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    df.to_csv(out_dir / "horizon_sensitivity.csv", index=False)
    print(df.to_string(index=False), file=out)
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate, "schedule": cmd_schedule, "redispatch": cmd_redispatch,
    "simulate": cmd_simulate, "compare": cmd_compare, "ablate": cmd_ablate, "sensitivity": cmd_sensitivity,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vppsched", description="Wind and battery market scheduling runs.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--variants", help="comma-separated model variants")
    p.add_argument("--horizon", type=int, help="planning period in hours")
    p.add_argument("--scenarios", type=int, help="number of wind scenarios")
    p.add_argument("--time-limit", type=float, dest="time_limit", help="solver time limit in seconds")
    p.add_argument("--gap", type=float, help="relative optimality gap target")
    p.add_argument("--degradation", choices=["on", "off"], help="battery degradation cost in the models")
    p.add_argument("--workers", type=int, help="parallel worker processes")
    p.add_argument("--seed", type=int, help="scenario clustering seed")
    p.add_argument("--out", help="output directory")
    p.add_argument("--date", action="append", dest="dates", help="case date (repeatable)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    overrides = {k: getattr(args, k) for k in ("variants", "horizon", "scenarios", "time_limit", "gap",
                                               "degradation", "workers", "seed", "out", "dates")}
    try:
        cfg = RunConfig.load(args.config, overrides=overrides)
        return COMMANDS[args.command](cfg)
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (SchedulingError, DayFailure) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        cause = exc.__cause__ if isinstance(exc, DayFailure) else exc
        return EXIT_INFEASIBLE if getattr(cause, "status", "") == INFEASIBLE else EXIT_SOLVER
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
