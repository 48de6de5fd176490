"""Daily schedule plus hourly redispatch on a rolling basis, and settlement.

A day is run by solving the scheduling model once, then redispatching each
of the 24 delivery hours in order, carrying the battery state from one hour
to the next. Income is settled at realized prices. End-of-day battery states
differ between strategies, so incomes are corrected to a common reference
state (the perfect-knowledge run) at that run's storage value.
"""
from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

from .battery import BatteryParams, DegradationCurveTable, dcr_of, default_curve_table, degradation_cost
from .edm import Commitment, EdmInputs, EdmSolution, redispatch_frame, solve_edm
from .grm import GrmInputs, GrmSolution, deterministic_variant, solve_grm
from .market_data import DataError, MarketDay
from .milp import SolveOptions
from .scenarios import build_scenarios

VARIANTS = ("DETPK", "DETC1", "DETC2", "DETC3", "GRMC1", "GRMC2", "GRMC3")
LEDGER_COLUMNS = ["t", "dem", "ei", "srr", "srrd", "sre", "degradation", "total"]
HORIZON_COLUMNS = ["date", "horizon_h", "first_stage_objective_eur", "abs_rel_diff"]
DCR_TOL = 1e-7  # discharge below this is solver noise, not a cycle


class DayFailure(RuntimeError):
    """A solve failed while running one day; carries what is needed to reproduce it."""

    def __init__(self, variant: str, date, stage: str, detail: str, hour: int | None = None):
        where = stage if hour is None else f"{stage} hour {hour}"
        super().__init__(f"{variant} {pd.Timestamp(date).date()}: {where}: {detail}")
        self.bundle = {"variant": variant, "date": str(pd.Timestamp(date).date()), "stage": stage,
                       "hour": hour, "detail": detail}


@dataclass(frozen=True)
class RunPlan:
    variant: str = "GRMC3"
    horizon: int = 72
    m: int = 3
    options: SolveOptions = field(default_factory=SolveOptions)
    degradation: bool = True
    backend: str = "highs"
    edm_backend: str = "bnb"
    battery: BatteryParams = field(default_factory=BatteryParams.case_study)
    curves: DegradationCurveTable | None = None  # default table when None
    wind_capacity: float = 33.0
    soc_initial: float = 4.0
    k_s: float = 1.5
    chain_soc: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.horizon < 24:
            raise ValueError("planning period must cover at least the 24 delivery hours")
        if self.m < 1:
            raise ValueError("need at least one wind scenario")

    @property
    def strategy(self) -> str:
        return "C3" if self.variant == "DETPK" else self.variant[-2:]

    @property
    def curve_table(self) -> DegradationCurveTable:
        return self.curves if self.curves is not None else default_curve_table(self.battery)

    def with_variant(self, variant: str) -> "RunPlan":
        return replace(self, variant=variant)


@dataclass
class SettlementLedger:
    hourly: pd.DataFrame
    soc_path: np.ndarray  # 25 values: start of day, then end of each hour
    soc_reference: float
    soc_value_reference: float

    @property
    def soc_at_24(self) -> float:
        return float(self.soc_path[-1])

    @property
    def totals(self) -> dict:
        return {k: float(self.hourly[k].sum()) for k in LEDGER_COLUMNS[1:]}

    @property
    def total(self) -> float:
        return float(self.hourly["total"].sum())

    @property
    def correction(self) -> float:
        return (self.soc_at_24 - self.soc_reference) * self.soc_value_reference

    @property
    def corrected(self) -> float:
        return self.total + self.correction

    def frame(self) -> pd.DataFrame:
        return self.hourly[LEDGER_COLUMNS]


@dataclass
class DayResult:
    variant: str
    date: pd.Timestamp
    grm: GrmSolution
    edm: list
    ledger: SettlementLedger
    grm_inputs: GrmInputs

    @property
    def wall_time(self) -> float:
        return self.grm.wall_time

    @property
    def gap(self) -> float:
        return self.grm.gap

    def metrics(self) -> dict:
        return {
            "variant": self.variant, "date": str(self.date.date()),
            "status": self.grm.status, "gap": self.grm.gap, "wall_s": self.grm.wall_time,
            "edm_wall_s": float(sum(e.wall_time for e in self.edm)),
            "soc_value_eur_per_mwh": self.grm.soc_value, "soc_value_method": self.grm.soc_value_method,
            "expected_objective": self.grm.expected_objective,
            "first_stage_objective": self.grm.first_stage_objective,
            "income_total": self.ledger.total, "income_corrected": self.ledger.corrected,
            "soc_at_24": self.ledger.soc_at_24, **{f"income_{k}": v for k, v in self.ledger.totals.items()},
        }


# building blocks -------------------------------------------------------------

def grm_inputs_for(plan: RunPlan, day: MarketDay, soc_initial: float | None = None) -> GrmInputs:
    if day.horizon < plan.horizon:
        raise DataError(f"day {day.date.date()} has {day.horizon} forecast hours, plan needs {plan.horizon}")
    d = day.truncated(plan.horizon) if day.horizon > plan.horizon else day
    if d.scenarios is not None:
        scen = d.scenarios
    elif d.wind_candidates is not None:
        m = 1 if plan.variant.startswith("DET") else plan.m
        scen = build_scenarios(d.wind_candidates, m, plan.wind_capacity, plan.seed)
    else:
        raise DataError(f"day {d.date.date()} has neither scenarios nor wind candidates")
    inputs = GrmInputs(
        scenarios=scen, prices=d.forecast, activation=d.activation_for(plan.strategy),
        battery=plan.battery, curves=plan.curve_table if plan.degradation else None,
        wind_capacity=plan.wind_capacity,
        soc_initial=plan.soc_initial if soc_initial is None else soc_initial,
    )
    if plan.variant == "DETPK":
        return deterministic_variant(inputs, "DETPK", d.realized, d.wind_realized, d.realized_activation)
    if plan.variant.startswith("DET"):
        return deterministic_variant(inputs, "DET")
    return inputs


def _hour_degradation(path: np.ndarray, battery: BatteryParams, curves: DegradationCurveTable) -> np.ndarray:
    out = np.zeros(len(path) - 1)
    for t in range(len(out)):
        dcr = dcr_of(path[t], path[t + 1], battery.soc_max)
        out[t] = degradation_cost(path[t], dcr if dcr > DCR_TOL else 0.0, curves)
    return out


def settle(day: MarketDay, plan: RunPlan, grm: GrmSolution, edm: list[EdmSolution] | None,
           soc_initial: float, reference: tuple[float, float] | None = None) -> SettlementLedger:
    """Hourly income at realized prices; degradation from the realized SOC path."""
    real = day.realized
    sched = grm.schedule()
    n = 24
    dem = real.da[:n] * (sched["p_w"].to_numpy()[:n] + sched["p_b"].to_numpy()[:n])
    srr = real.srr[:n] * (sched["g_up"].to_numpy()[:n] + sched["g_dw"].to_numpy()[:n])
    if edm is None:
        # the plan is settled as if it were carried out exactly
        w = grm.values
        ei = real.imb_up[:n] * w["d_up"][:n, 0] - real.imb_dw[:n] * w["d_dw"][:n, 0]
        srrd = np.zeros(n)
        sre = real.sre_up[:n] * w["e_sup"][:n, 0] - real.sre_dw[:n] * w["e_sdw"][:n, 0]
        path = np.concatenate([[soc_initial], w["soc"][:n, 0]])
    else:
        col = lambda k: np.array([e.values[k] for e in edm])
        ei = real.imb_up[:n] * col("dv_up") - real.imb_dw[:n] * col("dv_dw")
        srrd = plan.k_s * real.srr[:n] * (col("eps_up") + col("eps_dw"))
        sre = real.sre_up[:n] * col("e_sup") - real.sre_dw[:n] * col("e_sdw")
        path = np.concatenate([[soc_initial], col("soc")])
    deg = _hour_degradation(path, plan.battery, plan.curve_table)
    hourly = pd.DataFrame({"t": np.arange(n), "dem": dem, "ei": ei, "srr": srr, "srrd": srrd, "sre": sre,
                           "degradation": deg})
    hourly["total"] = hourly["dem"] + hourly["ei"] + hourly["srr"] - hourly["srrd"] + hourly["sre"] - hourly["degradation"]
    if reference is None:
        reference = (float(path[-1]), grm.soc_value)
    return SettlementLedger(hourly, path, float(reference[0]), float(reference[1]))


def run_day(plan: RunPlan, day: MarketDay, reference: tuple[float, float] | None = None,
            soc_initial: float | None = None) -> DayResult:
    """Schedule, redispatch and settle one day.

    ``reference`` is the (end-of-day SOC, storage value) pair of the
    perfect-knowledge run used for the income correction; without it the
    run is its own reference.
    """
    soc0 = plan.soc_initial if soc_initial is None else soc_initial
    inputs = grm_inputs_for(plan, day, soc0)
    try:
        grm = solve_grm(inputs, plan.options, plan.backend)
    except RuntimeError as exc:
        raise DayFailure(plan.variant, day.date, "schedule", str(exc)) from exc
    if plan.variant == "DETPK":
        ledger = settle(day, plan, grm, None, soc0, reference)
        return DayResult(plan.variant, day.date, grm, [], ledger, inputs)

    soc_value = grm.soc_value if math.isfinite(grm.soc_value) else 0.0
    sched = grm.schedule()
    fc = inputs.prices
    ra = day.realized_activation
    edm_opts = SolveOptions(time_limit=60.0, gap_target=1e-6)
    edms: list[EdmSolution] = []
    soc_prev = soc0
    for t in range(24):
        r = sched.iloc[t]
        ei = EdmInputs(
            t=t, commitment=Commitment(float(r.p_w), float(r.p_b), float(r.g_up), float(r.g_dw), float(r.soc)),
            wind=float(day.wind_realized[t]), mu_up=float(ra.mu_up[t]), mu_dw=float(ra.mu_dw[t]),
            da_price=float(day.realized.da[t]), srr_price=float(day.realized.srr[t]),
            imb_up_price=float(fc.imb_up[t]), imb_dw_price=float(fc.imb_dw[t]),
            sre_up_price=float(fc.sre_up[t]), sre_dw_price=float(fc.sre_dw[t]),
            soc_prev=soc_prev, soc_value=soc_value, battery=plan.battery,
            curves=plan.curve_table if plan.degradation else None,
            wind_capacity=plan.wind_capacity, k_s=plan.k_s,
        )
        try:
            sol = solve_edm(ei, edm_opts, plan.edm_backend)
        except (RuntimeError, ValueError) as exc:
            raise DayFailure(plan.variant, day.date, "redispatch", str(exc), t) from exc
        edms.append(sol)
        soc_prev = sol.values["soc"]
    ledger = settle(day, plan, grm, edms, soc0, reference)
    return DayResult(plan.variant, day.date, grm, edms, ledger, inputs)


# multi-day runs ----------------------------------------------------------------

def _run_days(plan: RunPlan, days: list[MarketDay], refs: list | None) -> list[DayResult]:
    out = []
    soc = plan.soc_initial
    for i, day in enumerate(days):
        res = run_day(plan, day, None if refs is None else refs[i], soc)
        out.append(res)
        if plan.chain_soc:
            soc = res.ledger.soc_at_24
    return out


def _run_variant(args):
    plan, days, refs = args
    return _run_days(plan, days, refs)


def run_variants(base: RunPlan, variants, days: list[MarketDay], workers: int = 1) -> dict:
    """Results per variant; the perfect-knowledge run is always included as reference."""
    pk = _run_days(base.with_variant("DETPK"), days, None)
    refs = [(r.ledger.soc_at_24, r.grm.soc_value) for r in pk]
    jobs = [(base.with_variant(v), days, refs) for v in variants if v != "DETPK"]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            done = list(pool.map(_run_variant, jobs))
    else:
        done = [_run_variant(j) for j in jobs]
    results = {"DETPK": pk}
    results.update({j[0].variant: r for j, r in zip(jobs, done)})
    return results


def comparison_table(results: dict, variants) -> pd.DataFrame:
    cols = ["variant", "days", "mean_corrected_income", "mean_dem", "mean_ei", "mean_srr", "mean_srrd",
            "mean_sre", "mean_degradation", "ratio_to_detpk", "wall_mean_s", "wall_std_s", "gap_mean", "gap_std"]
    if not variants:
        return pd.DataFrame(columns=cols)
    pk_mean = float(np.mean([r.ledger.corrected for r in results["DETPK"]]))
    rows = []
    for v in variants:
        rs = results[v]
        tot = pd.DataFrame([r.ledger.totals for r in rs])
        corrected = np.array([r.ledger.corrected for r in rs])
        walls = np.array([r.wall_time for r in rs])
        gaps = np.array([r.gap for r in rs])
        rows.append({
            "variant": v, "days": len(rs), "mean_corrected_income": corrected.mean(),
            **{f"mean_{k}": tot[k].mean() for k in ("dem", "ei", "srr", "srrd", "sre", "degradation")},
            "ratio_to_detpk": corrected.mean() / pk_mean if pk_mean else math.nan,
            "wall_mean_s": walls.mean(), "wall_std_s": walls.std(), "gap_mean": gaps.mean(), "gap_std": gaps.std(),
        })
    return pd.DataFrame(rows, columns=cols)


def run_comparison(base: RunPlan, variants, days: list[MarketDay], workers: int = 1):
    """(table, results) for the requested variants over the given days."""
    variants = list(variants)
    if not variants:
        return comparison_table({}, []), {}
    if not days:
        raise ValueError("need at least one case day")
    results = run_variants(base, variants, days, workers)
    return comparison_table(results, variants), results


def degradation_ablation(plan: RunPlan, days: list[MarketDay]) -> pd.DataFrame:
    """Corrected income with degradation in the models versus left out of them.

    Both runs are charged the degradation their realized SOC path actually
    causes, and both are corrected to the same perfect-knowledge reference.
    """
    aware_plan = replace(plan, degradation=True)
    pk = _run_days(aware_plan.with_variant("DETPK"), days, None)
    refs = [(r.ledger.soc_at_24, r.grm.soc_value) for r in pk]
    aware = _run_days(aware_plan, days, refs)
    neglected = _run_days(replace(plan, degradation=False), days, refs)
    rows = []
    for d, a, n in zip(days, aware, neglected):
        rows.append({
            "date": str(d.date.date()), "aware_income": a.ledger.corrected, "neglected_income": n.ledger.corrected,
            "aware_degradation": a.ledger.totals["degradation"], "neglected_degradation": n.ledger.totals["degradation"],
            "delta": (a.ledger.corrected - n.ledger.corrected) / abs(n.ledger.corrected) if n.ledger.corrected else math.nan,
            "gap_allowance": (a.gap + n.gap) * max(abs(a.grm.expected_objective), abs(n.grm.expected_objective)),
        })
    return pd.DataFrame(rows)


def horizon_sensitivity(day: MarketDay, horizons=(24, 48, 72, 96, 120, 144, 168),
                        plan: RunPlan | None = None) -> pd.DataFrame:
    """First-stage objective of the deterministic model for each planning period.

    Differences are relative to the longest horizon requested.
    """
    horizons = sorted(int(h) for h in horizons)
    if not horizons or any(h <= 0 or h % 24 for h in horizons):
        raise ValueError("horizons must be positive multiples of 24")
    if day.horizon < horizons[-1]:
        raise DataError(f"forecast covers {day.horizon} hours, {horizons[-1]} requested")
    plan = plan or RunPlan(variant="DETC3")
    if not plan.variant.startswith("DET") or plan.variant == "DETPK":
        plan = plan.with_variant(f"DET{plan.strategy}")
    objs = {}
    for h in horizons:
        inp = grm_inputs_for(replace(plan, horizon=h), day)
        objs[h] = solve_grm(inp, plan.options, plan.backend).first_stage_objective
    ref = objs[horizons[-1]]
    rows = [{"date": str(day.date.date()), "horizon_h": h, "first_stage_objective_eur": objs[h],
             "abs_rel_diff": abs(objs[h] - ref) / abs(ref) if ref else (0.0 if objs[h] == ref else math.inf)}
            for h in horizons]
    return pd.DataFrame(rows, columns=HORIZON_COLUMNS)


# persistence -------------------------------------------------------------------

def write_day(result: DayResult, out_dir) -> Path:
    d = Path(out_dir) / result.variant / str(result.date.date())
    d.mkdir(parents=True, exist_ok=True)
    result.grm.write(d / "schedule.csv", d / "schedule.json")
    if result.edm:
        redispatch_frame(result.edm).to_csv(d / "redispatch.csv", index=False)
    result.ledger.frame().to_csv(d / "ledger.csv", index=False)
    (d / "metrics.json").write_text(json.dumps(result.metrics(), indent=2) + "\n", encoding="utf-8")
    return d


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True, default=str).encode()).hexdigest()


def write_manifest(out_dir, config: dict, seeds: dict | None = None, extra: dict | None = None) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"config": config, "config_sha256": config_hash(config), "seeds": seeds or {}}
    if extra:
        manifest.update(extra)
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    return path


def plan_config(plan: RunPlan) -> dict:
    d = asdict(plan)
    d["curves"] = None if plan.curves is None else "custom"
    return d
