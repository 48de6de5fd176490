"""Day-ahead generation and reserve scheduling as a two-stage stochastic MILP.

Hours before ``first_stage`` are decided once for all wind scenarios; the
remaining hours of the planning period adapt per scenario. Within the first
stage only the wind imbalance (and its sign flag) depends on the scenario.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

from .battery import (BatteryParams, DegradationCurveTable, add_degradation_block, add_soc_balance,
                      select_curve)
from .market_data import PriceBundle, ReserveActivationSeries
from .milp import (FEASIBLE_GAP, INFEASIBLE, OPTIMAL, LinExpr, Model, SolveOptions, SolveResult,
                   solve, solve_lp)
from .scenarios import ScenarioSet

SHARED = ("p_w", "p_b", "e_dd", "e_dc", "y_a", "g_up", "g_dw", "gr_up", "gr_dw",
          "e_sup", "e_sdw", "y_c", "soc", "dcr", "u", "cb")
PER_SCENARIO = ("d_up", "d_dw", "y_b")
SCHEDULE_COLUMNS = ["t", "p_w", "p_b", "g_up", "g_dw", "gr_up", "gr_dw", "soc"]


class SchedulingError(RuntimeError):
    """Raised when a scheduling model cannot be solved."""

    def __init__(self, message: str, status: str = "", hint: str = ""):
        super().__init__(message + (f" ({hint})" if hint else ""))
        self.status = status
        self.hint = hint


@dataclass
class GrmInputs:
    scenarios: ScenarioSet
    prices: PriceBundle
    activation: ReserveActivationSeries
    battery: BatteryParams = field(default_factory=BatteryParams)
    curves: DegradationCurveTable | None = None  # None: degradation left out of the model
    wind_capacity: float = 33.0
    soc_initial: float = 4.0
    first_stage: int | None = None  # defaults to min(24, T)

    def __post_init__(self):
        T = len(self.prices)
        if len(self.activation) != T or self.scenarios.T != T:
            raise ValueError(f"series lengths differ: prices {T}, activation {len(self.activation)}, "
                             f"scenarios {self.scenarios.T}")
        if self.activation.rho is None:
            raise ValueError("activation series needs rho")
        if self.first_stage is None:
            self.first_stage = min(24, T)
        if not 1 <= self.first_stage <= T:
            raise ValueError("first stage must lie within the planning period")
        b = self.battery
        if not b.soc_min - 1e-9 <= self.soc_initial <= b.soc_max + 1e-9:
            raise ValueError(f"initial SOC {self.soc_initial} outside [{b.soc_min}, {b.soc_max}]")
        self.scenarios.check_capacity(self.wind_capacity)
        if self.curves is not None:
            self.curves.check_battery(b)

    @property
    def T(self) -> int:
        return len(self.prices)

    @property
    def S(self) -> int:
        return self.scenarios.m


@dataclass
class GrmModel:
    model: Model
    vars: dict  # name -> [t][s] -> Var (shared objects in the first stage)
    soc_rows: list  # [t][s] -> constraint id
    inputs: GrmInputs
    selectors: list = field(default_factory=list)  # (t, s, curve selector vars) per cell with a variable start SOC


@dataclass
class GrmSolution:
    status: str
    expected_objective: float
    first_stage_objective: float
    soc_value: float
    soc_value_method: str
    values: dict  # name -> (T, S) array
    hourly_terms: np.ndarray  # (T, S) objective contribution per hour and scenario
    result: SolveResult
    first_stage_hours: int

    @property
    def gap(self) -> float:
        return self.result.gap

    @property
    def wall_time(self) -> float:
        return self.result.wall_time

    def schedule(self) -> pd.DataFrame:
        """First-stage schedule, one row per hour."""
        n = self.first_stage_hours
        out = {"t": np.arange(n)}
        for k in ("p_w", "p_b", "e_dc", "e_dd", "g_up", "g_dw", "gr_up", "gr_dw", "e_sup", "e_sdw", "soc", "cb"):
            out[k] = self.values[k][:n, 0]
        return pd.DataFrame(out)

    def write(self, path, sidecar=None) -> None:
        df = self.schedule()[SCHEDULE_COLUMNS]
        df.to_csv(path, index=False)
        sidecar = Path(sidecar) if sidecar else Path(path).with_suffix(".json")
        sidecar.write_text(json.dumps({
            "soc_value_eur_per_mwh": self.soc_value,
            "objective": self.expected_objective,
            "gap": self.gap,
            "wall_s": self.wall_time,
        }, indent=2) + "\n", encoding="utf-8")


def build_grm(inputs: GrmInputs, name: str = "grm") -> GrmModel:
    T, S, T1 = inputs.T, inputs.S, inputs.first_stage
    b, pr, act = inputs.battery, inputs.prices, inputs.activation
    pw_cap, pb = inputs.wind_capacity, b.p_max
    w = inputs.scenarios.weights
    r = inputs.scenarios.trajectories
    m = Model(name)
    V = {k: [[None] * S for _ in range(T)] for k in SHARED + PER_SCENARIO}
    soc_rows = [[None] * S for _ in range(T)]
    selectors = []
    obj = LinExpr()

    def cell(t, tag):
        c = {
            "p_w": m.continuous(f"p_w[{tag}]", 0.0, pw_cap),
            "p_b": m.continuous(f"p_b[{tag}]", -pb, pb),
            "e_dd": m.continuous(f"e_dd[{tag}]", 0.0),
            "e_dc": m.continuous(f"e_dc[{tag}]", 0.0),
            "y_a": m.binary(f"y_a[{tag}]"),
            "g_up": m.continuous(f"g_up[{tag}]", 0.0),
            "g_dw": m.continuous(f"g_dw[{tag}]", 0.0),
            "gr_up": m.continuous(f"gr_up[{tag}]", 0.0),
            "gr_dw": m.continuous(f"gr_dw[{tag}]", 0.0),
            "e_sup": m.continuous(f"e_sup[{tag}]", 0.0),
            "e_sdw": m.continuous(f"e_sdw[{tag}]", 0.0),
            "y_c": m.binary(f"y_c[{tag}]"),
            "soc": m.continuous(f"soc[{tag}]", b.soc_min, b.soc_max),
        }
        m.add_constraint(c["e_dd"] - c["e_dc"] - c["p_b"], "=", 0.0, f"pb_split[{tag}]")
        m.add_constraint(c["e_dd"] - pb * c["y_a"], "<=", 0.0, f"pb_dis[{tag}]")
        m.add_constraint(c["e_dc"] + pb * c["y_a"], "<=", pb, f"pb_chg[{tag}]")
        # reserve offered plus reserve set aside share the battery headroom
        m.add_constraint(c["g_up"] + c["gr_up"] + c["p_b"], "<=", pb, f"head_up[{tag}]")
        m.add_constraint(c["g_dw"] + c["gr_dw"] - c["p_b"], "<=", pb, f"head_dw[{tag}]")
        m.add_constraint(c["g_up"] + c["gr_up"], "<=", 2 * pb, f"cap_up[{tag}]")
        m.add_constraint(c["g_dw"] + c["gr_dw"], "<=", 2 * pb, f"cap_dw[{tag}]")
        rho = float(act.rho[t])
        m.add_constraint((1 - rho) * c["g_up"] - rho * c["g_dw"], "=", 0.0, f"ratio[{tag}]")
        m.add_constraint(c["e_sup"] - c["e_sdw"] - float(act.mu_up[t]) * c["g_up"]
                         + float(act.mu_dw[t]) * c["g_dw"], "=", 0.0, f"act_bal[{tag}]")
        m.add_constraint(c["e_sup"] - pb * c["y_c"], "<=", 0.0, f"act_up[{tag}]")
        m.add_constraint(c["e_sdw"] + pb * c["y_c"], "<=", pb, f"act_dw[{tag}]")
        return c

    def battery_dynamics(t, c, soc_prev, tag, s):
        charge = c["e_dc"] + c["e_sdw"] + c["gr_dw"]
        discharge = c["e_dd"] + c["e_sup"] + c["gr_up"]
        row = add_soc_balance(m, c["soc"], soc_prev, charge, discharge, b.eta, f"soc[{tag}]")
        if inputs.curves is not None:
            blk = add_degradation_block(m, inputs.curves, soc_prev, c["soc"], b.soc_max, tag)
            c.update(dcr=blk["dcr"], u=blk["u"], cb=blk["cost"])
            if t > 0:
                selectors.append((t, s, blk["delta"]))
        return row

    for t in range(T):
        if t < T1:
            c = cell(t, f"{t}")
            prev = inputs.soc_initial if t == 0 else V["soc"][t - 1][0]
            row = battery_dynamics(t, c, prev, f"{t}", 0)
            for s in range(S):
                for k in c:
                    V[k][t][s] = c[k]
                soc_rows[t][s] = row
        for s in range(S):
            tag = f"{t},{s}"
            if t >= T1:
                c = cell(t, tag)
                prev = inputs.soc_initial if t == 0 else V["soc"][t - 1][s]
                soc_rows[t][s] = battery_dynamics(t, c, prev, tag, s)
                for k in c:
                    V[k][t][s] = c[k]
            d_up = m.continuous(f"d_up[{tag}]", 0.0)
            d_dw = m.continuous(f"d_dw[{tag}]", 0.0)
            y_b = m.binary(f"y_b[{tag}]")
            V["d_up"][t][s], V["d_dw"][t][s], V["y_b"][t][s] = d_up, d_dw, y_b
            x = {k: V[k][t][s] for k in ("p_w", "gr_up", "gr_dw")}
            m.add_constraint(d_up - pw_cap * y_b, "<=", 0.0, f"imb_up[{tag}]")
            m.add_constraint(d_dw + pw_cap * y_b, "<=", pw_cap, f"imb_dw[{tag}]")
            # surplus wind can be absorbed by charging into the downward set-aside
            m.add_constraint(d_up - d_dw + x["p_w"] - x["gr_up"] + x["gr_dw"], "=", float(r[s, t]),
                             f"imb_bal[{tag}]")
            m.add_constraint(x["gr_up"] + 2 * pb * y_b, "<=", 2 * pb, f"set_up[{tag}]")
            m.add_constraint(x["gr_dw"] - 2 * pb * y_b, "<=", 0.0, f"set_dw[{tag}]")

    for t in range(T):
        for s in range(S):
            obj = obj + float(w[s]) * _hour_expr(V, t, s, pr)
    m.set_objective("max", obj)
    return GrmModel(m, V, soc_rows, inputs, selectors)


def _hour_expr(V, t, s, pr: PriceBundle) -> LinExpr:
    g = lambda k: V[k][t][s]
    e = (float(pr.da[t]) * (g("p_w") + g("p_b"))
         + float(pr.imb_up[t]) * g("d_up") - float(pr.imb_dw[t]) * g("d_dw")
         + float(pr.srr[t]) * (g("g_up") + g("g_dw"))
         + float(pr.sre_up[t]) * g("e_sup") - float(pr.sre_dw[t]) * g("e_sdw"))
    if g("cb") is not None:
        e = e - g("cb")
    return LinExpr.of(e)


def _values(handle: GrmModel, x: np.ndarray) -> dict:
    T, S = handle.inputs.T, handle.inputs.S
    out = {}
    for k, grid in handle.vars.items():
        arr = np.zeros((T, S))
        for t in range(T):
            for s in range(S):
                v = grid[t][s]
                arr[t, s] = 0.0 if v is None else x[v.index]
        out[k] = arr + 0.0
    return out


def hourly_terms(values: dict, inputs: GrmInputs) -> np.ndarray:
    """Objective contribution of every (hour, scenario) cell."""
    pr = inputs.prices
    col = lambda a: np.asarray(a)[:, None]
    return (col(pr.da) * (values["p_w"] + values["p_b"])
            + col(pr.imb_up) * values["d_up"] - col(pr.imb_dw) * values["d_dw"]
            + col(pr.srr) * (values["g_up"] + values["g_dw"])
            + col(pr.sre_up) * values["e_sup"] - col(pr.sre_dw) * values["e_sdw"]
            - values["cb"])


_FAMILIES = ("pb_split", "pb_dis", "pb_chg", "head_up", "head_dw", "cap_up", "cap_dw", "ratio",
             "act_bal", "act_up", "act_dw", "soc", "dcr", "uflag", "stair", "band_lo", "band_hi",
             "cost_hi", "cost_lo", "cost_floor", "imb_up", "imb_dw", "imb_bal", "set_up", "set_dw")


def infeasibility_hint(model: Model) -> str:
    """Name the constraint families whose removal makes the relaxation feasible."""
    if solve_lp(model).status != INFEASIBLE:
        return "continuous relaxation is feasible; the binary restrictions conflict"
    culprits = []
    for fam in _FAMILIES:
        probe = model.copy()
        probe.constraints = [c for c in probe.constraints if c.name.split("[")[0] != fam]
        if solve_lp(probe).status != INFEASIBLE:
            culprits.append(fam)
    if not culprits:
        return "no single constraint family explains the infeasibility"
    return "relaxation becomes feasible without: " + ", ".join(culprits)


def _realign_once(handle: GrmModel, res: SolveResult) -> SolveResult | None:
    curves = handle.inputs.curves
    x = res.values.copy()
    soc = handle.vars["soc"]
    changed = False
    for t, s, delta in handle.selectors:
        k = select_curve(max(float(x[soc[t - 1][s].index]), curves.L[0]), curves)
        for j, d in enumerate(delta):
            want = 1.0 if j <= k else 0.0
            if round(x[d.index]) != want:
                x[d.index] = want
                changed = True
    # a discharge flag raised on an hour without discharge only adds cost
    for u_row, dcr_row in zip(handle.vars["u"], handle.vars["dcr"]):
        for u, dcr in zip(u_row, dcr_row):
            if round(x[u.index]) == 1 and x[dcr.index] <= 0.0:
                x[u.index] = 0.0
                changed = True
    if not changed:
        return None
    lp = solve_lp(handle.model.fix_binaries(x))
    if lp.status != OPTIMAL or lp.objective < res.objective - 1e-9:
        return None
    vals = lp.values.copy()
    bins = handle.model.binaries
    vals[bins] = np.round(x[bins])
    gap = abs(res.bound - lp.objective) / max(1e-9, abs(lp.objective)) if math.isfinite(res.bound) else res.gap
    return replace(res, objective=float(lp.objective), values=vals, gap=min(res.gap, gap))


def align_curve_selection(handle: GrmModel, res: SolveResult, rounds: int = 20) -> SolveResult:
    """Re-pick each hour's degradation curve from its start SOC and re-solve the LP.

    A start SOC within tolerance of a threshold satisfies the band rows for
    both neighbouring curves, and a solve stopped at its gap target may keep
    the dearer one. Each round re-solves with the curves the start SOCs call
    for and is kept only if no worse; the LP may shift SOCs onto other
    thresholds, hence the repetition. Discharge flags left on in hours
    without discharge are cleared in the same pass.
    """
    if handle.inputs.curves is None or res.values is None:
        return res
    for _ in range(rounds):
        nxt = _realign_once(handle, res)
        if nxt is None:
            break
        res = nxt
    return res


def solve_grm(inputs: GrmInputs, options: SolveOptions | None = None, backend: str = "bnb") -> GrmSolution:
    options = options or SolveOptions()
    handle = build_grm(inputs)
    res = solve(handle.model, options, backend)
    if res.has_solution:
        res = align_curve_selection(handle, res)
    if not res.has_solution:
        hint = infeasibility_hint(handle.model.copy()) if res.status == INFEASIBLE else ""
        raise SchedulingError(f"scheduling model not solved: {res.status}", res.status, hint)
    vals = _values(handle, res.values)
    terms = hourly_terms(vals, inputs)
    w = inputs.scenarios.weights
    T1 = inputs.first_stage
    sol = GrmSolution(
        status=res.status,
        expected_objective=float(res.objective),
        first_stage_objective=float((terms[:T1] @ w).sum()),
        soc_value=math.nan, soc_value_method="",
        values=vals, hourly_terms=terms, result=res, first_stage_hours=T1,
    )
    sol.soc_value, sol.soc_value_method = extract_soc_value(inputs, sol, handle, options, backend)
    return sol


def extract_soc_value(inputs: GrmInputs, solution: GrmSolution, handle: GrmModel | None = None,
                      options: SolveOptions | None = None, backend: str = "bnb") -> tuple[float, str]:
    """Marginal value (EUR/MWh) of energy stored at the end of the first stage.

    Binaries are fixed at their solved values and the LP is re-solved; the
    answer is the dual of the last first-stage SOC balance row. If that LP
    fails, a central difference of the MILP optimum over that row's
    right-hand side (plus and minus 0.1 MWh) is returned instead.
    """
    if solution.status not in (OPTIMAL, FEASIBLE_GAP):
        raise ValueError("storage value needs a solved schedule")
    handle = handle or build_grm(inputs)
    row = handle.soc_rows[inputs.first_stage - 1][0]
    lp = solve_lp(handle.model.fix_binaries(solution.result.values))
    if lp.status == OPTIMAL:
        return float(lp.duals[row]) + 0.0, "dual"
    step = 0.1
    objs = []
    for sgn in (1.0, -1.0):
        probe = handle.model.copy()
        con = probe.constraints[row]
        probe.constraints[row] = replace(con, rhs=con.rhs + sgn * step)
        res = solve(probe, options or SolveOptions(), backend)
        if not res.has_solution:
            return math.nan, "unavailable"
        objs.append(res.objective)
    return (objs[0] - objs[1]) / (2 * step), "finite_difference"


def deterministic_variant(inputs: GrmInputs, mode: str, realized_prices: PriceBundle | None = None,
                          realized_wind=None, realized_activation: ReserveActivationSeries | None = None
                          ) -> GrmInputs:
    """Single-scenario version of ``inputs``.

    ``DET`` uses the probability-weighted mean wind trajectory. ``DETPK``
    additionally replaces the first-stage wind, prices and activation shares
    with their realized values.
    """
    mean = inputs.scenarios.expected()
    if mode == "DET":
        if inputs.scenarios.m == 1:
            return inputs
        return replace(inputs, scenarios=ScenarioSet.single(mean))
    if mode != "DETPK":
        raise ValueError(f"unknown deterministic mode {mode!r}")
    if realized_prices is None or realized_wind is None:
        raise ValueError("perfect-knowledge variant needs realized prices and wind")
    n = min(len(realized_prices), inputs.T)
    wind = mean.copy()
    wind[:n] = np.asarray(realized_wind, dtype=float)[:n]
    prices = inputs.prices.replace_head(realized_prices.head(n))
    act = inputs.activation
    if realized_activation is not None:
        up, dw = act.mu_up.copy(), act.mu_dw.copy()
        up[:n], dw[:n] = realized_activation.mu_up[:n], realized_activation.mu_dw[:n]
        act = act.with_mu(up, dw)
    return replace(inputs, scenarios=ScenarioSet.single(wind), prices=prices, activation=act)
