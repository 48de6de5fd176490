"""Hourly redispatch against the day-ahead commitments.

Each delivery hour is re-optimized once wind and reserve activation are
known. Deviations from the commitments are settled as imbalances, reserve
shortfalls are penalized, and the end-of-hour state of charge is valued
against the scheduled one at the storage opportunity cost.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import pandas as pd

from .battery import BatteryParams, DegradationCurveTable, add_degradation_block, add_soc_balance
from .milp import LinExpr, Model, SolveOptions, solve

REDISPATCH_COLUMNS = ["t", "p_w_star", "p_b_star", "g_up_star", "g_dw_star", "e_up_star", "e_dw_star",
                      "d_up", "d_dw", "eps_up", "eps_dw", "soc_star", "delta_soc", "obj"]


class RedispatchError(RuntimeError):
    pass


@dataclass
class Commitment:
    p_w: float
    p_b: float
    g_up: float
    g_dw: float
    soc: float


@dataclass
class EdmInputs:
    t: int
    commitment: Commitment
    wind: float  # realized, MWh
    mu_up: float
    mu_dw: float
    da_price: float  # realized
    srr_price: float  # realized
    imb_up_price: float  # carried over from the day-ahead forecast
    imb_dw_price: float
    sre_up_price: float
    sre_dw_price: float
    soc_prev: float
    soc_value: float
    battery: BatteryParams = field(default_factory=BatteryParams)
    curves: DegradationCurveTable | None = None
    wind_capacity: float = 33.0
    k_s: float = 1.5

    def __post_init__(self):
        b, c = self.battery, self.commitment
        tol = 1e-6
        if abs(c.p_b) > b.p_max + tol:
            raise ValueError(f"committed battery output {c.p_b} exceeds {b.p_max}")
        if not b.soc_min - tol <= c.soc <= b.soc_max + tol:
            raise ValueError(f"scheduled SOC {c.soc} outside battery bounds")
        if not b.soc_min - tol <= self.soc_prev <= b.soc_max + tol:
            raise ValueError(f"starting SOC {self.soc_prev} outside battery bounds")
        if c.g_up < -tol or c.g_dw < -tol or c.p_w < -tol or c.p_w > self.wind_capacity + tol:
            raise ValueError("committed reserves and wind must be non-negative and within capacity")
        if not 0 <= self.wind <= self.wind_capacity + tol:
            raise ValueError(f"realized wind {self.wind} outside [0, {self.wind_capacity}]")
        if not (0 <= self.mu_up <= 1 and 0 <= self.mu_dw <= 1):
            raise ValueError("activation shares must lie in [0, 1]")
        self.soc_prev = min(max(self.soc_prev, b.soc_min), b.soc_max)

    @property
    def activation_request(self) -> float:
        """Net upward energy the TSO asks for this hour."""
        c = self.commitment
        return self.mu_up * c.g_up - self.mu_dw * c.g_dw


def fix_noncompliance_sign(rhs: float) -> tuple[bool, bool]:
    """Which noncompliance variables (up, down) are pinned to zero."""
    if rhs > 0:
        return False, True
    if rhs < 0:
        return True, False
    return True, True


@dataclass
class EdmModel:
    model: Model
    vars: dict
    inputs: EdmInputs


@dataclass
class EdmSolution:
    t: int
    status: str
    objective: float
    values: dict
    wall_time: float
    gap: float

    def __getitem__(self, key):
        return self.values[key]

    def row(self) -> dict:
        v = self.values
        return {"t": self.t, "p_w_star": v["p_w"], "p_b_star": v["p_b"], "g_up_star": v["g_up"],
                "g_dw_star": v["g_dw"], "e_up_star": v["e_sup"], "e_dw_star": v["e_sdw"],
                "d_up": v["dv_up"], "d_dw": v["dv_dw"], "eps_up": v["eps_up"], "eps_dw": v["eps_dw"],
                "soc_star": v["soc"], "delta_soc": v["delta_soc"], "obj": self.objective}


def build_edm(inputs: EdmInputs, include_constants: bool = True) -> EdmModel:
    b, c = inputs.battery, inputs.commitment
    pb, pw_cap = b.p_max, inputs.wind_capacity
    sched = c.p_w + c.p_b
    m = Model(f"edm[{inputs.t}]")
    v = {
        "p_w": m.continuous("p_w", 0.0, min(inputs.wind, pw_cap)),
        "p_b": m.continuous("p_b", -pb, pb),
        "e_dd": m.continuous("e_dd", 0.0),
        "e_dc": m.continuous("e_dc", 0.0),
        "y_a": m.binary("y_a"),
        "dd_up": m.continuous("dd_up", 0.0),
        "dd_dw": m.continuous("dd_dw", 0.0),
        "y_d": m.binary("y_d"),
        "g_up": m.continuous("g_up", 0.0),
        "g_dw": m.continuous("g_dw", 0.0),
        "eps_up": m.continuous("eps_up", 0.0),
        "eps_dw": m.continuous("eps_dw", 0.0),
        "e_sup": m.continuous("e_sup", 0.0),
        "e_sdw": m.continuous("e_sdw", 0.0),
        "y_c": m.binary("y_c"),
        "nc_up": m.continuous("nc_up", 0.0),
        "nc_dw": m.continuous("nc_dw", 0.0),
        "y_f": m.binary("y_f"),
        "dv_up": m.continuous("dv_up", 0.0),
        "dv_dw": m.continuous("dv_dw", 0.0),
        "y_e": m.binary("y_e"),
        "soc": m.continuous("soc", b.soc_min, b.soc_max),
        "delta_soc": m.continuous("delta_soc", -math.inf, math.inf),
    }
    rhs = inputs.activation_request
    fix_up, fix_dw = fix_noncompliance_sign(rhs)
    if fix_up:
        m.set_bounds(v["nc_up"], 0.0, 0.0)
    if fix_dw:
        m.set_bounds(v["nc_dw"], 0.0, 0.0)

    m.add_constraint(v["e_dd"] - v["e_dc"] - v["p_b"], "=", 0.0, "pb_split")
    m.add_constraint(v["e_dd"] - pb * v["y_a"], "<=", 0.0, "pb_dis")
    m.add_constraint(v["e_dc"] + pb * v["y_a"], "<=", pb, "pb_chg")
    # imbalance against the day-ahead schedule
    m.add_constraint(v["dd_up"] - (pw_cap + pb - sched) * v["y_d"], "<=", 0.0, "dimb_up")
    m.add_constraint(v["dd_dw"] + (sched + pb) * v["y_d"], "<=", sched + pb, "dimb_dw")
    m.add_constraint(v["dd_up"] - v["dd_dw"] - v["p_w"] - v["p_b"], "=", -sched, "dimb_bal")
    # reserve the battery can still provide, and the shortfall against the commitment
    m.add_constraint(v["g_up"] + v["p_b"], "<=", pb, "resv_up")
    m.add_constraint(v["g_dw"] - v["p_b"], "<=", pb, "resv_dw")
    m.add_constraint(v["eps_up"] + v["g_up"], ">=", c.g_up, "short_up")
    m.add_constraint(v["eps_dw"] + v["g_dw"], ">=", c.g_dw, "short_dw")
    # activated energy, with noncompliance taking up what is not delivered
    m.add_constraint(v["e_sup"] + v["nc_up"] - v["e_sdw"] - v["nc_dw"], "=", rhs, "act_bal")
    m.add_constraint(v["e_sup"] - pb * v["y_c"], "<=", 0.0, "act_up")
    m.add_constraint(v["e_sdw"] + pb * v["y_c"], "<=", pb, "act_dw")
    # no upward regulation while short against the day-ahead schedule
    m.add_constraint(v["dd_dw"] - (sched + pb) * v["y_f"], "<=", 0.0, "cross_dw")
    m.add_constraint(v["e_sup"] + 2 * pb * v["y_f"], "<=", 2 * pb, "cross_up")
    m.add_constraint(v["dv_up"] - v["dv_dw"] - v["dd_up"] + v["dd_dw"] + v["nc_up"] - v["nc_dw"], "=", 0.0,
                     "vimb_bal")
    big = 2 * (pw_cap + pb)
    m.add_constraint(v["dv_up"] - big * v["y_e"], "<=", 0.0, "vimb_up")
    m.add_constraint(v["dv_dw"] + big * v["y_e"], "<=", big, "vimb_dw")
    add_soc_balance(m, v["soc"], inputs.soc_prev, v["e_dc"] + v["e_sdw"], v["e_dd"] + v["e_sup"], b.eta, "soc")
    m.add_constraint(v["delta_soc"] - v["soc"], "=", -c.soc, "dsoc")
    cost = LinExpr()
    if inputs.curves is not None:
        blk = add_degradation_block(m, inputs.curves, inputs.soc_prev, v["soc"], b.soc_max, "edm")
        v.update(dcr=blk["dcr"], u=blk["u"], cb=blk["cost"])
        cost = LinExpr.of(blk["cost"])

    obj = (inputs.imb_up_price * v["dv_up"] - inputs.imb_dw_price * v["dv_dw"]
           - inputs.k_s * inputs.srr_price * (v["eps_up"] + v["eps_dw"])
           + inputs.sre_up_price * v["e_sup"] - inputs.sre_dw_price * v["e_sdw"]
           - cost + inputs.soc_value * v["delta_soc"])
    if include_constants:
        obj = obj + (inputs.da_price * sched + inputs.srr_price * (c.g_up + c.g_dw))
    m.set_objective("max", obj)
    return EdmModel(m, v, inputs)


def solve_edm(inputs: EdmInputs, options: SolveOptions | None = None, backend: str = "bnb",
              handle: EdmModel | None = None) -> EdmSolution:
    handle = handle or build_edm(inputs)
    res = solve(handle.model, options or SolveOptions(time_limit=60.0, gap_target=1e-6), backend)
    if not res.has_solution:
        raise RedispatchError(f"redispatch for hour {inputs.t} not solved: {res.status}")
    vals = {k: float(res.values[var.index]) + 0.0 for k, var in handle.vars.items()}
    vals.setdefault("cb", 0.0)
    return EdmSolution(inputs.t, res.status, float(res.objective), vals, res.wall_time, res.gap)


def redispatch_frame(solutions):
    return pd.DataFrame([s.row() for s in solutions], columns=REDISPATCH_COLUMNS)
