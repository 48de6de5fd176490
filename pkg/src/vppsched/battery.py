"""Battery parameters, degradation cost curves and shared MILP fragments.

The degradation cost of an hour depends on the state of charge at the start
of the hour (which selects one of ``J`` linear curves) and on the discharge
rate ``dcr`` (fraction of the energy capacity drawn in the hour).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .milp import LinExpr, Model, Var, quicksum


@dataclass(frozen=True)
class BatteryParams:
    p_max: float = 2.0  # MW
    soc_max: float = 8.0  # MWh
    soc_min: float = 1.6  # MWh
    eta: float = 0.86  # round trip, applied on charging
    unit_cost: float = 386.4  # EUR/kWh

    def __post_init__(self):
        if not 0 < self.soc_min < self.soc_max:
            raise ValueError("need 0 < soc_min < soc_max")
        if not 0 < self.eta <= 1:
            raise ValueError("eta must lie in (0, 1]")
        if not self.p_max > 0:
            raise ValueError("p_max must be positive")

    @classmethod
    def case_study(cls) -> "BatteryParams":
        """2 MW / 8 MWh Li-ion unit, 86 % round trip, SOC floor at 20 %."""
        return cls(p_max=2.0, soc_max=8.0, soc_min=0.2 * 8.0, eta=0.86, unit_cost=386.4)


@dataclass(frozen=True)
class DegradationCurveTable:
    """``J`` cost curves; curve ``j`` applies from initial SOC ``L[j]`` upward."""

    L: np.ndarray
    c_min: np.ndarray
    slope: np.ndarray
    c_max: np.ndarray

    def __post_init__(self):
        arrs = [np.asarray(a, dtype=float) for a in (self.L, self.c_min, self.slope, self.c_max)]
        for name, a in zip(("L", "c_min", "slope", "c_max"), arrs):
            object.__setattr__(self, name, a)
        J = len(self.L)
        if J < 1 or any(len(a) != J for a in arrs):
            raise ValueError("curve table columns must have equal, non-zero length")
        if np.any(np.diff(self.L) <= 0):
            raise ValueError("curve thresholds L must be strictly increasing")
        if np.any(self.slope < 0) or np.any(self.c_min < 0):
            raise ValueError("curve slopes and minimum costs must be non-negative")
        if np.any(self.c_max < self.c_min + self.slope):
            raise ValueError("c_max must be at least c_min + slope on every curve")
        # the <= rows of deactivated curves must not cut off the active curve's cost
        if np.any(self.c_max < np.max(self.c_min + self.slope)):
            raise ValueError("c_max must dominate the largest attainable cost of any curve")

    @property
    def J(self) -> int:
        return len(self.L)

    @property
    def D(self) -> np.ndarray:
        """Per-curve offsets: 0 for the first curve, j - 1 for curve j."""
        return np.arange(self.J, dtype=float)

    def check_battery(self, params: BatteryParams) -> None:
        if not math.isclose(self.L[0], params.soc_min, abs_tol=1e-9):
            raise ValueError(f"first curve threshold {self.L[0]} must equal soc_min {params.soc_min}")
        if self.L[-1] > params.soc_max + 1e-9:
            raise ValueError("last curve threshold exceeds soc_max")

    def scaled(self, factor: float) -> "DegradationCurveTable":
        return DegradationCurveTable(self.L, self.c_min * factor, self.slope * factor, self.c_max * factor)

    # file format: j,L_mwh,c_min_eur,slope_eur_per_dcr,c_max_eur
    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["j", "L_mwh", "c_min_eur", "slope_eur_per_dcr", "c_max_eur"])
            for j in range(self.J):
                w.writerow([j + 1, repr(float(self.L[j])), repr(float(self.c_min[j])),
                            repr(float(self.slope[j])), repr(float(self.c_max[j]))])

    @classmethod
    def from_csv(cls, path) -> "DegradationCurveTable":
        with open(Path(path), newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        need = {"j", "L_mwh", "c_min_eur", "slope_eur_per_dcr", "c_max_eur"}
        if not rows or not need <= set(rows[0]):
            raise ValueError(f"{path}: curve table needs columns {sorted(need)}")
        rows.sort(key=lambda r: int(r["j"]))
        if [int(r["j"]) for r in rows] != list(range(1, len(rows) + 1)):
            raise ValueError(f"{path}: curve indices must run 1..J")
        col = lambda k: np.array([float(r[k]) for r in rows])
        return cls(col("L_mwh"), col("c_min_eur"), col("slope_eur_per_dcr"), col("c_max_eur"))


def soc_step(soc_prev: float, charge_in: float, discharge_out: float, eta: float) -> float:
    """State of charge after one hour; losses are charged on the way in."""
    return soc_prev + eta * charge_in - discharge_out


def dcr_of(soc_prev: float, soc_now: float, soc_max: float) -> float:
    if soc_max <= 0:
        raise ValueError("soc_max must be positive")
    return max(0.0, (soc_prev - soc_now) / soc_max)


def select_curve(soc_prev: float, table: DegradationCurveTable) -> int:
    """0-based index of the curve whose band ``[L_j, L_{j+1})`` holds ``soc_prev``."""
    if soc_prev < table.L[0] - 1e-9:
        raise ValueError(f"initial SOC {soc_prev} is below the minimum SOC {table.L[0]}")
    return max(0, int(np.searchsorted(table.L, soc_prev + 1e-12, side="right") - 1))


def degradation_cost(soc_prev: float, dcr: float, table: DegradationCurveTable) -> float:
    if dcr <= 0.0:
        return 0.0
    j = select_curve(soc_prev, table)
    return float(table.c_min[j] + table.slope[j] * dcr)


def default_curve_table(params: BatteryParams, J: int = 10, anchor_fraction: float = 1 / 3000,
                        shallow_discount: float = 0.5, cmax_factor: float = 1.0) -> DegradationCurveTable:
    """Synthetic stand-in for measured degradation curves.

    Thresholds split ``[soc_min, soc_max)`` evenly. The curve starting at the
    lowest SOC is the steepest; its full-discharge cost equals
    ``anchor_fraction`` of the battery's capital cost (one equivalent full
    cycle). Higher initial SOC curves are cheaper, down to
    ``shallow_discount`` of that at the top curve.
    """
    if J < 2:
        raise ValueError("need at least two curves")
    L = params.soc_min + (params.soc_max - params.soc_min) * np.arange(J) / J
    capital = params.unit_cost * 1000.0 * params.soc_max
    full = anchor_fraction * capital
    scale = 1.0 - (1.0 - shallow_discount) * np.arange(J) / (J - 1)
    c_min = 0.05 * full * scale
    slope = 0.95 * full * scale
    top = float(np.max(c_min + slope))
    c_max = np.full(J, cmax_factor * top)
    return DegradationCurveTable(L, c_min, slope, c_max)


# MILP fragments ---------------------------------------------------------------

def add_soc_balance(model: Model, soc: Var, soc_prev, charge: LinExpr, discharge: LinExpr,
                    eta: float, name: str) -> int:
    """``soc = soc_prev + eta * charge - discharge`` as one equality row."""
    return model.add_constraint(soc - eta * charge + discharge, "=", soc_prev, name)


def add_degradation_block(model: Model, table: DegradationCurveTable, soc_prev, soc: Var,
                          soc_max: float, tag: str) -> dict:
    """Discharge rate, discharge flag, curve selectors and cost for one hour.

    ``soc_prev`` may be a constant (first hour of a horizon, or redispatch),
    in which case the curve selectors are pinned by bounds to the unique
    staircase of that SOC instead of carrying the band rows.
    """
    J = table.J
    dcr = model.continuous(f"dcr[{tag}]", 0.0, 1.0)
    u = model.binary(f"u[{tag}]")
    delta = [model.binary(f"delta[{tag},{j + 1}]") for j in range(J)]
    cost = model.continuous(f"cb[{tag}]", 0.0)

    # dcr >= (soc_prev - soc) / soc_max
    model.add_constraint(soc_max * dcr + soc, ">=", soc_prev, f"dcr[{tag}]")
    model.add_constraint(u - dcr, ">=", 0.0, f"uflag[{tag}]")

    if isinstance(soc_prev, Var):
        for j in range(1, J):
            model.add_constraint(delta[j - 1] - delta[j], ">=", 0.0, f"stair[{tag},{j + 1}]")
            lo = table.L[j - 1] * (delta[j - 1] - delta[j]) + table.L[j] * delta[j]
            model.add_constraint(soc_prev - lo, ">=", 0.0, f"band_lo[{tag},{j + 1}]")
            hi = (soc_max * delta[j] + table.L[j - 1] * (1 - delta[j - 1])
                  + table.L[j] * (delta[j - 1] - delta[j]))
            model.add_constraint(soc_prev - hi, "<=", 0.0, f"band_hi[{tag},{j + 1}]")
    else:
        k = select_curve(float(soc_prev), table)
        for j in range(J):
            v = 1.0 if j <= k else 0.0
            model.set_bounds(delta[j], v, v)

    for j in range(J):
        # zero exactly on the selected curve, >= 1 on every other one
        bracket = LinExpr(constant=float(table.D[j])) - quicksum(delta[1:j + 1])
        if j + 1 < J:
            bracket = bracket + delta[j + 1]
        curve = table.c_min[j] * u + table.slope[j] * dcr
        model.add_constraint(cost - curve - table.c_max[j] * bracket, "<=", 0.0, f"cost_hi[{tag},{j + 1}]")
        model.add_constraint(cost - curve + table.c_max[j] * bracket, ">=", 0.0, f"cost_lo[{tag},{j + 1}]")

    # valid for every curve; keeps the relaxation from dropping the cost entirely
    model.add_constraint(cost - float(table.c_min.min()) * u - float(table.slope.min()) * dcr, ">=", 0.0,
                         f"cost_floor[{tag}]")
    return {"dcr": dcr, "u": u, "delta": delta, "cost": cost}
