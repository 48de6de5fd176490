"""Day-ahead scheduling and hourly redispatch of a wind farm with a battery."""
from .battery import BatteryParams, DegradationCurveTable, default_curve_table, degradation_cost
from .edm import Commitment, EdmInputs, solve_edm
from .grm import GrmInputs, solve_grm
from .harness import RunPlan, run_comparison, run_day
from .market_data import CaseLibrary, MarketDay, PriceBundle, ReserveActivationSeries
from .milp import Model, SolveOptions, solve
from .scenarios import ScenarioSet, build_scenarios

__all__ = [
    "BatteryParams", "DegradationCurveTable", "default_curve_table", "degradation_cost",
    "Commitment", "EdmInputs", "solve_edm", "GrmInputs", "solve_grm", "RunPlan", "run_comparison", "run_day",
    "CaseLibrary", "MarketDay", "PriceBundle", "ReserveActivationSeries", "Model", "SolveOptions", "solve",
    "ScenarioSet", "build_scenarios",
]
