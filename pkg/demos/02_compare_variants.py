"""Seven scheduling variants on a handful of synthetic days.

DETPK plans with the realized data, so it bounds what the others can earn.
The DET variants plan for the mean wind forecast, the GRM variants for three
wind scenarios. C1, C2 and C3 differ only in the assumed share of reserve
that is activated: all upward, half each way, or last year's hourly mean.
Incomes are corrected to DETPK's end-of-day battery state.
"""
import time

from vppsched import RunPlan, SolveOptions, run_comparison
from vppsched.harness import VARIANTS
from vppsched.synthetic import synthetic_library

lib = synthetic_library(days=400)
eligible = lib.eligible_dates(48)
days = [lib.market_day(d, 48) for d in eligible[::8][:4]]

t0 = time.perf_counter()
table, results = run_comparison(RunPlan(horizon=48, options=SolveOptions(60, 0.01)), VARIANTS, days)
print(f"{len(days)} days x {len(VARIANTS)} variants in {time.perf_counter() - t0:.0f} s\n")

cols = ["variant", "mean_corrected_income", "ratio_to_detpk", "mean_dem", "mean_ei", "mean_srr", "mean_srrd",
        "mean_sre", "mean_degradation"]
print(table[cols].round(3).to_string(index=False))
print("\nsolver statistics")
print(table[["variant", "wall_mean_s", "wall_std_s", "gap_mean", "gap_std"]].round(4).to_string(index=False))
