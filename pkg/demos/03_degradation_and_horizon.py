"""Why degradation belongs inside the model, and how far ahead to plan.

Part one runs a day with a strong daily price swing twice: once with the
degradation cost inside both optimization models, once without it and
charged afterwards for the wear the battery actually suffered. Part two
solves the deterministic model for 24, 48 and 72 hour planning periods on
a day whose only price spike falls at hour 60.
"""
import numpy as np

from vppsched import BatteryParams, RunPlan, SolveOptions, default_curve_table
from vppsched.harness import degradation_ablation, horizon_sensitivity
from vppsched.synthetic import constructed_day

h = np.arange(24)
swing = constructed_day(50 + 35 * np.sin(2 * np.pi * (h - 8) / 24), 10 + 5 * np.cos(2 * np.pi * h / 24),
                        imb_up=0.0, imb_dw=200.0)
for scale in (0.1, 1.0, 3.0):
    curves = default_curve_table(BatteryParams.case_study()).scaled(scale)
    abl = degradation_ablation(RunPlan("DETC3", horizon=24, options=SolveOptions(60, 1e-4), curves=curves), [swing])
    r = abl.iloc[0]
    print(f"curves x{scale:<4} aware {r.aware_income:9.2f} EUR (wear {r.aware_degradation:7.2f})   "
          f"neglected {r.neglected_income:9.2f} EUR (wear {r.neglected_degradation:7.2f})   delta {r.delta:+.2%}")

da = np.full(72, 75.0)
da[:12], da[12:24], da[60] = 20.0, 80.0, 1000.0
spike = constructed_day(da, 0.0, imb_up=0.0)
print("\nfirst-day result by planning period, price spike at hour 60")
print(horizon_sensitivity(spike, (24, 48, 72), RunPlan("DETC3", degradation=False)).to_string(index=False))
