"""One market day from schedule to settlement.

A synthetic year of prices and wind is generated, one day is picked, and the
stochastic scheduling model (three wind scenarios, activation forecast from
last year's same-hour means) is solved over a 48 hour planning period. The
24 delivery hours are then redispatched against the realized wind and
activations, and the day is settled at realized prices.
"""
from vppsched import RunPlan, SolveOptions, run_day
from vppsched.synthetic import synthetic_library

lib = synthetic_library(days=400)
date = lib.eligible_dates(48)[5]
day = lib.market_day(date, 48)

plan = RunPlan("GRMC3", horizon=48, options=SolveOptions(time_limit=60, gap_target=0.01))
res = run_day(plan, day)

print(f"case day {date.date()}: {res.grm_inputs.S} wind scenarios, weights "
      f"{', '.join(f'{w:.2f}' for w in res.grm_inputs.scenarios.weights)}")
print(f"expected objective over 48 h: {res.grm.expected_objective:10.2f} EUR (gap {res.gap:.2%})")
print(f"storage value at hour 24:     {res.grm.soc_value:10.2f} EUR/MWh")
print()
print("first-stage schedule (MWh per hour)")
print(res.grm.schedule()[["t", "p_w", "p_b", "g_up", "g_dw", "soc"]].round(2).to_string(index=False))
print()
print("settlement at realized prices (EUR)")
print(res.ledger.frame().round(2).to_string(index=False))
print(f"\nday total {res.ledger.total:.2f} EUR, battery ends at {res.ledger.soc_at_24:.2f} MWh")
