import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from instances import random_edm_inputs as random_inputs
from oracles import brute_force_edm_energy
from vppsched.battery import BatteryParams, default_curve_table
from vppsched.edm import (REDISPATCH_COLUMNS, Commitment, EdmInputs, build_edm, fix_noncompliance_sign,
                          redispatch_frame, solve_edm)

CASE = BatteryParams.case_study()
CURVES = default_curve_table(CASE)


def inputs(commit, wind, mu=(0.0, 0.0), soc_prev=4.0, soc_value=50.0, curves=None, **prices):
    p = dict(da_price=50.0, srr_price=20.0, imb_up_price=20.0, imb_dw_price=100.0, sre_up_price=0.0,
             sre_dw_price=0.0)
    p.update(prices)
    return EdmInputs(0, commit, wind, mu[0], mu[1], soc_prev=soc_prev, soc_value=soc_value, battery=CASE,
                     curves=curves, **p)


def test_perfect_realization_has_no_deviations():
    mu = (0.3, 0.1)
    g_up, g_dw, p_b, soc_prev = 1.0, 1.0, 0.5, 5.0
    soc = soc_prev - p_b - (mu[0] * g_up - mu[1] * g_dw)
    sol = solve_edm(inputs(Commitment(12.0, p_b, g_up, g_dw, soc), 12.0, mu, soc_prev))
    v = sol.values
    for k in ("dd_up", "dd_dw", "dv_up", "dv_dw", "eps_up", "eps_dw", "nc_up", "nc_dw", "delta_soc"):
        assert abs(v[k]) <= 1e-6, k


def test_wind_shortfall_partly_covered_by_battery():
    inp = inputs(Commitment(12.0, 0.0, 0.0, 0.0, 2.6), 10.0, soc_prev=2.6, soc_value=50.0)
    sol = solve_edm(inp)
    obj, pb, short = brute_force_edm_energy(inp)
    assert sol.values["dd_dw"] >= 1.0 - 1e-6
    assert sol.values["p_b"] == pytest.approx(pb, abs=1e-3)
    assert sol.objective == pytest.approx(obj, abs=0.15)  # grid step times the steepest price


def test_reserve_deficit_penalty():
    inp = inputs(Commitment(10.0, 0.0, 2.0, 0.0, 4.0), 10.0, srr_price=30.0)
    free = solve_edm(inp)
    handle = build_edm(inp)
    # leave the battery only 1.5 MW of upward capability
    handle.model.add_constraint(handle.vars["g_up"], "<=", 1.5, "force")
    forced = solve_edm(inp, handle=handle)
    assert forced.values["eps_up"] == pytest.approx(0.5, abs=1e-9)
    assert free.objective - forced.objective == pytest.approx(1.5 * 30.0 * 0.5, abs=1e-6)


def test_storage_value_raises_end_soc():
    inp0 = inputs(Commitment(10.0, 0.0, 0.0, 0.0, 4.0), 14.0, soc_value=0.0, curves=CURVES)
    inp1 = inputs(Commitment(10.0, 0.0, 0.0, 0.0, 4.0), 14.0, soc_value=1000.0, curves=CURVES)
    assert solve_edm(inp1).values["soc"] > solve_edm(inp0).values["soc"] + 1e-6


def test_no_activation_no_reserve_energy():
    sol = solve_edm(inputs(Commitment(10.0, 0.0, 1.0, 1.0, 4.0), 9.0, mu=(0.0, 0.0)))
    assert sol.values["e_sup"] == pytest.approx(0.0, abs=1e-9)
    assert sol.values["e_sdw"] == pytest.approx(0.0, abs=1e-9)


def test_short_schedule_blocks_upward_energy():
    # wind 5 MWh short and the battery nearly empty: the schedule is short, upward activation is refused
    sol = solve_edm(inputs(Commitment(15.0, 0.0, 1.0, 1.0, 1.7), 10.0, mu=(0.8, 0.0), soc_prev=1.7))
    assert sol.values["dd_dw"] > 1e-6
    assert sol.values["e_sup"] == pytest.approx(0.0, abs=1e-9)


@pytest.mark.parametrize("rhs, fixed", [(1.2, (False, True)), (-0.7, (True, False)), (0.0, (True, True))])
def test_noncompliance_sign_rule(rhs, fixed):
    assert fix_noncompliance_sign(rhs) == fixed


def test_rejects_commitment_beyond_battery():
    with pytest.raises(ValueError):
        inputs(Commitment(10.0, 3.0, 0.0, 0.0, 4.0), 10.0)


def test_redispatch_frame_columns():
    sol = solve_edm(inputs(Commitment(10.0, 0.0, 0.0, 0.0, 4.0), 10.0))
    assert list(redispatch_frame([sol]).columns) == REDISPATCH_COLUMNS


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_redispatch_invariants(seed):
    inp = random_inputs(np.random.default_rng(seed))
    sol = solve_edm(inp)
    v = sol.values
    lhs = v["dv_up"] - v["dv_dw"]
    rhs = v["dd_up"] - v["dd_dw"] - (v["nc_up"] - v["nc_dw"])
    assert lhs == pytest.approx(rhs, abs=1e-6)
    assert CASE.soc_min - 1e-9 <= v["soc"] <= CASE.soc_max + 1e-9
    for a, b in (("e_dd", "e_dc"), ("dd_up", "dd_dw"), ("dv_up", "dv_dw"), ("e_sup", "e_sdw"), ("dd_dw", "e_sup")):
        assert min(v[a], v[b]) <= 1e-6, (a, b)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_constant_terms_do_not_move_the_argmax(seed):
    inp = random_inputs(np.random.default_rng(seed), curves=None)
    full = solve_edm(inp)
    bare = solve_edm(inp, handle=build_edm(inp, include_constants=False))
    c = inp.commitment
    const = inp.da_price * (c.p_w + c.p_b) + inp.srr_price * (c.g_up + c.g_dw)
    assert full.objective - bare.objective == pytest.approx(const, abs=1e-6)
    for k in ("p_w", "p_b", "soc", "dv_up", "dv_dw", "eps_up", "eps_dw"):
        assert full.values[k] == pytest.approx(bare.values[k], abs=1e-6), k
