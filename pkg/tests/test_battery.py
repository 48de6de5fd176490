import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import PinnedCostOracle
from vppsched.battery import (BatteryParams, DegradationCurveTable, add_degradation_block, dcr_of, default_curve_table,
                              degradation_cost, select_curve, soc_step)
from vppsched.milp import Model

CASE = BatteryParams.case_study()


def test_case_study_parameters():
    assert (CASE.p_max, CASE.soc_max, CASE.soc_min, CASE.eta) == (2.0, 8.0, 1.6, 0.86)


@pytest.mark.parametrize("kw", [dict(soc_min=0.0), dict(soc_min=9.0), dict(eta=0.0), dict(eta=1.2), dict(p_max=0.0)])
def test_battery_params_rejected(kw):
    with pytest.raises(ValueError):
        BatteryParams(**kw)


@pytest.mark.parametrize("args, expected", [
    ((4.0, 0, 0, 0.86), 4.0),
    ((4.0, 1.5, 0, 0.86), 5.29),
    ((5.0, 0, 2.0, 0.86), 3.0),
])
def test_soc_step(args, expected):
    assert soc_step(*args) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("args, expected", [((4, 4, 8), 0.0), ((6, 4, 8), 0.25), ((4, 6, 8), 0.0)])
def test_dcr_of(args, expected):
    assert dcr_of(*args) == pytest.approx(expected)


def _two_curve_table():
    return DegradationCurveTable(L=[1.6, 3.2], c_min=[2.0, 1.0], slope=[20.0, 10.0], c_max=[30.0, 30.0])


def test_cost_zero_without_discharge():
    assert degradation_cost(4.0, 0.0, default_curve_table(CASE)) == 0.0


def test_cost_on_second_curve():
    assert degradation_cost(4.0, 0.25, _two_curve_table()) == pytest.approx(3.5)


def test_threshold_belongs_to_upper_curve():
    t = _two_curve_table()
    assert select_curve(3.2, t) == 1
    assert degradation_cost(3.2, 0.25, t) == pytest.approx(3.5)


def test_threshold_matches_milp_selection():
    t = _two_curve_table()
    m = Model()
    sp, s = m.continuous("sp", CASE.soc_min, CASE.soc_max), m.continuous("s", CASE.soc_min, CASE.soc_max)
    blk = add_degradation_block(m, t, sp, s, CASE.soc_max, "x")
    oracle = PinnedCostOracle(m, blk, sp, s)
    assert oracle(3.2, 0.1, CASE.soc_max) == pytest.approx(degradation_cost(3.2, 0.1, t), abs=1e-9)


def test_zero_anchor_table_is_free():
    t = default_curve_table(CASE, J=2, anchor_fraction=0.0)
    assert np.all(t.c_min == 0) and np.all(t.slope == 0)
    for sp in (1.6, 3.0, 7.9):
        assert degradation_cost(sp, 0.5, t) == 0.0


def test_default_table_shape():
    t = default_curve_table(CASE)
    assert t.J == 10
    assert np.all(np.diff(t.L) > 0)
    assert t.L[0] == pytest.approx(CASE.soc_min)
    assert np.all(t.c_max >= t.c_min + t.slope)
    assert list(t.D) == list(range(10))
    t.check_battery(CASE)


def test_lower_soc_never_cheaper():
    t = default_curve_table(CASE)
    socs = np.arange(1.6, 8.0 + 1e-9, 0.05)
    for dcr in (0.05, 0.2, 0.5):
        costs = [degradation_cost(s, dcr, t) for s in socs]
        assert all(a >= b - 1e-12 for a, b in zip(costs, costs[1:]))


@pytest.mark.parametrize("bad", [
    dict(L=[2.0, 1.0]), dict(slope=[-1.0, 1.0]), dict(c_max=[5.0, 5.0]), dict(c_min=[1.0]),
])
def test_curve_table_rejected(bad):
    kw = dict(L=[1.6, 3.2], c_min=[2.0, 1.0], slope=[20.0, 10.0], c_max=[30.0, 30.0])
    kw.update(bad)
    with pytest.raises(ValueError):
        DegradationCurveTable(**kw)


def test_curve_table_csv_round_trip(tmp_path):
    t = default_curve_table(CASE)
    t.to_csv(tmp_path / "c.csv")
    back = DegradationCurveTable.from_csv(tmp_path / "c.csv")
    for a in ("L", "c_min", "slope", "c_max"):
        assert np.array_equal(getattr(t, a), getattr(back, a))


socs = st.floats(1.6, 8.0)
dcrs = st.floats(0.0, 1.0)


@given(socs, dcrs, dcrs)
def test_cost_non_decreasing_in_dcr(sp, a, b):
    t = default_curve_table(CASE)
    lo, hi = sorted((a, b))
    assert degradation_cost(sp, lo, t) <= degradation_cost(sp, hi, t) + 1e-12


@given(socs)
def test_cost_zero_at_zero_dcr(sp):
    assert degradation_cost(sp, 0.0, default_curve_table(CASE)) == 0.0


@given(st.floats(1.6, 8.0), st.floats(0, 2), st.floats(0, 2), st.floats(0, 2), st.floats(0, 2))
def test_soc_step_affine(s, c1, d1, c2, d2):
    mid = soc_step(s, (c1 + c2) / 2, (d1 + d2) / 2, 0.86)
    assert mid == pytest.approx((soc_step(s, c1, d1, 0.86) + soc_step(s, c2, d2, 0.86)) / 2, abs=1e-12)
    assert soc_step(s, 0, 0, 0.86) == s
