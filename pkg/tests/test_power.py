"""Solar cell IV model, operating point, and energy accounting."""

import numpy as np
import pytest

from solarbnn import power as pw
from solarbnn.errors import FractionOverflow, NoOperatingPoint

CELL = pw.SolarCellModel()


# --- IV curve ---

def test_short_circuit_limits():
    ideal = pw.SolarCellModel(r_s_ohms=0.0, r_sh_ohms=1e12)
    assert pw.iv_current(ideal, 0.0, 1.0) == pytest.approx(2.5e-3, rel=1e-12)
    assert pw.iv_current(ideal, 0.0, 0.0) == pytest.approx(0.0, abs=1e-18)
    # series resistance barely moves the short-circuit point
    assert pw.iv_current(CELL, 0.0, 1.0) == pytest.approx(2.5e-3, rel=1e-4)


def test_iv_monotonic_in_v_and_suns():
    vs = np.linspace(0.0, 1.1, 12)
    for suns in (0.08, 1.0, 8.0):
        i = [pw.iv_current(CELL, v, suns) for v in vs]
        assert all(a > b for a, b in zip(i, i[1:]))
    for v in (0.0, 0.4, 0.9):
        i = [pw.iv_current(CELL, v, s) for s in (0.08, 0.5, 1.0, 4.0, 8.0)]
        assert all(a < b for a, b in zip(i, i[1:]))


def test_implicit_series_term():
    # with r_s > 0 the returned I satisfies the transcendental equation
    for v in (0.2, 0.7, 1.0):
        i = pw.iv_current(CELL, v, 1.0)
        vj = v + i * CELL.r_s_ohms
        rhs = (2.5e-3 - CELL.i_0_a * np.expm1(vj / CELL.nvt) - vj / CELL.r_sh_ohms)
        assert i == pytest.approx(rhs, rel=1e-9)


def test_open_circuit_voltage():
    voc8 = pw.open_circuit_voltage(CELL, 8.0)
    assert voc8 == pytest.approx(1.23, abs=0.01)
    assert voc8 == pytest.approx(1.2299942466651623, rel=1e-9)  # frozen
    assert pw.iv_current(CELL, voc8, 8.0) == pytest.approx(0.0, abs=1e-9)
    assert pw.open_circuit_voltage(CELL, 0.0) == 0.0
    # monotone in illumination
    vocs = [pw.open_circuit_voltage(CELL, s) for s in (0.08, 0.36, 0.8, 8.0)]
    assert all(a < b for a, b in zip(vocs, vocs[1:]))


def test_short_circuit_linearity():
    isc1 = pw.short_circuit_current(CELL, 1.0)
    for s in (0.08, 0.36, 0.8, 2.0, 8.0):
        assert pw.short_circuit_current(CELL, s) / (isc1 * s) == pytest.approx(1.0, abs=1e-3)


def test_equivalent_suns():
    isc1 = pw.short_circuit_current(CELL, 1.0)
    assert pw.equivalent_suns(CELL, isc1) == pytest.approx(1.0, rel=1e-12)
    assert pw.equivalent_suns(CELL, 0.0) == 0.0
    assert pw.equivalent_suns(CELL, 8 * isc1) == pytest.approx(8.0, rel=1e-12)
    with pytest.raises(ValueError):
        pw.equivalent_suns(CELL, -1e-3)


# --- load and operating point ---

def test_load_current_shape():
    load = pw.ChipLoadModel(f_mhz=10.0)
    assert pw.load_current(load, 0.0) == load.i_leak_a
    dyn = pw.load_current(load, 0.7) - load.i_leak_a
    dyn2 = pw.load_current(pw.ChipLoadModel(f_mhz=20.0), 0.7) - load.i_leak_a
    assert dyn2 == pytest.approx(2 * dyn, rel=1e-12)


def test_energy_is_power_times_latency():
    # dynamic power at the operating voltage, integrated over one
    # inference, reproduces the quadratic energy law exactly
    for v in (0.7, 0.9, 1.2):
        for f in (0.3, 10.0, 66.0):
            load = pw.ChipLoadModel(f_mhz=f)
            i_dyn = pw.load_current(load, v) - load.i_leak_a
            t_inf = load.cycles_per_inference / (f * 1e6)
            assert v * i_dyn * t_inf == pytest.approx(
                pw.energy_per_inference(v), rel=1e-12)


def test_operating_point_zero_load_is_voc():
    load = pw.ChipLoadModel(i_leak_a=0.0, f_mhz=0.0)
    op = pw.operating_point(CELL, load, 1.0)
    assert op.v_volts == pytest.approx(pw.open_circuit_voltage(CELL, 1.0), abs=2e-6)


def test_operating_point_dark_brownout():
    with pytest.raises(NoOperatingPoint):
        pw.operating_point(CELL, pw.ChipLoadModel(), 0.0)


def test_operating_point_default_grid():
    load = pw.ChipLoadModel()
    v_low = pw.operating_point(CELL, load, 0.08).v_volts
    assert 0.7 < v_low < 1.0
    assert v_low == pytest.approx(0.8520088095444256, abs=2e-6)  # frozen
    vs = [pw.operating_point(CELL, load, s).v_volts for s in (0.08, 0.36, 0.8, 8.0)]
    assert all(a < b for a, b in zip(vs, vs[1:]))


def test_operating_point_balances_currents():
    load = pw.ChipLoadModel()
    op = pw.operating_point(CELL, load, 0.8)
    assert pw.iv_current(CELL, op.v_volts, 0.8) == pytest.approx(
        pw.load_current(load, op.v_volts), abs=1e-6)
    assert op.i_amps == pytest.approx(pw.load_current(load, op.v_volts), rel=1e-6)


# --- energy accounting ---

def test_energy_law_values():
    assert pw.energy_per_inference(0.7) == 45e-9
    assert pw.energy_per_inference(1.2) == pytest.approx(1.322448979591837e-07, rel=1e-12)
    vs = np.linspace(0.7, 1.2, 11)
    ratios = [pw.energy_per_inference(v) / v**2 for v in vs]
    assert max(ratios) / min(ratios) - 1 < 1e-12


def test_energy_breakdown_shares():
    bd = pw.energy_breakdown(45e-9)
    assert bd["clock"] == pytest.approx(2.34e-9, rel=1e-12)
    assert bd["registers"] == pytest.approx(7.2e-9, rel=1e-12)
    assert bd["mac"] == pytest.approx(2.925e-9, rel=1e-12)
    assert bd["other"] == 0.0
    assert sum(bd.values()) == pytest.approx(45e-9, rel=1e-12)
    # fractions themselves conserve unity
    total = 45e-9
    assert sum(v / total for v in bd.values()) == pytest.approx(1.0, abs=1e-9)


def test_energy_breakdown_guards():
    with pytest.raises(FractionOverflow):
        pw.energy_breakdown(45e-9, {"other": 0.8})  # pushes the sum past 1
    with pytest.raises(ValueError):
        pw.energy_breakdown(45e-9, {"bogus": 0.1})
    with pytest.raises(ValueError):
        pw.energy_breakdown(45e-9, {"other": -0.1})


def test_tops_per_watt():
    assert pw.inference_ops() == 29696
    assert pw.tops_per_watt(1e-12, 2) == pytest.approx(2.0, rel=1e-12)
    assert pw.tops_per_watt(1e-12, 4) == pytest.approx(4.0, rel=1e-12)
    with pytest.raises(ValueError):
        pw.tops_per_watt(0.0, 2)


def test_efficiency_report_benchmark_point():
    rep = pw.build_energy_report()  # 0.7 V, 10 MHz defaults
    assert rep.total_j == 45e-9
    assert rep.counted_energy_j == pytest.approx(45e-9 * (1 - 0.7724), rel=1e-12)
    assert rep.tops_per_watt == pytest.approx(2.9, abs=0.1)
    assert rep.tops_per_watt == pytest.approx(2.899433704354618, rel=1e-9)  # frozen
    assert sum(rep.breakdown_j.values()) == pytest.approx(rep.total_j, rel=1e-12)
    # the metric scales against the counted energy, not the frequency
    rep2 = pw.build_energy_report(f_mhz=33.0)
    assert rep2.tops_per_watt == rep.tops_per_watt
