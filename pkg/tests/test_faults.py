"""Fault model: error profiles, margin law, weak-cell sets, calibration."""

import numpy as np
import pytest

from solarbnn import device as dev
from solarbnn import faults as fl
from solarbnn import tile as tl
from solarbnn.errors import ConfigError, DimensionMismatch, MalformedTable


def profile(probs, condition=None):
    return fl.ErrorProfile(condition or fl.voltage(0.9), probs)


# --- profiles ---

def test_profile_shape_rules():
    p = profile([0.02, 0.01, 0.005])
    assert p.cutoff == 2
    assert p.prob(0) == 0.02
    assert p.prob(-2) == 0.005  # symmetric in |delta|
    assert p.prob(3) == 0.0
    assert fl.neuron_error_prob(p, 100) == 0.0


def test_profile_rejects_bad_tables():
    with pytest.raises(MalformedTable):
        profile([0.01, 0.02])  # increasing
    with pytest.raises(MalformedTable):
        profile([1.5])
    with pytest.raises(MalformedTable):
        profile([-0.1])
    with pytest.raises(MalformedTable):
        profile([])


def test_prob_vector_matches_scalar():
    p = profile([0.02, 0.015, 0.01, 0.002])
    deltas = np.arange(-6, 7)
    np.testing.assert_allclose(p.prob_vector(deltas),
                               [p.prob(int(d)) for d in deltas])


def test_zero_profile():
    z = fl.zero_profile(fl.voltage(1.0))
    assert z.cutoff == 0 and z.prob(0) == 0.0


# --- defaults ---

def test_default_profiles_cover_grid():
    profs = fl.default_profiles()
    for v in (0.7, 0.8, 0.9, 1.0, 1.1, 1.2):
        assert fl.voltage(v) in profs
    for s in (8.0, 0.8, 0.36, 0.08):
        assert fl.suns(s) in profs
    assert fl.BASELINE in profs


def test_default_confinement_and_ceiling():
    profs = fl.default_profiles()
    for cond, p in profs.items():
        assert p.cutoff <= 5
        assert max(p.prob(d) for d in range(6)) <= 0.02


def test_high_voltage_profiles_error_free():
    profs = fl.default_profiles()
    for v in (1.0, 1.1, 1.2):
        p = profs[fl.voltage(v)]
        assert all(p.prob(d) == 0.0 for d in range(10))


def test_low_sun_profiles_dominate_high_sun():
    profs = fl.default_profiles()
    order = [8.0, 0.8, 0.36, 0.08]  # darker is worse, pointwise
    for a, b in zip(order, order[1:]):
        pa, pb = profs[fl.suns(a)], profs[fl.suns(b)]
        assert all(pb.prob(d) >= pa.prob(d) for d in range(6))


# --- output-level injection ---

def test_apply_errors_respects_cutoff():
    p = profile([0.02, 0.01])
    rng = np.random.default_rng(0)
    outputs = np.ones(100_000, np.int8)
    deltas = np.full(100_000, 2)  # beyond cutoff 1
    out = fl.apply_output_errors(outputs, deltas, p,
                                 fl.FaultPolicy(fl.FaultMode.STOCHASTIC_OUTPUT, 0), rng)
    np.testing.assert_array_equal(out, outputs)


def test_apply_errors_forced_flip():
    p = profile([1.0])
    rng = np.random.default_rng(0)
    outputs = np.array([1, -1, 1], np.int8)
    deltas = np.array([0, 0, 3])
    out = fl.apply_output_errors(outputs, deltas, p,
                                 fl.FaultPolicy(fl.FaultMode.STOCHASTIC_OUTPUT, 0), rng)
    np.testing.assert_array_equal(out, [-1, 1, 1])


def test_apply_errors_empirical_rate():
    p = profile([0.02])
    rng = np.random.default_rng(1)
    n = 100_000
    outputs = np.ones(n, np.int8)
    deltas = np.zeros(n, np.int64)
    out = fl.apply_output_errors(outputs, deltas, p,
                                 fl.FaultPolicy(fl.FaultMode.STOCHASTIC_OUTPUT, 0), rng)
    rate = (out != outputs).mean()
    assert abs(rate - 0.02) <= 0.002


def test_apply_errors_weak_cell_mode_passthrough():
    p = profile([1.0])
    rng = np.random.default_rng(0)
    outputs = np.ones(10, np.int8)
    deltas = np.zeros(10, np.int64)
    out = fl.apply_output_errors(outputs, deltas, p,
                                 fl.FaultPolicy(fl.FaultMode.DETERMINISTIC_WEAK_CELL, 0),
                                 rng)
    np.testing.assert_array_equal(out, outputs)
    # COMBINED keeps the stochastic channel
    out = fl.apply_output_errors(outputs, deltas, p,
                                 fl.FaultPolicy(fl.FaultMode.COMBINED, 0), rng)
    assert (out != outputs).all()


def test_apply_errors_shape_check():
    p = profile([0.02])
    with pytest.raises(DimensionMismatch):
        fl.apply_output_errors(np.ones(4, np.int8), np.zeros(3, np.int64), p,
                               fl.FaultPolicy(fl.FaultMode.STOCHASTIC_OUTPUT, 0),
                               np.random.default_rng(0))


# --- margin law ---

def test_margin_law_monotonicity():
    law = fl.MarginLaw()
    assert fl.margin_threshold(law, 1.2, 33) <= fl.margin_threshold(law, 0.9, 33)
    assert fl.margin_threshold(law, 0.9, 33) <= fl.margin_threshold(law, 0.9, 66)
    # dense grid check of both monotonicity directions
    vs = np.linspace(0.5, 1.3, 9)
    fs = np.linspace(5, 70, 6)
    for f in fs:
        th = [fl.margin_threshold(law, v, f) for v in vs]
        assert all(a >= b for a, b in zip(th, th[1:]))
    for v in vs:
        th = [fl.margin_threshold(law, v, f) for f in fs]
        assert all(a <= b for a, b in zip(th, th[1:]))


def test_margin_law_vanishes_at_high_voltage():
    law = fl.MarginLaw()
    for f in (1, 10, 33, 66, 200):
        assert fl.margin_threshold(law, 1.0, f) == 0.0
        assert fl.margin_threshold(law, 1.2, f) == 0.0


def test_no_weak_cells_at_one_volt_default_variability():
    law = fl.MarginLaw()
    var = dev.DeviceVariability()
    rng = np.random.default_rng(2)
    pctx = tl.ProgramContext(var, rng)
    for _ in range(5):
        t = tl.Tile.formed_blank(var, rng)
        w = np.where(rng.random((58, 64)) < 0.5, 1, -1)
        tl.program_weight_block(t, w, pctx)
        tl.program_thresholds(t, rng.integers(0, 64, 64), pctx)
        assert fl.failing_cell_set(t, law, 1.0, 66) == set()


# --- failing cell sets ---

def programmed_tile(seed):
    var = dev.DeviceVariability()
    rng = np.random.default_rng(seed)
    t = tl.Tile.formed_blank(var, rng)
    pctx = tl.ProgramContext(var, rng)
    tl.program_weight_block(t, np.where(rng.random((58, 64)) < 0.5, 1, -1), pctx)
    tl.program_thresholds(t, rng.integers(0, 64, 64), pctx)
    return t


def test_failing_set_ideal_empty():
    t = programmed_tile(3)
    law = fl.MarginLaw(a=0.0, b=0.0)
    assert fl.failing_cell_set(t, law, 0.7, 66) == set()


def test_failing_set_nesting():
    law = fl.MarginLaw()
    for seed in range(8):
        t = programmed_tile(seed)
        assert fl.failing_cell_set(t, law, 0.7, 33) <= fl.failing_cell_set(t, law, 0.7, 66)
        assert fl.failing_cell_set(t, law, 1.2, 33) <= fl.failing_cell_set(t, law, 0.9, 33)
        assert fl.failing_cell_set(t, law, 0.9, 33) <= fl.failing_cell_set(t, law, 0.8, 33)


def test_failing_set_matches_margin_scan():
    t = programmed_tile(11)
    law = fl.MarginLaw()
    theta = fl.margin_threshold(law, 0.7, 66)
    expect = {(r, c) for r in range(64) for c in range(64)
              if abs(t.margin(r, c)) <= theta}
    assert fl.failing_cell_set(t, law, 0.7, 66) == expect
    assert expect  # the scan at 0.7 V / 66 MHz must actually catch cells


# --- functional frequency boundary ---

def test_max_functional_frequency_steps():
    assert fl.max_functional_frequency(1.2) == 66.0
    assert fl.max_functional_frequency(1.0) == 66.0
    assert fl.max_functional_frequency(0.9) == 33.0
    assert fl.max_functional_frequency(0.8) == 33.0
    assert fl.max_functional_frequency(0.7) == 10.0
    assert fl.max_functional_frequency(0.69) == 0.0


# --- resolution ---

def test_resolve_exact_and_baseline():
    profs = fl.default_profiles()
    assert fl.resolve_profile(profs, fl.voltage(0.9)) is profs[fl.voltage(0.9)]
    assert fl.resolve_profile(profs, fl.BASELINE).cutoff == 0


def test_resolve_nearest_log_space(caplog):
    profs = fl.default_profiles()
    with caplog.at_level("WARNING"):
        got = fl.resolve_profile(profs, fl.voltage(0.85))
    # log-distance favors 0.9 over 0.8 from 0.85
    assert got is profs[fl.voltage(0.9)]
    assert any("nearest" in r.message for r in caplog.records)


def test_resolve_no_candidates():
    with pytest.raises(ConfigError):
        fl.resolve_profile({}, fl.voltage(0.9))
    with pytest.raises(ConfigError):
        fl.resolve_profile(fl.default_profiles(), fl.suns(0.0))


# --- calibration ---

def test_calibrate_all_zero():
    rows = [(fl.voltage(0.9), d, 0.0) for d in range(6)]
    p = fl.calibrate_profile(rows)
    assert p.cutoff == 0 and p.prob(0) == 0.0


def test_calibrate_cutoff_from_last_nonzero():
    rows = [(fl.voltage(0.9), 0, 0.02), (fl.voltage(0.9), 1, 0.01),
            (fl.voltage(0.9), 5, 0.001), (fl.voltage(0.9), 6, 0.0)]
    p = fl.calibrate_profile(rows)
    assert p.cutoff == 5
    assert p.prob(5) == pytest.approx(0.001)
    assert p.prob(6) == 0.0


def test_calibrate_monotone_envelope():
    rows = [(fl.voltage(0.9), 0, 0.01), (fl.voltage(0.9), 1, 0.02)]
    p = fl.calibrate_profile(rows)
    assert p.prob(0) == pytest.approx(0.02)
    assert p.prob(1) == pytest.approx(0.02)


def test_calibrate_signed_deltas_folded():
    rows = [(fl.voltage(0.9), -1, 0.015), (fl.voltage(0.9), 1, 0.01),
            (fl.voltage(0.9), 0, 0.02)]
    p = fl.calibrate_profile(rows)
    assert p.prob(1) == pytest.approx(0.015)  # max over signs


def test_calibrate_rejects_bad_rates():
    with pytest.raises(MalformedTable):
        fl.calibrate_profile([(fl.voltage(0.9), 0, 1.2)])
    with pytest.raises(MalformedTable):
        fl.calibrate_profile([])
    with pytest.raises(MalformedTable):
        fl.calibrate_profile([(fl.voltage(0.9), 0, 0.01), (fl.suns(8), 0, 0.01)])


def test_profile_csv_roundtrip(tmp_path):
    p = fl.default_profiles()[fl.voltage(0.9)]
    path = tmp_path / "prof.csv"
    fl.export_profile_csv(p, path)
    text = path.read_text()
    assert text.splitlines()[0] == "condition,delta,error_rate"
    loaded = fl.load_profiles_csv(path)
    assert loaded[fl.voltage(0.9)] == p


def test_load_profiles_multiple_conditions(tmp_path):
    path = tmp_path / "cal.csv"
    path.write_text("condition,delta,error_rate\n"
                    "voltage=0.9,0,0.02\nvoltage=0.9,1,0.01\n"
                    "suns=0.08,0,0.018\nsuns=0.08,1,0.012\n")
    profs = fl.load_profiles_csv(path)
    assert set(profs) == {fl.voltage(0.9), fl.suns(0.08)}
    assert profs[fl.suns(0.08)].prob(1) == pytest.approx(0.012)


def test_condition_parse_and_format():
    assert fl.Condition.parse("voltage=0.9") == fl.voltage(0.9)
    assert fl.Condition.parse("suns=8") == fl.suns(8.0)
    assert str(fl.voltage(0.9)) == "voltage=0.9"
    with pytest.raises(ConfigError):
        fl.Condition.parse("lux=5")
