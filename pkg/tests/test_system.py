"""Bench facade: subsystem wiring, seeding, interlocks, measurement paths."""

import dataclasses

import numpy as np
import pytest

from solartwin.chamber import OVERRANGE, ChamberGeometry
from solartwin.config import TwinConfig
from solartwin.fitting import Unachievable
from solartwin.lightboard import DutyOutOfRange
from solartwin.system import SettingsConflict, TARGET_AM15G, TARGET_CUSTOM, Testbed


def test_same_seed_reproduces_measurements(bench):
    readings = []
    for _ in range(2):
        tb = bench(seed=123)
        tb.set_irradiance(300.0)
        trace = [tb.measure_spectrum()]
        tb.advance(30.0)
        trace.append(tb.measure_dut_current())
        trace.append(tb.measure_spectrum())
        readings.append(trace)
    np.testing.assert_array_equal(readings[0][0], readings[1][0])
    assert readings[0][1] == readings[1][1]
    np.testing.assert_array_equal(readings[0][2], readings[1][2])


def test_different_seeds_differ(bench):
    currents = []
    for seed in (1, 2):
        tb = bench(seed=seed)
        tb.set_irradiance(300.0)
        currents.append(tb.measure_dut_current())
    assert currents[0] != currents[1]


def test_reseed_swaps_noise_streams_only(quiet_bench):
    tb = quiet_bench
    tb.set_irradiance(500.0)
    duties = tb.duties.copy()
    level = tb.requested_level
    tb.reseed(777)
    np.testing.assert_array_equal(tb.duties, duties)
    assert tb.requested_level == level
    assert tb.seed == 777
    for bad in (-1, 2**64):
        with pytest.raises(ValueError):
            tb.reseed(bad)


def test_reset_restores_power_on_state(bench):
    tb = bench(seed=5)
    tb.set_irradiance(500.0)
    tb.set_feedback(True)
    tb.set_door(True)
    tb.advance(100.0)
    tb.reset()
    assert tb.clock.now_s == 0.0
    assert not tb.door_open
    assert not tb.feedback_enabled
    assert tb.requested_level is None
    np.testing.assert_array_equal(tb.duties, np.zeros(8))
    assert tb.seed == 5  # reset without argument keeps the active seed


def test_channel_percent_accessors(quiet_bench):
    tb = quiet_bench
    tb.set_channel_percent(3, 40.0)
    assert tb.get_channel_percent(3) == pytest.approx(40.0, abs=1e-3)
    assert tb.get_channel_percent(1) == 0.0
    for bad_channel in (0, 9):
        with pytest.raises(IndexError):
            tb.set_channel_percent(bad_channel, 10.0)
    with pytest.raises(DutyOutOfRange):
        tb.set_channel_percent(1, 100.5)


def test_dark_bench_measures_zero_spectrum(quiet_bench):
    np.testing.assert_array_equal(quiet_bench.measure_spectrum(), np.zeros(18))
    assert quiet_bench.measure_dut_current() == 0.0


def test_door_open_kills_the_output(quiet_bench):
    tb = quiet_bench
    tb.set_irradiance(500.0)
    lit = tb.measure_dut_current()
    assert lit > 0.0
    tb.set_door(True)
    assert tb.output_gain == 0.0
    assert tb.measure_dut_current() == 0.0
    np.testing.assert_array_equal(tb.measure_spectrum(), np.zeros(18))
    assert tb.measure_illuminance("LOW").wire_value == 0.0
    tb.set_door(False)
    assert tb.measure_dut_current() == pytest.approx(lit, rel=0.01)


def test_illuminance_ranges(quiet_bench):
    tb = quiet_bench
    tb.set_irradiance(750.0)
    low = tb.measure_illuminance("LOW")
    high = tb.measure_illuminance("HIGH")
    assert low.wire_value == OVERRANGE  # bright scene overdrives the low range
    assert high.flag == "ok"
    assert 50_000.0 < high.value_lx < 228_000.0
    with pytest.raises(ValueError):
        tb.measure_illuminance("MID")


def test_dut_position_follows_the_field(quiet_bench):
    tb = quiet_bench
    tb.set_irradiance(500.0)
    center = tb.spectrum_at_dut().total_w_m2
    tb.set_dut_position(80.0, 80.0)
    corner = tb.spectrum_at_dut().total_w_m2
    assert corner != center
    ratio = corner / center
    expected = (tb.field.gain_at(80.0, 80.0) / tb.field.gain_at(0.0, 0.0))[0]
    assert ratio == pytest.approx(expected, rel=1e-9)
    with pytest.raises(ValueError):
        tb.set_dut_position(176.0, 0.0)
    with pytest.raises(ValueError):
        tb.set_dut_position(0.0, -180.0)


def test_spectrum_at_dut_composes_gain_and_board(quiet_bench):
    tb = quiet_bench
    tb.set_channel_percent(7, 30.0)
    nominal = tb.nominal_spectrum().total_w_m2
    gain = float(tb.field.gain_at(0.0, 0.0)[0])
    assert tb.spectrum_at_dut().total_w_m2 == pytest.approx(nominal * gain, rel=1e-9)


def test_nominal_spectrum_ignores_drift(bench):
    tb = bench(seed=3)  # default drift: 2% warm-up deficit at power-on
    tb.set_irradiance(500.0)
    nominal = tb.nominal_spectrum().total_w_m2
    at_dut = tb.spectrum_at_dut().total_w_m2
    gain = float(tb.field.gain_at(0.0, 0.0)[0])
    assert at_dut / (nominal * gain) == pytest.approx(tb.output_gain, rel=1e-9)
    assert tb.output_gain < 1.0


def test_set_irradiance_beyond_span(quiet_bench):
    with pytest.raises(Unachievable):
        quiet_bench.set_irradiance(1000.0)
    with pytest.raises(Unachievable):
        quiet_bench.set_irradiance(1e-4)


def test_requested_level_cleared_by_manual_override(quiet_bench):
    tb = quiet_bench
    tb.set_irradiance(300.0)
    assert tb.requested_level == 300.0
    tb.set_channel_percent(2, 10.0)
    assert tb.requested_level is None


def test_custom_target_needs_fractions(quiet_bench, bench):
    tb = quiet_bench
    with pytest.raises(ValueError):
        tb.set_target("XYZ")
    tb.set_target(TARGET_CUSTOM)
    with pytest.raises(SettingsConflict):
        tb.set_irradiance(100.0)

    flat = (100 / 7, 100 / 7, 100 / 7, 100 / 7, 100 / 7, 200 / 7)
    tb2 = bench(custom_target_fractions=flat)
    tb2.set_target(TARGET_CUSTOM)
    tb2.set_irradiance(100.0)
    assert tb2.requested_level == 100.0
    assert tb2.nominal_spectrum().total_w_m2 == pytest.approx(100.0, rel=0.02)


def test_target_reverts_to_reference(quiet_bench):
    tb = quiet_bench
    assert tb.target == TARGET_AM15G
    tb.set_target(TARGET_CUSTOM)
    tb.set_target(TARGET_AM15G)
    tb.set_irradiance(50.0)
    assert tb.nominal_spectrum().total_w_m2 == pytest.approx(50.0, rel=0.02)


def test_dut_temperature_regulation(quiet_bench):
    tb = quiet_bench
    tb.set_dut_temperature(40.0)
    tb.advance(300.0)
    assert tb.measure_dut_temperature() == pytest.approx(40.0, abs=0.1)


def test_config_fingerprint_tracks_config_and_seed(bench):
    a1 = bench(seed=1).config_fingerprint
    a2 = bench(seed=1).config_fingerprint
    b = bench(seed=2).config_fingerprint
    c = bench(seed=1, board_temp_c=30.0).config_fingerprint
    assert a1 == a2
    assert a1 != b
    assert a1 != c


def test_uniform_geometry_scan_is_flat(bench):
    geometry = ChamberGeometry(uniform=True)
    tb = bench(geometry=geometry)
    tb.set_irradiance(500.0)
    totals = []
    for x in (-70.0, 0.0, 70.0):
        tb.set_dut_position(x, 35.0)
        totals.append(tb.spectrum_at_dut().total_w_m2)
    assert totals[0] == totals[1] == totals[2]
