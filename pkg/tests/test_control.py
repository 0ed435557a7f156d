"""Feedback regulator and the scripted stability/uniformity experiments."""

import json

import numpy as np
import pytest

from solartwin.config import ControlConfig, MODE_PER_BIN, MODE_TOTAL, TwinConfig
from solartwin.control import ExperimentResult, Regulator, run_lti, run_scan, run_sti
from solartwin.fitting import channel_bin_matrix


def make_regulator(board, ki=0.5, mode=MODE_TOTAL):
    config = ControlConfig(mode=mode, ki_per_s=ki, period_s=1.0)
    matrix = channel_bin_matrix(board) if mode == MODE_PER_BIN else None
    return Regulator(config, board.irr_max_vector, board.gamma_vector,
                     bin_matrix=matrix)


# -- regulator unit behavior ------------------------------------------------


def test_step_requires_engage(board):
    reg = make_regulator(board)
    with pytest.raises(RuntimeError):
        reg.step(100.0, 1.0)


def test_zero_error_leaves_duties_alone(board):
    reg = make_regulator(board)
    base = np.full(8, 0.5)
    reg.engage(base, 100.0)
    np.testing.assert_array_equal(reg.step(100.0, 1.0), base)


def test_integral_action_scales_duties(board):
    reg = make_regulator(board, ki=0.5)
    base = np.full(8, 0.5)
    reg.engage(base, 100.0)
    # 1 percent low for one second at ki=0.5 -> 0.5 percent correction
    duties = reg.step(99.0, 1.0)
    np.testing.assert_allclose(duties, base * 1.005, rtol=1e-12)


def test_loop_converges_on_gain_deficit(board):
    """A plant delivering 97 percent of the expectation is pulled back to
    the reference by integral action alone."""
    reg = make_regulator(board, ki=0.2)
    base = np.full(8, 0.5)
    reference = 100.0
    reg.engage(base, reference)
    duties = base.copy()
    sensed = 0.0
    for _ in range(400):
        sensed = 0.97 * reference * duties.max() / 0.5
        duties = reg.step(sensed, 1.0)
    assert sensed == pytest.approx(reference, rel=1e-3)
    assert np.all((duties >= 0.0) & (duties <= 1.0))


def test_saturated_loop_does_not_wind_up(board):
    """With no duty headroom the integrator freezes instead of accumulating
    an error it cannot act on."""
    reg = make_regulator(board, ki=0.5)
    reg.engage(np.ones(8), 100.0)
    for _ in range(50):
        duties = reg.step(90.0, 1.0)  # persistently low, nothing to give
    np.testing.assert_array_equal(duties, np.ones(8))
    assert reg.integrator_total == 0.0
    # the unclamped direction still works immediately
    duties = reg.step(110.0, 1.0)
    assert duties.max() < 1.0


def test_scale_never_drives_duties_negative(board):
    reg = make_regulator(board, ki=5.0)
    base = np.full(8, 0.5)
    reg.engage(base, 100.0)
    for _ in range(100):
        duties = reg.step(1000.0, 1.0)  # way above reference
    assert np.all(duties >= 0.0)


def test_per_bin_mode_needs_band_matrix(board):
    config = ControlConfig(mode=MODE_PER_BIN, ki_per_s=0.1, period_s=1.0)
    with pytest.raises(ValueError):
        Regulator(config, board.irr_max_vector, board.gamma_vector)


def test_per_bin_loop_recovers_band_powers(board):
    reg = make_regulator(board, ki=0.5, mode=MODE_PER_BIN)
    matrix = channel_bin_matrix(board)
    base = np.full(8, 0.3)
    base_powers = board.irr_max_vector * base ** board.gamma_vector
    reference = matrix @ base_powers
    reg.engage(base, reference)
    duties = base.copy()
    for _ in range(300):
        powers = board.irr_max_vector * duties ** board.gamma_vector
        sensed = matrix @ powers * 0.98  # uniform 2 percent deficit
        duties = reg.step(sensed, 1.0)
    powers = board.irr_max_vector * duties ** board.gamma_vector
    np.testing.assert_allclose(matrix @ powers * 0.98, reference, rtol=2e-3)


# -- experiment runners -----------------------------------------------------


def test_sti_run_shape_and_metadata(quiet_bench):
    result = run_sti(quiet_bench, duration_s=60.0, cadence_s=1.0, seed=9)
    assert result.kind == "sti"
    assert result.feedback is True
    assert result.seed == 9
    assert result.values.size == 60
    span = result.timestamps_s[-1] - result.timestamps_s[0]
    assert span == pytest.approx(59.0)
    assert result.config_hash == quiet_bench.config_fingerprint


def test_sti_validation(quiet_bench):
    with pytest.raises(ValueError):
        run_sti(quiet_bench, cadence_s=0.0)
    with pytest.raises(ValueError):
        run_sti(quiet_bench, duration_s=-5.0)
    with pytest.raises(ValueError):
        run_sti(quiet_bench, duration_s=1.0, cadence_s=1.0)  # one sample


def test_lti_timestamps_cover_the_exposure(quiet_bench):
    result = run_lti(quiet_bench, samples=4, interval_s=600.0, seed=1)
    assert result.kind == "lti"
    assert result.values.size == 4
    span = result.timestamps_s[-1] - result.timestamps_s[0]
    assert span == pytest.approx(3 * 600.0)
    with pytest.raises(ValueError):
        run_lti(quiet_bench, samples=1)
    with pytest.raises(ValueError):
        run_lti(quiet_bench, interval_s=0.0)


def test_experiments_are_deterministic(bench):
    runs = [run_sti(bench(seed=0), duration_s=40.0, seed=42) for _ in range(2)]
    np.testing.assert_array_equal(runs[0].values, runs[1].values)
    assert runs[0].metric_percent == runs[1].metric_percent
    other = run_sti(bench(seed=0), duration_s=40.0, seed=43)
    assert not np.array_equal(runs[0].values, other.values)


def test_quiet_bench_sti_sits_at_the_noise_floor(quiet_bench):
    result = run_sti(quiet_bench, feedback=False, seed=3)
    assert result.metric_percent < 0.1
    assert result.simulator_class == "A"


def test_feedback_improves_sti_with_drift(bench):
    for seed in (0, 1, 2):
        off = run_sti(bench(seed=seed), feedback=False, seed=seed)
        on = run_sti(bench(seed=seed), feedback=True, seed=seed)
        assert on.metric_percent <= off.metric_percent, seed


def test_closed_loop_lti_stays_class_a(bench):
    result = run_lti(bench(seed=7), samples=30, interval_s=1800.0,
                     feedback=True, seed=7)
    assert result.metric_percent <= 0.6
    assert result.simulator_class == "A"


def test_disengaged_loop_leaves_duties_static(quiet_bench):
    tb = quiet_bench
    tb.set_irradiance(500.0)
    tb.set_feedback(True)
    tb.advance(10.0)
    tb.set_feedback(False)
    before = tb.duties.copy()
    tb.advance(60.0)
    np.testing.assert_array_equal(tb.duties, before)


def test_scan_metric_and_metadata(quiet_bench):
    result = run_scan(quiet_bench, grid_n=8, seed=5)
    assert result.kind == "scan"
    assert result.feedback is False
    assert result.values.size == 64
    assert 1.0 <= result.metric_percent <= 2.0
    assert result.simulator_class == "A"
    with pytest.raises(ValueError):
        run_scan(quiet_bench, grid_n=1)


def test_scan_is_deterministic(bench):
    a = run_scan(bench(seed=2), grid_n=4, seed=2)
    b = run_scan(bench(seed=2), grid_n=4, seed=2)
    np.testing.assert_array_equal(a.values, b.values)


# -- persistence ------------------------------------------------------------


def test_result_csv_and_sidecar(tmp_path, quiet_bench):
    result = run_sti(quiet_bench, duration_s=10.0, cadence_s=1.0, seed=4)
    path = tmp_path / "sti.csv"
    result.save_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "timestamp_s,value"
    assert len(lines) == 1 + result.values.size
    first = lines[1].split(",")
    assert float(first[0]) == result.timestamps_s[0]
    assert float(first[1]) == result.values[0]
    sidecar = json.loads((tmp_path / "sti.csv.json").read_text())
    assert sidecar["class"] == result.simulator_class
    assert sidecar["metric_percent"] == result.metric_percent
    assert sidecar["seed"] == 4
