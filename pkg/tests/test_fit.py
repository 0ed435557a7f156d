"""Inverse spectrum problem: band matrix, projection, solver quality."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from solartwin.fitting import (
    PRESET_LEVELS_W_M2,
    FitProblem,
    PresetCache,
    Unachievable,
    channel_bin_matrix,
    fit_am15g,
    fit_duties,
    project_capped_simplex,
)
from solartwin.lightboard import (
    WAVELENGTH_GRID_NM,
    ChannelSet,
    LedChannel,
    ShapeComponent,
)
from solartwin.spectral import AM15G_BIN_FRACTIONS, bin_fractions, spectral_match


def dominant_peak(channel) -> float:
    return max(channel.shape, key=lambda c: c.weight).peak_nm


# -- band matrix ------------------------------------------------------------


def test_bin_matrix_of_narrow_source():
    ch = LedChannel(name="L550", led_count=10, irr_min_w_m2=1e-4,
                    irr_max_w_m2=10.0, temp_coeff_per_k=-1e-3,
                    shape=(ShapeComponent(550.0, 10.0, 1.0),))
    column = channel_bin_matrix(ChannelSet((ch,)))[:, 0]
    assert column[1] > 0.999
    assert column[[0, 2, 3, 4, 5]].max() < 1e-4


def test_bin_matrix_columns_are_fractions(board):
    m = channel_bin_matrix(board)
    assert np.all(m >= 0.0)
    sums = m.sum(axis=0)
    assert np.all(sums <= 1.0 + 1e-9)  # out-of-window emission only loses mass
    assert np.all(sums > 0.9)


def test_infrared_channel_lands_in_last_band(board):
    m = channel_bin_matrix(board)
    idx = [i for i, ch in enumerate(board) if dominant_peak(ch) == 940.0]
    assert idx, "board carries a 940 nm channel"
    column = m[:, idx[0]]
    assert column[5] / column.sum() > 0.99


def test_bin_matrix_matches_forward_fractions(board):
    """B @ p must agree with integrating the synthesized spectrum."""
    rng = np.random.default_rng(8)
    caps = board.irr_max_vector
    powers = rng.uniform(0.05, 0.9, 8) * caps
    duties = (powers / caps) ** (1.0 / board.gamma_vector)
    from_matrix = channel_bin_matrix(board) @ powers
    from_spectrum = bin_fractions(board.spectrum(duties))
    np.testing.assert_allclose(from_matrix / from_matrix.sum() * 100.0,
                               from_spectrum, rtol=1e-9)


# -- capped simplex projection ----------------------------------------------


def test_projection_pinned_cases():
    caps = np.ones(3)
    np.testing.assert_allclose(
        project_capped_simplex(np.array([2.0, 0.0, 0.0]), caps, 1.0),
        [1.0, 0.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(
        project_capped_simplex(np.array([0.5, 0.5, 0.5]), caps, 1.5),
        [0.5, 0.5, 0.5], atol=1e-12)
    np.testing.assert_allclose(
        project_capped_simplex(np.array([-3.0, 9.0, 0.2]), caps, 3.0),
        caps, atol=1e-12)
    np.testing.assert_allclose(
        project_capped_simplex(np.array([-1.0, -2.0, -3.0]), caps, 0.0),
        np.zeros(3), atol=1e-12)


def test_projection_rejects_infeasible_sum():
    caps = np.ones(3)
    with pytest.raises(ValueError):
        project_capped_simplex(np.zeros(3), caps, 3.1)
    with pytest.raises(ValueError):
        project_capped_simplex(np.zeros(3), caps, -0.1)


@settings(max_examples=120)
@given(st.lists(st.floats(-5.0, 5.0), min_size=8, max_size=8),
       st.lists(st.floats(0.1, 3.0), min_size=8, max_size=8),
       st.floats(0.0, 1.0),
       st.lists(st.floats(-5.0, 5.0), min_size=8, max_size=8))
def test_projection_properties(v, caps, f, w):
    v = np.array(v)
    caps = np.array(caps)
    total = f * caps.sum()
    x = project_capped_simplex(v, caps, total)

    assert np.all(x >= -1e-12) and np.all(x <= caps + 1e-12)
    assert x.sum() == pytest.approx(total, abs=1e-9)
    np.testing.assert_allclose(project_capped_simplex(x, caps, total), x,
                               atol=1e-9)
    # no feasible point sits closer to v than the projection
    y = project_capped_simplex(np.array(w), caps, total)
    assert np.sum((x - v) ** 2) <= np.sum((y - v) ** 2) + 1e-9


# -- solver quality ---------------------------------------------------------


def test_reference_fit_at_500(board):
    result = fit_am15g(board, 500.0)
    assert result.converged
    assert result.iterations <= 5000
    assert result.achieved_class == "A"
    # verify through the forward spectral path, not the solver's algebra
    fractions = bin_fractions(board.spectrum(result.duties))
    ratios = fractions / np.asarray(AM15G_BIN_FRACTIONS)
    assert np.all((ratios >= 0.75) & (ratios <= 1.25))
    np.testing.assert_allclose(result.achieved_fractions, fractions, rtol=1e-12)
    assert result.powers_w_m2.sum() == pytest.approx(500.0, rel=1e-9)
    assert board.irradiances(result.duties).sum() == pytest.approx(500.0, rel=1e-3)


def test_all_preset_levels_grade_class_a(board):
    for level in PRESET_LEVELS_W_M2:
        result = fit_am15g(board, level)
        assert result.achieved_class == "A", level
        assert result.converged, level


def test_objective_matches_quadratic_programming_oracle(board):
    """The projected-gradient solution must match an off-the-shelf QP
    solver on the same weighted least-squares problem."""
    from scipy.optimize import minimize

    m = channel_bin_matrix(board)
    caps = board.irr_max_vector
    targets = (
        (np.asarray(AM15G_BIN_FRACTIONS, dtype=float), 50.0),
        (np.asarray(AM15G_BIN_FRACTIONS, dtype=float), 300.0),  # caps bind here
        (np.asarray(AM15G_BIN_FRACTIONS, dtype=float), 500.0),
        (np.full(6, 100.0 / 6.0), 200.0),
    )
    for fractions, total in targets:
        target_bins = fractions / 100.0 * total
        weights = 1.0 / (0.25 * target_bins)
        wm = weights[:, None] * m
        wt = weights * target_bins

        def objective(p):
            r = wm @ p - wt
            return float(r @ r)

        ours = fit_duties(FitProblem(channels=board,
                                     target_fractions=fractions,
                                     total_w_m2=total))
        oracle = minimize(
            objective, x0=np.full(8, total / 8.0), method="SLSQP",
            bounds=[(0.0, c) for c in caps],
            constraints=[{"type": "eq", "fun": lambda p: p.sum() - total}],
            options={"maxiter": 500, "ftol": 1e-14})
        assert ours.objective <= objective(oracle.x) * 1.001 + 1e-9, total


def test_narrow_band_target_served_by_matching_channel(board):
    """A target living almost entirely in the 400-500 nm band pulls nearly
    all the power onto the one channel emitting there."""
    blue = [i for i, ch in enumerate(board) if dominant_peak(ch) == 470.0][0]
    fractions = np.array([97.0, 0.6, 0.6, 0.6, 0.6, 0.6])
    total = 10.0
    result = fit_duties(FitProblem(channels=board, target_fractions=fractions,
                                   total_w_m2=total))
    assert result.powers_w_m2[blue] > 0.8 * total
    assert result.achieved_fractions[0] > 90.0


def test_infeasible_mix_reported_honestly(board):
    """Nothing on the board can put 95 percent of the power in one band; the
    solver must return the miss instead of failing or flattering."""
    fractions = np.array([1.0, 95.0, 1.0, 1.0, 1.0, 1.0])
    result = fit_duties(FitProblem(channels=board, target_fractions=fractions,
                                   total_w_m2=100.0))
    assert np.all(np.isfinite(result.ratios))
    assert result.achieved_class != "A"


def test_fractions_stay_consistent_while_caps_are_slack(board):
    """Below the first cap transition the optimum is scale-free, so band
    fractions barely move between levels."""
    f50 = fit_am15g(board, 50.0).achieved_fractions
    f150 = fit_am15g(board, 150.0).achieved_fractions
    np.testing.assert_allclose(f50, f150, atol=0.01)


def test_board_reproduces_its_own_output(board):
    rng = np.random.default_rng(21)
    duties0 = rng.uniform(0.2, 0.8, 8)
    spectrum = board.spectrum(duties0)
    fractions0 = bin_fractions(spectrum)
    result = fit_duties(FitProblem(channels=board, target_fractions=fractions0,
                                   total_w_m2=spectrum.total_w_m2))
    np.testing.assert_allclose(result.achieved_fractions, fractions0, atol=0.2)


def test_duty_bounds_clamp_and_resolve(board):
    unbounded = fit_am15g(board, 500.0)
    j = int(np.argmax(unbounded.duties))
    hi = unbounded.duties[j] * 0.5
    bounds = np.column_stack([np.zeros(8), np.ones(8)])
    bounds[j, 1] = hi
    result = fit_duties(FitProblem(channels=board,
                                   target_fractions=np.asarray(AM15G_BIN_FRACTIONS),
                                   total_w_m2=500.0, duty_bounds=bounds))
    assert result.duties[j] <= hi + 1.0 / 65535
    assert result.powers_w_m2.sum() == pytest.approx(500.0, rel=1e-6)
    assert board.irradiances(result.duties).sum() == pytest.approx(500.0, rel=2e-3)


def test_fit_input_validation(board):
    good = np.asarray(AM15G_BIN_FRACTIONS, dtype=float)
    with pytest.raises(ValueError):
        fit_duties(FitProblem(board, np.ones(5), 100.0))
    with pytest.raises(ValueError):
        fit_duties(FitProblem(board, good * 0.9, 100.0))  # sums to 90
    bad = good.copy()
    bad[0] = -bad[0]
    bad[1] += 2 * good[0]
    with pytest.raises(ValueError):
        fit_duties(FitProblem(board, bad, 100.0))
    with pytest.raises(ValueError):
        fit_duties(FitProblem(board, good, 100.0, weights=np.ones(3)))
    with pytest.raises(ValueError):
        fit_duties(FitProblem(board, good, 100.0,
                              duty_bounds=np.zeros((8, 3))))


def test_unachievable_totals(board):
    for level in (1000.0, 0.004, 0.0):
        with pytest.raises(Unachievable, match="span"):
            fit_am15g(board, level)


# -- preset cache -----------------------------------------------------------


def test_preset_anchor_totals(board):
    cache = PresetCache(board)
    for level in PRESET_LEVELS_W_M2:
        duties = cache.duties_for_level(level)
        assert board.irradiances(duties).sum() == pytest.approx(level, rel=0.01)


def test_preset_interpolation(board):
    cache = PresetCache(board)
    for level in (5.0, 200.0, 400.0, 620.0):
        duties = cache.duties_for_level(level)
        total = board.irradiances(duties).sum()
        assert total == pytest.approx(level, rel=0.005), level
        match = spectral_match(bin_fractions(board.spectrum(duties)))
        assert match.simulator_class == "A", level


def test_preset_span_check(board):
    cache = PresetCache(board)
    with pytest.raises(Unachievable, match="span"):
        cache.duties_for_level(0.001)
    with pytest.raises(Unachievable, match="span"):
        cache.duties_for_level(950.0)


def test_preset_cache_reuses_anchor_solutions(board):
    cache = PresetCache(board)
    first = cache.duties_for_level(500.0)
    second = cache.duties_for_level(500.0)
    np.testing.assert_array_equal(first, second)
