"""Grading core: band integrals, ratio/percent tables, metric properties."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from solartwin.spectral import (
    AM15G_BIN_FRACTIONS,
    BIN_EDGES_NM,
    CLASS_LIMITS,
    DomainTooNarrow,
    EmptyOrNonPositive,
    N_BINS,
    Spectrum,
    TooFewSamples,
    bin_fractions,
    bin_irradiances,
    classify_overall,
    instability,
    load_spectrum_csv,
    lux_from_spectrum,
    nonuniformity,
    nonuniformity_class,
    save_spectrum_csv,
    spectral_match,
)

# Band fractions measured on the physical bench at its six preset output
# levels (percent per band, 400-500 through 900-1100 nm).  Published
# characterization data, used here as cross-validation for the grader:
# every level must come out class A.
BENCH_FRACTIONS_PCT = {
    1.0: (19.2, 19.9, 17.6, 14.7, 10.6, 17.9),
    10.0: (18.6, 20.0, 17.6, 14.1, 10.8, 18.7),
    50.0: (18.3, 19.3, 17.0, 14.4, 11.7, 19.1),
    300.0: (18.5, 19.8, 17.3, 14.9, 11.2, 18.2),
    500.0: (18.6, 19.9, 17.3, 14.9, 11.2, 18.0),
    750.0: (18.5, 19.8, 17.2, 14.9, 11.4, 18.2),
}

# measured/reference ratios of the 1 W/m^2 row, frozen from a hand
# calculation independent of spectral_match.
LEVEL1_RATIOS = (1.043478, 1.000000, 0.956522, 0.986577, 0.848000, 1.125786)


def flat_spectrum(lo=350.0, hi=1150.0, value=1.0) -> Spectrum:
    wl = np.arange(lo, hi + 1.0)
    return Spectrum(wl, np.full(wl.size, value))


# -- reference tables -------------------------------------------------------


def test_reference_fraction_table():
    assert AM15G_BIN_FRACTIONS == (18.4, 19.9, 18.4, 14.9, 12.5, 15.9)
    assert sum(AM15G_BIN_FRACTIONS) == pytest.approx(100.0, abs=1e-9)
    assert BIN_EDGES_NM == (400.0, 500.0, 600.0, 700.0, 800.0, 900.0, 1100.0)


def test_class_limit_table():
    assert CLASS_LIMITS["A"].ratio_interval == (0.75, 1.25)
    assert CLASS_LIMITS["A"].nonuniformity_pct == 2.0
    assert CLASS_LIMITS["A"].sti_pct == 0.5
    assert CLASS_LIMITS["A"].lti_pct == 2.0
    assert CLASS_LIMITS["B"].ratio_interval == (0.6, 1.4)
    assert CLASS_LIMITS["B"].nonuniformity_pct == 5.0
    assert CLASS_LIMITS["B"].sti_pct == 2.0
    assert CLASS_LIMITS["B"].lti_pct == 5.0
    assert CLASS_LIMITS["C"].ratio_interval == (0.4, 2.0)
    assert CLASS_LIMITS["C"].nonuniformity_pct == 10.0
    assert CLASS_LIMITS["C"].sti_pct == 10.0
    assert CLASS_LIMITS["C"].lti_pct == 10.0


# -- band integration -------------------------------------------------------


def test_flat_spectrum_band_fractions():
    """Uniform spectral density: five 100 nm bands plus one 200 nm band."""
    fractions = bin_fractions(flat_spectrum())
    expected = np.array([100.0, 100, 100, 100, 100, 200]) / 7.0
    np.testing.assert_allclose(fractions, expected, rtol=1e-12)
    assert fractions.sum() == pytest.approx(100.0, abs=1e-9)


def test_band_confined_source():
    wl = np.arange(350.0, 1151.0)
    vals = ((wl >= 510) & (wl <= 590)).astype(float)
    fractions = bin_fractions(Spectrum(wl, vals))
    assert fractions[1] == pytest.approx(100.0, abs=1e-12)
    assert np.all(fractions[[0, 2, 3, 4, 5]] == 0.0)


def test_band_integrals_partition_total():
    rng = np.random.default_rng(7)
    wl = np.arange(400.0, 1101.0)
    vals = rng.uniform(0.0, 2.0, wl.size)
    spec = Spectrum(wl, vals)
    per_bin = bin_irradiances(spec)
    assert per_bin.sum() == pytest.approx(spec.total_w_m2, rel=1e-12)


def test_narrow_domain_rejected():
    with pytest.raises(DomainTooNarrow):
        bin_irradiances(flat_spectrum(lo=420.0))
    with pytest.raises(DomainTooNarrow):
        bin_irradiances(flat_spectrum(hi=1050.0))


def test_spectrum_validation():
    with pytest.raises(ValueError):
        Spectrum(np.array([500.0]), np.array([1.0]))
    with pytest.raises(ValueError):
        Spectrum(np.array([500.0, 500.0]), np.array([1.0, 1.0]))
    with pytest.raises(ValueError):
        Spectrum(np.array([500.0, 600.0]), np.array([1.0, -0.1]))
    with pytest.raises(ValueError):
        Spectrum(np.array([500.0, 600.0]), np.array([1.0, np.nan]))


# -- spectral match grading -------------------------------------------------


def test_bench_level1_ratios_match_frozen_oracle():
    match = spectral_match(np.array(BENCH_FRACTIONS_PCT[1.0]))
    np.testing.assert_allclose(match.ratios, LEVEL1_RATIOS, atol=1e-6)
    assert match.simulator_class == "A"


def test_bench_all_levels_grade_class_a():
    """Every characterized output level grades A; the worst band ratio over
    the whole table is the 900-1100 nm band at 50 W/m^2."""
    worst = 1.0
    for fractions in BENCH_FRACTIONS_PCT.values():
        match = spectral_match(np.array(fractions))
        assert match.simulator_class == "A"
        if abs(match.worst_ratio - 1.0) > abs(worst - 1.0):
            worst = match.worst_ratio
    assert worst == pytest.approx(19.1 / 15.9, abs=1e-4)
    assert worst == pytest.approx(1.2013, abs=1e-4)


@given(st.lists(st.floats(0.5, 60.0), min_size=6, max_size=6))
def test_self_match_is_exactly_unity(fractions):
    match = spectral_match(np.array(fractions), np.array(fractions))
    assert np.all(match.ratios == 1.0)
    assert match.simulator_class == "A"


def test_single_band_excess_degrades_class():
    reference = np.asarray(AM15G_BIN_FRACTIONS)
    for factor, letter in ((1.30, "B"), (1.55, "C"), (2.5, "FAIL")):
        measured = reference.copy()
        measured[2] *= factor
        assert spectral_match(measured, reference).simulator_class == letter


def test_ratio_interval_endpoints_inclusive():
    # powers of two keep the products exact, so the ratios sit exactly on
    # the class limits
    reference = np.full(N_BINS, 16.0)
    cases = (
        (1.25, "A"), (0.75, "A"),
        (1.4, "B"), (0.6, "B"),
        (2.0, "C"), (0.4, "C"),
        (2.000001, "FAIL"), (0.399999, "FAIL"),
    )
    for factor, letter in cases:
        match = spectral_match(reference * factor, reference)
        assert match.simulator_class == letter, factor


def test_worst_ratio_picks_farthest_from_unity():
    reference = np.full(N_BINS, 16.0)
    measured = reference.copy()
    measured[1] *= 1.2
    measured[4] *= 0.78  # 0.22 below vs 0.2 above
    assert spectral_match(measured, reference).worst_ratio == pytest.approx(0.78)


def test_spectral_match_input_validation():
    with pytest.raises(ValueError):
        spectral_match(np.ones(5))
    with pytest.raises(EmptyOrNonPositive):
        spectral_match(-np.ones(6))
    with pytest.raises(EmptyOrNonPositive):
        spectral_match(np.ones(6), np.zeros(6))


# -- scalar metrics ---------------------------------------------------------


def test_nonuniformity_values():
    assert nonuniformity(np.full(64, 512.3)) == 0.0
    assert nonuniformity(np.array([98.0, 102.0])) == pytest.approx(2.0, abs=1e-12)
    assert nonuniformity_class(2.0) == "A"  # boundary inclusive
    assert nonuniformity_class(2.0000001) == "B"
    assert nonuniformity_class(5.0) == "B"
    assert nonuniformity_class(10.0) == "C"
    assert nonuniformity_class(10.1) == "FAIL"


def test_nonuniformity_rejects_degenerate_input():
    for bad in (np.array([]), np.array([0.0, 1.0]),
                np.array([-1.0, 2.0]), np.array([1.0, np.inf])):
        with pytest.raises(EmptyOrNonPositive):
            nonuniformity(bad)


def test_instability_metric_and_grading():
    percent, letter = instability(np.full(100, 750.0), "sti")
    assert percent == 0.0 and letter == "A"
    # same series, different grading columns
    series = np.array([497.0, 503.0, 500.0])
    sti_pct, sti_class = instability(series, "sti")
    lti_pct, lti_class = instability(series, "lti")
    assert sti_pct == pytest.approx(0.6, abs=1e-12)
    assert lti_pct == sti_pct
    assert sti_class == "B" and lti_class == "A"


def test_instability_validation():
    with pytest.raises(TooFewSamples):
        instability(np.array([1.0]), "sti")
    with pytest.raises(ValueError):
        instability(np.array([1.0, 2.0]), "mti")
    with pytest.raises(EmptyOrNonPositive):
        instability(np.array([0.0, 1.0]), "lti")


@given(st.lists(st.floats(1.0, 1e6), min_size=2, max_size=40),
       st.integers(0, 2**32 - 1))
def test_metrics_are_permutation_invariant(values, seed):
    arr = np.array(values)
    shuffled = np.random.default_rng(seed).permutation(arr)
    assert nonuniformity(shuffled) == nonuniformity(arr)
    assert instability(shuffled, "lti") == instability(arr, "lti")


# -- photopic weighting -----------------------------------------------------


def test_lux_of_line_at_photopic_peak():
    """1 W/m^2 concentrated at 555 nm is 683 lx by definition."""
    wl = np.arange(380.0, 781.0)
    vals = np.zeros(wl.size)
    vals[wl == 555.0] = 1.0  # unit trapezoidal area on a 1 nm grid
    assert lux_from_spectrum(Spectrum(wl, vals)) == pytest.approx(683.0, rel=1e-12)


def test_lux_outside_photopic_range_is_zero():
    wl = np.arange(800.0, 1101.0)
    vals = np.full(wl.size, 3.0)
    assert lux_from_spectrum(Spectrum(wl, vals)) == 0.0
    assert lux_from_spectrum(flat_spectrum(value=0.0)) == 0.0


# -- overall verdict --------------------------------------------------------


def _unity_match():
    return spectral_match(np.asarray(AM15G_BIN_FRACTIONS))


def test_overall_verdict_all_a():
    result = classify_overall([_unity_match()], 1.0, 0.4, 1.5)
    assert result.verdict == "AAA"
    assert result.temporal_class == "A"
    assert result.worst_ratio == 1.0


def test_temporal_letter_is_worse_of_sti_lti():
    assert classify_overall([_unity_match()], 1.0, 0.6, 1.5).verdict == "AAB"
    assert classify_overall([_unity_match()], 1.0, 0.4, 4.0).verdict == "AAB"
    assert classify_overall([_unity_match()], 1.0, 2.5, 11.0).verdict == "AAF"


def test_spectral_letter_is_worst_over_levels():
    reference = np.full(N_BINS, 16.0)
    levels = [_unity_match(), spectral_match(reference * 1.3, reference)]
    result = classify_overall(levels, 1.0, 0.4, 1.5)
    assert result.verdict == "BAA"
    assert result.worst_ratio == pytest.approx(1.3)


def test_overall_requires_a_match():
    with pytest.raises(ValueError):
        classify_overall([], 1.0, 0.4, 1.5)


# -- invariances over random spectra ----------------------------------------


@settings(max_examples=60)
@given(st.lists(st.floats(0.0, 10.0), min_size=78, max_size=78),
       st.floats(1e-3, 1e3))
def test_fraction_scale_invariance_and_sum(values, scale):
    wl = 380.0 + 10.0 * np.arange(78)
    vals = np.array(values)
    vals[30] += 0.1  # guarantees in-band power
    base = bin_fractions(Spectrum(wl, vals))
    scaled = bin_fractions(Spectrum(wl, vals * scale))
    np.testing.assert_allclose(scaled, base, rtol=1e-9)
    assert base.sum() == pytest.approx(100.0, abs=1e-9)


# -- CSV persistence --------------------------------------------------------


def test_spectrum_csv_round_trip(tmp_path):
    wl = np.arange(350.0, 1151.0)
    rng = np.random.default_rng(3)
    spec = Spectrum(wl, rng.uniform(0.0, 1.5, wl.size))
    path = tmp_path / "spec.csv"
    save_spectrum_csv(path, spec)
    loaded = load_spectrum_csv(path)
    np.testing.assert_array_equal(loaded.wavelengths_nm, spec.wavelengths_nm)
    np.testing.assert_array_equal(loaded.values_w_m2_nm, spec.values_w_m2_nm)


def test_spectrum_csv_header_is_checked(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("wavelength,irradiance\n500,1.0\n600,1.0\n")
    with pytest.raises(ValueError):
        load_spectrum_csv(path)
