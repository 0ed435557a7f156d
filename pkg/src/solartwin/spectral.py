"""Spectral data model and solar-simulator classification metrics.

Implements the grading math used throughout the package: per-band spectral
match ratios against a reference distribution, spatial non-uniformity, and
short/long-term instability, each mapped onto the A/B/C class scheme, plus
photopic illuminance evaluation of a spectrum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

CLASS_A = "A"
CLASS_B = "B"
CLASS_C = "C"
CLASS_FAIL = "FAIL"
CLASSES = (CLASS_A, CLASS_B, CLASS_C)

# Wavelength band edges (nm) for spectral grading, restricted to 400-1100 nm.
# Bands are half-open [lo, hi) except the last, which includes 1100 nm.
BIN_EDGES_NM = (400.0, 500.0, 600.0, 700.0, 800.0, 900.0, 1100.0)
N_BINS = 6

# Reference irradiance fraction (percent) of each band for the AM1.5G
# distribution over 400-1100 nm.  Sums to 100.0.
AM15G_BIN_FRACTIONS = (18.4, 19.9, 18.4, 14.9, 12.5, 15.9)


@dataclass(frozen=True)
class ClassLimits:
    """Grading thresholds for one class letter.

    ``ratio_interval`` bounds every spectral-match ratio (inclusive); the
    percentage limits are inclusive upper bounds.
    """

    ratio_interval: tuple[float, float]
    nonuniformity_pct: float
    sti_pct: float
    lti_pct: float


CLASS_LIMITS: dict[str, ClassLimits] = {
    CLASS_A: ClassLimits((0.75, 1.25), 2.0, 0.5, 2.0),
    CLASS_B: ClassLimits((0.6, 1.4), 5.0, 2.0, 5.0),
    CLASS_C: ClassLimits((0.4, 2.0), 10.0, 10.0, 10.0),
}

# CIE photopic luminous efficiency, 380-780 nm in 5 nm steps.  Values outside
# the table are treated as zero; between samples it is linearly interpolated.
_VLAMBDA_START_NM = 380.0
_VLAMBDA_STEP_NM = 5.0
_VLAMBDA = np.array([
    0.000039, 0.000064, 0.000120, 0.000217, 0.000396, 0.000640,
    0.001210, 0.002180, 0.004000, 0.007300, 0.011600, 0.016840,
    0.023000, 0.029800, 0.038000, 0.048000, 0.060000, 0.073900,
    0.090980, 0.112600, 0.139020, 0.169300, 0.208020, 0.258600,
    0.323000, 0.407300, 0.503000, 0.608200, 0.710000, 0.793200,
    0.862000, 0.914850, 0.954000, 0.980300, 0.994950, 1.000000,
    0.995000, 0.978600, 0.952000, 0.915400, 0.870000, 0.816300,
    0.757000, 0.694900, 0.631000, 0.566800, 0.503000, 0.441200,
    0.381000, 0.321000, 0.265000, 0.217000, 0.175000, 0.138200,
    0.107000, 0.081600, 0.061000, 0.044580, 0.032000, 0.023200,
    0.017000, 0.011920, 0.008210, 0.005723, 0.004102, 0.002929,
    0.002091, 0.001484, 0.001047, 0.000740, 0.000520, 0.000361,
    0.000249, 0.000172, 0.000120, 0.000085, 0.000060, 0.000042,
    0.000030, 0.000021, 0.000015,
])
_VLAMBDA_NM = _VLAMBDA_START_NM + _VLAMBDA_STEP_NM * np.arange(_VLAMBDA.size)

MAX_LUMINOUS_EFFICACY_LM_W = 683.0


class DomainTooNarrow(ValueError):
    """Spectrum does not cover the full 400-1100 nm grading window."""


class EmptyOrNonPositive(ValueError):
    """Sample collection is empty or contains non-positive values."""


class TooFewSamples(ValueError):
    """Instability requires at least two samples."""


@dataclass(frozen=True)
class Spectrum:
    """Sampled spectral irradiance: wavelengths in nm, values in W/m^2/nm.

    Wavelengths must be strictly increasing; values must be non-negative.
    """

    wavelengths_nm: NDArray[np.floating]
    values_w_m2_nm: NDArray[np.floating]

    def __post_init__(self) -> None:
        wl = np.asarray(self.wavelengths_nm, dtype=float)
        vals = np.asarray(self.values_w_m2_nm, dtype=float)
        if wl.ndim != 1 or vals.ndim != 1 or wl.size != vals.size:
            raise ValueError("wavelengths and values must be 1-D and equal length")
        if wl.size < 2:
            raise ValueError("spectrum needs at least two samples")
        if not np.all(np.diff(wl) > 0):
            raise ValueError("wavelengths must be strictly increasing")
        if not np.all(np.isfinite(wl)) or not np.all(np.isfinite(vals)):
            raise ValueError("spectrum contains non-finite entries")
        if np.any(vals < 0):
            raise ValueError("spectral irradiance must be non-negative")
        object.__setattr__(self, "wavelengths_nm", wl)
        object.__setattr__(self, "values_w_m2_nm", vals)

    @property
    def total_w_m2(self) -> float:
        """Broadband irradiance: trapezoidal integral over the full grid."""
        return float(np.trapezoid(self.values_w_m2_nm, self.wavelengths_nm))

    def value_at(self, wavelength_nm: float) -> float:
        """Linearly interpolated spectral irradiance at one wavelength."""
        return float(np.interp(wavelength_nm, self.wavelengths_nm,
                               self.values_w_m2_nm))


def integrate_between(spectrum: Spectrum, lo_nm: float, hi_nm: float) -> float:
    """Trapezoidal integral of the spectrum over [lo_nm, hi_nm].

    Interpolated samples are inserted exactly at the interval endpoints so
    adjacent intervals partition the integral without overlap or gap.
    """
    if hi_nm <= lo_nm:
        raise ValueError("integration interval must have positive width")
    wl = spectrum.wavelengths_nm
    vals = spectrum.values_w_m2_nm
    lo = max(lo_nm, float(wl[0]))
    hi = min(hi_nm, float(wl[-1]))
    if hi <= lo:
        return 0.0
    inner = (wl > lo) & (wl < hi)
    grid = np.concatenate(([lo], wl[inner], [hi]))
    vgrid = np.interp(grid, wl, vals)
    return float(np.trapezoid(vgrid, grid))


def bin_irradiances(spectrum: Spectrum) -> NDArray[np.floating]:
    """Integrated irradiance (W/m^2) in each of the six grading bands."""
    wl = spectrum.wavelengths_nm
    if wl[0] > BIN_EDGES_NM[0] or wl[-1] < BIN_EDGES_NM[-1]:
        raise DomainTooNarrow(
            f"spectrum covers [{wl[0]:g}, {wl[-1]:g}] nm; "
            f"grading needs [{BIN_EDGES_NM[0]:g}, {BIN_EDGES_NM[-1]:g}] nm")
    return np.array([
        integrate_between(spectrum, BIN_EDGES_NM[i], BIN_EDGES_NM[i + 1])
        for i in range(N_BINS)
    ])


def bin_fractions(spectrum: Spectrum) -> NDArray[np.floating]:
    """Percent of the 400-1100 nm irradiance falling in each grading band."""
    per_bin = bin_irradiances(spectrum)
    total = per_bin.sum()
    if total <= 0:
        raise EmptyOrNonPositive("spectrum carries no power in 400-1100 nm")
    return per_bin / total * 100.0


def _class_for_ratios(ratios: NDArray[np.floating]) -> str:
    for letter in CLASSES:
        lo, hi = CLASS_LIMITS[letter].ratio_interval
        if np.all((ratios >= lo) & (ratios <= hi)):
            return letter
    return CLASS_FAIL


def _class_for_percent(percent: float, which: str) -> str:
    for letter in CLASSES:
        limits = CLASS_LIMITS[letter]
        bound = {"nonuniformity": limits.nonuniformity_pct,
                 "sti": limits.sti_pct,
                 "lti": limits.lti_pct}[which]
        if percent <= bound:
            return letter
    return CLASS_FAIL


@dataclass(frozen=True)
class SpectralMatch:
    """Per-band measured/reference fraction ratios and the resulting class."""

    ratios: NDArray[np.floating]
    simulator_class: str

    @property
    def worst_ratio(self) -> float:
        """The ratio farthest from 1.0."""
        idx = int(np.argmax(np.abs(self.ratios - 1.0)))
        return float(self.ratios[idx])


def spectral_match(measured_fractions: NDArray[np.floating],
                   reference_fractions: NDArray[np.floating] | None = None,
                   ) -> SpectralMatch:
    """Grade measured band fractions against reference band fractions.

    Both arguments are six-element percent vectors; the reference defaults
    to the AM1.5G distribution.  Ratios are measured/reference per band and
    the class is the tightest ratio interval containing all six (endpoints
    inclusive).
    """
    measured = np.asarray(measured_fractions, dtype=float)
    if reference_fractions is None:
        reference = np.asarray(AM15G_BIN_FRACTIONS, dtype=float)
    else:
        reference = np.asarray(reference_fractions, dtype=float)
    if measured.shape != (N_BINS,) or reference.shape != (N_BINS,):
        raise ValueError(f"expected {N_BINS} band fractions")
    if np.any(measured < 0) or np.any(reference <= 0):
        raise EmptyOrNonPositive("fractions must be positive")
    ratios = measured / reference
    return SpectralMatch(ratios=ratios, simulator_class=_class_for_ratios(ratios))


def nonuniformity(values: NDArray[np.floating]) -> float:
    """Spatial non-uniformity percent: (max-min)/(max+min) * 100."""
    vals = np.asarray(values, dtype=float).ravel()
    if vals.size == 0 or np.any(vals <= 0) or not np.all(np.isfinite(vals)):
        raise EmptyOrNonPositive("need a non-empty set of positive samples")
    vmax = float(vals.max())
    vmin = float(vals.min())
    return (vmax - vmin) / (vmax + vmin) * 100.0


def nonuniformity_class(percent: float) -> str:
    return _class_for_percent(percent, "nonuniformity")


def instability(samples: NDArray[np.floating], kind: str) -> tuple[float, str]:
    """Temporal instability percent of a sample series, and its class.

    ``kind`` selects the grading column: ``"sti"`` (short-term, within one
    data-acquisition window) or ``"lti"`` (long-term, across the exposure).
    The statistic is (max-min)/(max+min) * 100 over the series.
    """
    if kind not in ("sti", "lti"):
        raise ValueError("kind must be 'sti' or 'lti'")
    vals = np.asarray(samples, dtype=float).ravel()
    if vals.size < 2:
        raise TooFewSamples("instability needs at least two samples")
    if np.any(vals <= 0) or not np.all(np.isfinite(vals)):
        raise EmptyOrNonPositive("samples must be positive and finite")
    vmax = float(vals.max())
    vmin = float(vals.min())
    percent = (vmax - vmin) / (vmax + vmin) * 100.0
    return percent, _class_for_percent(percent, kind)


def lux_from_spectrum(spectrum: Spectrum) -> float:
    """Photopic illuminance (lx) of a spectral irradiance distribution.

    683 lm/W times the integral of the spectrum weighted by the photopic
    luminous-efficiency curve (linearly interpolated, zero outside its
    380-780 nm table).
    """
    wl = spectrum.wavelengths_nm
    weights = np.interp(wl, _VLAMBDA_NM, _VLAMBDA, left=0.0, right=0.0)
    return MAX_LUMINOUS_EFFICACY_LM_W * float(
        np.trapezoid(spectrum.values_w_m2_nm * weights, wl))


@dataclass(frozen=True)
class ClassificationResult:
    """Combined grade of one evaluation run."""

    spectral_class: str
    uniformity_class: str
    sti_class: str
    lti_class: str
    worst_ratio: float
    metrics: dict

    @property
    def temporal_class(self) -> str:
        """Worse of the STI and LTI grades."""
        order = {CLASS_A: 0, CLASS_B: 1, CLASS_C: 2, CLASS_FAIL: 3}
        return max(self.sti_class, self.lti_class, key=lambda c: order[c])

    @property
    def verdict(self) -> str:
        """Three-letter grade: spectral, uniformity, temporal."""
        def letter(c: str) -> str:
            return c if c in CLASSES else "F"
        return (letter(self.spectral_class) + letter(self.uniformity_class)
                + letter(self.temporal_class))


def classify_overall(matches: list[SpectralMatch],
                     nonuniformity_pct: float,
                     sti_pct: float,
                     lti_pct: float) -> ClassificationResult:
    """Combine per-level spectral grades with spatial and temporal grades.

    The spectral letter is the worst over all supplied matches; the verdict
    string concatenates spectral, uniformity and temporal letters, the
    temporal letter being the worse of STI and LTI.
    """
    if not matches:
        raise ValueError("need at least one spectral match")
    order = {CLASS_A: 0, CLASS_B: 1, CLASS_C: 2, CLASS_FAIL: 3}
    spectral = max((m.simulator_class for m in matches), key=lambda c: order[c])
    worst = max((m.worst_ratio for m in matches), key=lambda r: abs(r - 1.0))
    sti_class = _class_for_percent(sti_pct, "sti")
    lti_class = _class_for_percent(lti_pct, "lti")
    return ClassificationResult(
        spectral_class=spectral,
        uniformity_class=nonuniformity_class(nonuniformity_pct),
        sti_class=sti_class,
        lti_class=lti_class,
        worst_ratio=worst,
        metrics={
            "nonuniformity_pct": nonuniformity_pct,
            "sti_pct": sti_pct,
            "lti_pct": lti_pct,
            "ratios_per_level": [m.ratios.tolist() for m in matches],
        },
    )


def load_spectrum_csv(path) -> Spectrum:
    """Read a two-column spectrum CSV: wavelength_nm,irradiance_w_m2_nm."""
    import csv

    wavelengths: list[float] = []
    values: list[float] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != [
                "wavelength_nm", "irradiance_w_m2_nm"]:
            raise ValueError(
                "expected header 'wavelength_nm,irradiance_w_m2_nm'")
        for row in reader:
            if not row:
                continue
            wavelengths.append(float(row[0]))
            values.append(float(row[1]))
    return Spectrum(np.array(wavelengths), np.array(values))


def save_spectrum_csv(path, spectrum: Spectrum) -> None:
    """Write a spectrum in the two-column CSV interchange format."""
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write("wavelength_nm,irradiance_w_m2_nm\n")
        for wl, val in zip(spectrum.wavelengths_nm, spectrum.values_w_m2_nm):
            fh.write(f"{float(wl):g},{float(val)!r}\n")


def reference_fractions_from_file(path, tolerance_pct: float = 0.3,
                                  ) -> NDArray[np.floating]:
    """Band fractions of a full-resolution reference spectrum file.

    The binned result is checked against the built-in AM1.5G fractions and a
    warning is emitted when any band deviates by more than ``tolerance_pct``
    absolute percentage points.
    """
    import warnings

    fractions = bin_fractions(load_spectrum_csv(path))
    deviation = np.abs(fractions - np.asarray(AM15G_BIN_FRACTIONS))
    if np.any(deviation > tolerance_pct):
        warnings.warn(
            "reference spectrum band fractions deviate from the built-in "
            f"AM1.5G values by up to {deviation.max():.2f} points",
            stacklevel=2)
    return fractions
