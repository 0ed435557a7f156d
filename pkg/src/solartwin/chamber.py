"""Enclosure physics and instrumentation models.

The chamber couples the LED board to the device under test: a spatial
irradiance field over the test plane (direct Lambertian term plus one
diffuse bounce off each side wall, with the door darker than the walls), a
multi-channel spectrometer, two illuminance sensors with different ranges, a
temperature-regulated photovoltaic cell, a slow output-drift model, and a
virtual clock so experiments spanning many hours run deterministically in
milliseconds of wall time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .lightboard import WAVELENGTH_GRID_NM
from .spectral import Spectrum, lux_from_spectrum

_FWHM_TO_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))


class TargetOutOfRange(ValueError):
    """Requested regulation target outside the supported span."""


@dataclass(frozen=True)
class ChamberGeometry:
    """Interior geometry and surface optics of the light-tight enclosure.

    The coordinate origin sits at the centre of the test plane; x grows to
    the right, y grows toward the rear wall.  The front wall is the hinged
    door, so ``door_reflectance`` supersedes the front entry of
    ``wall_reflectance`` whenever it is set.
    """

    width_mm: float = 350.0
    depth_mm: float = 350.0
    height_mm: float = 400.0
    # Emitters sit on a square ceiling grid with pitch compressed toward
    # the periphery (edge_bias < 1) to counter the corner falloff.
    emitter_grid_n: int = 12
    emitter_extent_mm: float = 345.0
    emitter_edge_bias: float = 0.7
    dut_plane_z_mm: float = 30.0
    # Side-wall diffuse reflectances, ordered (front, rear, left, right).
    wall_reflectance: tuple[float, float, float, float] = (0.95, 0.95, 0.95, 0.95)
    door_reflectance: float | None = 0.90
    # Square region scanned during uniformity evaluation, centred on origin.
    test_area_mm: float = 165.0
    sensor_pos_mm: tuple[float, float] = (130.0, 0.0)
    uniform: bool = False

    def __post_init__(self) -> None:
        if min(self.width_mm, self.depth_mm, self.height_mm) <= 0:
            raise ValueError("chamber dimensions must be positive")
        if not (0 < self.dut_plane_z_mm < self.height_mm):
            raise ValueError("test plane must sit inside the chamber")
        if self.emitter_grid_n < 2:
            raise ValueError("need at least a 2x2 emitter grid")
        if self.emitter_extent_mm >= min(self.width_mm, self.depth_mm):
            raise ValueError("emitter grid must fit inside the chamber")
        if not (0.0 < self.emitter_edge_bias <= 1.0):
            raise ValueError("emitter edge bias must be in (0, 1]")
        refl = self.wall_reflectance
        if len(refl) != 4 or any(not (0.0 <= r <= 1.0) for r in refl):
            raise ValueError("wall reflectances must be four values in [0, 1]")
        if self.door_reflectance is not None and not (
                0.0 <= self.door_reflectance <= 1.0):
            raise ValueError("door reflectance must be in [0, 1]")
        if not (0 < self.test_area_mm <= min(self.width_mm, self.depth_mm)):
            raise ValueError("test area must fit inside the chamber")

    @property
    def effective_reflectances(self) -> tuple[float, float, float, float]:
        """(front, rear, left, right) with the door covering the front."""
        front = (self.door_reflectance
                 if self.door_reflectance is not None
                 else self.wall_reflectance[0])
        return (front,) + tuple(self.wall_reflectance[1:])


class IrradianceField:
    """Normalized spatial gain over the test plane for a geometry.

    The gain at a point is the direct Lambertian sum over the emitter grid
    plus one mirrored bounce per side wall weighted by that wall's
    reflectance, normalized so the mean over the standard 8x8 scan grid is
    exactly 1.  Channel drive only scales the field, so the gain is computed
    once per geometry.
    """

    REFERENCE_GRID_N = 8

    def __init__(self, geometry: ChamberGeometry):
        self.geometry = geometry
        self._norm = 1.0
        self._norm = 1.0 / float(np.mean(self.gain_at(
            *self.scan_points(self.REFERENCE_GRID_N))))

    def scan_points(self, grid_n: int) -> tuple[NDArray, NDArray]:
        """Cell-centre scan coordinates of an n x n grid over the test area."""
        if grid_n < 1:
            raise ValueError("grid_n must be positive")
        half = self.geometry.test_area_mm / 2.0
        step = self.geometry.test_area_mm / grid_n
        centers = -half + step * (np.arange(grid_n) + 0.5)
        xx, yy = np.meshgrid(centers, centers, indexing="xy")
        return xx.ravel(), yy.ravel()

    def _emitters(self) -> tuple[NDArray, NDArray]:
        n = self.geometry.emitter_grid_n
        half = self.geometry.emitter_extent_mm / 2.0
        u = np.linspace(-1.0, 1.0, n)
        # Power-law stretch packs rows tighter near the rim.
        coords = half * np.sign(u) * np.abs(u) ** self.geometry.emitter_edge_bias
        ex, ey = np.meshgrid(coords, coords, indexing="xy")
        return ex.ravel(), ey.ravel()

    def _lambertian(self, px, py, ex, ey) -> NDArray:
        # Inverse-square falloff with the Lambertian cosine, cos(theta)/r^2
        # = h/r^3. Constant factors are absorbed by the normalization.
        h = self.geometry.height_mm - self.geometry.dut_plane_z_mm
        dx = px[:, None] - ex[None, :]
        dy = py[:, None] - ey[None, :]
        r2 = dx * dx + dy * dy + h * h
        return (h / (r2 * np.sqrt(r2))).sum(axis=1)

    def gain_at(self, x_mm, y_mm) -> NDArray:
        """Relative irradiance gain at test-plane coordinates (vectorized)."""
        px = np.atleast_1d(np.asarray(x_mm, dtype=float))
        py = np.atleast_1d(np.asarray(y_mm, dtype=float))
        if self.geometry.uniform:
            return np.ones_like(px) * self._norm
        ex, ey = self._emitters()
        total = self._lambertian(px, py, ex, ey)
        w = self.geometry.width_mm
        d = self.geometry.depth_mm
        front, rear, left, right = self.geometry.effective_reflectances
        # One bounce per side wall, modelled with mirror-image emitters.
        total += front * self._lambertian(px, py, ex, -d - ey)
        total += rear * self._lambertian(px, py, ex, d - ey)
        total += left * self._lambertian(px, py, -w - ex, ey)
        total += right * self._lambertian(px, py, w - ex, ey)
        return total * self._norm


@dataclass(frozen=True)
class SpectrometerModel:
    """Multi-band spectral sensor: Gaussian passbands on fixed centres.

    Each reading estimates the local spectral irradiance density
    (W/m^2/nm) at its centre wavelength; readings carry independent
    multiplicative Gaussian noise.
    """

    center_nm: tuple[float, ...] = (
        410.0, 435.0, 460.0, 485.0, 510.0, 535.0,
        560.0, 585.0, 610.0, 645.0, 680.0, 705.0,
        730.0, 760.0, 810.0, 860.0, 900.0, 940.0,
    )
    fwhm_nm: float = 20.0
    noise_sigma: float = 5.0e-4

    def kernel_matrix(self) -> NDArray[np.floating]:
        """Unit-area Gaussian passband per channel on the board grid."""
        lam = WAVELENGTH_GRID_NM
        sigma = self.fwhm_nm / _FWHM_TO_SIGMA
        rows = []
        for c in self.center_nm:
            k = np.exp(-0.5 * ((lam - c) / sigma) ** 2)
            rows.append(k / np.trapezoid(k, lam))
        return np.vstack(rows)


# SCPI-style out-of-range sentinel returned by saturated sensors.
OVERRANGE = 9.9e37

LUX_FLAG_OK = "ok"
LUX_FLAG_SATURATED = "saturated"
LUX_FLAG_BELOW_FLOOR = "below_floor"


@dataclass(frozen=True)
class LuxSensorModel:
    """Single-range illuminance sensor with hard range limits."""

    floor_lx: float
    ceiling_lx: float
    noise_sigma: float = 2.0e-3


@dataclass(frozen=True)
class LuxReading:
    value_lx: float
    flag: str

    @property
    def wire_value(self) -> float:
        """Number reported on the instrument bus for this reading."""
        if self.flag == LUX_FLAG_SATURATED:
            return OVERRANGE
        if self.flag == LUX_FLAG_BELOW_FLOOR:
            return 0.0
        return self.value_lx


def read_lux(sensor: LuxSensorModel, true_lx: float,
             rng: np.random.Generator) -> LuxReading:
    """One illuminance measurement with noise and range classification."""
    noisy = true_lx * (1.0 + sensor.noise_sigma * rng.standard_normal())
    if noisy > sensor.ceiling_lx:
        return LuxReading(sensor.ceiling_lx, LUX_FLAG_SATURATED)
    if noisy < sensor.floor_lx:
        return LuxReading(max(noisy, 0.0), LUX_FLAG_BELOW_FLOOR)
    return LuxReading(noisy, LUX_FLAG_OK)


@dataclass(frozen=True)
class DutModel:
    """Photovoltaic cell under test on the temperature-regulated carrier."""

    area_m2: float = 1.54e-4
    responsivity_flat_a_w: float = 0.45
    flat_band_nm: tuple[float, float] = (400.0, 1100.0)
    taper_to_zero_nm: tuple[float, float] = (300.0, 1150.0)
    isc_temp_coeff_per_k: float = 5.0e-4
    meas_noise_sigma: float = 1.0e-4

    def responsivity(self) -> NDArray[np.floating]:
        """Spectral responsivity (A/W) on the board wavelength grid."""
        lam = WAVELENGTH_GRID_NM
        lo_zero, hi_zero = self.taper_to_zero_nm
        lo_flat, hi_flat = self.flat_band_nm
        resp = np.interp(lam, [lo_zero, lo_flat, hi_flat, hi_zero],
                         [0.0, self.responsivity_flat_a_w,
                          self.responsivity_flat_a_w, 0.0],
                         left=0.0, right=0.0)
        return resp

    def isc_a(self, spectrum_values: NDArray[np.floating],
              temp_c: float) -> float:
        """Short-circuit current for a spectral irradiance on the grid."""
        photocurrent = np.trapezoid(spectrum_values * self.responsivity(),
                                WAVELENGTH_GRID_NM)
        temp_factor = 1.0 + self.isc_temp_coeff_per_k * (temp_c - 25.0)
        return float(self.area_m2 * photocurrent * temp_factor)


@dataclass
class PeltierModel:
    """First-order thermal plant pulling the cell toward its setpoint."""

    tau_s: float = 30.0
    min_c: float = 0.0
    max_c: float = 80.0
    setpoint_c: float = 25.0
    temp_c: float = 25.0
    sensor_noise_k: float = 0.01

    def set_target(self, target_c: float) -> None:
        if not (self.min_c <= target_c <= self.max_c):
            raise TargetOutOfRange(
                f"setpoint {target_c} outside [{self.min_c}, {self.max_c}] degC")
        self.setpoint_c = target_c

    def advance(self, dt_s: float) -> None:
        decay = math.exp(-dt_s / self.tau_s)
        self.temp_c = self.setpoint_c + (self.temp_c - self.setpoint_c) * decay


@dataclass(frozen=True)
class DriftParams:
    """Slow multiplicative output-drift model of the whole board.

    Warm-up recovery follows 1 - a*exp(-t/tau); on top of that the output
    performs a geometric random walk and a linear aging decline.  The
    defaults are twin-tuning constants chosen to reproduce the bench's
    observed open- and closed-loop stability figures.
    """

    warmup_amplitude: float = 0.02
    warmup_tau_s: float = 300.0
    random_walk_per_sqrt_h: float = 1.5e-3
    aging_per_kh: float = 2.0e-3

    def __post_init__(self) -> None:
        if not (0.0 <= self.warmup_amplitude < 1.0):
            raise ValueError("warm-up amplitude must be in [0, 1)")
        if self.warmup_tau_s <= 0:
            raise ValueError("warm-up time constant must be positive")
        if self.random_walk_per_sqrt_h < 0 or self.aging_per_kh < 0:
            raise ValueError("drift rates must be non-negative")


@dataclass
class DriftState:
    """Evolving drift factor; advanced only through the virtual clock."""

    params: DriftParams
    elapsed_s: float = 0.0
    walk_factor: float = 1.0

    def advance(self, dt_s: float, rng: np.random.Generator) -> None:
        if dt_s <= 0:
            raise ValueError("dt must be positive")
        self.elapsed_s += dt_s
        step_sigma = self.params.random_walk_per_sqrt_h * math.sqrt(dt_s / 3600.0)
        self.walk_factor *= 1.0 + step_sigma * rng.standard_normal()

    @property
    def factor(self) -> float:
        p = self.params
        warmup = 1.0 - p.warmup_amplitude * math.exp(-self.elapsed_s / p.warmup_tau_s)
        aging = 1.0 - p.aging_per_kh * self.elapsed_s / 3.6e6
        return warmup * self.walk_factor * aging


@dataclass
class VirtualClock:
    """Simulation time source; advances only when explicitly told to.

    ``scale`` maps externally requested advances to virtual seconds, so an
    interactive session can run accelerated.  Nothing in the twin ever reads
    the wall clock.
    """

    now_s: float = 0.0
    scale: float = 1.0

    def set_scale(self, scale: float) -> None:
        if scale <= 0 or not math.isfinite(scale):
            raise ValueError("time scale must be positive and finite")
        self.scale = scale

    def advance(self, dt_s: float) -> None:
        if dt_s <= 0 or not math.isfinite(dt_s):
            raise ValueError("advance needs a positive duration")
        self.now_s += dt_s


def lux_of_spectrum_values(values: NDArray[np.floating]) -> float:
    """Illuminance of spectral values sampled on the board grid."""
    return lux_from_spectrum(Spectrum(WAVELENGTH_GRID_NM.copy(), values))
