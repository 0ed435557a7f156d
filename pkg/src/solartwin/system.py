"""The assembled bench twin: board, chamber, sensors, and regulation.

``Testbed`` owns all mutable state and is the single object both the
command-line suite and the SCPI dispatcher drive.  All sensor reads reduce
to small linear functionals of the eight channel irradiances, precomputed
once per configuration, so hour-scale closed-loop simulations stay fast.
"""

from __future__ import annotations

import hashlib
import json
import math

import numpy as np
from numpy.typing import NDArray

from .chamber import (DriftState, IrradianceField, LuxReading, PeltierModel,
                      VirtualClock, read_lux)
from .config import MODE_TOTAL, TwinConfig, config_to_dict
from .control import Regulator
from .fitting import FitProblem, PresetCache, channel_bin_matrix, fit_duties
from .lightboard import (WAVELENGTH_GRID_NM, DutyOutOfRange, duty_from_code,
                         quantize_duty)
from .spectral import (_VLAMBDA, _VLAMBDA_NM, MAX_LUMINOUS_EFFICACY_LM_W,
                       Spectrum)

TARGET_AM15G = "AM15G"
TARGET_CUSTOM = "CUST"


class SettingsConflict(ValueError):
    """Command valid in itself but inconsistent with the current state."""


def _trapezoid_weights(grid: NDArray[np.floating]) -> NDArray[np.floating]:
    w = np.empty_like(grid)
    w[1:-1] = (grid[2:] - grid[:-2]) / 2.0
    w[0] = (grid[1] - grid[0]) / 2.0
    w[-1] = (grid[-1] - grid[-2]) / 2.0
    return w


class Testbed:
    """One simulated bench instance."""

    def __init__(self, config: TwinConfig | None = None):
        self.config = config if config is not None else TwinConfig()
        self.channels = self.config.board
        self.field = IrradianceField(self.config.geometry)
        self._precompute()
        self.preset_cache = PresetCache(self.channels)
        self.reset()

    # -- construction helpers -------------------------------------------

    def _precompute(self) -> None:
        grid_w = _trapezoid_weights(WAVELENGTH_GRID_NM)
        shapes = self.channels.shape_matrix()
        kernels = self.config.sensors.spectrometer.kernel_matrix()
        # Sensor reading of channel c on spectrometer band i.
        self._sens_matrix = kernels @ (shapes * grid_w).T
        vlam = np.interp(WAVELENGTH_GRID_NM, _VLAMBDA_NM, _VLAMBDA,
                         left=0.0, right=0.0)
        self._lux_vector = MAX_LUMINOUS_EFFICACY_LM_W * (
            (shapes * grid_w) @ vlam)
        resp = self.config.dut.responsivity()
        self._isc_vector = self.config.dut.area_m2 * ((shapes * grid_w) @ resp)
        centers = np.asarray(self.config.sensors.spectrometer.center_nm)
        self._total_weights = _trapezoid_weights(centers)
        self._bin_matrix = channel_bin_matrix(self.channels)
        self._bins_from_reading = self._bin_matrix @ np.linalg.pinv(
            self._sens_matrix)
        xs, ys = self.config.geometry.sensor_pos_mm
        self._sensor_gain = float(self.field.gain_at(xs, ys)[0])

    def reset(self, seed: int | None = None) -> None:
        """Return to the power-on state defined by the configuration."""
        if seed is not None:
            self.seed = int(seed)
        elif not hasattr(self, "seed"):
            self.seed = int(self.config.seed)
        self._spawn_rngs(self.seed)
        self.clock = VirtualClock()
        self.drift = DriftState(self.config.drift)
        self.peltier = PeltierModel(
            tau_s=self.config.peltier.tau_s,
            min_c=self.config.peltier.min_c,
            max_c=self.config.peltier.max_c,
            setpoint_c=self.config.peltier.initial_c,
            temp_c=self.config.peltier.initial_c,
            sensor_noise_k=self.config.peltier.sensor_noise_k)
        self.door_open = False
        self.duty_codes = np.zeros(len(self.channels), dtype=np.int64)
        self.base_duties = np.zeros(len(self.channels))
        self.target = TARGET_AM15G
        self.requested_level: float | None = None
        self.feedback_enabled = False
        self.regulator = Regulator(
            self.config.control, self.channels.irr_max_vector,
            self.channels.gamma_vector,
            bin_matrix=self._bin_matrix)
        self.dut_pos_mm = (0.0, 0.0)
        self._dut_gain = float(self.field.gain_at(0.0, 0.0)[0])
        fingerprint_source = config_to_dict(self.config)
        fingerprint_source["seed"] = self.seed
        self.config_fingerprint = hashlib.sha256(json.dumps(
            fingerprint_source, sort_keys=True,
            separators=(",", ":")).encode()).hexdigest()

    def _spawn_rngs(self, seed: int) -> None:
        def stream(key: int) -> np.random.Generator:
            ss = np.random.SeedSequence(entropy=seed, spawn_key=(key,))
            return np.random.Generator(np.random.PCG64(ss))
        self._rng_drift = stream(0)
        self._rng_spectrometer = stream(1)
        self._rng_lux = stream(2)
        self._rng_isc = stream(3)
        self._rng_misc = stream(4)

    def reseed(self, seed: int) -> None:
        """Swap the noise streams without disturbing the physical state."""
        if not (0 <= seed < 2 ** 64):
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        self.seed = int(seed)
        self._spawn_rngs(self.seed)

    # -- internal signal chain -------------------------------------------

    @property
    def duties(self) -> NDArray[np.floating]:
        return np.array([duty_from_code(int(c)) for c in self.duty_codes])

    def _nominal_irr8(self, duties: NDArray[np.floating],
                      ) -> NDArray[np.floating]:
        return self.channels.irradiances(duties, self.config.board_temp_c)

    @property
    def output_gain(self) -> float:
        """Common multiplicative factor on the board output right now."""
        if self.door_open:
            return 0.0
        return self.drift.factor

    def _current_irr8(self) -> NDArray[np.floating]:
        return self._nominal_irr8(self.duties) * self.output_gain

    def _apply_duties(self, duties: NDArray[np.floating]) -> None:
        self.duty_codes = np.array([quantize_duty(float(d)) for d in duties],
                                   dtype=np.int64)

    def _expected_reading(self, duties: NDArray[np.floating],
                          ) -> NDArray[np.floating]:
        """Noise- and drift-free spectrometer reading for given duties."""
        return (self._sens_matrix @ self._nominal_irr8(duties)) * self._sensor_gain

    def _reference_for(self, duties: NDArray[np.floating]):
        expected = self._expected_reading(duties)
        if self.config.control.mode == MODE_TOTAL:
            return float(self._total_weights @ expected)
        return self._bins_from_reading @ expected

    def _sensed(self):
        reading = self.measure_spectrum()
        if self.config.control.mode == MODE_TOTAL:
            return float(self._total_weights @ reading)
        return self._bins_from_reading @ reading

    # -- commands ---------------------------------------------------------

    def set_channel_percent(self, channel_1based: int, percent: float) -> None:
        if not (1 <= channel_1based <= len(self.channels)):
            raise IndexError(f"channel {channel_1based} out of range")
        if not (0.0 <= percent <= 100.0) or not math.isfinite(percent):
            raise DutyOutOfRange(f"percent {percent} outside [0, 100]")
        self.base_duties = self.duties
        self.base_duties[channel_1based - 1] = duty_from_code(
            quantize_duty(percent / 100.0))
        self._apply_duties(self.base_duties)
        self.requested_level = None
        if self.feedback_enabled:
            self._engage()

    def get_channel_percent(self, channel_1based: int) -> float:
        if not (1 <= channel_1based <= len(self.channels)):
            raise IndexError(f"channel {channel_1based} out of range")
        return duty_from_code(int(self.duty_codes[channel_1based - 1])) * 100.0

    def set_target(self, target: str) -> None:
        if target not in (TARGET_AM15G, TARGET_CUSTOM):
            raise ValueError(f"unknown spectral target {target!r}")
        self.target = target

    def set_irradiance(self, level_w_m2: float) -> None:
        """Drive the board to the requested total with the active target."""
        if self.target == TARGET_AM15G:
            duties = self.preset_cache.duties_for_level(float(level_w_m2))
        else:
            fractions = self.config.custom_target_fractions
            if fractions is None:
                raise SettingsConflict(
                    "custom spectral target selected but none configured")
            duties = fit_duties(FitProblem(
                channels=self.channels,
                target_fractions=np.asarray(fractions, dtype=float),
                total_w_m2=float(level_w_m2))).duties
        self.base_duties = duties.copy()
        self._apply_duties(duties)
        self.requested_level = float(level_w_m2)
        if self.feedback_enabled:
            self._engage()

    def _engage(self) -> None:
        # Cap the starting duties so the loop keeps upward authority even
        # when the open-loop solution pins channels at 100%, then hold the
        # output that exists right now (drift included) rather than chasing
        # a cold nominal the hardware can no longer reach.
        duties = self.base_duties.copy()
        peak = float(duties.max(initial=0.0))
        headroom = self.config.control.engage_headroom
        if peak > headroom:
            duties *= headroom / peak
        self._apply_duties(duties)
        self.regulator.engage(duties,
                              self._reference_for(duties) * self.output_gain)

    def set_feedback(self, enabled: bool) -> None:
        self.feedback_enabled = bool(enabled)
        if enabled:
            self._engage()
        else:
            self.regulator.disengage()

    def set_door(self, is_open: bool) -> None:
        self.door_open = bool(is_open)

    def set_dut_temperature(self, target_c: float) -> None:
        self.peltier.set_target(float(target_c))

    def set_dut_position(self, x_mm: float, y_mm: float) -> None:
        geo = self.config.geometry
        if abs(x_mm) > geo.width_mm / 2 or abs(y_mm) > geo.depth_mm / 2:
            raise ValueError("position outside the chamber interior")
        self.dut_pos_mm = (float(x_mm), float(y_mm))
        self._dut_gain = float(self.field.gain_at(x_mm, y_mm)[0])

    def set_time_scale(self, scale: float) -> None:
        self.clock.set_scale(scale)

    def advance(self, dt_s: float) -> None:
        """Advance virtual time, stepping drift and the control loop."""
        if dt_s <= 0 or not math.isfinite(dt_s):
            raise ValueError("advance needs a positive duration")
        period = self.config.control.period_s
        remaining = float(dt_s)
        while remaining > 1e-12:
            chunk = min(period, remaining)
            remaining -= chunk
            self.clock.advance(chunk)
            self.drift.advance(chunk, self._rng_drift)
            self.peltier.advance(chunk)
            if self.feedback_enabled and self.regulator.engaged:
                duties = self.regulator.step(self._sensed(), chunk)
                self._apply_duties(duties)

    # -- measurements ------------------------------------------------------

    def measure_spectrum(self) -> NDArray[np.floating]:
        """Noisy spectrometer reading, one value per band (W/m^2/nm)."""
        expected = (self._sens_matrix @ self._current_irr8()) * self._sensor_gain
        noise = 1.0 + (self.config.sensors.spectrometer.noise_sigma
                       * self._rng_spectrometer.standard_normal(expected.size))
        return expected * noise

    def measure_illuminance(self, which: str) -> LuxReading:
        """One illuminance reading from the LOW or HIGH range sensor."""
        sensors = {"LOW": self.config.sensors.lux_low,
                   "HIGH": self.config.sensors.lux_high}
        if which not in sensors:
            raise ValueError("illuminance range must be LOW or HIGH")
        true_lux = float(self._lux_vector @ self._current_irr8()) * self._sensor_gain
        return read_lux(sensors[which], true_lux, self._rng_lux)

    def measure_bin_irradiances(self) -> NDArray[np.floating]:
        """Graded-band irradiances (W/m^2) from one spectrometer reading.

        Uses the factory calibration (band matrix times the pseudo-inverse
        of the sensor response) exactly as a hardware readout would, so the
        result carries the reading's noise and drift.
        """
        return self._bins_from_reading @ self.measure_spectrum()

    def measure_dut_current(self) -> float:
        """Short-circuit current of the cell at its present position."""
        isc = float(self._isc_vector @ self._current_irr8()) * self._dut_gain
        isc *= 1.0 + self.config.dut.isc_temp_coeff_per_k * (
            self.peltier.temp_c - 25.0)
        isc *= 1.0 + self.config.dut.meas_noise_sigma * \
            self._rng_isc.standard_normal()
        return isc

    def measure_dut_temperature(self) -> float:
        return self.peltier.temp_c + (self.peltier.sensor_noise_k
                                      * self._rng_misc.standard_normal())

    def spectrum_at_dut(self) -> Spectrum:
        """Full-resolution spectral irradiance at the cell position."""
        irr = self._current_irr8() * self._dut_gain
        return Spectrum(WAVELENGTH_GRID_NM.copy(),
                        irr @ self.channels.shape_matrix())

    def nominal_spectrum(self) -> Spectrum:
        """Board output spectrum for the commanded duties, drift-free."""
        return self.channels.spectrum(self.duties, self.config.board_temp_c)

    # -- calibration data (exposed on the instrument bus) ------------------

    @property
    def sensor_response_matrix(self) -> NDArray[np.floating]:
        return self._sens_matrix.copy()

    @property
    def bin_matrix(self) -> NDArray[np.floating]:
        return self._bin_matrix.copy()
