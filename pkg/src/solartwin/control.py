"""Closed-loop output regulation and the stability experiment runners.

The regulator is integral-only: each control period it accumulates the
relative error between a sensed value and the reference captured when the
loop engaged, and rescales the commanded duties accordingly.  Two modes are
supported: TOTAL scales all duties by a common factor from the broadband
error; PER_BIN corrects individual channel powers through the pseudo-inverse
of the channel band matrix.  The integrator freezes while the output is
pinned at a duty bound so it cannot wind up.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .config import MODE_PER_BIN, MODE_TOTAL, ControlConfig
from .spectral import instability, nonuniformity, nonuniformity_class


class Regulator:
    """Integral-only duty regulator over one board."""

    def __init__(self, config: ControlConfig, caps: NDArray[np.floating],
                 gammas: NDArray[np.floating],
                 bin_matrix: NDArray[np.floating] | None = None):
        self.config = config
        self.caps = np.asarray(caps, dtype=float)
        self.gammas = np.asarray(gammas, dtype=float)
        if config.mode == MODE_PER_BIN:
            if bin_matrix is None:
                raise ValueError("PER_BIN mode needs the channel band matrix")
            self.bin_pinv = np.linalg.pinv(np.asarray(bin_matrix, dtype=float))
        self.engaged = False
        self.base_duties: NDArray[np.floating] | None = None
        self.reference = None
        self.integrator_total = 0.0
        self.integrator_powers: NDArray[np.floating] | None = None
        self.last_duties: NDArray[np.floating] | None = None

    def engage(self, base_duties: NDArray[np.floating], reference) -> None:
        """Latch the setpoint: current duties and their expected reading."""
        self.base_duties = np.asarray(base_duties, dtype=float).copy()
        self.reference = (np.asarray(reference, dtype=float).copy()
                          if np.ndim(reference) else float(reference))
        self.integrator_total = 0.0
        self.integrator_powers = np.zeros(self.caps.size)
        self.last_duties = self.base_duties.copy()
        self.engaged = True

    def disengage(self) -> None:
        self.engaged = False

    def _duties_from_powers(self, powers: NDArray[np.floating],
                            ) -> NDArray[np.floating]:
        duties = np.zeros_like(powers)
        positive = powers > 0
        duties[positive] = (powers[positive] / self.caps[positive]) ** (
            1.0 / self.gammas[positive])
        return np.clip(duties, 0.0, 1.0)

    def step(self, sensed, dt_s: float) -> NDArray[np.floating]:
        """One control period; returns the duty vector to apply."""
        if not self.engaged:
            raise RuntimeError("regulator is not engaged")
        if self.config.mode == MODE_TOTAL:
            return self._step_total(float(sensed), dt_s)
        return self._step_per_bin(np.asarray(sensed, dtype=float), dt_s)

    def _step_total(self, sensed: float, dt_s: float) -> NDArray[np.floating]:
        ref = float(self.reference)
        if not np.isfinite(sensed) or sensed < 0 or ref <= 0:
            return self.last_duties.copy()
        err = (ref - sensed) / ref
        candidate = self.integrator_total + self.config.ki_per_s * dt_s * err
        scale = 1.0 + candidate
        active = self.base_duties > 0
        max_scale = (1.0 / self.base_duties[active].max()
                     if np.any(active) else 1.0)
        clamped_high = scale >= max_scale and err > 0
        clamped_low = scale <= 0.0 and err < 0
        if not (clamped_high or clamped_low):
            self.integrator_total = candidate
        scale = min(max(1.0 + self.integrator_total, 0.0), max_scale)
        self.last_duties = np.clip(self.base_duties * scale, 0.0, 1.0)
        return self.last_duties.copy()

    def _step_per_bin(self, sensed_bins: NDArray[np.floating],
                      dt_s: float) -> NDArray[np.floating]:
        ref = self.reference
        if not np.all(np.isfinite(sensed_bins)) or np.any(sensed_bins < 0):
            return self.last_duties.copy()
        base_powers = self.caps * self.base_duties ** self.gammas
        delta = self.bin_pinv @ (ref - sensed_bins)
        candidate = self.integrator_powers + self.config.ki_per_s * dt_s * delta
        powers = base_powers + candidate
        at_cap = (powers >= self.caps) & (delta > 0)
        at_zero = (powers <= 0) & (delta < 0)
        keep = at_cap | at_zero
        self.integrator_powers = np.where(keep, self.integrator_powers,
                                          candidate)
        powers = np.clip(base_powers + self.integrator_powers, 0.0, self.caps)
        self.last_duties = self._duties_from_powers(powers)
        return self.last_duties.copy()


@dataclass(frozen=True)
class ExperimentResult:
    """Time series of one stability or uniformity experiment."""

    kind: str
    timestamps_s: NDArray[np.floating]
    values: NDArray[np.floating]
    metric_percent: float
    simulator_class: str
    feedback: bool
    seed: int
    config_hash: str

    def save_csv(self, path) -> None:
        """timestamp_s,value rows plus a JSON sidecar with the summary."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["timestamp_s", "value"])
            for t, v in zip(self.timestamps_s, self.values):
                writer.writerow([repr(float(t)), repr(float(v))])
        sidecar = {
            "metric_percent": self.metric_percent,
            "class": self.simulator_class,
            "feedback": self.feedback,
            "seed": self.seed,
            "config_hash": self.config_hash,
        }
        with open(str(path) + ".json", "w", encoding="utf-8") as fh:
            json.dump(sidecar, fh, indent=2, sort_keys=True)
            fh.write("\n")


def run_sti(testbed, level_w_m2: float = 750.0, feedback: bool = True,
            duration_s: float = 180.0, cadence_s: float = 1.0,
            seed: int | None = None) -> ExperimentResult:
    """Short-term instability: sample the cell current over one window.

    The bench is reset cold, set to the requested output with the loop
    engaged or not, given the configured warm-in, then sampled every cadence
    across the window.
    """
    if cadence_s <= 0 or duration_s <= 0:
        raise ValueError("cadence and duration must be positive")
    if duration_s / cadence_s < 2:
        raise ValueError("window must contain at least two samples")
    testbed.reset(seed=seed)
    testbed.set_irradiance(level_w_m2)
    testbed.set_feedback(feedback)
    warm_in = testbed.config.control.warm_in_s
    if warm_in > 0:
        testbed.advance(warm_in)
    n = int(round(duration_s / cadence_s))
    times = np.empty(n)
    values = np.empty(n)
    for i in range(n):
        testbed.advance(cadence_s)
        times[i] = testbed.clock.now_s
        values[i] = testbed.measure_dut_current()
    percent, letter = instability(values, "sti")
    return ExperimentResult("sti", times, values, percent, letter, feedback,
                            testbed.seed, testbed.config_fingerprint)


def run_lti(testbed, level_w_m2: float = 500.0, feedback: bool = True,
            samples: int = 140, interval_s: float = 1800.0,
            seed: int | None = None) -> ExperimentResult:
    """Long-term instability: periodic cell-current samples over hours."""
    if samples < 2:
        raise ValueError("need at least two samples")
    if interval_s <= 0:
        raise ValueError("interval must be positive")
    testbed.reset(seed=seed)
    testbed.set_irradiance(level_w_m2)
    testbed.set_feedback(feedback)
    warm_in = testbed.config.control.warm_in_s
    if warm_in > 0:
        testbed.advance(warm_in)
    times = np.empty(samples)
    values = np.empty(samples)
    for i in range(samples):
        testbed.advance(interval_s)
        times[i] = testbed.clock.now_s
        values[i] = testbed.measure_dut_current()
    percent, letter = instability(values, "lti")
    return ExperimentResult("lti", times, values, percent, letter, feedback,
                            testbed.seed, testbed.config_fingerprint)


def run_scan(testbed, level_w_m2: float = 500.0, grid_n: int = 8,
             seed: int | None = None) -> ExperimentResult:
    """Spatial uniformity: cell current across an n x n grid of positions."""
    if grid_n < 2:
        raise ValueError("a scan needs at least a 2x2 grid")
    testbed.reset(seed=seed)
    testbed.set_irradiance(level_w_m2)
    xs, ys = testbed.field.scan_points(grid_n)
    values = np.empty(xs.size)
    for i, (x, y) in enumerate(zip(xs, ys)):
        testbed.set_dut_position(float(x), float(y))
        values[i] = testbed.measure_dut_current()
    testbed.set_dut_position(0.0, 0.0)
    percent = nonuniformity(values)
    return ExperimentResult("scan", np.arange(xs.size, dtype=float), values,
                            percent, nonuniformity_class(percent), False,
                            testbed.seed, testbed.config_fingerprint)
