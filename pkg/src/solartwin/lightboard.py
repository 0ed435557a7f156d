"""LED board model: channel calibration, dimming law, and summed spectrum.

Each board channel is a bank of identical LEDs with calibrated broadband
irradiance endpoints at the lowest and highest drive duty.  Irradiance
follows a power law in duty whose exponent is recomputed from the endpoints,
never stored.  A channel's spectral shape is a normalized mixture of
Gaussian components; the board spectrum is the shape-weighted sum of all
channel irradiances on a fixed 1 nm grid.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.typing import NDArray

from .spectral import Spectrum

# Drive duty resolution: 16-bit PWM compare register.
DUTY_CODE_MAX = 65535
# Lowest calibrated duty; the irradiance endpoints are measured here and at
# full drive, and the power-law exponent is anchored to both.
MIN_CAL_DUTY = 1.0e-4

GRID_START_NM = 300.0
GRID_STOP_NM = 1200.0
GRID_STEP_NM = 1.0
WAVELENGTH_GRID_NM = np.arange(GRID_START_NM, GRID_STOP_NM + GRID_STEP_NM / 2,
                               GRID_STEP_NM)

_FWHM_TO_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))


class InvalidEndpoints(ValueError):
    """Calibration endpoints are not strictly increasing positive values."""


class DutyOutOfRange(ValueError):
    """Drive duty outside [0, 1] (or percent outside [0, 100])."""


class OutOfRange(ValueError):
    """Duty code outside the 16-bit range."""


def gamma_from_endpoints(irr_min_w_m2: float, irr_max_w_m2: float) -> float:
    """Power-law exponent through the two calibration endpoints.

    Solves irr_max * duty**gamma = irr_min at duty = MIN_CAL_DUTY, so the
    dimming curve reproduces both calibrated endpoints exactly.
    """
    if not (0.0 < irr_min_w_m2 < irr_max_w_m2):
        raise InvalidEndpoints(
            f"need 0 < irr_min < irr_max, got ({irr_min_w_m2}, {irr_max_w_m2})")
    return math.log(irr_min_w_m2 / irr_max_w_m2) / math.log(MIN_CAL_DUTY)


def quantize_duty(fraction: float) -> int:
    """Nearest 16-bit duty code for a duty fraction in [0, 1]."""
    if not (0.0 <= fraction <= 1.0) or not math.isfinite(fraction):
        raise DutyOutOfRange(f"duty fraction {fraction} outside [0, 1]")
    return int(fraction * DUTY_CODE_MAX + 0.5)


def duty_from_code(code: int) -> float:
    """Duty fraction encoded by a 16-bit code."""
    if not (0 <= code <= DUTY_CODE_MAX):
        raise OutOfRange(f"duty code {code} outside [0, {DUTY_CODE_MAX}]")
    return code / DUTY_CODE_MAX


@dataclass(frozen=True)
class ShapeComponent:
    """One Gaussian component of a channel's emission shape."""

    peak_nm: float
    fwhm_nm: float
    weight: float

    def __post_init__(self) -> None:
        if not (GRID_START_NM <= self.peak_nm <= GRID_STOP_NM):
            raise ValueError(f"peak {self.peak_nm} nm outside the board grid")
        if self.fwhm_nm <= 0 or self.weight <= 0:
            raise ValueError("fwhm and weight must be positive")


@dataclass(frozen=True)
class LedChannel:
    """One board channel: a bank of identical LEDs driven together."""

    name: str
    led_count: int
    irr_min_w_m2: float
    irr_max_w_m2: float
    temp_coeff_per_k: float
    shape: tuple[ShapeComponent, ...]

    def __post_init__(self) -> None:
        if self.led_count <= 0:
            raise ValueError("led_count must be positive")
        if not (0.0 < self.irr_min_w_m2 < self.irr_max_w_m2):
            raise InvalidEndpoints(
                f"channel {self.name}: need 0 < irr_min < irr_max")
        if not self.shape:
            raise ValueError("channel needs at least one shape component")

    @cached_property
    def gamma(self) -> float:
        """Dimming exponent, always derived from the endpoints."""
        return gamma_from_endpoints(self.irr_min_w_m2, self.irr_max_w_m2)

    def normalized_shape(self) -> NDArray[np.floating]:
        """Emission shape on the board grid, unit integral over the grid."""
        lam = WAVELENGTH_GRID_NM
        dens = np.zeros_like(lam)
        for comp in self.shape:
            sigma = comp.fwhm_nm / _FWHM_TO_SIGMA
            dens += comp.weight * np.exp(-0.5 * ((lam - comp.peak_nm) / sigma) ** 2)
        return dens / np.trapezoid(dens, lam)


def channel_irradiance(channel: LedChannel, duty: float,
                       temp_c: float = 25.0) -> float:
    """Broadband irradiance (W/m^2) of one channel at a duty and temperature.

    Power law in duty anchored to the calibration endpoints, with a linear
    temperature derating around the 25 degC calibration point.  Duty 0 emits
    exactly nothing.
    """
    if not (0.0 <= duty <= 1.0):
        raise DutyOutOfRange(f"duty {duty} outside [0, 1]")
    if duty == 0.0:
        return 0.0
    temp_factor = 1.0 + channel.temp_coeff_per_k * (temp_c - 25.0)
    return channel.irr_max_w_m2 * duty ** channel.gamma * max(temp_factor, 0.0)


class ChannelSet:
    """Fixed, ordered collection of the board's channels."""

    def __init__(self, channels: tuple[LedChannel, ...] | list[LedChannel]):
        names = [c.name for c in channels]
        if len(set(names)) != len(names):
            raise ValueError("channel names must be unique")
        self.channels: tuple[LedChannel, ...] = tuple(channels)
        self._caps = np.array([c.irr_max_w_m2 for c in self.channels])
        self._gammas = np.array([c.gamma for c in self.channels])
        self._tcs = np.array([c.temp_coeff_per_k for c in self.channels])

    def __len__(self) -> int:
        return len(self.channels)

    def __iter__(self):
        return iter(self.channels)

    def __getitem__(self, idx: int) -> LedChannel:
        return self.channels[idx]

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.channels)

    @property
    def total_led_count(self) -> int:
        return sum(c.led_count for c in self.channels)

    @property
    def irr_min_vector(self) -> NDArray[np.floating]:
        return np.array([c.irr_min_w_m2 for c in self.channels])

    @property
    def irr_max_vector(self) -> NDArray[np.floating]:
        return self._caps.copy()

    @property
    def gamma_vector(self) -> NDArray[np.floating]:
        return self._gammas.copy()

    def shape_matrix(self) -> NDArray[np.floating]:
        """Per-channel normalized shapes, one row per channel (cached)."""
        cached = getattr(self, "_shape_matrix", None)
        if cached is None:
            cached = np.vstack([c.normalized_shape() for c in self.channels])
            self._shape_matrix = cached
        return cached

    def irradiances(self, duties, temp_c: float = 25.0) -> NDArray[np.floating]:
        """Broadband irradiance of every channel at the given duties.

        Vectorized form of :func:`channel_irradiance`; a zero duty emits
        exactly nothing.
        """
        duties = np.asarray(duties, dtype=float)
        if duties.shape != (len(self),):
            raise ValueError(f"expected {len(self)} duties")
        if np.any((duties < 0.0) | (duties > 1.0)):
            raise DutyOutOfRange("duties must lie in [0, 1]")
        temp_factors = np.maximum(1.0 + self._tcs * (temp_c - 25.0), 0.0)
        return self._caps * duties ** self._gammas * temp_factors

    def spectrum(self, duties, temp_c: float = 25.0) -> Spectrum:
        """Summed board spectrum on the 1 nm grid for the given duties."""
        irr = self.irradiances(duties, temp_c)
        values = irr @ self.shape_matrix()
        return Spectrum(WAVELENGTH_GRID_NM.copy(), values)

    def duties_for_percents(self, percents) -> NDArray[np.floating]:
        """Duty fractions for per-channel drive percentages, quantized."""
        out = np.empty(len(self))
        for i, pct in enumerate(percents):
            if not (0.0 <= pct <= 100.0):
                raise DutyOutOfRange(f"percent {pct} outside [0, 100]")
            out[i] = duty_from_code(quantize_duty(pct / 100.0))
        return out


# Default channel calibration table.  Endpoint irradiances are the measured
# board-level values at the minimum calibrated duty and at full drive; shape
# mixtures approximate each bank's emission and were tuned so the default
# board reproduces the bench's published photometric and spectral behaviour
# (see scripts/calibrate_defaults.py for the tuning harness).
_DEFAULT_CHANNEL_TABLE = [
    # name, count, irr_min, irr_max, temp_coeff, components
    ("AREM-80C0-LM000", 312, 0.2501e-3, 74.111, -0.001,
     [(450.0, 26.0, 0.3034), (490.0, 45.7, 0.2202),
      (571.4, 54.8, 0.2615), (669.5, 105.5, 0.2149)]),
    ("AREM-90C0-KL000", 648, 0.4051e-3, 143.973, -0.003,
     [(850.0, 30.0, 1.0)]),
    ("NE2B757GT", 84, 0.1267e-3, 38.376, -0.001,
     [(470.0, 25.0, 1.0)]),
    ("NE2G757GT", 72, 0.3906e-3, 13.927, -0.001,
     [(525.0, 30.0, 1.0)]),
    ("NE2R757GT-P6", 120, 0.4309e-3, 30.351, -0.003,
     [(630.0, 20.0, 1.0)]),
    ("NF2L757GT-F1", 420, 3.0959e-3, 179.574, -0.003,
     [(940.0, 30.0, 1.0)]),
    ("NF2W757GT-F1", 780, 0.2293e-3, 331.376, -0.001,
     [(450.0, 26.0, 0.2081), (490.0, 45.7, 0.1651),
      (571.4, 54.8, 0.2768), (669.5, 105.5, 0.3501)]),
    ("QBHP686", 528, 0.8382e-3, 97.226, -0.003,
     [(740.0, 30.0, 1.0)]),
]


def default_board() -> ChannelSet:
    """The stock eight-channel board with its shipped calibration."""
    channels = [
        LedChannel(
            name=name,
            led_count=count,
            irr_min_w_m2=irr_min,
            irr_max_w_m2=irr_max,
            temp_coeff_per_k=tc,
            shape=tuple(ShapeComponent(*c) for c in comps),
        )
        for name, count, irr_min, irr_max, tc, comps in _DEFAULT_CHANNEL_TABLE
    ]
    return ChannelSet(channels)


def channel_set_to_dict(channels: ChannelSet) -> dict:
    """JSON-ready description of a channel set (gamma is never stored)."""
    return {
        "channels": [
            {
                "name": c.name,
                "led_count": c.led_count,
                "irr_min_w_m2": c.irr_min_w_m2,
                "irr_max_w_m2": c.irr_max_w_m2,
                "temp_coeff_per_k": c.temp_coeff_per_k,
                "shape": [
                    {"peak_nm": s.peak_nm, "fwhm_nm": s.fwhm_nm,
                     "weight": s.weight}
                    for s in c.shape
                ],
            }
            for c in channels
        ]
    }


def channel_set_from_dict(data: dict) -> ChannelSet:
    """Inverse of :func:`channel_set_to_dict`; recomputes gamma on load."""
    channels = []
    for entry in data["channels"]:
        shape = tuple(
            ShapeComponent(peak_nm=float(s["peak_nm"]),
                           fwhm_nm=float(s["fwhm_nm"]),
                           weight=float(s["weight"]))
            for s in entry["shape"]
        )
        channels.append(LedChannel(
            name=str(entry["name"]),
            led_count=int(entry["led_count"]),
            irr_min_w_m2=float(entry["irr_min_w_m2"]),
            irr_max_w_m2=float(entry["irr_max_w_m2"]),
            temp_coeff_per_k=float(entry["temp_coeff_per_k"]),
            shape=shape,
        ))
    return ChannelSet(channels)


def save_board_json(path, channels: ChannelSet) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(channel_set_to_dict(channels), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_board_json(path) -> ChannelSet:
    with open(path, encoding="utf-8") as fh:
        return channel_set_from_dict(json.load(fh))
