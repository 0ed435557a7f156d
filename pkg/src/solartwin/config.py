"""Twin configuration: typed sections, JSON round-trip, canonical hashing.

A configuration file may carry any subset of the sections; missing sections
and fields fall back to the shipped defaults.  Reports embed the SHA-256
hash of the effective configuration so results are traceable to the exact
parameter set that produced them.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

from .chamber import (ChamberGeometry, DriftParams, DutModel, LuxSensorModel,
                      SpectrometerModel)
from .lightboard import (ChannelSet, channel_set_from_dict,
                         channel_set_to_dict, default_board)

MODE_TOTAL = "TOTAL"
MODE_PER_BIN = "PER_BIN"


@dataclass(frozen=True)
class PeltierParams:
    tau_s: float = 30.0
    min_c: float = 0.0
    max_c: float = 80.0
    initial_c: float = 25.0
    sensor_noise_k: float = 0.01


@dataclass(frozen=True)
class SensorsConfig:
    spectrometer: SpectrometerModel = field(default_factory=SpectrometerModel)
    lux_low: LuxSensorModel = field(
        default_factory=lambda: LuxSensorModel(0.01, 83000.0, 2.0e-3))
    lux_high: LuxSensorModel = field(
        default_factory=lambda: LuxSensorModel(0.1, 228000.0, 5.0e-3))


@dataclass(frozen=True)
class ControlConfig:
    """Feedback regulator settings and experiment-runner defaults."""

    mode: str = MODE_TOTAL
    ki_per_s: float = 0.02
    period_s: float = 1.0
    warm_in_s: float = 30.0
    # Duty ceiling applied when the loop engages, reserving drive headroom
    # so saturated presets can still be corrected upward.
    engage_headroom: float = 0.985

    def __post_init__(self) -> None:
        if self.mode not in (MODE_TOTAL, MODE_PER_BIN):
            raise ValueError(f"unknown regulation mode {self.mode!r}")
        if self.ki_per_s <= 0 or self.period_s <= 0:
            raise ValueError("gain and period must be positive")
        if not (0.0 < self.engage_headroom <= 1.0):
            raise ValueError("engage headroom must be in (0, 1]")


@dataclass(frozen=True)
class TwinConfig:
    """Complete parameter set of one simulated bench."""

    board: ChannelSet = field(default_factory=default_board)
    geometry: ChamberGeometry = field(default_factory=ChamberGeometry)
    drift: DriftParams = field(default_factory=DriftParams)
    dut: DutModel = field(default_factory=DutModel)
    peltier: PeltierParams = field(default_factory=PeltierParams)
    sensors: SensorsConfig = field(default_factory=SensorsConfig)
    control: ControlConfig = field(default_factory=ControlConfig)
    board_temp_c: float = 25.0
    seed: int = 0
    # Band fractions used by the CUSTom spectral target, if any.
    custom_target_fractions: tuple[float, ...] | None = None


def _merge_dataclass(cls, defaults, data: dict):
    """Build a dataclass from a dict, keeping defaults for missing keys."""
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name in data:
            value = data[f.name]
            if isinstance(value, list):
                value = tuple(value)
            kwargs[f.name] = value
        else:
            kwargs[f.name] = getattr(defaults, f.name)
    return cls(**kwargs)


def config_to_dict(config: TwinConfig) -> dict:
    return {
        "board": channel_set_to_dict(config.board),
        "geometry": dataclasses.asdict(config.geometry),
        "drift": dataclasses.asdict(config.drift),
        "dut": dataclasses.asdict(config.dut),
        "peltier": dataclasses.asdict(config.peltier),
        "sensors": {
            "spectrometer": dataclasses.asdict(config.sensors.spectrometer),
            "lux_low": dataclasses.asdict(config.sensors.lux_low),
            "lux_high": dataclasses.asdict(config.sensors.lux_high),
        },
        "control": dataclasses.asdict(config.control),
        "board_temp_c": config.board_temp_c,
        "seed": config.seed,
        "custom_target_fractions": (
            list(config.custom_target_fractions)
            if config.custom_target_fractions is not None else None),
    }


def config_from_dict(data: dict) -> TwinConfig:
    defaults = TwinConfig()
    board = (channel_set_from_dict(data["board"])
             if "board" in data else defaults.board)
    sensors_data = data.get("sensors", {})
    sensors = SensorsConfig(
        spectrometer=_merge_dataclass(
            SpectrometerModel, defaults.sensors.spectrometer,
            sensors_data.get("spectrometer", {})),
        lux_low=_merge_dataclass(
            LuxSensorModel, defaults.sensors.lux_low,
            sensors_data.get("lux_low", {})),
        lux_high=_merge_dataclass(
            LuxSensorModel, defaults.sensors.lux_high,
            sensors_data.get("lux_high", {})),
    )
    return TwinConfig(
        board=board,
        geometry=_merge_dataclass(ChamberGeometry, defaults.geometry,
                                  data.get("geometry", {})),
        drift=_merge_dataclass(DriftParams, defaults.drift,
                               data.get("drift", {})),
        dut=_merge_dataclass(DutModel, defaults.dut, data.get("dut", {})),
        peltier=_merge_dataclass(PeltierParams, defaults.peltier,
                                 data.get("peltier", {})),
        sensors=sensors,
        control=_merge_dataclass(ControlConfig, defaults.control,
                                 data.get("control", {})),
        board_temp_c=float(data.get("board_temp_c", defaults.board_temp_c)),
        seed=int(data.get("seed", defaults.seed)),
        custom_target_fractions=(
            tuple(float(x) for x in data["custom_target_fractions"])
            if data.get("custom_target_fractions") is not None else None),
    )


def load_config(path) -> TwinConfig:
    with open(path, encoding="utf-8") as fh:
        return config_from_dict(json.load(fh))


def save_config(path, config: TwinConfig) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config_to_dict(config), fh, indent=2, sort_keys=True)
        fh.write("\n")


def canonical_json(config: TwinConfig) -> str:
    return json.dumps(config_to_dict(config), sort_keys=True,
                      separators=(",", ":"))


def config_hash(config: TwinConfig) -> str:
    """SHA-256 of the canonical JSON form of the effective configuration."""
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()
