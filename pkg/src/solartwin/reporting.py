"""Evaluation-suite orchestration and report emission.

One entry point per reporting artifact: the full classification suite, the
uniformity scan, and the stability runs, each producing dictionaries that
serialize to deterministic JSON (virtual timestamps only, keys sorted) plus
CSV files with frozen column names.

``WireBench`` adapts a remote SCPI endpoint to the small bench interface the
experiment runners use, so the identical suite code exercises either the
in-process twin or the wire protocol.
"""

from __future__ import annotations

import json
import socket
from types import SimpleNamespace

import numpy as np
from numpy.typing import NDArray

from . import __version__
from .chamber import IrradianceField
from .config import TwinConfig, config_hash
from .control import run_lti, run_scan, run_sti
from .fitting import PRESET_LEVELS_W_M2
from .spectral import bin_fractions, classify_overall, spectral_match

REPORT_SCHEMA = 1


class WireError(RuntimeError):
    """Remote instrument reported an error or broke the line protocol."""


class LineClient:
    """Blocking line-oriented client for one SCPI connection."""

    def __init__(self, host: str, port: int, timeout_s: float = 30.0):
        self.sock = socket.create_connection((host, port), timeout=timeout_s)
        self.reader = self.sock.makefile("r", encoding="utf-8", newline="\n")

    def send(self, line: str) -> None:
        self.sock.sendall(line.encode() + b"\n")

    def ask(self, line: str) -> str:
        self.send(line)
        response = self.reader.readline()
        if not response:
            raise WireError(f"connection closed while waiting for {line!r}")
        return response.rstrip("\n")

    def close(self) -> None:
        try:
            self.reader.close()
        finally:
            self.sock.close()


class WireBench:
    """Remote bench with the same surface the experiment runners drive.

    Geometry-derived scan coordinates and the control-loop warm-in come
    from the local configuration; everything observable travels over the
    wire.  The virtual clock is mirrored locally from the advances issued.
    """

    def __init__(self, client: LineClient, config: TwinConfig):
        self.wire = client
        self.config = config
        self.field = IrradianceField(config.geometry)
        self.clock = SimpleNamespace(now_s=0.0)
        self.seed = config.seed
        identity = self.wire.ask("*IDN?")
        self.config_fingerprint = f"remote:{identity}"

    def reset(self, seed: int | None = None) -> None:
        self.wire.send("*RST")
        if seed is not None:
            self.seed = int(seed)
        self.wire.send(f"SYST:SEED {self.seed}")
        self.wire.send("SYST:TIME:SCAL 1")
        self.clock.now_s = 0.0

    def set_irradiance(self, level_w_m2: float) -> None:
        self.wire.send("SOUR:SPEC:TARG AM15G")
        self.wire.send(f"SOUR:SPEC:IRR {level_w_m2!r}")

    def set_feedback(self, enabled: bool) -> None:
        self.wire.send(f"SOUR:CTRL:FEED {'ON' if enabled else 'OFF'}")

    def advance(self, dt_s: float) -> None:
        self.wire.send(f"SYST:TIME:ADV {dt_s!r}")
        self.clock.now_s += dt_s

    def set_dut_position(self, x_mm: float, y_mm: float) -> None:
        self.wire.send(f"SYST:DUT:POS {x_mm!r},{y_mm!r}")

    def measure_dut_current(self) -> float:
        return float(self.wire.ask("MEAS:DUT:CURR?"))

    def measure_bin_irradiances(self) -> NDArray[np.floating]:
        raw = self.wire.ask("MEAS:SPEC:BINS?")
        return np.array([float(v) for v in raw.split(",")])

    def drain_errors(self) -> None:
        """Raise if the instrument accumulated any error during the run."""
        entry = self.wire.ask("SYST:ERR?")
        if not entry.startswith("0,"):
            raise WireError(f"instrument error: {entry}")


def _spectral_levels_local(testbed) -> list[dict]:
    """Verify each preset level through the forward spectral path."""
    rows = []
    for level in PRESET_LEVELS_W_M2:
        duties = testbed.preset_cache.duties_for_level(level)
        spectrum = testbed.channels.spectrum(duties,
                                             testbed.config.board_temp_c)
        fractions = bin_fractions(spectrum)
        match = spectral_match(fractions)
        rows.append({
            "level_w_m2": level,
            "total_w_m2": spectrum.total_w_m2,
            "fractions_pct": [float(f) for f in fractions],
            "ratios": [float(r) for r in match.ratios],
            "worst_ratio": match.worst_ratio,
            "class": match.simulator_class,
        })
    return rows


def _spectral_levels_remote(bench: WireBench) -> list[dict]:
    """Measure each preset level through the instrument's own readout."""
    rows = []
    for level in PRESET_LEVELS_W_M2:
        bench.set_irradiance(level)
        bins = bench.measure_bin_irradiances()
        fractions = bins / bins.sum() * 100.0
        match = spectral_match(fractions)
        rows.append({
            "level_w_m2": level,
            "total_w_m2": float(bins.sum()),
            "fractions_pct": [float(f) for f in fractions],
            "ratios": [float(r) for r in match.ratios],
            "worst_ratio": match.worst_ratio,
            "class": match.simulator_class,
        })
    return rows


def _experiment_summary(result) -> dict:
    return {
        "kind": result.kind,
        "metric_percent": result.metric_percent,
        "class": result.simulator_class,
        "feedback": result.feedback,
        "samples": int(result.values.size),
        "span_s": float(result.timestamps_s[-1] - result.timestamps_s[0]),
        "seed": result.seed,
    }


def run_suite(bench, seed: int, remote: bool,
              scan_level_w_m2: float = 500.0,
              sti_kwargs: dict | None = None,
              lti_kwargs: dict | None = None):
    """The full evaluation campaign.

    ``bench`` is either a Testbed or a WireBench; ``remote`` picks the
    spectral verification path (forward model locally, measured bins over
    the wire).  Returns the report dict plus the scan, STI and LTI results
    for artifact emission.
    """
    if remote:
        bench.reset(seed=seed)
        spectral_rows = _spectral_levels_remote(bench)
    else:
        spectral_rows = _spectral_levels_local(bench)

    scan = run_scan(bench, level_w_m2=scan_level_w_m2, grid_n=8, seed=seed)
    sti = run_sti(bench, feedback=True, seed=seed, **(sti_kwargs or {}))
    lti = run_lti(bench, feedback=True, seed=seed, **(lti_kwargs or {}))

    matches = [spectral_match(np.asarray(r["fractions_pct"]))
               for r in spectral_rows]
    overall = classify_overall(matches, scan.metric_percent,
                               sti.metric_percent, lti.metric_percent)

    normalized = scan.values / scan.values.mean()
    report = {
        "schema": REPORT_SCHEMA,
        "tool_version": __version__,
        "seed": seed,
        "config_hash": bench.config_fingerprint,
        "remote": remote,
        "spectral": {
            "levels": spectral_rows,
            "class": overall.spectral_class,
            "worst_ratio": overall.worst_ratio,
        },
        "uniformity": {
            "grid_n": 8,
            "normalized_values": [float(v) for v in normalized],
            "percent": scan.metric_percent,
            "class": overall.uniformity_class,
        },
        "sti": _experiment_summary(sti),
        "lti": _experiment_summary(lti),
        "overall": {
            "verdict": overall.verdict,
            "spectral_class": overall.spectral_class,
            "uniformity_class": overall.uniformity_class,
            "sti_class": overall.sti_class,
            "lti_class": overall.lti_class,
        },
    }
    return report, scan, sti, lti


def write_json(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_spectral_csv(path, rows: list[dict]) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write("level_w_m2,ratio_400_500,ratio_500_600,ratio_600_700,"
                 "ratio_700_800,ratio_800_900,ratio_900_1100,worst_ratio,"
                 "class\n")
        for row in rows:
            ratios = ",".join(repr(float(r)) for r in row["ratios"])
            fh.write(f"{row['level_w_m2']:g},{ratios},"
                     f"{row['worst_ratio']!r},{row['class']}\n")


def write_scan_csv(path, xs, ys, values) -> None:
    values = np.asarray(values, dtype=float)
    normalized = values / values.mean()
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write("x_mm,y_mm,value,normalized\n")
        for x, y, v, nv in zip(xs, ys, values, normalized):
            fh.write(f"{float(x)!r},{float(y)!r},{float(v)!r},"
                     f"{float(nv)!r}\n")


def scan_report(bench, grid_n: int, level_w_m2: float, seed: int) -> dict:
    """One uniformity scan as a serializable record."""
    result = run_scan(bench, level_w_m2=level_w_m2, grid_n=grid_n, seed=seed)
    xs, ys = bench.field.scan_points(grid_n)
    normalized = result.values / result.values.mean()
    front = normalized[np.asarray(ys) < 0].mean()
    rear = normalized[np.asarray(ys) > 0].mean()
    return {
        "schema": REPORT_SCHEMA,
        "tool_version": __version__,
        "seed": seed,
        "config_hash": bench.config_fingerprint,
        "grid_n": grid_n,
        "level_w_m2": level_w_m2,
        "percent": result.metric_percent,
        "class": result.simulator_class,
        "front_mean": float(front),
        "rear_mean": float(rear),
        "xs_mm": [float(x) for x in xs],
        "ys_mm": [float(y) for y in ys],
        "values": [float(v) for v in result.values],
    }
