#!/usr/bin/env python3
"""Rerun the full classification campaign over the wire and grade it.

Spawns `solartwin serve` on an ephemeral port (or targets --address
host:port), then drives spectral, uniformity, short-term and long-term
evaluations purely through SCPI. All grading math is done right here in
the script; the client library only moves bytes. Exits 0 iff the
remote bench earns class AAA.

Usage: python3 remote_classify.py [--address HOST:PORT] [--seed N]
"""

from __future__ import annotations

import argparse
import re
import subprocess
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from solartwin_client import TestbedSession

# Reference band fractions (percent, 400-1100 nm in six bands) and the
# per-class limits: ratio interval, nonuniformity %, STI %, LTI %.
REFERENCE_PCT = (18.4, 19.9, 18.4, 14.9, 12.5, 15.9)
LEVELS_W_M2 = (1.0, 10.0, 50.0, 300.0, 500.0, 750.0)
CLASS_TABLE = (
    ("A", 0.75, 1.25, 2.0, 0.5, 2.0),
    ("B", 0.60, 1.40, 5.0, 2.0, 5.0),
    ("C", 0.40, 2.00, 10.0, 10.0, 10.0),
)

TEST_AREA_MM = 165.0
GRID_N = 8


def ratio_class(ratios: list[float]) -> str:
    for letter, lo, hi, *_ in CLASS_TABLE:
        if all(lo <= r <= hi for r in ratios):
            return letter
    return "F"


def percent_class(percent: float, column: int) -> str:
    for row in CLASS_TABLE:
        if percent <= row[column]:
            return row[0]
    return "F"


def minmax_percent(values: list[float]) -> float:
    vmax, vmin = max(values), min(values)
    return (vmax - vmin) / (vmax + vmin) * 100.0


def reset(tb: TestbedSession, seed: int) -> None:
    tb.command("*RST")
    tb.command(f"SYST:SEED {seed}")
    tb.command("SYST:TIME:SCAL 1")


def spectral_suite(tb: TestbedSession, seed: int) -> str:
    reset(tb, seed)
    worst = "A"
    order = "ABCF"
    for level in LEVELS_W_M2:
        tb.command("SOUR:SPEC:TARG AM15G")
        tb.set_irradiance(level)
        bins = [float(v) for v in tb.query("MEAS:SPEC:BINS?").split(",")]
        total = sum(bins)
        ratios = [b / total * 100.0 / ref
                  for b, ref in zip(bins, REFERENCE_PCT)]
        letter = ratio_class(ratios)
        worst = max(worst, letter, key=order.index)
        print(f"  spectral {level:6.0f} W/m^2  class {letter}  "
              f"ratios {min(ratios):.3f}..{max(ratios):.3f}")
    return worst


def uniformity_suite(tb: TestbedSession, seed: int) -> tuple[float, str]:
    reset(tb, seed)
    tb.set_irradiance(500.0)
    tb.set_feedback(False)
    pitch = TEST_AREA_MM / GRID_N
    start = -TEST_AREA_MM / 2 + pitch / 2
    currents = []
    for iy in range(GRID_N):
        for ix in range(GRID_N):
            x = start + ix * pitch
            y = start + iy * pitch
            tb.command(f"SYST:DUT:POS {x!r},{y!r}")
            currents.append(tb.read_dut_current())
    tb.command("SYST:DUT:POS 0.0,0.0")
    percent = minmax_percent(currents)
    return percent, percent_class(percent, 3)


def stability_suite(tb: TestbedSession, seed: int, level: float,
                    samples: int, step_s: float, column: int,
                    ) -> tuple[float, str]:
    reset(tb, seed)
    tb.set_irradiance(level)
    tb.set_feedback(True)
    tb.advance_time(30.0)  # warm-in before the first sample
    currents = []
    for _ in range(samples):
        tb.advance_time(step_s)
        currents.append(tb.read_dut_current())
    percent = minmax_percent(currents)
    return percent, percent_class(percent, column)


def classify_remote(address: str, port: int, seed: int) -> str:
    with TestbedSession(address, port, timeout_s=30.0) as tb:
        identity = tb.identify()
        print(f"instrument {identity.vendor} {identity.model} "
              f"v{identity.version} at {address}:{port}")

        spectral = spectral_suite(tb, seed)
        nu_pct, nu = uniformity_suite(tb, seed)
        print(f"  uniformity        class {nu}  ({nu_pct:.3f} %)")
        sti_pct, sti = stability_suite(tb, seed, 750.0, 180, 1.0, column=4)
        print(f"  short-term        class {sti}  ({sti_pct:.3f} %)")
        lti_pct, lti = stability_suite(tb, seed, 500.0, 140, 1800.0,
                                       column=5)
        print(f"  long-term         class {lti}  ({lti_pct:.3f} %)")

        code, message = tb.get_error()
        if code != 0:
            raise SystemExit(f"instrument error after campaign: "
                             f"{code},{message}")

    temporal = max(sti, lti, key="ABCF".index)
    return spectral + nu + temporal


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--address", metavar="HOST:PORT",
                        help="existing instrument (default: spawn one)")
    parser.add_argument("--seed", type=int, default=42)
    args = parser.parse_args()

    server = None
    if args.address:
        host, _, port_text = args.address.rpartition(":")
        host, port = host or "127.0.0.1", int(port_text)
    else:
        server = subprocess.Popen(["solartwin", "serve", "--port", "0"],
                                  stdout=subprocess.PIPE, text=True)
        banner = server.stdout.readline()
        match = re.search(r"SCPI ready on ([\d.]+):(\d+)", banner)
        if not match:
            server.terminate()
            raise SystemExit(f"server did not come up: {banner!r}")
        host, port = match.group(1), int(match.group(2))

    try:
        verdict = classify_remote(host, port, args.seed)
    finally:
        if server is not None:
            server.terminate()
            server.wait(timeout=5)

    print(f"overall verdict {verdict}")
    assert verdict == "AAA", f"expected AAA, measured {verdict}"
    return 0


if __name__ == "__main__":
    sys.exit(main())
