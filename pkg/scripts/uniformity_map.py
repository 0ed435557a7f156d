"""Render the test-plane irradiance map as an ASCII heat grid.

Shows the front-to-rear gradient introduced by the door's lower
reflectance. Positive y is the rear wall; the door is at the bottom of
the printout.

Usage: python3 scripts/uniformity_map.py [grid_n] [door_reflectance]
"""

from __future__ import annotations

import dataclasses
import sys

import numpy as np

sys.path.insert(0, "src")

from solartwin.chamber import ChamberGeometry
from solartwin.config import TwinConfig
from solartwin.control import run_scan
from solartwin.system import Testbed

SHADES = " .:-=+*#%@"


def render(grid_n: int, door_reflectance: float) -> None:
    geometry = ChamberGeometry(door_reflectance=door_reflectance)
    config = dataclasses.replace(TwinConfig(), geometry=geometry)
    bench = Testbed(config)
    scan = run_scan(bench, level_w_m2=500.0, grid_n=grid_n, seed=0)
    xs, ys = bench.field.scan_points(grid_n)

    values = scan.values.reshape(grid_n, grid_n)
    lo, hi = values.min(), values.max()
    norm = (values - lo) / (hi - lo) if hi > lo else np.zeros_like(values)

    # print rear rows first so the door ends up at the bottom
    order = np.argsort(np.unique(ys))[::-1]
    for row in norm[order]:
        print("  " + "".join(
            SHADES[min(int(v * len(SHADES)), len(SHADES) - 1)] * 2
            for v in row))
    print(f"\n  nonuniformity {scan.metric_percent:.3f} %  "
          f"class {scan.simulator_class}  "
          f"(door reflectance {door_reflectance:g}, "
          f"DUT current span {lo * 1e3:.2f}..{hi * 1e3:.2f} mA)")


if __name__ == "__main__":
    args = sys.argv[1:]
    n = int(args[0]) if args else 16
    rho = float(args[1]) if len(args) > 1 else 0.90
    render(n, rho)
