"""Short-term stability sweep: open vs closed loop across seeds and levels.

Prints one row per (level, seed) pair plus per-level medians, the same
numbers the release gate checks in aggregate. Useful when retuning drift
or regulator defaults.

Usage: python3 scripts/sti_sweep.py [n_seeds] [level ...]
"""

from __future__ import annotations

import sys

import numpy as np

sys.path.insert(0, "src")

from solartwin.config import TwinConfig
from solartwin.control import run_sti
from solartwin.system import Testbed


def sweep(levels: list[float], n_seeds: int) -> None:
    bench = Testbed(TwinConfig())
    for level in levels:
        opens, closeds = [], []
        print(f"level {level:g} W/m^2")
        for seed in range(n_seeds):
            off = run_sti(bench, level_w_m2=level, feedback=False, seed=seed)
            on = run_sti(bench, level_w_m2=level, feedback=True, seed=seed)
            opens.append(off.metric_percent)
            closeds.append(on.metric_percent)
            print(f"  seed {seed:3d}  open {off.metric_percent:6.3f} %  "
                  f"closed {on.metric_percent:6.3f} %  "
                  f"({off.simulator_class} -> {on.simulator_class})")
        print(f"  median    open {np.median(opens):6.3f} %  "
              f"closed {np.median(closeds):6.3f} %\n")


if __name__ == "__main__":
    args = sys.argv[1:]
    n = int(args[0]) if args else 10
    lvls = [float(a) for a in args[1:]] or [750.0]
    sweep(lvls, n)
