"""Ellipse area over the (w1, w2) plane for two rods and a single photon.

The diagonal w1 = w2 is left blank: with identical rods the two weights are
exchangeable there and the Fisher matrix is singular.
"""

import numpy as np

from retinaprobe import NetworkSpec, make_state
from retinaprobe.metrology import MetrologyConfig, evaluate_point

axis = np.linspace(0.15, 1.0, 8)
cfg = MetrologyConfig()
for kind in ("fock", "thermal"):
    grid = np.full((axis.size, axis.size), np.nan)
    for i, w1 in enumerate(axis):
        for j, w2 in enumerate(axis):
            if i == j:
                continue
            row = evaluate_point(kind, w1, NetworkSpec.two_layer([w1, w2]), make_state(kind, 1), cfg)
            grid[i, j] = row.value
    print(f"\n{kind}: ellipse area, rows w1, columns w2")
    print("       " + " ".join(f"{w:7.3f}" for w in axis))
    for w1, line in zip(axis, grid):
        print(f"{w1:6.3f} " + " ".join("    ---" if np.isnan(v) else f"{v:7.3g}" for v in line))
