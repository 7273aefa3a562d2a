"""The grid engine's output law next to a Monte-Carlo histogram of the same network."""

import math

import numpy as np

from retinaprobe import NetworkSpec, fock, network_output, rod_output, RodParams, thermal
from retinaprobe.mc_oracle import histogram_tv, sample_network, sample_rod

rod = RodParams()

# One rod lit by a single photon: two Gaussian bumps, 60/40 by eta = 0.4.
law = rod_output(fock(1), rod)
batch = sample_rod(fock(1), rod, 10**6, seed=1)
print(f"rod mean: grid {law.mean():.5f}  MC {batch.values.mean():.5f}  exact {0.4 * 0.7:.5f}")

# Two weighted rods into a thresholded ganglion cell. The output has an
# atom at F = 0 (the cell stays silent) plus a density above it.
spec = NetworkSpec.two_layer([0.5, 0.35])
law = network_output(spec, thermal(1.0))
mc = sample_network(spec, thermal(1.0), 10**7, seed=2)
p = law.atom_mass
z = (mc.zero_fraction - p) / math.sqrt(p * (1 - p) / mc.count)
print(f"silent probability: grid {p:.5f}  MC {mc.zero_fraction:.5f}  (z = {z:+.2f})")
print(f"total-variation distance on grid-step bins: {histogram_tv(mc, law):.4f}")

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 3.5))
    pos = mc.values[mc.values > 0]
    ax.hist(pos, bins=400, density=True, alpha=0.4, label="Monte Carlo")
    ax.plot(law.grid, law.density / (1 - p), lw=1, label="grid engine")
    ax.set_xlabel("F (given F > 0)")
    ax.set_xlim(0, np.quantile(pos, 0.999))
    ax.legend()
    fig.tight_layout()
    fig.savefig("rod_law_vs_mc.png", dpi=120)
    print("wrote rod_law_vs_mc.png")
except ImportError:
    pass
