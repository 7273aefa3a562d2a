"""Photon-number laws of the three light states, and what a lossy channel does to them."""

import numpy as np

from retinaprobe import apply_loss, coherent, fock, thermal

np.set_printoptions(precision=4, suppress=True)

# Same mean photon number, very different spreads.
for d in (fock(5), coherent(5.0), thermal(5.0)):
    print(f"{d.kind.value:9s} mean={d.mean():.4f} var={d.variance():.4f} cutoff={d.cutoff}")

# A single photon through a 50/50 splitter: kept or lost with equal odds.
print("fock(1), u=0.5 ->", apply_loss(fock(1), 0.5).probs)

# Binomial thinning keeps coherent light coherent and thermal light thermal.
out = apply_loss(thermal(4.0), 0.25)
print("thermal(4) thinned to u=0.25 vs thermal(1):",
      np.abs(out.probs[:20] - thermal(1.0).probs[:20]).max())

# A Fock state does not stay Fock; exactly it becomes binomial, while the
# Poisson-mapped mode replaces it by a coherent law with the same mean.
exact = apply_loss(fock(10), 0.5)
mapped = apply_loss(fock(10), 0.5, mode="paper_poisson")
print("fock(10) after u=0.5, exact   :", exact.probs[:11])
print("fock(10) after u=0.5, Poisson :", mapped.probs[:11])
print("variances:", exact.variance(), mapped.variance())
