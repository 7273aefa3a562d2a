"""From a Fisher matrix to the error ellipse: eigen-axes, K and area."""

import numpy as np

from retinaprobe import NetworkSpec, crlb, ellipsoid, fisher_matrix, fock, thermal

spec = NetworkSpec.two_layer([0.6, 0.42])
for photons in (fock(1), thermal(1.0)):
    info = fisher_matrix(spec, photons)
    cov = crlb(info)
    rep = ellipsoid(cov, 0.99)
    print(f"\n{photons.kind.value}")
    print("Fisher matrix:\n", np.round(info.entries, 3))
    print("CRLB matrix:\n", np.round(cov, 5))
    print("eigenvalues:", rep.eigenvalues, " K =", round(rep.K, 4))
    print("semi-axes:", rep.axes)
    print("principal directions (columns):\n", np.round(rep.eigenvectors, 4))
    print(f"area with K: {rep.volume_k_scaled:.5g}   without K: {rep.volume_paper_eq16:.5g}")

# K only rescales, so ratios between states do not depend on the convention.
a = ellipsoid(crlb(fisher_matrix(spec, thermal(1.0))))
b = ellipsoid(crlb(fisher_matrix(spec, fock(1))))
print("\nthermal/fock area ratio:", a.volume_k_scaled / b.volume_k_scaled, a.volume_paper_eq16 / b.volume_paper_eq16)
