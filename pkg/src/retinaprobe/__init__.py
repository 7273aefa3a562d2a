"""Quantum-light probing of a stochastic retina model.

Photon statistics, a rod/bipolar/ganglion network evaluated on a grid,
Fisher information and error ellipsoids for the network weights, and a
Monte-Carlo sampler that checks the grid engine.
"""

__version__ = "0.1.0"

from .photon_stats import (  # noqa: E402
    LossChannel,
    LossMode,
    PhotonDistribution,
    StateKind,
    apply_loss,
    coherent,
    fock,
    make_state,
    thermal,
)
from .mixed import MixedDistribution, convolve, relu_output, weighted_sum  # noqa: E402
from .retina_net import (  # noqa: E402
    BipolarLayer,
    NetworkSpec,
    RodParams,
    isomerization_dist,
    isomerization_dist_correlated,
    network_output,
    rod_output,
)
from .metrology import (  # noqa: E402
    FisherMatrix,
    MetrologyConfig,
    crlb,
    ellipsoid,
    fisher_matrix,
    fisher_scalar,
)
from .mc_oracle import mc_fisher, sample_network  # noqa: E402

__all__ = [
    "LossChannel", "LossMode", "PhotonDistribution", "StateKind", "apply_loss",
    "coherent", "fock", "make_state", "thermal",
    "MixedDistribution", "convolve", "relu_output", "weighted_sum",
    "BipolarLayer", "NetworkSpec", "RodParams", "isomerization_dist",
    "isomerization_dist_correlated", "network_output", "rod_output",
    "FisherMatrix", "MetrologyConfig", "crlb", "ellipsoid", "fisher_matrix", "fisher_scalar",
    "mc_fisher", "sample_network",
]
