"""Monte-Carlo sampler of the generative retina model.

Used as an independent check on the grid engine: it never touches a
density, only draws photons, isomerizations and currents and pushes them
through the network. Draws are made in fixed-size chunks, each with its own
stream derived from ``(seed, chunk_index)``, so a batch is reproducible no
matter how chunks are distributed over workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mixed import MixedDistribution
from .photon_stats import PhotonDistribution
from .retina_net import NetworkSpec, RodParams

__all__ = [
    "CHUNK",
    "SampleBatch",
    "MCFisherEstimate",
    "chunk_rng",
    "sample_photons",
    "sample_rod",
    "sample_network",
    "mc_fisher",
    "histogram_tv",
]

CHUNK = 1 << 16


@dataclass(frozen=True)
class SampleBatch:
    seed: int
    count: int
    values: np.ndarray
    zero_count: int

    @property
    def zero_fraction(self) -> float:
        return self.zero_count / self.count


@dataclass(frozen=True)
class MCFisherEstimate:
    value: float
    stderr: float
    count: int
    delta: float
    insufficient: bool = False

    def agrees_with(self, reference: float, rel: float = 0.05, n_se: float = 3.0) -> bool:
        return abs(self.value - reference) <= max(rel * abs(reference), n_se * self.stderr)


def chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(chunk,))))


def _chunks(count: int):
    for c, lo in enumerate(range(0, count, CHUNK)):
        yield c, min(CHUNK, count - lo)


def sample_photons(photons: PhotonDistribution, size: int, rng: np.random.Generator) -> np.ndarray:
    cdf = np.cumsum(photons.probs)
    cdf /= cdf[-1]
    return np.searchsorted(cdf, rng.random(size), side="right")


def _currents(k: np.ndarray, rod: RodParams, z: np.ndarray) -> np.ndarray:
    return k * rod.A0_bar + np.sqrt(rod.sigma_D**2 + k * rod.sigma_A**2) * z


def _draw_chunk(spec: NetworkSpec, photons: PhotonDistribution, size: int, rng):
    """Rod currents for one chunk, shape (n_rods, size)."""
    n_rods = len(spec.rods)
    if spec.correlated_absorption and n_rods > 1:
        remaining = sample_photons(photons, size, rng)
        ks = []
        for rod in spec.rods:
            k = rng.binomial(remaining, rod.eta)
            remaining = remaining - k
            ks.append(k)
    else:
        ks = [rng.binomial(sample_photons(photons, size, rng), rod.eta) for rod in spec.rods]
    z = rng.standard_normal((n_rods, size))
    return np.vstack([_currents(k, rod, z[i]) for i, (k, rod) in enumerate(zip(ks, spec.rods))])


def _ganglion_input(spec: NetworkSpec, currents: np.ndarray, weights) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if spec.bipolar is None:
        return w @ currents
    layer = spec.bipolar
    rw = np.asarray(layer.rod_weights or (1.0,) * len(spec.rods))
    out = np.zeros(currents.shape[1])
    for wj, group in zip(w, layer.groups):
        g = list(group)
        b = np.maximum(rw[g] @ currents[g] - layer.threshold, 0.0)
        out += wj * b
    return out


def sample_rod(photons: PhotonDistribution, rod: RodParams, count: int, seed: int) -> SampleBatch:
    """Samples of a single rod's photocurrent (pA)."""
    out = np.empty(count)
    pos = 0
    for c, m in _chunks(count):
        rng = chunk_rng(seed, c)
        k = rng.binomial(sample_photons(photons, m, rng), rod.eta)
        out[pos : pos + m] = _currents(k, rod, rng.standard_normal(m))
        pos += m
    return SampleBatch(seed, count, out, 0)


def _sample_inputs(spec, photons, count, seed, weight_sets):
    """Ganglion inputs for several weight vectors from the same draws."""
    outs = [np.empty(count) for _ in weight_sets]
    pos = 0
    for c, m in _chunks(count):
        currents = _draw_chunk(spec, photons, m, chunk_rng(seed, c))
        for o, w in zip(outs, weight_sets):
            o[pos : pos + m] = _ganglion_input(spec, currents, w)
        pos += m
    return outs


def sample_network(
    spec: NetworkSpec, photons: PhotonDistribution, count: int, seed: int = 0
) -> SampleBatch:
    """Samples of the ganglion output ``F``; exact zeros come from the ReLU."""
    if count < 1:
        raise ValueError("count must be >= 1")
    (s,) = _sample_inputs(spec, photons, count, seed, [spec.weights])
    f = s - spec.ganglion_threshold
    clipped = f <= 0
    f[clipped] = 0.0
    return SampleBatch(seed, count, f, int(clipped.sum()))


def histogram_tv(batch: SampleBatch, law: MixedDistribution) -> float:
    """Total-variation distance between samples and a grid law.

    One bin per grid node, ``[x_i - h/2, x_i + h/2)``, plus a cell for the
    atom. Bin masses of the law use trapezoid weights, so an edge node (a
    jump at the start of the grid) only owns its right half-cell.
    """
    h = law.grid_step
    d = law.density
    n = batch.count
    is_atom = batch.values == law.atom_at
    p_atom_mc = is_atom.sum() / n
    if d.size == 0:
        return 0.5 * float(abs(p_atom_mc - law.atom_mass) + (1.0 - p_atom_mc))
    x = law.grid
    edges = np.concatenate(([x[0] - 0.5 * h], x + 0.5 * h))
    counts, _ = np.histogram(batch.values[~is_atom], bins=edges)
    p_mc = counts / n
    p_law = h * d
    p_law[0] *= 0.5
    p_law[-1] *= 0.5
    outside = max(1.0 - p_atom_mc - p_mc.sum(), 0.0)
    tv = abs(p_atom_mc - law.atom_mass) + np.abs(p_mc - p_law).sum() + outside
    return 0.5 * float(tv)


def mc_fisher(
    spec: NetworkSpec,
    photons: PhotonDistribution,
    i: int | None,
    delta: float,
    count: int,
    seed: int = 0,
    *,
    n_bins: int = 1000,
    n_batches: int = 20,
    richardson: bool = True,
    se_tol: float | None = None,
) -> MCFisherEstimate:
    """Monte-Carlo Fisher information along weight ``i``.

    ``i=None`` moves all weights together (the tied single-weight case).
    Outputs at ``w +/- delta`` are drawn from common random numbers and
    binned: the atom at ``F = 0`` is a cell of its own, the rest goes into
    equal-probability bins. Per step the estimate is the Fisher information
    of the binned law, ``sum (p+ - p-)^2 / (4 delta^2 p)``, with the
    sampling variance of ``p+ - p-`` subtracted. With ``richardson`` the
    O(delta^2) bias is removed by combining steps ``delta`` and
    ``2 delta``. The standard error comes from ``n_batches`` disjoint
    sub-samples. When the relative standard error exceeds ``se_tol`` the
    estimate is returned with ``insufficient=True``.
    """
    w = np.asarray(spec.weights, dtype=float)
    direction = np.ones_like(w) if i is None else np.eye(w.size)[i]
    steps = (delta, 2 * delta) if richardson else (delta,)
    settings = [w + sgn * d * direction for d in steps for sgn in (1, -1)]
    if any(np.any(x < 0) for x in settings):
        raise ValueError("delta drives a weight negative")
    t = spec.ganglion_threshold
    outs = [s - t for s in _sample_inputs(spec, photons, count, seed, settings)]

    pooled = np.concatenate([f[f > 0] for f in outs[:2]])
    if pooled.size < n_bins:
        raise ValueError("too few supra-threshold samples for the requested bins")
    inner = np.quantile(pooled, np.linspace(0, 1, n_bins + 1)[1:-1])
    edges = np.unique(np.concatenate(([0.0], inner)))
    n_cells = edges.size + 1
    # cell 0 holds F <= 0 (the atom); cells 1.. are bins above 0
    cells = [np.where(f <= 0, 0, np.searchsorted(edges, f, side="right")) for f in outs]

    def binned(cp, cm, d):
        n = cp.size
        np_ = np.bincount(cp, minlength=n_cells)
        nm = np.bincount(cm, minlength=n_cells)
        moved = cp != cm
        # samples in a cell for exactly one of the two weight settings
        one_side = np.bincount(cp[moved], minlength=n_cells) + np.bincount(cm[moved], minlength=n_cells)
        p = 0.5 * (np_ + nm) / n
        dp = (np_ - nm) / n
        var_dp = np.maximum(one_side / n - dp**2, 0.0) / n
        ok = p > 0
        return float(np.sum((dp[ok] ** 2 - var_dp[ok]) / p[ok]) / (4 * d**2))

    def estimate(idx):
        i1 = binned(cells[0][idx], cells[1][idx], delta)
        if not richardson:
            return i1
        i2 = binned(cells[2][idx], cells[3][idx], 2 * delta)
        return (4 * i1 - i2) / 3

    value = estimate(slice(None))
    parts = np.array_split(np.arange(count), n_batches)
    sub = np.array([estimate(idx) for idx in parts])
    stderr = float(sub.std(ddof=1) / math.sqrt(n_batches))
    short = se_tol is not None and not stderr <= se_tol * abs(value)
    return MCFisherEstimate(value, stderr, count, delta, short)
