"""Stochastic retina model: photon statistics -> isomerizations -> rod
photocurrents -> weighted ReLU layers -> ganglion output law."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .mixed import EPS_NORM, MixedDistribution, relu_output, weighted_sum
from .numerics import GridSpec, binomial_pmf, log_binomial, normal_cdf
from .photon_stats import DEFAULT_EPS_TRUNC, PhotonDistribution

__all__ = [
    "DEFAULT_STEP",
    "RodParams",
    "CountDistribution",
    "BipolarLayer",
    "NetworkSpec",
    "GridCoverageError",
    "isomerization_given_n",
    "isomerization_dist",
    "isomerization_dist_correlated",
    "photocurrent_density",
    "rod_grid",
    "rod_output",
    "output_step",
    "network_output",
]

# pA; resolves sigma_D = 0.15 pA with 75 nodes per standard deviation
DEFAULT_STEP = 0.002
# Gaussian components are evaluated within this many SDs of their mean
_WINDOW_SD = 12.0


class GridCoverageError(ValueError):
    """The requested grid cuts off more than ``EPS_NORM`` of a rod law."""


@dataclass(frozen=True)
class RodParams:
    """Rod photocurrent model; currents in pA."""

    sigma_D: float = 0.15
    sigma_A: float = 0.5
    A0_bar: float = 0.7
    eta: float = 0.4

    def __post_init__(self):
        if not self.sigma_D > 0:
            raise ValueError("sigma_D must be positive")
        if self.sigma_A < 0:
            raise ValueError("sigma_A must be non-negative")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must lie in [0, 1]")


@dataclass(frozen=True)
class CountDistribution:
    """Probabilities ``probs[k]`` of ``k`` isomerizations."""

    probs: np.ndarray
    tail_mass_bound: float = 0.0

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("probs must be a non-empty vector")

    def mean(self) -> float:
        return float(np.arange(self.probs.size) @ self.probs)

    def trimmed(self, eps: float = DEFAULT_EPS_TRUNC) -> "CountDistribution":
        """Drop the longest tail whose mass stays below ``eps``."""
        tail = np.cumsum(self.probs[::-1])[::-1]
        keep = int(np.count_nonzero(tail >= eps)) or 1
        keep = max(keep, 1)
        dropped = float(self.probs[keep:].sum())
        return CountDistribution(self.probs[:keep], self.tail_mass_bound + dropped)


@dataclass(frozen=True)
class BipolarLayer:
    """Middle layer of the three-layer network.

    ``groups[j]`` lists the rods feeding bipolar cell ``j``;
    ``rod_weights[i]`` scales rod ``i`` at its bipolar cell (default 1).
    """

    groups: tuple[tuple[int, ...], ...]
    threshold: float = 0.0
    rod_weights: tuple[float, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(tuple(int(i) for i in g) for g in self.groups))
        if self.rod_weights is not None:
            object.__setattr__(self, "rod_weights", tuple(float(v) for v in self.rod_weights))


@dataclass(frozen=True)
class NetworkSpec:
    """Topology and parameters of the retina network.

    ``weights`` are the ganglion input weights: one per rod for the
    two-layer network, one per bipolar cell when ``bipolar`` is set.
    ``ganglion_threshold`` is in the units of the weighted current (pA).
    """

    rods: tuple[RodParams, ...]
    weights: tuple[float, ...]
    ganglion_threshold: float = 0.1
    bipolar: BipolarLayer | None = None
    correlated_absorption: bool = False

    def __post_init__(self):
        object.__setattr__(self, "rods", tuple(self.rods))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if not self.rods:
            raise ValueError("network needs at least one rod")
        for w in self.weights:
            if not math.isfinite(w) or w < 0:
                raise ValueError(f"weights must be finite and non-negative, got {w}")
        if self.bipolar is None:
            if len(self.weights) != len(self.rods):
                raise ValueError("two-layer network needs one weight per rod")
        else:
            b = self.bipolar
            if len(self.weights) != len(b.groups):
                raise ValueError("three-layer network needs one weight per bipolar cell")
            flat = sorted(i for g in b.groups for i in g)
            if flat != list(range(len(self.rods))):
                raise ValueError("bipolar groups must partition the rods")
            if b.rod_weights is not None:
                if len(b.rod_weights) != len(self.rods):
                    raise ValueError("need one bipolar input weight per rod")
                if any(v < 0 or not math.isfinite(v) for v in b.rod_weights):
                    raise ValueError("bipolar input weights must be finite and non-negative")

    @classmethod
    def two_layer(cls, weights: Sequence[float], rod: RodParams | None = None, **kw) -> "NetworkSpec":
        rod = rod or RodParams()
        return cls(rods=(rod,) * len(weights), weights=tuple(weights), **kw)

    @classmethod
    def three_layer(
        cls,
        weights: Sequence[float],
        groups: Sequence[Sequence[int]],
        rod: RodParams | None = None,
        bipolar_threshold: float = 0.0,
        rod_weights: Sequence[float] | None = None,
        **kw,
    ) -> "NetworkSpec":
        rod = rod or RodParams()
        n_rods = sum(len(g) for g in groups)
        layer = BipolarLayer(tuple(map(tuple, groups)), bipolar_threshold, rod_weights and tuple(rod_weights))
        return cls(rods=(rod,) * n_rods, weights=tuple(weights), bipolar=layer, **kw)

    @property
    def n_weights(self) -> int:
        return len(self.weights)

    def with_weights(self, weights: Sequence[float]) -> "NetworkSpec":
        return replace(self, weights=tuple(weights))


def isomerization_given_n(n: int, eta: float) -> CountDistribution:
    """Binomial law of isomerizations produced by exactly ``n`` photons."""
    return CountDistribution(binomial_pmf(int(n), eta))


def _mix_counts(photons: PhotonDistribution, kernel) -> CountDistribution:
    out = np.zeros(photons.cutoff + 1)
    for n, pn in enumerate(photons.probs):
        if pn == 0.0:
            continue
        pk = kernel(n)
        out[: pk.size] += pn * pk
    return CountDistribution(out, photons.tail_mass_bound)


def isomerization_dist(photons: PhotonDistribution, eta: float) -> CountDistribution:
    """Isomerization count law for a photon-number distribution."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError("eta must lie in [0, 1]")
    return _mix_counts(photons, lambda n: binomial_pmf(n, eta))


def two_cell_conditional(n: int, eta: float) -> np.ndarray:
    """P(k | n) at the second of two cells sharing ``n`` photons.

    The first cell isomerizes ``q`` photons; the second draws from the
    remaining ``n - q``. Summed term by term over ``q``.
    """
    out = np.zeros(n + 1)
    if eta == 0.0:
        out[0] = 1.0
        return out
    if eta == 1.0:
        # the first cell takes every photon
        out[0] = 1.0
        return out
    le, l1e = math.log(eta), math.log1p(-eta)
    for k in range(n + 1):
        total = 0.0
        for q in range(n - k + 1):
            total += math.exp(
                log_binomial(n, q)
                + log_binomial(n - q, k)
                + (k + q) * le
                + (2 * (n - q) - k) * l1e
            )
        out[k] = total
    return out


def _depletion_conditional(n: int, eta: float, num_cells: int) -> np.ndarray:
    # photons reaching cell j: thinned by (1 - eta) at each earlier cell
    remaining = np.zeros(n + 1)
    remaining[n] = 1.0
    for _ in range(num_cells - 1):
        nxt = np.zeros(n + 1)
        for m, pm in enumerate(remaining):
            if pm:
                nxt[: m + 1] += pm * binomial_pmf(m, 1.0 - eta)
        remaining = nxt
    out = np.zeros(n + 1)
    for m, pm in enumerate(remaining):
        if pm:
            out[: m + 1] += pm * binomial_pmf(m, eta)
    return out


def isomerization_dist_correlated(
    photons: PhotonDistribution, eta: float, num_cells: int = 2
) -> CountDistribution:
    """Isomerization law of the last of ``num_cells`` rods that deplete a
    shared photon pool in order."""
    if num_cells < 2:
        raise ValueError("correlated absorption needs at least two cells")
    if not 0.0 <= eta <= 1.0:
        raise ValueError("eta must lie in [0, 1]")
    if num_cells == 2:
        return _mix_counts(photons, lambda n: two_cell_conditional(n, eta))
    return _mix_counts(photons, lambda n: _depletion_conditional(n, eta, num_cells))


def _component_params(counts: CountDistribution, rod: RodParams, weight: float):
    k = np.arange(counts.probs.size)
    means = weight * k * rod.A0_bar
    sds = weight * np.sqrt(rod.sigma_D**2 + k * rod.sigma_A**2)
    return counts.probs, means, sds


def rod_grid(
    counts: CountDistribution, rod: RodParams, step: float = DEFAULT_STEP, weight: float = 1.0
) -> GridSpec:
    """Default grid for ``weight * A``: ``[-2, k_max A0 + 4]`` pA widened to
    eight standard deviations around every carried component."""
    k = np.arange(counts.probs.size)
    means = k * rod.A0_bar
    sds = np.sqrt(rod.sigma_D**2 + k * rod.sigma_A**2)
    lo = min(-2.0, float(np.min(means - 8.0 * sds)))
    hi = max(means[-1] + 4.0, float(np.max(means + 8.0 * sds)))
    return GridSpec.covering(weight * lo, weight * hi, step)


def photocurrent_density(
    counts: CountDistribution, rod: RodParams, grid: GridSpec, weight: float = 1.0
) -> MixedDistribution:
    """Gaussian-mixture law of the rod current, optionally scaled by ``weight``.

    Component ``k`` has mean ``k * A0_bar`` and variance
    ``sigma_D**2 + k * sigma_A**2``; with ``weight`` the law is that of
    ``weight * A``, evaluated directly on ``grid`` without interpolation.
    """
    if not weight > 0:
        raise ValueError("photocurrent_density needs a positive weight")
    probs, means, sds = _component_params(counts, rod, weight)
    lo, hi = grid.start, grid.stop
    lost = float(np.sum(probs * (normal_cdf(lo, means, sds) + 1.0 - normal_cdf(hi, means, sds))))
    if lost > EPS_NORM:
        raise GridCoverageError(
            f"grid [{lo:.4g}, {hi:.4g}] truncates {lost:.3g} of the photocurrent law"
        )
    x = grid.points
    dens = np.zeros_like(x)
    h = grid.step
    for p, m, s in zip(probs, means, sds):
        if p < 1e-300:
            continue
        i0 = max(int((m - _WINDOW_SD * s - lo) / h), 0)
        i1 = min(int((m + _WINDOW_SD * s - lo) / h) + 2, x.size)
        if i1 <= i0:
            continue
        z = (x[i0:i1] - m) / s
        dens[i0:i1] += p * np.exp(-0.5 * z * z) / (math.sqrt(2 * math.pi) * s)
    return MixedDistribution(0.0, grid.start, grid.step, dens)


def rod_output(
    photons: PhotonDistribution,
    rod: RodParams,
    grid: GridSpec | None = None,
    *,
    weight: float = 1.0,
    counts: CountDistribution | None = None,
) -> MixedDistribution:
    """Photocurrent law of one rod lit by ``photons``."""
    if counts is None:
        counts = isomerization_dist(photons, rod.eta)
    counts = counts.trimmed()
    if grid is None:
        grid = rod_grid(counts, rod, DEFAULT_STEP * weight, weight)
    return photocurrent_density(counts, rod, grid, weight)


def output_step(spec: NetworkSpec, base_step: float = DEFAULT_STEP) -> float:
    """Grid step for the ganglion input ``sum w_i X_i``.

    ``base_step`` pA scaled by the smallest positive weight, then shrunk so
    the ganglion threshold falls on a grid node (thresholds smaller than the
    step are left off-node and handled by interpolation).
    """
    if spec.bipolar is None:
        scales = [w for w in spec.weights if w > 0]
    else:
        rw = spec.bipolar.rod_weights or (1.0,) * len(spec.rods)
        scales = [
            w * rw[i]
            for w, g in zip(spec.weights, spec.bipolar.groups)
            for i in g
            if w * rw[i] > 0
        ]
    h = base_step * (min(scales) if scales else 1.0)
    t = abs(spec.ganglion_threshold)
    if h <= t < 1e3:
        h = t / math.ceil(t / h - 1e-9)
    return h


def _rod_counts(spec: NetworkSpec, photons: PhotonDistribution):
    cache = {}
    out = []
    for rod in spec.rods:
        if rod.eta not in cache:
            if spec.correlated_absorption and len(spec.rods) > 1:
                c = isomerization_dist_correlated(photons, rod.eta, len(spec.rods))
            else:
                c = isomerization_dist(photons, rod.eta)
            cache[rod.eta] = c.trimmed()
        out.append(cache[rod.eta])
    return out


def _scaled_rod(counts, rod, scale, step):
    """Law of ``scale * A`` on nodes that are multiples of ``step``."""
    if scale == 0:
        return MixedDistribution.point(0.0, step)
    grid = rod_grid(counts, rod, step, scale)
    return photocurrent_density(counts, rod, grid, scale)


def network_output(
    spec: NetworkSpec,
    photons: PhotonDistribution,
    grid_step: float | None = None,
    *,
    base_step: float = DEFAULT_STEP,
) -> MixedDistribution:
    """Law of the ganglion output ``F``.

    ``grid_step`` fixes the output grid in units of ``F``; callers comparing
    laws at nearby weights (finite differences) must pass the same value.
    """
    h = grid_step if grid_step is not None else output_step(spec, base_step)
    counts = _rod_counts(spec, photons)

    if spec.bipolar is None:
        terms = [
            (_scaled_rod(c, rod, w, h), 1.0) for c, rod, w in zip(counts, spec.rods, spec.weights)
        ]
        return relu_output(weighted_sum(terms, h), spec.ganglion_threshold)

    layer = spec.bipolar
    rw = layer.rod_weights or (1.0,) * len(spec.rods)
    bipolar_terms = []
    for w, group in zip(spec.weights, layer.groups):
        if w == 0:
            bipolar_terms.append((MixedDistribution.point(0.0, h), 1.0))
            continue
        hb = h / w
        inputs = [(_scaled_rod(counts[i], spec.rods[i], rw[i], hb), 1.0) for i in group]
        b = relu_output(weighted_sum(inputs, hb), layer.threshold)
        bipolar_terms.append((b, w))
    return relu_output(weighted_sum(bipolar_terms, h), spec.ganglion_threshold)
