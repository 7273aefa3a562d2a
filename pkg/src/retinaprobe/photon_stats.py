"""Photon-number distributions of Fock, coherent and thermal light, and the
beam-splitter loss channel acting on them."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .numerics import binomial_pmf

__all__ = [
    "DEFAULT_EPS_TRUNC",
    "StateKind",
    "LossMode",
    "PhotonDistribution",
    "LossChannel",
    "fock",
    "coherent",
    "thermal",
    "make_state",
    "apply_loss",
]

DEFAULT_EPS_TRUNC = 1e-12


class StateKind(str, enum.Enum):
    FOCK = "fock"
    COHERENT = "coherent"
    THERMAL = "thermal"
    TRANSFORMED = "transformed"


class LossMode(str, enum.Enum):
    EXACT = "exact"
    PAPER_POISSON = "paper_poisson"


@dataclass(frozen=True)
class PhotonDistribution:
    """Truncated photon-number probabilities ``probs[n]``.

    The vector is not renormalized after truncation; ``tail_mass_bound``
    records the probability that was cut away.
    """

    probs: np.ndarray
    mean_photons: float
    kind: StateKind
    tail_mass_bound: float = 0.0

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("probs must be a non-empty vector")
        if np.any(p < -1e-15) or np.any(p > 1 + 1e-15):
            raise ValueError("probabilities must lie in [0, 1]")
        total = p.sum()
        if total > 1 + 1e-12 or total < 1 - self.tail_mass_bound - 1e-12:
            raise ValueError(
                f"mass {total!r} inconsistent with tail bound {self.tail_mass_bound!r}"
            )
        if self.kind == StateKind.FOCK and (np.count_nonzero(p) != 1 or p.max() != 1.0):
            raise ValueError("a Fock state has exactly one nonzero probability, equal to 1")

    @property
    def cutoff(self) -> int:
        """Largest photon number carried."""
        return self.probs.size - 1

    @property
    def total_mass(self) -> float:
        return float(self.probs.sum())

    def mean(self) -> float:
        return float(np.arange(self.probs.size) @ self.probs)

    def variance(self) -> float:
        n = np.arange(self.probs.size)
        m = self.mean()
        return float(((n - m) ** 2) @ self.probs)


@dataclass(frozen=True)
class LossChannel:
    """Beam splitter with vacuum in the unused input port; ``u`` is the
    transmission parameter."""

    u: float

    def __post_init__(self):
        if not 0.0 <= self.u <= 1.0:
            raise ValueError(f"transmission u must lie in [0, 1], got {self.u}")


def _check_eps(eps_trunc):
    if not 0.0 < eps_trunc < 1.0:
        raise ValueError(f"eps_trunc must lie in (0, 1), got {eps_trunc}")


def fock(n: int) -> PhotonDistribution:
    if n < 0 or int(n) != n:
        raise ValueError(f"photon number must be a non-negative integer, got {n}")
    n = int(n)
    probs = np.zeros(n + 1)
    probs[n] = 1.0
    return PhotonDistribution(probs, float(n), StateKind.FOCK, 0.0)


def _truncate(log_pmf, eps_trunc, start_guess):
    """Evaluate a pmf from its log until the remaining tail is below eps."""
    size = max(int(start_guess), 16)
    while True:
        probs = np.exp(log_pmf(np.arange(size)))
        csum = np.cumsum(probs)
        hits = np.nonzero(csum >= 1.0 - eps_trunc)[0]
        if hits.size:
            cut = int(hits[0])
            probs = probs[: cut + 1]
            return probs, max(0.0, 1.0 - float(probs.sum()))
        size *= 2


def coherent(mean: float, eps_trunc: float = DEFAULT_EPS_TRUNC) -> PhotonDistribution:
    """Poisson photon statistics of a coherent state with mean ``mean``."""
    if mean < 0:
        raise ValueError(f"mean photon number must be >= 0, got {mean}")
    _check_eps(eps_trunc)
    if mean == 0:
        return PhotonDistribution(np.array([1.0]), 0.0, StateKind.COHERENT, 0.0)
    logm = math.log(mean)
    probs, tail = _truncate(
        lambda n: n * logm - mean - special.gammaln(n + 1.0),
        eps_trunc,
        mean + 12 * math.sqrt(mean) + 20,
    )
    return PhotonDistribution(probs, float(mean), StateKind.COHERENT, tail)


def thermal(mean: float, eps_trunc: float = DEFAULT_EPS_TRUNC) -> PhotonDistribution:
    """Bose-Einstein photon statistics ``mean^n / (1 + mean)^(n + 1)``."""
    if mean < 0:
        raise ValueError(f"mean photon number must be >= 0, got {mean}")
    _check_eps(eps_trunc)
    if mean == 0:
        return PhotonDistribution(np.array([1.0]), 0.0, StateKind.THERMAL, 0.0)
    log_ratio = math.log(mean) - math.log1p(mean)
    probs, tail = _truncate(
        lambda n: n * log_ratio - math.log1p(mean),
        eps_trunc,
        math.log(eps_trunc) / log_ratio + 2,
    )
    return PhotonDistribution(probs, float(mean), StateKind.THERMAL, tail)


def make_state(kind, mean, eps_trunc: float = DEFAULT_EPS_TRUNC) -> PhotonDistribution:
    kind = StateKind(kind)
    if kind is StateKind.FOCK:
        if float(mean) != int(mean):
            raise ValueError(f"Fock state needs an integer photon number, got {mean}")
        return fock(int(mean))
    if kind is StateKind.COHERENT:
        return coherent(mean, eps_trunc)
    if kind is StateKind.THERMAL:
        return thermal(mean, eps_trunc)
    raise ValueError(f"cannot construct a state of kind {kind.value!r}")


def _thinning_matrix(cutoff: int, u: float) -> np.ndarray:
    # column n holds Binomial(n, u) over m = 0..cutoff
    mat = np.zeros((cutoff + 1, cutoff + 1))
    for n in range(cutoff + 1):
        mat[: n + 1, n] = binomial_pmf(n, u)
    return mat


def apply_loss(
    dist: PhotonDistribution,
    channel: LossChannel | float,
    mode: LossMode | str = LossMode.EXACT,
    eps_trunc: float = DEFAULT_EPS_TRUNC,
) -> PhotonDistribution:
    """Photon statistics at the transmitted port of a lossy beam splitter.

    ``LossMode.EXACT`` applies binomial thinning with survival probability
    ``u``. ``LossMode.PAPER_POISSON`` replaces a Fock input of ``n`` photons
    by a Poisson law of mean ``u * n``; other inputs are thinned exactly.
    """
    if not isinstance(channel, LossChannel):
        channel = LossChannel(float(channel))
    mode = LossMode(mode)
    u = channel.u
    out_mean = u * dist.mean_photons

    if mode is LossMode.PAPER_POISSON and dist.kind is StateKind.FOCK:
        out = coherent(out_mean, eps_trunc)
        return PhotonDistribution(out.probs, out_mean, StateKind.TRANSFORMED, out.tail_mass_bound)

    if u == 1.0:
        return dist
    probs = _thinning_matrix(dist.cutoff, u) @ dist.probs
    probs = np.clip(probs, 0.0, 1.0)
    # drop trailing entries that are numerically empty
    nz = np.nonzero(probs > 0)[0]
    keep = int(nz[-1]) + 1 if nz.size else 1
    tail = dist.tail_mass_bound + float(probs[keep:].sum())
    probs = probs[:keep]
    tail = max(tail, 1.0 - float(probs.sum()), 0.0)
    kind = dist.kind if dist.kind in (StateKind.COHERENT, StateKind.THERMAL) else StateKind.TRANSFORMED
    return PhotonDistribution(probs, out_mean, kind, tail)
