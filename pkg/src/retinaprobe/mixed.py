"""Mixed discrete/continuous laws on a uniform grid.

A :class:`MixedDistribution` is a point mass (the *atom*) plus a density
tabulated on ``grid_start + i * grid_step``. The density is taken to vanish
outside the tabulated range, so a nonzero first value is a jump: ReLU
outputs start at ``F = 0`` with the right limit ``f(0+)`` stored at index 0
while the probability of ``F == 0`` lives in the atom. Every integral uses
the trapezoid rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.signal import fftconvolve

from .numerics import trapezoid

__all__ = [
    "EPS_NORM",
    "MixedDistribution",
    "MassConservationError",
    "scale",
    "convolve",
    "weighted_sum",
    "relu_output",
]

EPS_NORM = 1e-6
# relative tolerance for treating two grid coordinates as the same node
_ALIGN_TOL = 1e-7


class MassConservationError(ValueError):
    """A law lost or gained more probability than the configured tolerance."""


@dataclass(frozen=True)
class MixedDistribution:
    atom_mass: float
    grid_start: float
    grid_step: float
    density: np.ndarray
    atom_at: float = 0.0

    def __post_init__(self):
        d = np.asarray(self.density, dtype=float)
        # FFT round-off leaves values of order 1e-18 below zero
        d = np.where(d < 0.0, 0.0, d)
        d.setflags(write=False)
        object.__setattr__(self, "density", d)
        if not self.grid_step > 0:
            raise ValueError("grid_step must be positive")
        if not -1e-12 <= self.atom_mass <= 1 + 1e-12:
            raise ValueError(f"atom mass {self.atom_mass} outside [0, 1]")

    @classmethod
    def point(cls, at: float = 0.0, step: float = 1.0) -> "MixedDistribution":
        return cls(1.0, 0.0, step, np.zeros(0), atom_at=at)

    @property
    def grid(self) -> np.ndarray:
        return self.grid_start + self.grid_step * np.arange(self.density.size)

    @property
    def grid_stop(self) -> float:
        return self.grid_start + self.grid_step * max(self.density.size - 1, 0)

    def density_mass(self) -> float:
        return trapezoid(self.density, self.grid_step)

    def total_mass(self) -> float:
        return self.atom_mass + self.density_mass()

    def mass_defect(self) -> float:
        return abs(self.total_mass() - 1.0)

    def check_mass(self, tol: float = EPS_NORM) -> "MixedDistribution":
        if self.mass_defect() > tol:
            raise MassConservationError(
                f"total mass {self.total_mass():.12g} deviates from 1 by more than {tol:g}"
            )
        return self

    def mean(self) -> float:
        x = self.grid
        return self.atom_mass * self.atom_at + trapezoid(x * self.density, self.grid_step)

    def variance(self) -> float:
        m = self.mean()
        x = self.grid
        return self.atom_mass * (self.atom_at - m) ** 2 + trapezoid(
            (x - m) ** 2 * self.density, self.grid_step
        )

    def pdf(self, x) -> np.ndarray:
        """Linearly interpolated density; zero off the tabulated range."""
        if self.density.size == 0:
            return np.zeros_like(np.asarray(x, dtype=float))
        return np.interp(x, self.grid, self.density, left=0.0, right=0.0)

    def cdf(self, x: float) -> float:
        """P(X <= x) with the atom counted when ``atom_at <= x``."""
        out = self.atom_mass if self.atom_at <= x else 0.0
        return out + _mass_below(self, x)


def _mass_below(dist: MixedDistribution, t: float) -> float:
    """Trapezoid integral of the density over ``(-inf, t]``."""
    d = dist.density
    if d.size == 0 or t <= dist.grid_start:
        return 0.0
    if t >= dist.grid_stop:
        return dist.density_mass()
    h = dist.grid_step
    pos = (t - dist.grid_start) / h
    j = int(math.floor(pos + _ALIGN_TOL))
    frac = pos - j
    mass = trapezoid(d[: j + 1], h)
    if frac > _ALIGN_TOL:
        ft = d[j] + frac * (d[j + 1] - d[j])
        mass += 0.5 * frac * h * (d[j] + ft)
    return mass


def _is_integer(x: float) -> bool:
    return abs(x - round(x)) <= _ALIGN_TOL * max(1.0, abs(x))


def scale(dist: MixedDistribution, w: float, step: float | None = None) -> MixedDistribution:
    """Law of ``w * X`` for ``w >= 0``.

    Without ``step`` the change of variables is exact: the grid is stretched
    by ``w`` and the density divided by ``w``. With ``step`` the result is
    resampled onto nodes that are integer multiples of ``step``; when the
    stretched grid already lies on those nodes no interpolation happens.
    """
    if w < 0 or not math.isfinite(w):
        raise ValueError(f"weights must be finite and non-negative, got {w}")
    if w == 0:
        return MixedDistribution.point(0.0, step or dist.grid_step)
    stretched = MixedDistribution(
        dist.atom_mass,
        w * dist.grid_start,
        w * dist.grid_step,
        dist.density / w,
        atom_at=w * dist.atom_at,
    )
    if step is None:
        return stretched
    return resample(stretched, step)


def resample(dist: MixedDistribution, step: float) -> MixedDistribution:
    """Put ``dist`` on nodes ``i * step``; exact when already aligned."""
    if dist.density.size == 0:
        return MixedDistribution(dist.atom_mass, 0.0, step, dist.density, dist.atom_at)
    if abs(dist.grid_step - step) <= _ALIGN_TOL * step and _is_integer(dist.grid_start / step):
        start = round(dist.grid_start / step) * step
        return MixedDistribution(dist.atom_mass, start, step, dist.density, dist.atom_at)
    i0 = math.ceil(dist.grid_start / step - _ALIGN_TOL)
    i1 = math.floor(dist.grid_stop / step + _ALIGN_TOL)
    i0_lo = min(i0, i1)
    x = step * np.arange(i0_lo, i1 + 1)
    vals = dist.pdf(x)
    if dist.density[0] > 0 and i0 * step > dist.grid_start:
        # keep the jump at the left edge instead of dropping the sliver
        x = np.concatenate(([i0 - 1], np.arange(i0, i1 + 1))) * step
        vals = np.concatenate(([dist.density[0]], vals))
        i0_lo = i0 - 1
    return MixedDistribution(dist.atom_mass, i0_lo * step, step, vals, dist.atom_at)


def _conv_density(f: np.ndarray, g: np.ndarray, h: float) -> np.ndarray:
    """Trapezoid-rule convolution of two tabulated densities."""
    c = h * fftconvolve(f, g)
    # half weights at both ends of each overlap interval
    nf, ng = f.size, g.size
    m = np.arange(nf + ng - 1)
    ilo = np.maximum(0, m - ng + 1)
    ihi = np.minimum(nf - 1, m)
    c -= 0.5 * h * (f[ilo] * g[m - ilo] + f[ihi] * g[m - ihi])
    return c


def _accumulate(parts: Sequence[tuple[float, np.ndarray]], h: float):
    """Sum densities given as ``(start, values)`` on a common step."""
    parts = [(s, v) for s, v in parts if v.size]
    if not parts:
        return 0.0, np.zeros(0)
    idx = []
    for s, _ in parts:
        q = s / h
        if not _is_integer(q):
            raise ValueError("densities are not aligned to a common grid")
        idx.append(int(round(q)))
    lo = min(idx)
    hi = max(i + v.size for i, (_, v) in zip(idx, parts))
    out = np.zeros(hi - lo)
    for i, (_, v) in zip(idx, parts):
        out[i - lo : i - lo + v.size] += v
    return lo * h, out


def convolve(a: MixedDistribution, b: MixedDistribution) -> MixedDistribution:
    """Law of ``X + Y`` for independent ``X ~ a`` and ``Y ~ b``.

    Atoms multiply and their locations add; an atom of one law carries a
    shifted copy of the other density; the two densities convolve.
    """
    h = a.grid_step if a.density.size else b.grid_step
    if a.density.size and b.density.size:
        if abs(a.grid_step - b.grid_step) > _ALIGN_TOL * h:
            b = resample(b, h)
        a = resample(a, h)
        b = resample(b, h)
    parts = []
    if a.atom_mass > 0 and b.density.size:
        parts.append((b.grid_start + a.atom_at, a.atom_mass * b.density))
    if b.atom_mass > 0 and a.density.size:
        parts.append((a.grid_start + b.atom_at, b.atom_mass * a.density))
    if a.density.size and b.density.size:
        parts.append((a.grid_start + b.grid_start, _conv_density(a.density, b.density, h)))
    if (a.atom_at or b.atom_at) and parts:
        parts = [
            (s, v) if _is_integer(s / h) else _shift_onto(s, v, h) for s, v in parts
        ]
    start, dens = _accumulate(parts, h)
    return MixedDistribution(a.atom_mass * b.atom_mass, start, h, dens, atom_at=a.atom_at + b.atom_at)


def _shift_onto(start, values, h):
    d = resample(MixedDistribution(0.0, start, h, values), h)
    return d.grid_start, d.density


def weighted_sum(
    inputs: Iterable[tuple[MixedDistribution, float]], step: float | None = None
) -> MixedDistribution:
    """Law of ``sum_i w_i X_i`` over independent inputs.

    Each input is scaled onto a common grid (``step``, defaulting to the
    finest stretched step) and the results are folded with :func:`convolve`.
    """
    items = list(inputs)
    if not items:
        raise ValueError("weighted_sum needs at least one input")
    for _, w in items:
        if w < 0 or not math.isfinite(w):
            raise ValueError(f"weights must be finite and non-negative, got {w}")
    if step is None:
        steps = [w * d.grid_step for d, w in items if w > 0 and d.density.size]
        step = min(steps) if steps else items[0][0].grid_step
    out = None
    for dist, w in items:
        term = scale(dist, w, step)
        out = term if out is None else convolve(out, term)
    return out


def relu_output(dist: MixedDistribution, threshold: float) -> MixedDistribution:
    """Law of ``F = max(0, X - threshold)``.

    All probability at or below the threshold collapses onto the atom at
    ``F = 0``. Above it the density is the input density shifted by the
    threshold, tabulated from ``F = 0`` with ``f(0+)`` at index 0. A
    threshold between grid nodes needs interpolation; the interpolated
    density is rescaled to the mass left above the threshold.
    """
    h = dist.grid_step
    t = float(threshold)
    below = _mass_below(dist, t)
    if dist.atom_at <= t or dist.atom_mass == 0:
        atom_mass, atom_at = dist.atom_mass + below, 0.0
    else:
        if below > EPS_NORM:
            raise ValueError(
                "law would carry point masses both at 0 and above it; "
                "not representable as a single-atom mixed law"
            )
        atom_mass, atom_at = dist.atom_mass, dist.atom_at - t

    d = dist.density
    if d.size == 0 or t >= dist.grid_stop:
        return MixedDistribution(atom_mass, 0.0, h, np.zeros(0), atom_at=atom_at)
    if dist.grid_start >= t:
        # nothing clipped from the density: pure shift
        return MixedDistribution(atom_mass, dist.grid_start - t, h, d, atom_at=atom_at)
    pos = (t - dist.grid_start) / h
    if _is_integer(pos):
        dens = d[int(round(pos)) :]
    else:
        x = t + h * np.arange(int(math.floor((dist.grid_stop - t) / h)) + 1)
        dens = dist.pdf(x)
        # the shifted nodes see an interpolated density whose trapezoid mass
        # differs from the clipped-away complement at O(h^2); rescale so the
        # output conserves mass exactly
        target = dist.density_mass() - below
        got = trapezoid(dens, h)
        if got > 0 and target > 0:
            dens = dens * (target / got)
    return MixedDistribution(atom_mass, 0.0, h, dens, atom_at=atom_at)
