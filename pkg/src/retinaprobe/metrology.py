"""Fisher information of the ganglion output law with respect to the
network weights, Cramer-Rao bounds and error-ellipsoid volumes."""

from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .mixed import EPS_NORM, MassConservationError, MixedDistribution
from .numerics import chi2_quantile, sym_eigen
from .photon_stats import PhotonDistribution
from .retina_net import DEFAULT_STEP, NetworkSpec, network_output, output_step

__all__ = [
    "FisherDomain",
    "VolumeConvention",
    "MetrologyConfig",
    "NumericalFailure",
    "IllConditionedFisher",
    "FisherMatrix",
    "FisherResult",
    "ScoreProfile",
    "EllipsoidReport",
    "SweepRow",
    "score_profile",
    "fisher_scalar",
    "fisher_scalar_result",
    "fisher_matrix",
    "fisher_matrix_result",
    "crlb",
    "ellipsoid",
    "evaluate_point",
    "volume_sweep",
]


class FisherDomain(str, enum.Enum):
    FULL = "full"
    DENSITY_ONLY = "density_only"


class VolumeConvention(str, enum.Enum):
    K_SCALED = "k_scaled"
    PAPER_EQ16 = "paper_eq16"


class NumericalFailure(RuntimeError):
    pass


class IllConditionedFisher(NumericalFailure):
    def __init__(self, cond: float):
        super().__init__(f"Fisher matrix condition number {cond:.3g} exceeds bound")
        self.cond = cond


@dataclass(frozen=True)
class MetrologyConfig:
    confidence_level: float = 0.99
    fisher_domain: FisherDomain = FisherDomain.FULL
    volume_convention: VolumeConvention = VolumeConvention.K_SCALED
    # finite-difference step relative to each weight
    delta_rel: float = 1e-3
    density_floor: float = 1e-12
    plateau_tol: float = 0.005
    max_condition: float = 1e10
    base_step: float = DEFAULT_STEP

    def __post_init__(self):
        object.__setattr__(self, "fisher_domain", FisherDomain(self.fisher_domain))
        object.__setattr__(self, "volume_convention", VolumeConvention(self.volume_convention))
        if not 0 < self.confidence_level < 1:
            raise ValueError("confidence_level must lie in (0, 1)")
        if not 0 < self.delta_rel < 0.5:
            raise ValueError("delta_rel must lie in (0, 0.5)")


@dataclass(frozen=True)
class FisherMatrix:
    entries: np.ndarray

    def __post_init__(self):
        m = np.atleast_2d(np.asarray(self.entries, dtype=float))
        if m.shape[0] != m.shape[1]:
            raise ValueError("Fisher matrix must be square")
        scale = max(np.abs(m).max(), 1.0)
        if np.abs(m - m.T).max() > 1e-9 * scale:
            raise ValueError("Fisher matrix is not symmetric")
        m = 0.5 * (m + m.T)
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)
        if np.linalg.eigvalsh(m).min() < -1e-9 * scale:
            raise NumericalFailure("Fisher matrix is indefinite beyond tolerance")

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def condition_number(self) -> float:
        ev = np.linalg.eigvalsh(self.entries)
        if ev[0] <= 0:
            return math.inf
        return float(ev[-1] / ev[0])


@dataclass(frozen=True)
class FisherResult:
    """Fisher matrix plus the diagnostics of its finite-difference estimate."""

    fisher: FisherMatrix
    fisher_half_delta: FisherMatrix | None
    plateau_ok: bool
    max_rel_change: float
    mass_defect: float
    grid_step: float


@dataclass(frozen=True)
class ScoreProfile:
    """Central-difference score of the output law along one direction.

    ``density_score`` is NaN wherever the density is below the floor.
    """

    atom_score: float
    density_score: np.ndarray
    grid_start: float
    grid_step: float
    law: MixedDistribution


@dataclass(frozen=True)
class EllipsoidReport:
    crlb: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    K: float
    confidence_level: float
    volume: float
    volume_paper_eq16: float
    volume_k_scaled: float
    convention: VolumeConvention

    @property
    def axes(self) -> np.ndarray:
        return self.K * np.sqrt(self.eigenvalues)


def _law(spec, photons, h, cfg):
    law = network_output(spec, photons, h, base_step=cfg.base_step)
    law.check_mass(EPS_NORM)
    if law.atom_at != 0.0 and law.atom_mass > 0:
        # the atom does not sit at F = 0: its location moves with the
        # weights and the law has no common dominating measure
        if law.atom_mass > cfg.density_floor:
            raise NumericalFailure("output atom is not at F = 0; Fisher undefined")
    return law


def _on_grid(law: MixedDistribution, start: float, size: int) -> np.ndarray:
    """Density values of ``law`` on ``start + i * h`` for ``i < size``."""
    h = law.grid_step
    out = np.zeros(size)
    if law.density.size == 0:
        return out
    off = (law.grid_start - start) / h
    k = int(round(off))
    if abs(off - k) > 1e-6:
        return law.pdf(start + h * np.arange(size))
    lo, hi = max(k, 0), min(k + law.density.size, size)
    if hi > lo:
        out[lo:hi] = law.density[lo - k : hi - k]
    return out


def _perturbed(spec: NetworkSpec, direction: np.ndarray, step: float):
    w = np.asarray(spec.weights) + step * direction
    if np.any(w < 0):
        raise ValueError("finite-difference step drives a weight negative")
    return spec.with_weights(w)


def _scores(spec, photons, directions, deltas, h, cfg, base):
    """Score profiles for each direction, on the base law's grid."""
    n = base.density.size
    f0 = base.density
    p0 = base.atom_mass
    atom_scores, dens_scores, defects = [], [], []
    for d, delta in zip(directions, deltas):
        plus = _law(_perturbed(spec, d, delta), photons, h, cfg)
        minus = _law(_perturbed(spec, d, -delta), photons, h, cfg)
        defects += [plus.mass_defect(), minus.mass_defect()]
        fp = _on_grid(plus, base.grid_start, n)
        fm = _on_grid(minus, base.grid_start, n)
        ok = (f0 > cfg.density_floor) & (fp > cfg.density_floor) & (fm > cfg.density_floor)
        s = np.full(n, np.nan)
        s[ok] = (np.log(fp[ok]) - np.log(fm[ok])) / (2 * delta)
        dens_scores.append(s)
        if min(p0, plus.atom_mass, minus.atom_mass) > cfg.density_floor:
            atom_scores.append((math.log(plus.atom_mass) - math.log(minus.atom_mass)) / (2 * delta))
        else:
            atom_scores.append(0.0)
    return np.array(atom_scores), dens_scores, max(defects, default=0.0)


def _fisher_from_scores(base, atom_scores, dens_scores, cfg):
    k = len(dens_scores)
    h = base.grid_step
    f = base.density
    s = np.nan_to_num(np.vstack(dens_scores), nan=0.0) if k else np.zeros((0, f.size))
    m = np.empty((k, k))
    for i in range(k):
        for j in range(i, k):
            integrand = f * s[i] * s[j]
            val = h * (integrand.sum() - 0.5 * (integrand[0] + integrand[-1])) if f.size > 1 else 0.0
            if cfg.fisher_domain is FisherDomain.FULL:
                val += base.atom_mass * atom_scores[i] * atom_scores[j]
            m[i, j] = m[j, i] = val
    return m


def _fisher_along(spec, photons, directions, deltas, cfg, grid_step=None):
    h = grid_step if grid_step is not None else output_step(spec, cfg.base_step)
    base = _law(spec, photons, h, cfg)
    a1, s1, defect1 = _scores(spec, photons, directions, deltas, h, cfg, base)
    m1 = _fisher_from_scores(base, a1, s1, cfg)
    a2, s2, defect2 = _scores(spec, photons, directions, [d / 2 for d in deltas], h, cfg, base)
    m2 = _fisher_from_scores(base, a2, s2, cfg)
    diag = np.sqrt(np.abs(np.outer(np.diag(m1), np.diag(m1))))
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(diag > 0, np.abs(m1 - m2) / diag, 0.0)
    max_rel = float(rel.max()) if rel.size else 0.0
    return FisherResult(
        fisher=FisherMatrix(m1),
        fisher_half_delta=FisherMatrix(m2),
        plateau_ok=max_rel < cfg.plateau_tol,
        max_rel_change=max_rel,
        mass_defect=max(base.mass_defect(), defect1, defect2),
        grid_step=h,
    )


def score_profile(
    spec: NetworkSpec,
    photons: PhotonDistribution,
    i: int,
    delta: float,
    *,
    config: MetrologyConfig | None = None,
    grid_step: float | None = None,
) -> ScoreProfile:
    """Derivative of the log output law with respect to weight ``i``."""
    cfg = config or MetrologyConfig()
    if not spec.weights[i] > delta:
        raise ValueError("weight must exceed the finite-difference step")
    h = grid_step if grid_step is not None else output_step(spec, cfg.base_step)
    base = _law(spec, photons, h, cfg)
    e = np.zeros(spec.n_weights)
    e[i] = 1.0
    a, s, _ = _scores(spec, photons, [e], [delta], h, cfg, base)
    return ScoreProfile(float(a[0]), s[0], base.grid_start, h, base)


def fisher_matrix_result(
    spec: NetworkSpec,
    photons: PhotonDistribution,
    config: MetrologyConfig | None = None,
    grid_step: float | None = None,
) -> FisherResult:
    """Fisher matrix over all weights, with Richardson (half-step) check."""
    cfg = config or MetrologyConfig()
    n = spec.n_weights
    directions = list(np.eye(n))
    deltas = [cfg.delta_rel * w for w in spec.weights]
    if any(d <= 0 for d in deltas):
        raise ValueError("Fisher information needs strictly positive weights")
    return _fisher_along(spec, photons, directions, deltas, cfg, grid_step)


def fisher_matrix(spec, photons, config=None, grid_step=None) -> FisherMatrix:
    return fisher_matrix_result(spec, photons, config, grid_step).fisher


def fisher_scalar_result(
    spec: NetworkSpec,
    photons: PhotonDistribution,
    config: MetrologyConfig | None = None,
    grid_step: float | None = None,
) -> FisherResult:
    """Fisher information of a single weight shared by every ganglion input.

    All weights must be equal; the score is taken along the all-ones
    direction, so a one-rod network gives the usual scalar information.
    """
    cfg = config or MetrologyConfig()
    w = np.asarray(spec.weights)
    if not np.allclose(w, w[0], rtol=1e-12, atol=0):
        raise ValueError("fisher_scalar needs all weights equal")
    if not w[0] > 0:
        raise ValueError("Fisher information needs a strictly positive weight")
    return _fisher_along(spec, photons, [np.ones(w.size)], [cfg.delta_rel * w[0]], cfg, grid_step)


def fisher_scalar(spec, photons, config=None, grid_step=None) -> float:
    return float(fisher_scalar_result(spec, photons, config, grid_step).fisher.entries[0, 0])


def crlb(fisher: FisherMatrix | np.ndarray, max_condition: float = 1e10) -> np.ndarray:
    """Inverse Fisher matrix; refuses near-singular input."""
    if not isinstance(fisher, FisherMatrix):
        fisher = FisherMatrix(fisher)
    cond = fisher.condition_number()
    if not cond <= max_condition:
        raise IllConditionedFisher(cond)
    inv = np.linalg.inv(fisher.entries)
    return 0.5 * (inv + inv.T)


def _unit_ball_volume(n: int) -> float:
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


def ellipsoid(
    crlb_matrix,
    confidence_level: float = 0.99,
    convention: VolumeConvention | str = VolumeConvention.K_SCALED,
) -> EllipsoidReport:
    """Confidence ellipsoid of a covariance matrix.

    Semi-axes are ``K * sqrt(lambda_i)`` along the eigenvectors, with
    ``K**2`` the chi-square quantile at ``confidence_level``. The K-free
    volume is reported alongside.
    """
    convention = VolumeConvention(convention)
    c = np.atleast_2d(np.asarray(crlb_matrix, dtype=float))
    n = c.shape[0]
    if n <= 4:
        evals, evecs = sym_eigen(c)
    else:
        evals, evecs = np.linalg.eigh(0.5 * (c + c.T))
        evals, evecs = evals[::-1], evecs[:, ::-1]
    if evals[-1] <= 0:
        raise ValueError("covariance matrix is not positive definite")
    K = math.sqrt(chi2_quantile(n, confidence_level))
    bare = _unit_ball_volume(n) * float(np.prod(np.sqrt(evals)))
    scaled = bare * K**n
    volume = scaled if convention is VolumeConvention.K_SCALED else bare
    return EllipsoidReport(c, evals, evecs, K, confidence_level, volume, bare, scaled, convention)


@dataclass(frozen=True)
class SweepRow:
    state: str
    sweep_value: float
    metric_kind: str
    value: float
    fisher_cond: float
    mass_defect: float
    fd_plateau_ok: bool
    status: str

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def evaluate_point(
    state: str,
    sweep_value: float,
    spec: NetworkSpec,
    photons: PhotonDistribution,
    config: MetrologyConfig,
    tied: bool = False,
) -> SweepRow:
    """CRLB (one free weight) or ellipsoid volume (several) at one point.

    Numerical failures are caught and reported in ``status``.
    """
    kind = "crlb" if tied or spec.n_weights == 1 else "volume"
    try:
        if kind == "crlb":
            res = fisher_scalar_result(spec, photons, config)
            info = float(res.fisher.entries[0, 0])
            if not info > 0:
                raise IllConditionedFisher(math.inf)
            value, cond = 1.0 / info, 1.0
        else:
            res = fisher_matrix_result(spec, photons, config)
            cond = res.fisher.condition_number()
            cov = crlb(res.fisher, config.max_condition)
            value = ellipsoid(cov, config.confidence_level, config.volume_convention).volume
        return SweepRow(state, sweep_value, kind, value, cond, res.mass_defect, res.plateau_ok, "ok")
    except IllConditionedFisher as exc:
        return SweepRow(state, sweep_value, kind, math.nan, exc.cond, math.nan, False, "ill_conditioned")
    except (NumericalFailure, MassConservationError, ValueError) as exc:
        return SweepRow(state, sweep_value, kind, math.nan, math.nan, math.nan, False, f"failed: {exc}")


def _evaluate_task(args):
    return evaluate_point(*args)


def volume_sweep(
    points: Iterable[tuple[float, NetworkSpec, Mapping[str, PhotonDistribution]]],
    config: MetrologyConfig | None = None,
    *,
    tied: bool = False,
    jobs: int = 1,
) -> list[SweepRow]:
    """Evaluate every (sweep value, light state) pair.

    ``points`` yields ``(value, spec, {state_label: photons})``. Rows come
    back in sweep order, states in mapping order, whatever ``jobs`` is.
    """
    cfg = config or MetrologyConfig()
    tasks = [
        (label, value, spec, photons, cfg, tied)
        for value, spec, states in points
        for label, photons in states.items()
    ]
    if jobs <= 1 or len(tasks) <= 1:
        return [_evaluate_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_evaluate_task, tasks, chunksize=1))
