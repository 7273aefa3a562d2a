"""Shared numerical kernels: uniform grids, trapezoid quadrature, binomial
coefficients in log space, chi-square quantiles and a small symmetric
eigensolver."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

__all__ = [
    "GridSpec",
    "log_binomial",
    "binomial_pmf",
    "chi2_quantile",
    "chi2_cdf",
    "sym_eigen",
    "trapezoid",
    "normal_pdf",
    "normal_cdf",
]


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid ``start + i * step`` for ``i = 0 .. count - 1``."""

    start: float
    step: float
    count: int

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError(f"grid step must be positive, got {self.step}")
        if self.count < 2:
            raise ValueError(f"grid needs at least 2 points, got {self.count}")

    @property
    def stop(self) -> float:
        return self.start + (self.count - 1) * self.step

    @property
    def points(self) -> np.ndarray:
        return self.start + self.step * np.arange(self.count)

    @classmethod
    def covering(cls, lo: float, hi: float, step: float) -> "GridSpec":
        """Smallest grid with nodes on integer multiples of ``step`` that
        contains ``[lo, hi]``."""
        i0 = math.floor(lo / step)
        i1 = math.ceil(hi / step)
        return cls(i0 * step, step, max(i1 - i0 + 1, 2))


def log_binomial(n, k):
    """Natural log of the binomial coefficient C(n, k) via log-gamma.

    Accepts scalars or broadcastable integer arrays. Raises ``ValueError``
    when any ``k`` lies outside ``[0, n]``.
    """
    n_arr = np.asarray(n, dtype=float)
    k_arr = np.asarray(k, dtype=float)
    if np.any(k_arr < 0) or np.any(k_arr > n_arr):
        raise ValueError("log_binomial requires 0 <= k <= n")
    out = special.gammaln(n_arr + 1) - special.gammaln(k_arr + 1) - special.gammaln(n_arr - k_arr + 1)
    return float(out) if out.ndim == 0 else out


def binomial_pmf(n: int, p: float) -> np.ndarray:
    """Probabilities of 0..n successes in n Bernoulli(p) trials."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"success probability must lie in [0, 1], got {p}")
    k = np.arange(n + 1)
    if p == 0.0:
        return (k == 0).astype(float)
    if p == 1.0:
        return (k == n).astype(float)
    logp = log_binomial(n, k) + k * math.log(p) + (n - k) * math.log1p(-p)
    return np.exp(np.atleast_1d(logp))


def chi2_quantile(dof: int, p: float) -> float:
    """Quantile of the chi-square law with ``dof`` degrees of freedom.

    Inverts the regularized lower incomplete gamma function,
    ``x = 2 * P^{-1}(dof / 2, p)``.
    """
    if dof < 1:
        raise ValueError(f"dof must be >= 1, got {dof}")
    if not 0.0 < p < 1.0:
        raise ValueError(f"probability must lie in (0, 1), got {p}")
    return float(2.0 * special.gammaincinv(0.5 * dof, p))


def chi2_cdf(dof: int, x: float) -> float:
    return float(special.gammainc(0.5 * dof, 0.5 * x))


def _jacobi_rotate(a, v, p, q):
    if a[p, q] == 0.0:
        return
    theta = (a[q, q] - a[p, p]) / (2.0 * a[p, q])
    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
    c = 1.0 / math.sqrt(t * t + 1.0)
    s = t * c
    rot = np.eye(a.shape[0])
    rot[p, p] = rot[q, q] = c
    rot[p, q] = s
    rot[q, p] = -s
    a[:] = rot.T @ a @ rot
    a[p, q] = a[q, p] = 0.0
    v[:] = v @ rot


def sym_eigen(matrix, *, tol: float = 1e-9, max_sweeps: int = 50):
    """Eigen-decomposition of a small (n <= 4) symmetric matrix.

    Cyclic Jacobi rotations. Returns eigenvalues sorted in descending order
    and the matching orthonormal eigenvectors as columns.
    """
    m = np.array(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("sym_eigen needs a square matrix")
    n = m.shape[0]
    if n > 4:
        raise ValueError("sym_eigen handles n <= 4 only")
    scale = max(np.abs(m).max(), 1.0)
    if np.abs(m - m.T).max() > tol * scale:
        raise ValueError("matrix is not symmetric")
    a = 0.5 * (m + m.T)
    v = np.eye(n)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.triu(a, 1) ** 2))
        if off <= 1e-15 * max(np.abs(a).max(), 1e-300):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                _jacobi_rotate(a, v, p, q)
    evals = np.diag(a).copy()
    order = np.argsort(evals)[::-1]
    return evals[order], v[:, order]


def trapezoid(values, step: float) -> float:
    """Composite trapezoid rule on a uniform grid."""
    y = np.asarray(values, dtype=float)
    if y.size < 2:
        return 0.0
    return float(step * (y.sum() - 0.5 * (y[0] + y[-1])))


_SQRT2PI = math.sqrt(2.0 * math.pi)


def normal_pdf(x, mean, var):
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * (x - mean) ** 2 / var) / (_SQRT2PI * np.sqrt(var))


def normal_cdf(x, mean=0.0, sd=1.0):
    return special.ndtr((np.asarray(x, dtype=float) - mean) / sd)
