"""Small symmetric linear-algebra kernel and the chi-square quantile.

Everything here operates on small dense d x d symmetric matrices (d is
typically 2..10). The inverse principal square root falls back to a
pseudoinverse on the null space, with a scale-free eigenvalue threshold, and
the least-squares solver reuses exactly the same eigendecomposition policy so
that degenerate normal matrices are treated identically everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammainc, gammaincc

from .errors import ConfigError, NotPsdError

__all__ = [
    "PsdFactor",
    "LstsqResult",
    "symmetrize",
    "psd_inv_sqrt",
    "inv_sqrt_apply_batched",
    "solve_least_squares",
    "chi2_cdf",
    "chi2_sf",
    "chi2_quantile",
]

#: eigenvalues below ZERO_EIG_REL * max(1, lambda_max) are treated as zero
ZERO_EIG_REL = 1e-12
#: eigenvalues below -NEG_EIG_REL * max(1, lambda_max) mean "not PSD"
NEG_EIG_REL = 1e-10
#: allowed relative asymmetry before a matrix is rejected
SYM_REL_TOL = 1e-10


@dataclass(frozen=True)
class PsdFactor:
    """Inverse (or pseudoinverse) of the principal square root of a PSD
    matrix, with its rank and eigenvalue extremes."""

    inv_sqrt: np.ndarray
    rank: int
    min_eig: float
    max_eig: float


@dataclass(frozen=True)
class LstsqResult:
    """Least-squares solution plus a conditioning report."""

    theta: np.ndarray
    rank: int
    degenerate: bool
    min_eig: float
    max_eig: float
    cond: float


def symmetrize(mat, rel_tol: float = SYM_REL_TOL) -> np.ndarray:
    """Validate approximate symmetry and return the symmetrized matrix."""
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ConfigError(f"expected a square matrix, got shape {mat.shape}")
    scale = max(1.0, float(np.max(np.abs(mat))))
    skew = float(np.max(np.abs(mat - mat.T)))
    if skew > rel_tol * scale:
        raise ConfigError(
            f"matrix is not symmetric: max asymmetry {skew:.3e} vs scale {scale:.3e}"
        )
    return 0.5 * (mat + mat.T)


def _inv_sqrt_weights(evals: np.ndarray):
    """Thresholded 1/sqrt(eigenvalue) weights for stacked spectra.

    evals has shape (..., d) in ascending order. Returns (weights, ranks).
    Raises NotPsdError on significantly negative eigenvalues.
    """
    lam_max = np.maximum(1.0, evals[..., -1])
    if np.any(evals < -NEG_EIG_REL * lam_max[..., None]):
        raise NotPsdError(
            f"matrix has a significantly negative eigenvalue "
            f"(min {float(np.min(evals)):.3e})"
        )
    keep = evals > ZERO_EIG_REL * lam_max[..., None]
    safe = np.where(keep, evals, 1.0)
    weights = np.where(keep, 1.0 / np.sqrt(safe), 0.0)
    ranks = keep.sum(axis=-1)
    return weights, ranks


def psd_inv_sqrt(mat) -> PsdFactor:
    """Inverse principal square root of a symmetric PSD matrix.

    Eigenvalues below ``ZERO_EIG_REL * max(1, lambda_max)`` are inverted as
    zero (pseudoinverse on the null space); significantly negative
    eigenvalues raise :class:`NotPsdError`.
    """
    mat = symmetrize(mat)
    evals, evecs = np.linalg.eigh(mat)
    weights, ranks = _inv_sqrt_weights(evals[None, :])
    inv_sqrt = (evecs * weights[0]) @ evecs.T
    return PsdFactor(
        inv_sqrt=inv_sqrt,
        rank=int(ranks[0]),
        min_eig=float(evals[0]),
        max_eig=float(evals[-1]),
    )


def inv_sqrt_apply_batched(mats: np.ndarray, vecs: np.ndarray):
    """Apply M_i^{-1/2} (pseudoinverse fallback) to v_i for a stack of
    symmetric matrices.

    mats: (m, d, d), vecs: (m, d). Returns (transformed (m, d), ranks (m,)).
    Uses the same eigenvalue thresholds as :func:`psd_inv_sqrt`.
    """
    evals, evecs = np.linalg.eigh(mats)
    weights, ranks = _inv_sqrt_weights(evals)
    # V diag(w) V^T v, batched
    proj = np.einsum("ilk,il->ik", evecs, vecs)
    out = np.einsum("ikl,il->ik", evecs, weights * proj)
    return out, ranks


def solve_least_squares(phi: np.ndarray, y: np.ndarray) -> LstsqResult:
    """Minimize sum (y_t - phi_t @ theta)^2 through the normal equations.

    The averaged normal matrix is eigendecomposed with the same zero
    threshold as :func:`psd_inv_sqrt`; if it is rank deficient the
    minimum-norm solution is returned and ``degenerate`` is set instead of
    raising.
    """
    phi = np.asarray(phi, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    if phi.ndim != 2 or phi.shape[0] != y.size:
        raise ConfigError(
            f"regressors {phi.shape} incompatible with {y.size} outputs"
        )
    n = y.size
    normal = symmetrize(phi.T @ phi / n)
    rhs = phi.T @ y / n
    evals, evecs = np.linalg.eigh(normal)
    weights, ranks = _inv_sqrt_weights(evals[None, :])
    inv_lam = weights[0] ** 2  # thresholded 1/lambda
    theta = evecs @ (inv_lam * (evecs.T @ rhs))
    rank = int(ranks[0])
    kept = evals[evals > ZERO_EIG_REL * max(1.0, evals[-1])]
    cond = float(evals[-1] / kept[0]) if kept.size else float("inf")
    return LstsqResult(
        theta=theta,
        rank=rank,
        degenerate=rank < phi.shape[1],
        min_eig=float(evals[0]),
        max_eig=float(evals[-1]),
        cond=cond,
    )


def chi2_cdf(x: float, dof: int) -> float:
    """Chi-square CDF via the regularized lower incomplete gamma function."""
    if x <= 0.0:
        return 0.0
    return float(gammainc(dof / 2.0, x / 2.0))


def chi2_sf(x: float, dof: int) -> float:
    """Chi-square survival function (upper tail)."""
    if x <= 0.0:
        return 1.0
    return float(gammaincc(dof / 2.0, x / 2.0))


def chi2_quantile(p: float, dof: int) -> float:
    """Value mu with chi-square CDF(mu) = p, by bisection.

    Bisects the regularized incomplete gamma on
    ``[0, dof + 40 sqrt(2 dof)]`` until the interval is below 1e-10 and the
    CDF gap below 1e-10 (steep low-dof tails need the second condition), or
    the midpoint hits the double-precision floor.
    """
    if dof < 1:
        raise ConfigError(f"dof must be a positive integer, got {dof}")
    if not 0.0 < p < 1.0:
        raise ConfigError(f"p must lie strictly inside (0, 1), got {p}")
    lo = 0.0
    hi = dof + 40.0 * np.sqrt(2.0 * dof)
    if chi2_cdf(hi, dof) < p:
        raise ConfigError(f"p={p} too close to 1 for the quantile bracket")
    while True:
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        gap = chi2_cdf(mid, dof) - p
        if gap < 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-10 and abs(gap) <= 1e-10:
            break
    return 0.5 * (lo + hi)
