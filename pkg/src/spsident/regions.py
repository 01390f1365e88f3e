"""Region-level geometry: grid evaluation of the confidence region, the
asymptotic confidence ellipsoid, membership tests, and size metrics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import numerics
from .arx import Dataset, ParamVector, build_regressors
from .errors import ConfigError, DegeneracyError
from .sps import SpsEvaluator, SpsSetup, as_probability_fraction

__all__ = [
    "GridSpec",
    "IndicatorGrid",
    "Ellipsoid",
    "RegionMetrics",
    "sps_region_grid",
    "noise_variance_estimate",
    "asymptotic_ellipsoid",
    "ellipsoid_contains",
    "region_metrics",
]

#: default ceiling on the total number of grid nodes
DEFAULT_MAX_NODES = 10**6


@dataclass(frozen=True)
class GridSpec:
    """An axis-aligned box split into cells; nodes are the cell centers.

    Node j on axis k sits at ``lower_k + (2 j + 1) / (2 P_k) * (upper_k -
    lower_k)``. Nodes enumerate in lexicographic order (first axis slowest).
    """

    lower: np.ndarray
    upper: np.ndarray
    points_per_axis: np.ndarray

    def __post_init__(self):
        lower = np.array(self.lower, dtype=float).reshape(-1)
        upper = np.array(self.upper, dtype=float).reshape(-1)
        points = np.array(self.points_per_axis, dtype=np.int64).reshape(-1)
        for name, arr in (("lower", lower), ("upper", upper), ("points_per_axis", points)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (lower.size == upper.size == points.size >= 1):
            raise ConfigError("lower, upper, points_per_axis must share one length >= 1")
        if not np.all(lower < upper):
            raise ConfigError("grid needs lower < upper on every axis")
        if not np.all(points >= 1):
            raise ConfigError("points_per_axis entries must be >= 1")

    @classmethod
    def centered(cls, center, half_widths, points_per_axis) -> "GridSpec":
        center = np.asarray(center, dtype=float).reshape(-1)
        half = np.asarray(half_widths, dtype=float).reshape(-1)
        return cls(center - half, center + half, points_per_axis)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def total_points(self) -> int:
        return int(np.prod(self.points_per_axis))

    def axis_coords(self, k: int) -> np.ndarray:
        p = int(self.points_per_axis[k])
        steps = (2.0 * np.arange(p) + 1.0) / (2.0 * p)
        return self.lower[k] + steps * (self.upper[k] - self.lower[k])

    def nodes(self) -> np.ndarray:
        axes = [self.axis_coords(k) for k in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.column_stack([m.reshape(-1) for m in mesh])


@dataclass(frozen=True)
class IndicatorGrid:
    """Verdicts and reference ranks at every node of a grid."""

    spec: GridSpec
    verdicts: np.ndarray
    ranks: np.ndarray

    def __post_init__(self):
        verdicts = np.array(self.verdicts, dtype=bool).reshape(-1)
        ranks = np.array(self.ranks, dtype=np.int64).reshape(-1)
        verdicts.setflags(write=False)
        ranks.setflags(write=False)
        object.__setattr__(self, "verdicts", verdicts)
        object.__setattr__(self, "ranks", ranks)
        if verdicts.size != self.spec.total_points or ranks.size != verdicts.size:
            raise ConfigError("grid verdicts/ranks must cover every node")

    def included_nodes(self) -> np.ndarray:
        return self.spec.nodes()[self.verdicts]


@dataclass(frozen=True)
class Ellipsoid:
    """The set { theta : (theta - center)^T shape (theta - center) <=
    radius_sq }; the boundary counts as inside."""

    center: np.ndarray
    shape: np.ndarray
    radius_sq: float

    def __post_init__(self):
        center = np.array(self.center, dtype=float).reshape(-1)
        shape = numerics.symmetrize(self.shape)
        shape.setflags(write=False)
        center.setflags(write=False)
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "shape", shape)
        if shape.shape != (center.size, center.size):
            raise ConfigError("shape matrix must be d x d for a d-vector center")
        if self.radius_sq < 0.0:
            raise ConfigError(f"radius_sq must be >= 0, got {self.radius_sq}")

    def contains(self, theta) -> bool:
        return ellipsoid_contains(self, theta)

    def contains_many(self, thetas: np.ndarray) -> np.ndarray:
        diff = np.asarray(thetas, dtype=float) - self.center
        quad = np.einsum("ik,kl,il->i", diff, self.shape, diff)
        return quad <= self.radius_sq

    def bounding_half_widths(self) -> np.ndarray:
        """Half widths of the axis-aligned bounding box."""
        inv = np.linalg.inv(self.shape)
        return np.sqrt(self.radius_sq * np.diag(inv))


def sps_region_grid(
    ds: Dataset,
    setup: SpsSetup,
    spec: GridSpec,
    max_nodes: int = DEFAULT_MAX_NODES,
    n_jobs: int = 1,
) -> IndicatorGrid:
    """Evaluate the inclusion indicator at every node of the grid."""
    if spec.dim != ds.order.d:
        raise ConfigError(
            f"grid dimension {spec.dim} does not match parameter dimension {ds.order.d}"
        )
    if spec.total_points > max_nodes:
        raise ConfigError(
            f"grid has {spec.total_points} nodes, above the cap {max_nodes}"
        )
    nodes = spec.nodes()
    if n_jobs > 1:
        ranks = _parallel_ranks(ds, setup, nodes, n_jobs)
    else:
        evaluator = SpsEvaluator(ds, setup)
        ranks = _ranks_for_nodes(evaluator, nodes)
    verdicts = ranks <= setup.m - setup.q
    return IndicatorGrid(spec=spec, verdicts=verdicts, ranks=ranks)


def _ranks_for_nodes(evaluator: SpsEvaluator, nodes: np.ndarray) -> np.ndarray:
    ranks = np.empty(nodes.shape[0], dtype=np.int64)
    for j in range(nodes.shape[0]):
        ranks[j] = evaluator.rank(nodes[j])
    return ranks


def _rank_chunk(ds: Dataset, setup: SpsSetup, nodes: np.ndarray) -> np.ndarray:
    return _ranks_for_nodes(SpsEvaluator(ds, setup), nodes)


def _parallel_ranks(ds, setup, nodes, n_jobs: int) -> np.ndarray:
    import concurrent.futures as cf
    import multiprocessing as mp

    chunks = np.array_split(np.arange(nodes.shape[0]), n_jobs * 4)
    chunks = [c for c in chunks if c.size]
    ctx = mp.get_context("spawn")
    ranks = np.empty(nodes.shape[0], dtype=np.int64)
    with cf.ProcessPoolExecutor(max_workers=n_jobs, mp_context=ctx) as pool:
        futures = {
            pool.submit(_rank_chunk, ds, setup, nodes[idx]): idx for idx in chunks
        }
        for fut, idx in futures.items():
            ranks[idx] = fut.result()
    return ranks


def noise_variance_estimate(ds: Dataset, theta_hat: ParamVector) -> float:
    """Residual variance with the degrees-of-freedom corrected divisor
    n - d."""
    n, d = ds.n, theta_hat.dim
    if n <= d:
        raise ConfigError(f"need n > d to estimate the noise variance, got n={n}, d={d}")
    resid = ds.y - build_regressors(ds, theta_hat.order) @ theta_hat.theta
    return float(resid @ resid / (n - d))


def asymptotic_ellipsoid(
    ds: Dataset,
    p,
    sigma_sq="estimate",
    eta: float = 0.0,
) -> Ellipsoid:
    """Confidence ellipsoid from classical large-sample theory.

    Centered at the least-squares estimate, shaped by the averaged regressor
    outer-product matrix, with squared radius (mu sigma^2 + eta) / n where
    mu is the chi-square quantile of level p with d degrees of freedom.
    A rank-deficient normal matrix is refused (the construction presumes
    invertibility).
    """
    order = ds.order
    phi = build_regressors(ds, order)
    fit = numerics.solve_least_squares(phi, ds.y)
    if fit.degenerate:
        raise DegeneracyError(
            f"normal matrix has rank {fit.rank} < {order.d}; ellipsoid undefined"
        )
    theta_hat = ParamVector.from_theta(fit.theta, order)
    if isinstance(sigma_sq, str):
        if sigma_sq != "estimate":
            raise ConfigError(f"sigma_sq must be a number or 'estimate', got {sigma_sq!r}")
        sigma_sq_val = noise_variance_estimate(ds, theta_hat)
    else:
        sigma_sq_val = float(sigma_sq)
        if sigma_sq_val < 0.0:
            raise ConfigError(f"sigma_sq must be >= 0, got {sigma_sq_val}")
    if eta < 0.0:
        raise ConfigError(f"eta must be >= 0, got {eta}")
    mu = numerics.chi2_quantile(float(as_probability_fraction(p)), order.d)
    shape = numerics.symmetrize(phi.T @ phi / ds.n)
    radius_sq = (mu * sigma_sq_val + eta) / ds.n
    return Ellipsoid(center=theta_hat.theta, shape=shape, radius_sq=radius_sq)


def ellipsoid_contains(e: Ellipsoid, theta) -> bool:
    if isinstance(theta, ParamVector):
        theta = theta.theta
    diff = np.asarray(theta, dtype=float).reshape(-1) - e.center
    return bool(diff @ e.shape @ diff <= e.radius_sq)


@dataclass(frozen=True)
class RegionMetrics:
    """Counts and a diameter proxy for a grid-sampled region, optionally
    compared against an ellipsoid."""

    included_count: int
    diameter: float
    excess_count: Optional[int] = None
    excess_fraction: Optional[float] = None
    ellipsoid_only_count: Optional[int] = None


def _max_pairwise_distance(points: np.ndarray) -> float:
    if points.shape[0] <= 1:
        return 0.0
    if points.shape[0] > 2000 and points.shape[1] >= 2:
        try:
            from scipy.spatial import ConvexHull

            hull = ConvexHull(points)
            points = points[hull.vertices]
        except Exception:  # collinear nodes etc.: fall back to all pairs
            pass
    diff = points[:, None, :] - points[None, :, :]
    return float(np.sqrt((diff**2).sum(-1).max()))


def region_metrics(grid: IndicatorGrid, ellipsoid: Optional[Ellipsoid] = None) -> RegionMetrics:
    """Included-node count, the maximum pairwise distance between included
    node centers, and, when an ellipsoid is given, how the two sets differ
    on the grid."""
    inside = grid.included_nodes()
    count = int(inside.shape[0])
    diameter = _max_pairwise_distance(inside)
    if ellipsoid is None:
        return RegionMetrics(included_count=count, diameter=diameter)
    nodes = grid.spec.nodes()
    in_ell = ellipsoid.contains_many(nodes)
    excess = int(np.count_nonzero(grid.verdicts & ~in_ell))
    ell_only = int(np.count_nonzero(in_ell & ~grid.verdicts))
    fraction = excess / count if count else 0.0
    return RegionMetrics(
        included_count=count,
        diameter=diameter,
        excess_count=excess,
        excess_fraction=fraction,
        ellipsoid_only_count=ell_only,
    )
