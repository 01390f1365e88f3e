"""ARX model representation, simulation, regressors, and prediction errors.

Conventions used throughout the package:

* A model of autoregressive order ``n_a`` and exogenous order ``n_b`` obeys
  the recursion ``Y_t + a_1 Y_{t-1} + ... + a_{n_a} Y_{t-n_a}
  = b_1 U_{t-1} + ... + b_{n_b} U_{t-n_b} + N_t``.
* The stacked parameter vector is ``theta = [a_1..a_{n_a}, b_1..b_{n_b}]``.
* The regressor at time t is
  ``phi_t = [-Y_{t-1}..-Y_{t-n_a}, U_{t-1}..U_{t-n_b}]`` so that
  ``Y_t = phi_t @ theta + N_t``.
* Initial-condition vectors are ordered most recent first:
  ``y_init = [Y_0, Y_{-1}, ...]`` and ``u_init = [U_0, U_{-1}, ...]``.

All values are immutable after construction; every operation here is a pure
function, so instances can be shared freely between threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter, lfiltic

from .errors import ConfigError

__all__ = [
    "ArxOrder",
    "ParamVector",
    "Dataset",
    "StabilityReport",
    "build_regressors",
    "simulate_arx",
    "prediction_errors",
    "ar_poly_stable",
]


def _readonly(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ArxOrder:
    """Model orders: ``n_a`` past outputs and ``n_b`` past inputs.

    ``n_a = 0`` is the finite-impulse-response case and is fully supported;
    ``n_b`` must be at least 1.
    """

    n_a: int
    n_b: int

    def __post_init__(self):
        if self.n_a < 0:
            raise ConfigError(f"n_a must be >= 0, got {self.n_a}")
        if self.n_b < 1:
            raise ConfigError(f"n_b must be >= 1, got {self.n_b}")

    @property
    def d(self) -> int:
        return self.n_a + self.n_b


@dataclass(frozen=True)
class ParamVector:
    """Stacked ARX parameters ``[a_1..a_{n_a}, b_1..b_{n_b}]``."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a", _readonly(self.a))
        object.__setattr__(self, "b", _readonly(self.b))
        if self.b.size < 1:
            raise ConfigError("parameter vector needs at least one input coefficient")

    @classmethod
    def from_theta(cls, theta, order: ArxOrder) -> "ParamVector":
        theta = np.asarray(theta, dtype=float).reshape(-1)
        if theta.size != order.d:
            raise ConfigError(
                f"theta has {theta.size} entries, expected {order.d}"
            )
        return cls(a=theta[: order.n_a], b=theta[order.n_a :])

    @property
    def order(self) -> ArxOrder:
        return ArxOrder(n_a=self.a.size, n_b=self.b.size)

    @property
    def theta(self) -> np.ndarray:
        return np.concatenate([self.a, self.b])

    @property
    def dim(self) -> int:
        return self.a.size + self.b.size


@dataclass(frozen=True)
class Dataset:
    """An observed input/output sample plus its initial conditions.

    The orders are implied by the initial-condition lengths:
    ``n_a = len(y_init)``, ``n_b = len(u_init)``.
    """

    u: np.ndarray
    y: np.ndarray
    y_init: np.ndarray = field(default_factory=lambda: np.zeros(0))
    u_init: np.ndarray = field(default_factory=lambda: np.zeros(1))

    def __post_init__(self):
        for name in ("u", "y", "y_init", "u_init"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))
        if self.u.size != self.y.size:
            raise ConfigError(
                f"u and y must have equal length, got {self.u.size} and {self.y.size}"
            )
        if self.u.size < 1:
            raise ConfigError("dataset must contain at least one sample")
        if self.u_init.size < 1:
            raise ConfigError("u_init must supply at least one past input")

    @property
    def n(self) -> int:
        return self.u.size

    @property
    def order(self) -> ArxOrder:
        return ArxOrder(n_a=self.y_init.size, n_b=self.u_init.size)


@dataclass(frozen=True)
class StabilityReport:
    stable: bool
    spectral_radius: float


def _check_order(ds: Dataset, order: ArxOrder) -> None:
    if ds.y_init.size != order.n_a or ds.u_init.size != order.n_b:
        raise ConfigError(
            f"dataset initial conditions imply orders ({ds.y_init.size}, "
            f"{ds.u_init.size}), expected ({order.n_a}, {order.n_b})"
        )


def lagged_columns(series: np.ndarray, init: np.ndarray, n_lags: int) -> np.ndarray:
    """Column k-1 holds the series value k steps in the past, for k = 1..n_lags.

    ``init`` supplies the values at indices 0, -1, ... (most recent first).
    """
    n = series.size
    if n_lags == 0:
        return np.empty((n, 0))
    if init.size < n_lags:
        raise ConfigError(f"need {n_lags} initial values, got {init.size}")
    ext = np.concatenate([init[::-1], series])
    off = init.size
    return np.column_stack([ext[off - k : off - k + n] for k in range(1, n_lags + 1)])


def build_regressors(ds: Dataset, order: ArxOrder) -> np.ndarray:
    """Return the (n, d) matrix whose row t-1 is phi_t.

    Values at times <= 0 come from the dataset's initial conditions.
    """
    _check_order(ds, order)
    ylags = -lagged_columns(ds.y, ds.y_init, order.n_a)
    ulags = lagged_columns(ds.u, ds.u_init, order.n_b)
    return np.hstack([ylags, ulags])


def ar_filter(a: np.ndarray, e: np.ndarray, y_init: np.ndarray) -> np.ndarray:
    """Run the recursion ``Y_t = e_t - sum_k a_k Y_{t-k}`` along the last axis.

    ``y_init`` holds ``[Y_0, Y_{-1}, ...]`` and is shared by every row of a
    2-d ``e``.
    """
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return np.array(e, dtype=float, copy=True)
    poly = np.concatenate([[1.0], a])
    zi = lfiltic([1.0], poly, y=y_init)
    if e.ndim == 1:
        out, _ = lfilter([1.0], poly, e, zi=zi)
        return out
    zi_rows = np.repeat(zi[None, :], e.shape[0], axis=0)
    out, _ = lfilter([1.0], poly, e, axis=-1, zi=zi_rows)
    return out


def simulate_arx(
    theta_true: ParamVector,
    u,
    noise,
    y_init=None,
    u_init=None,
) -> np.ndarray:
    """Simulate outputs Y_1..Y_n of the ARX recursion driven by u and noise.

    Initial conditions default to zero. The recursion is run directly in time
    order, so unstable parameter values simply produce growing outputs.
    """
    u = np.asarray(u, dtype=float).reshape(-1)
    noise = np.asarray(noise, dtype=float).reshape(-1)
    if u.size != noise.size:
        raise ConfigError(
            f"input and noise lengths differ: {u.size} vs {noise.size}"
        )
    order = theta_true.order
    y_init = np.zeros(order.n_a) if y_init is None else np.asarray(y_init, float).reshape(-1)
    u_init = np.zeros(order.n_b) if u_init is None else np.asarray(u_init, float).reshape(-1)
    if y_init.size != order.n_a or u_init.size != order.n_b:
        raise ConfigError(
            f"initial conditions have lengths ({y_init.size}, {u_init.size}), "
            f"expected ({order.n_a}, {order.n_b})"
        )
    drive = lagged_columns(u, u_init, order.n_b) @ theta_true.b
    return ar_filter(theta_true.a, drive + noise, y_init)


def prediction_errors(theta: ParamVector, ds: Dataset) -> np.ndarray:
    """Residuals Y_t - phi_t @ theta for t = 1..n."""
    phi = build_regressors(ds, theta.order)
    return ds.y - phi @ theta.theta


def ar_poly_stable(theta: ParamVector) -> StabilityReport:
    """Check whether the autoregressive polynomial has all roots strictly
    inside the unit circle; also report the largest root modulus.

    A root exactly on the unit circle counts as unstable.
    """
    if theta.a.size == 0:
        return StabilityReport(stable=True, spectral_radius=0.0)
    roots = np.roots(np.concatenate([[1.0], theta.a]))
    radius = float(np.max(np.abs(roots))) if roots.size else 0.0
    return StabilityReport(stable=radius < 1.0, spectral_radius=radius)
