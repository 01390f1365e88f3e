"""Sign-perturbed sums: initialization, perturbed trajectories, statistics,
rank under the randomized total order, and the inclusion indicator.

Given a dataset and a candidate parameter theta, the method compares the
normalized reference statistic built from the observed residuals against
m - 1 statistics built from sign-perturbed residuals run through the
candidate model. theta is accepted when the reference does not land among
the q largest values in the randomized strict total order.

The reference statistic is evaluated through the very same code path as the
perturbed ones, using an implicit all-plus sign row (perturbing with +1
everywhere reproduces the observed data exactly, so this is the same
quantity). Keeping one code path guarantees that structurally equal
statistics compare as exact floating-point ties, which the permutation
tie-break then resolves; the exhaustive enumeration experiments rely on
this.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import numerics
from ._kernels import sums_and_grams, sums_and_grams_11
from .arx import (
    ArxOrder,
    Dataset,
    ParamVector,
    _check_order,
    ar_filter,
    build_regressors,
    lagged_columns,
)
from .errors import ConfigError, DegenerateNormalizationWarning

__all__ = [
    "SpsSetup",
    "SpsEvaluation",
    "SpsEvaluator",
    "choose_m_q",
    "sps_initialize",
    "perturbed_trajectory",
    "perturbed_regressors",
    "compute_s_vectors",
    "rank_under_pi",
    "sps_indicator",
]

#: default ceiling for m when it is derived from p by the minimal-m rule
DEFAULT_MAX_M = 10**6


def as_probability_fraction(p) -> Fraction:
    """Coerce a rational probability given as Fraction, string, or float."""
    if isinstance(p, Fraction):
        frac = p
    elif isinstance(p, str):
        try:
            frac = Fraction(p)
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"cannot parse probability {p!r}") from exc
    elif isinstance(p, (int, np.integer, float, np.floating)):
        frac = Fraction(float(p)).limit_denominator(10**9)
        if abs(float(frac) - float(p)) > 1e-9:
            raise ConfigError(f"probability {p} is not rational enough to factor")
    else:
        raise ConfigError(f"unsupported probability type {type(p).__name__}")
    if not Fraction(0) < frac < Fraction(1):
        raise ConfigError(f"probability must lie strictly inside (0, 1), got {p}")
    return frac


def choose_m_q(p=None, m=None, q=None, max_m: int = DEFAULT_MAX_M) -> tuple[int, int]:
    """Resolve the pair (m, q) with confidence 1 - q/m.

    With only p given, picks the smallest m for which (1 - p) * m is a
    positive integer. Explicit m and/or q are accepted and checked for
    consistency with p when both are supplied.
    """
    if m is not None:
        m = int(m)
    if q is not None:
        q = int(q)
    if p is None:
        if m is None or q is None:
            raise ConfigError("need either p or both m and q")
    else:
        miss = as_probability_fraction(p)
        miss = 1 - miss  # q/m
        if m is None and q is None:
            m, q = miss.denominator, miss.numerator
            if m > max_m:
                raise ConfigError(
                    f"p={p} needs m={m} under the minimal-m rule, above the cap {max_m}"
                )
        elif m is not None:
            q_exact = miss * m
            if q_exact.denominator != 1:
                raise ConfigError(
                    f"(1 - p) * m = {q_exact} is not an integer; "
                    f"m={m} cannot realize p={p} exactly"
                )
            if q is not None and q != q_exact.numerator:
                raise ConfigError(
                    f"q={q} inconsistent with p={p} and m={m} "
                    f"(expected q={q_exact.numerator})"
                )
            q = q_exact.numerator
        else:
            m_exact = Fraction(q) / miss
            if m_exact.denominator != 1:
                raise ConfigError(f"q={q} cannot realize p={p} with integer m")
            m = m_exact.numerator
    if not (m > q > 0):
        raise ConfigError(f"need m > q > 0, got m={m}, q={q}")
    return m, q


@dataclass(frozen=True)
class SpsSetup:
    """All randomness of one analysis, fixed once: the sign matrix, the
    tie-breaking permutation, and the integers (m, q)."""

    m: int
    q: int
    signs: np.ndarray  # (m - 1, n), entries in {-1, +1}
    perm: np.ndarray  # permutation of {0..m-1}
    seed: int = 0

    def __post_init__(self):
        signs = np.array(self.signs, dtype=np.int8, copy=True)
        perm = np.array(self.perm, dtype=np.int64, copy=True)
        signs.setflags(write=False)
        perm.setflags(write=False)
        object.__setattr__(self, "signs", signs)
        object.__setattr__(self, "perm", perm)
        if not self.m > self.q > 0:
            raise ConfigError(f"need m > q > 0, got m={self.m}, q={self.q}")
        if signs.ndim != 2 or signs.shape[0] != self.m - 1 or signs.shape[1] < 1:
            raise ConfigError(
                f"sign matrix shape {signs.shape} does not match m={self.m}"
            )
        if not np.all(np.abs(signs) == 1):
            raise ConfigError("sign matrix entries must be -1 or +1")
        if perm.shape != (self.m,) or not np.array_equal(np.sort(perm), np.arange(self.m)):
            raise ConfigError(f"perm must be a permutation of 0..{self.m - 1}")

    @property
    def n(self) -> int:
        return self.signs.shape[1]

    @property
    def confidence(self) -> Fraction:
        return Fraction(self.m - self.q, self.m)

    def to_json_dict(self, include_arrays: bool = False) -> dict:
        out = {
            "m": self.m,
            "q": self.q,
            "n": self.n,
            "seed": int(self.seed),
            "confidence": {
                "num": self.confidence.numerator,
                "den": self.confidence.denominator,
            },
        }
        if include_arrays:
            out["signs"] = self.signs.tolist()
            out["perm"] = self.perm.tolist()
        return out

    @classmethod
    def from_json_dict(cls, data: dict) -> "SpsSetup":
        if "signs" in data and "perm" in data:
            return cls(
                m=data["m"],
                q=data["q"],
                signs=np.asarray(data["signs"]),
                perm=np.asarray(data["perm"]),
                seed=data.get("seed", 0),
            )
        return sps_initialize(
            n=data["n"], seed=data.get("seed", 0), m=data["m"], q=data["q"]
        )


def sps_initialize(
    p=None,
    n: int | None = None,
    seed: int = 0,
    m: int | None = None,
    q: int | None = None,
    max_m: int = DEFAULT_MAX_M,
) -> SpsSetup:
    """Draw the sign matrix and tie-breaking permutation for a sample of
    size n, deterministically from ``seed``.

    (m, q) come from the rational confidence level p via the minimal-m rule
    unless given explicitly; fair signs are drawn row by row and the
    permutation is drawn from the same stream afterwards.
    """
    if n is None or int(n) < 1:
        raise ConfigError(f"sample size n must be >= 1, got {n}")
    n = int(n)
    m, q = choose_m_q(p, m=m, q=q, max_m=max_m)
    rng = np.random.default_rng(int(seed) & (2**64 - 1))
    signs = rng.integers(0, 2, size=(m - 1, n), dtype=np.int8) * np.int8(2) - np.int8(1)
    perm = rng.permutation(m)
    return SpsSetup(m=m, q=q, signs=signs, perm=perm, seed=int(seed))


@dataclass(frozen=True)
class SpsEvaluation:
    """Squared statistic norms, the reference rank, and the verdict."""

    s_sq_norms: np.ndarray
    rank: int
    included: bool


def rank_under_pi(s_sq_norms, perm) -> int:
    """Ascending rank of the first entry under the strict total order that
    compares values first and permutation entries on exact ties.

    Rank 1 means the first entry is the minimum of the ordering.
    """
    z = np.asarray(s_sq_norms, dtype=float).reshape(-1)
    perm = np.asarray(perm)
    if z.size != perm.size or z.size < 1:
        raise ConfigError(
            f"got {z.size} norms but a permutation of length {perm.size}"
        )
    if not np.array_equal(np.sort(perm), np.arange(perm.size)):
        raise ConfigError("perm must be a permutation of 0..m-1")
    return _rank0(z, perm)


def _rank0(z: np.ndarray, perm: np.ndarray) -> int:
    beats = (z[0] > z[1:]) | ((z[0] == z[1:]) & (perm[0] > perm[1:]))
    return 1 + int(np.count_nonzero(beats))


class SpsEvaluator:
    """Evaluates the indicator for many candidate thetas against one fixed
    dataset and setup, reusing all theta-independent work.

    Instances are immutable after construction; evaluations for different
    thetas are independent and can run from multiple threads.
    """

    def __init__(self, ds: Dataset, setup: SpsSetup):
        if setup.n != ds.n:
            raise ConfigError(
                f"setup holds {setup.n} sign columns but the dataset has {ds.n} samples"
            )
        self.ds = ds
        self.setup = setup
        self.order = ds.order
        self.phi = build_regressors(ds, self.order)
        self.exog = np.ascontiguousarray(self.phi[:, self.order.n_a :])
        self.exog_gram = self.exog.T @ self.exog
        ones = np.ones((1, ds.n), dtype=np.int8)
        self.signs_full = np.ascontiguousarray(np.vstack([ones, setup.signs]))
        self.y_init_old_first = np.ascontiguousarray(ds.y_init[::-1])

    def _theta_array(self, theta) -> np.ndarray:
        if isinstance(theta, ParamVector):
            if theta.order != self.order:
                raise ConfigError(
                    f"theta has orders ({theta.a.size}, {theta.b.size}), "
                    f"dataset implies ({self.order.n_a}, {self.order.n_b})"
                )
            return theta.theta
        arr = np.asarray(theta, dtype=float).reshape(-1)
        if arr.size != self.order.d:
            raise ConfigError(f"theta has {arr.size} entries, expected {self.order.d}")
        return arr

    def _sums_and_grams(self, theta_arr: np.ndarray):
        n_a = self.order.n_a
        a = theta_arr[:n_a]
        b = theta_arr[n_a:]
        nhat = self.ds.y - self.phi @ theta_arr
        drive = self.exog @ b
        if n_a == 1 and self.order.n_b == 1:
            y0 = float(self.y_init_old_first[0])
            return sums_and_grams_11(
                float(a[0]),
                self.exog[:, 0],
                float(self.exog_gram[0, 0]),
                y0,
                nhat,
                drive,
                self.signs_full,
            )
        return sums_and_grams(
            a,
            self.exog,
            self.exog_gram,
            self.y_init_old_first,
            nhat,
            drive,
            self.signs_full,
        )

    def s_vectors(self, theta) -> np.ndarray:
        """All m normalized statistics as rows; row 0 is the reference."""
        s_num, grams = self._sums_and_grams(self._theta_array(theta))
        svecs, ranks = numerics.inv_sqrt_apply_batched(grams, s_num)
        if int(ranks.min()) < self.order.d:
            warnings.warn(
                f"rank-deficient normalization matrix (min rank {int(ranks.min())} "
                f"of {self.order.d}); pseudoinverse used",
                DegenerateNormalizationWarning,
                stacklevel=3,
            )
        return svecs

    def s_sq_norms(self, theta) -> np.ndarray:
        svecs = self.s_vectors(theta)
        return np.einsum("ik,ik->i", svecs, svecs)

    def rank(self, theta) -> int:
        return _rank0(self.s_sq_norms(theta), self.setup.perm)

    def evaluate(self, theta) -> SpsEvaluation:
        norms = self.s_sq_norms(theta)
        rank = _rank0(norms, self.setup.perm)
        return SpsEvaluation(
            s_sq_norms=norms,
            rank=rank,
            included=rank <= self.setup.m - self.setup.q,
        )


def _check_signs_row(signs_row, n: int) -> np.ndarray:
    row = np.asarray(signs_row, dtype=float).reshape(-1)
    if row.size != n:
        raise ConfigError(f"signs row has {row.size} entries, expected {n}")
    if not np.all(np.abs(row) == 1.0):
        raise ConfigError("signs must be -1 or +1")
    return row


def perturbed_trajectory(theta: ParamVector, ds: Dataset, signs_row) -> np.ndarray:
    """Outputs of the candidate model driven by the sign-flipped residuals.

    The recursion uses the candidate's coefficients, the dataset's inputs,
    and starts from the dataset's own output initial conditions; with an
    all-plus sign row it reproduces the observed outputs identically.
    """
    order = theta.order
    _check_order(ds, order)
    row = _check_signs_row(signs_row, ds.n)
    nhat = ds.y - build_regressors(ds, order) @ theta.theta
    drive = lagged_columns(ds.u, ds.u_init, order.n_b) @ theta.b
    return ar_filter(theta.a, drive + row * nhat, ds.y_init)


def perturbed_regressors(theta: ParamVector, ds: Dataset, signs_row) -> np.ndarray:
    """Regressors rebuilt from the perturbed trajectory; input slots keep
    the original inputs and times <= 0 use the dataset initial conditions."""
    order = theta.order
    ybar = perturbed_trajectory(theta, ds, signs_row)
    ylags = -lagged_columns(ybar, ds.y_init, order.n_a)
    ulags = lagged_columns(ds.u, ds.u_init, order.n_b)
    return np.hstack([ylags, ulags])


def compute_s_vectors(theta: ParamVector, ds: Dataset, setup: SpsSetup) -> np.ndarray:
    """The m statistics for one theta; row 0 is the reference statistic."""
    return SpsEvaluator(ds, setup).s_vectors(theta)


def sps_indicator(theta, ds: Dataset, setup: SpsSetup) -> SpsEvaluation:
    """Full pipeline: residuals, perturbed trajectories and regressors,
    normalized statistics, rank, and the inclusion verdict."""
    return SpsEvaluator(ds, setup).evaluate(theta)
