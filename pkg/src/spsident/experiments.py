"""Signal generators and the validation harness.

Covers Monte Carlo coverage at the true parameter, rank-uniformity
goodness-of-fit, exhaustive small-instance enumeration of every sign pattern
and permutation (coverage with zero statistical error), region-shrinkage
runs over growing sample sizes, and the comparison of the region against the
large-sample confidence ellipsoid.

Per-trial randomness is derived by a 64-bit mix of (master_seed, trial
index), so trials are independent, order-insensitive, and safe to execute
concurrently; aggregation is a plain sum of counts.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np
from scipy.signal import lfilter

from . import numerics
from .arx import Dataset, ParamVector, simulate_arx
from .errors import ConfigError, DegeneracyError
from .regions import (
    Ellipsoid,
    GridSpec,
    noise_variance_estimate,
    region_metrics,
    sps_region_grid,
)
from .sps import (
    SpsEvaluator,
    SpsSetup,
    _rank0,
    as_probability_fraction,
    choose_m_q,
    sps_initialize,
)

__all__ = [
    "NoiseSpec",
    "InputSpec",
    "CoverageReport",
    "RankUniformityReport",
    "EnumerationResult",
    "ConsistencyReport",
    "ShapeReport",
    "mix_seed",
    "generate_noise",
    "generate_input",
    "run_coverage",
    "run_rank_uniformity",
    "enumerate_exact_coverage",
    "run_consistency",
    "run_shape",
]

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def mix_seed(master_seed: int, k: int) -> int:
    """Derive an independent 64-bit stream seed from (master_seed, k)."""
    z = (int(master_seed) + _GOLDEN * (int(k) + 1)) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


# ---------------------------------------------------------------------------
# signal generators


_SCALE_FNS = {
    # linear ramp of standard deviations from 0.5 to 1.5
    "ramp": lambda n: 0.5 + np.arange(n) / max(n - 1, 1),
    # doubled standard deviation in the second half
    "step": lambda n: np.where(np.arange(n) < n // 2, 1.0, 2.0),
}


@dataclass(frozen=True)
class NoiseSpec:
    """A noise law that is exactly symmetric about zero.

    kinds: ``gaussian``, ``laplacian``, ``uniform_symmetric``,
    ``alternating`` (two sub-laws by sample-index parity, index 0 counted
    even), and ``scaled`` (a sub-law whose scale varies over time by a named
    profile). The last two are deliberately nonstationary.
    """

    kind: str
    variance: float = 1.0
    seed: int = 0
    even: Optional["NoiseSpec"] = None
    odd: Optional["NoiseSpec"] = None
    inner: Optional["NoiseSpec"] = None
    scale_fn: Optional[str] = None

    def __post_init__(self):
        if self.kind in ("gaussian", "laplacian", "uniform_symmetric"):
            if not (np.isfinite(self.variance) and self.variance >= 0.0):
                raise ConfigError(f"variance must be finite and >= 0, got {self.variance}")
        elif self.kind == "alternating":
            if self.even is None or self.odd is None:
                raise ConfigError("alternating noise needs 'even' and 'odd' sub-specs")
        elif self.kind == "scaled":
            if self.inner is None or self.scale_fn not in _SCALE_FNS:
                raise ConfigError(
                    f"scaled noise needs 'inner' and a scale_fn in {sorted(_SCALE_FNS)}"
                )
        else:
            raise ConfigError(f"unknown noise kind {self.kind!r}")


def generate_noise(spec: NoiseSpec, n: int, seed: Optional[int] = None) -> np.ndarray:
    """Draw n samples of the specified symmetric noise."""
    if n < 1:
        raise ConfigError(f"need n >= 1, got {n}")
    use_seed = spec.seed if seed is None else seed
    if spec.kind == "alternating":
        even = generate_noise(spec.even, n, seed=mix_seed(use_seed, 1))
        odd = generate_noise(spec.odd, n, seed=mix_seed(use_seed, 2))
        out = np.where(np.arange(n) % 2 == 0, even, odd)
        return out
    if spec.kind == "scaled":
        base = generate_noise(spec.inner, n, seed=mix_seed(use_seed, 1))
        return base * _SCALE_FNS[spec.scale_fn](n)
    rng = np.random.default_rng(use_seed)
    if spec.kind == "gaussian":
        return rng.normal(0.0, math.sqrt(spec.variance), n)
    if spec.kind == "laplacian":
        return rng.laplace(0.0, math.sqrt(spec.variance / 2.0), n)
    # uniform_symmetric on [-w, w] has variance w^2 / 3
    w = math.sqrt(3.0 * spec.variance)
    return rng.uniform(-w, w, n)


@dataclass(frozen=True)
class InputSpec:
    """Deterministic-once-generated input signal.

    kinds: ``ar1`` (first-order filter driven by white Gaussian noise,
    started from zero), ``iid_gaussian``, ``constant``, ``explicit``.
    """

    kind: str
    coeff: float = 0.0
    variance: float = 1.0
    value: float = 0.0
    sequence: Optional[np.ndarray] = None
    seed: int = 0

    def __post_init__(self):
        if self.kind == "ar1":
            if not abs(self.coeff) < 1.0:
                raise ConfigError(f"ar1 input needs |coeff| < 1, got {self.coeff}")
            if self.variance <= 0.0:
                raise ConfigError("ar1 drive variance must be > 0")
        elif self.kind == "iid_gaussian":
            if self.variance <= 0.0:
                raise ConfigError("iid_gaussian variance must be > 0")
        elif self.kind == "constant":
            pass
        elif self.kind == "explicit":
            if self.sequence is None:
                raise ConfigError("explicit input needs a sequence")
            seq = np.array(self.sequence, dtype=float).reshape(-1)
            seq.setflags(write=False)
            object.__setattr__(self, "sequence", seq)
        else:
            raise ConfigError(f"unknown input kind {self.kind!r}")


def generate_input(
    spec: InputSpec, n: int, n_init: int = 0, seed: Optional[int] = None
) -> tuple[np.ndarray, np.ndarray]:
    """Return (U_1..U_n, u_init). Inputs are causal: values at times <= 0
    are zero, so u_init is a zero vector of the requested length."""
    if n < 1:
        raise ConfigError(f"need n >= 1, got {n}")
    use_seed = spec.seed if seed is None else seed
    rng = np.random.default_rng(use_seed)
    if spec.kind == "ar1":
        v = rng.normal(0.0, math.sqrt(spec.variance), n)
        u = lfilter([1.0], [1.0, -spec.coeff], v)
    elif spec.kind == "iid_gaussian":
        u = rng.normal(0.0, math.sqrt(spec.variance), n)
    elif spec.kind == "constant":
        u = np.full(n, float(spec.value))
    else:
        if spec.sequence.size < n:
            raise ConfigError(
                f"explicit input has {spec.sequence.size} samples, need {n}"
            )
        u = np.array(spec.sequence[:n], dtype=float, copy=True)
    return u, np.zeros(n_init)


# ---------------------------------------------------------------------------
# Monte Carlo coverage


@dataclass(frozen=True)
class CoverageReport:
    """Inclusion statistics for the true parameter over repeated trials."""

    trials: int
    hits: int
    empirical: float
    nominal: float
    std_err: float
    rank_histogram: np.ndarray
    m: int
    q: int
    n: int
    master_seed: int
    lse_hits: Optional[int] = None

    @property
    def lse_fraction(self) -> Optional[float]:
        return None if self.lse_hits is None else self.lse_hits / self.trials


def _zero_init_dataset(system: ParamVector, u: np.ndarray, noise: np.ndarray) -> Dataset:
    order = system.order
    y = simulate_arx(system, u, noise)
    return Dataset(u=u, y=y, y_init=np.zeros(order.n_a), u_init=np.zeros(order.n_b))


def _coverage_chunk(
    system: ParamVector,
    u: np.ndarray,
    noise_spec: NoiseSpec,
    n: int,
    m: int,
    q: int,
    master_seed: int,
    trial_lo: int,
    trial_hi: int,
    evaluate_lse: bool,
    regenerate_input: bool,
    input_spec: Optional[InputSpec],
):
    hits = 0
    lse_hits = 0
    hist = np.zeros(m, dtype=np.int64)
    theta_star = system.theta
    for k in range(trial_lo, trial_hi):
        trial_seed = mix_seed(master_seed, k)
        if regenerate_input:
            u, _ = generate_input(input_spec, n, seed=mix_seed(trial_seed, 3))
        noise = generate_noise(noise_spec, n, seed=mix_seed(trial_seed, 1))
        ds = _zero_init_dataset(system, u, noise)
        setup = sps_initialize(n=n, seed=mix_seed(trial_seed, 2), m=m, q=q)
        ev = SpsEvaluator(ds, setup)
        res = ev.evaluate(theta_star)
        hist[res.rank - 1] += 1
        hits += int(res.included)
        if evaluate_lse:
            fit = numerics.solve_least_squares(ev.phi, ds.y)
            lse_hits += int(ev.evaluate(fit.theta).included)
    return hits, lse_hits, hist


def _chunk_bounds(trials: int, n_chunks: int) -> list[tuple[int, int]]:
    edges = np.linspace(0, trials, n_chunks + 1).astype(int)
    return [(int(lo), int(hi)) for lo, hi in zip(edges[:-1], edges[1:]) if hi > lo]


def run_coverage(
    system: ParamVector,
    input_spec: InputSpec,
    noise_spec: NoiseSpec,
    n: int,
    *,
    p=None,
    m: Optional[int] = None,
    q: Optional[int] = None,
    trials: int,
    master_seed: int,
    evaluate_lse: bool = False,
    regenerate_input: bool = False,
    n_jobs: int = 1,
) -> CoverageReport:
    """Empirical inclusion frequency of the true parameter.

    The input signal is generated once and held fixed across trials (it
    plays the role of a deterministic design); per trial, fresh noise and a
    fresh setup are derived from mix_seed(master_seed, trial). Results are
    bit-reproducible for a fixed master_seed regardless of n_jobs.

    ``regenerate_input=True`` redraws the input per trial for exploratory
    runs; that setting is outside the exact-coverage guarantee's premises.
    """
    if trials < 1:
        raise ConfigError(f"need trials >= 1, got {trials}")
    m, q = choose_m_q(p, m=m, q=q)
    u, _ = generate_input(input_spec, n)
    args = (system, u, noise_spec, n, m, q, master_seed)
    tail = (evaluate_lse, regenerate_input, input_spec)
    if n_jobs > 1:
        import concurrent.futures as cf
        import multiprocessing as mp

        ctx = mp.get_context("spawn")
        parts = []
        with cf.ProcessPoolExecutor(max_workers=n_jobs, mp_context=ctx) as pool:
            futs = [
                pool.submit(_coverage_chunk, *args, lo, hi, *tail)
                for lo, hi in _chunk_bounds(trials, n_jobs * 4)
            ]
            parts = [f.result() for f in futs]
    else:
        parts = [_coverage_chunk(*args, 0, trials, *tail)]
    hits = sum(pt[0] for pt in parts)
    lse_hits = sum(pt[1] for pt in parts)
    hist = np.sum([pt[2] for pt in parts], axis=0)
    empirical = hits / trials
    return CoverageReport(
        trials=trials,
        hits=hits,
        empirical=empirical,
        nominal=1.0 - q / m,
        std_err=math.sqrt(empirical * (1.0 - empirical) / trials),
        rank_histogram=hist,
        m=m,
        q=q,
        n=n,
        master_seed=master_seed,
        lse_hits=lse_hits if evaluate_lse else None,
    )


@dataclass(frozen=True)
class RankUniformityReport:
    """Pearson goodness-of-fit of the reference rank against the uniform
    distribution on 1..m."""

    coverage: CoverageReport
    chi2: float
    dof: int
    p_value: float


def run_rank_uniformity(
    system: ParamVector,
    input_spec: InputSpec,
    noise_spec: NoiseSpec,
    n: int,
    *,
    p=None,
    m: Optional[int] = None,
    q: Optional[int] = None,
    trials: int,
    master_seed: int,
    n_jobs: int = 1,
) -> RankUniformityReport:
    report = run_coverage(
        system,
        input_spec,
        noise_spec,
        n,
        p=p,
        m=m,
        q=q,
        trials=trials,
        master_seed=master_seed,
        n_jobs=n_jobs,
    )
    expected = report.trials / report.m
    chi2 = float(np.sum((report.rank_histogram - expected) ** 2) / expected)
    dof = report.m - 1
    return RankUniformityReport(
        coverage=report,
        chi2=chi2,
        dof=dof,
        p_value=numerics.chi2_sf(chi2, dof),
    )


# ---------------------------------------------------------------------------
# exhaustive enumeration


@dataclass(frozen=True)
class EnumerationResult:
    """Exact inclusion probability over every noise-sign pattern,
    perturbation-sign matrix, and tie-breaking permutation."""

    coverage: Fraction
    hits: int
    total: int
    nominal: Fraction


def enumerate_exact_coverage(
    abs_noise,
    system: ParamVector,
    u,
    m: int,
    q: int,
    y_init=None,
    u_init=None,
    max_configs: int = 10**7,
) -> EnumerationResult:
    """Theorem-grade coverage check with zero statistical error.

    Enumerates, all equally weighted: the 2^n sign patterns of the true
    noise (magnitudes fixed at ``abs_noise``), the 2^(n(m-1)) perturbation
    sign matrices, and the m! tie-breaking permutations; simulates the
    system, runs the indicator at the true parameter, and returns the exact
    inclusion fraction as a rational number.

    Magnitudes and initial conditions should be generic: if the model can
    interpolate the data (effective sample size equal to the parameter
    dimension), every comparison degenerates into a tie and floating-point
    evaluation cannot resolve those ties consistently.
    """
    if not m > q > 0:
        raise ConfigError(f"need m > q > 0, got m={m}, q={q}")
    abs_noise = np.asarray(abs_noise, dtype=float).reshape(-1)
    if abs_noise.size < 1 or np.any(abs_noise < 0):
        raise ConfigError("abs_noise must be a nonempty vector of magnitudes")
    n = abs_noise.size
    u = np.asarray(u, dtype=float).reshape(-1)
    if u.size != n:
        raise ConfigError(f"input has {u.size} samples, expected {n}")
    order = system.order
    y_init = np.zeros(order.n_a) if y_init is None else np.asarray(y_init, float).reshape(-1)
    u_init = np.zeros(order.n_b) if u_init is None else np.asarray(u_init, float).reshape(-1)

    total_cfg = 2**n * 2 ** (n * (m - 1)) * math.factorial(m)
    if total_cfg > max_configs:
        raise ConfigError(
            f"enumeration would visit {total_cfg} configurations, above the cap {max_configs}"
        )

    perms = [np.array(perm, dtype=np.int64) for perm in itertools.permutations(range(m))]
    theta_star = system.theta
    hits = 0
    sign_rows = list(itertools.product((-1, 1), repeat=n))
    identity_perm = np.arange(m)
    for sigma in sign_rows:
        noise = np.asarray(sigma, dtype=float) * abs_noise
        y = simulate_arx(system, u, noise, y_init, u_init)
        ds = Dataset(u=u, y=y, y_init=y_init, u_init=u_init)
        for flat in itertools.product((-1, 1), repeat=n * (m - 1)):
            signs = np.asarray(flat, dtype=np.int8).reshape(m - 1, n)
            setup = SpsSetup(m=m, q=q, signs=signs, perm=identity_perm)
            norms = SpsEvaluator(ds, setup).s_sq_norms(theta_star)
            for perm in perms:
                if _rank0(norms, perm) <= m - q:
                    hits += 1
    return EnumerationResult(
        coverage=Fraction(hits, total_cfg),
        hits=hits,
        total=total_cfg,
        nominal=Fraction(m - q, m),
    )


# ---------------------------------------------------------------------------
# consistency (region shrinkage) and asymptotic shape


@dataclass(frozen=True)
class ConsistencyReport:
    """Region diameters on a fixed grid for a ladder of sample sizes."""

    n_list: tuple[int, ...]
    m: int
    q: int
    trials: int
    master_seed: int
    diameters: np.ndarray  # (len(n_list), trials)
    median_diameters: np.ndarray

    def monotone_decreasing(self) -> bool:
        med = self.median_diameters
        return bool(np.all(np.diff(med) < 0))


def _consistency_chunk(system, u_full, noise_spec, n, ni, m, q, master_seed, lo, hi, grid):
    out = np.empty(hi - lo)
    for idx, k in enumerate(range(lo, hi)):
        trial_seed = mix_seed(mix_seed(master_seed, ni + 1), k)
        noise = generate_noise(noise_spec, n, seed=mix_seed(trial_seed, 1))
        ds = _zero_init_dataset(system, u_full[:n], noise)
        setup = sps_initialize(n=n, seed=mix_seed(trial_seed, 2), m=m, q=q)
        geval = sps_region_grid(ds, setup, grid)
        out[idx] = region_metrics(geval).diameter
    return out


def run_consistency(
    system: ParamVector,
    input_spec: InputSpec,
    noise_spec: NoiseSpec,
    n_list: Sequence[int],
    *,
    p=None,
    m: Optional[int] = None,
    q: Optional[int] = None,
    trials: int,
    master_seed: int,
    grid: GridSpec,
    n_jobs: int = 1,
) -> ConsistencyReport:
    """Median region diameter on a fixed grid, per sample size.

    The input is generated once at the largest n and each run uses its
    prefix, mirroring a single growing experiment.
    """
    n_list = tuple(int(v) for v in n_list)
    if len(n_list) < 1 or any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ConfigError(f"n_list must be strictly increasing, got {n_list}")
    if trials < 1:
        raise ConfigError(f"need trials >= 1, got {trials}")
    m, q = choose_m_q(p, m=m, q=q)
    u_full, _ = generate_input(input_spec, max(n_list))
    diameters = np.empty((len(n_list), trials))
    for ni, n in enumerate(n_list):
        args = (system, u_full, noise_spec, n, ni, m, q, master_seed)
        if n_jobs > 1:
            import concurrent.futures as cf
            import multiprocessing as mp

            ctx = mp.get_context("spawn")
            bounds = _chunk_bounds(trials, n_jobs * 2)
            with cf.ProcessPoolExecutor(max_workers=n_jobs, mp_context=ctx) as pool:
                futs = {
                    pool.submit(_consistency_chunk, *args, lo, hi, grid): (lo, hi)
                    for lo, hi in bounds
                }
                for fut, (lo, hi) in futs.items():
                    diameters[ni, lo:hi] = fut.result()
        else:
            diameters[ni] = _consistency_chunk(*args, 0, trials, grid)
    return ConsistencyReport(
        n_list=n_list,
        m=m,
        q=q,
        trials=trials,
        master_seed=master_seed,
        diameters=diameters,
        median_diameters=np.median(diameters, axis=1),
    )


@dataclass(frozen=True)
class ShapeReport:
    """Fractions of region grid nodes that fall outside the large-sample
    ellipsoid, raw and inflated, per trial."""

    n: int
    m: int
    q: int
    p: float
    trials: int
    master_seed: int
    inflation: float
    excess_raw: np.ndarray
    excess_inflated: np.ndarray
    region_node_counts: np.ndarray
    median_excess_raw: float
    median_excess_inflated: float


def _shape_chunk(
    system, u, noise_spec, n, m, q, p_float, inflation, master_seed,
    lo, hi, grid, points_per_axis, box_margin,
):
    raw = np.empty(hi - lo)
    infl = np.empty(hi - lo)
    counts = np.empty(hi - lo, dtype=np.int64)
    d = system.dim
    mu = numerics.chi2_quantile(p_float, d)
    for idx, k in enumerate(range(lo, hi)):
        trial_seed = mix_seed(master_seed, k)
        noise = generate_noise(noise_spec, n, seed=mix_seed(trial_seed, 1))
        ds = _zero_init_dataset(system, u, noise)
        setup = sps_initialize(n=n, seed=mix_seed(trial_seed, 2), m=m, q=q)
        ev = SpsEvaluator(ds, setup)
        fit = numerics.solve_least_squares(ev.phi, ds.y)
        if fit.degenerate:
            raise DegeneracyError("rank-deficient normal matrix in a shape trial")
        theta_hat = ParamVector.from_theta(fit.theta, system.order)
        sigma_sq = noise_variance_estimate(ds, theta_hat)
        shape_mat = numerics.symmetrize(ev.phi.T @ ev.phi / n)
        ell_raw = Ellipsoid(fit.theta, shape_mat, mu * sigma_sq / n)
        eta = inflation * mu * sigma_sq
        ell_inf = Ellipsoid(fit.theta, shape_mat, (mu * sigma_sq + eta) / n)
        trial_grid = grid
        if trial_grid is None:
            half = box_margin * ell_inf.bounding_half_widths()
            trial_grid = GridSpec.centered(fit.theta, half, [points_per_axis] * d)
        geval = sps_region_grid(ds, setup, trial_grid)
        met_raw = region_metrics(geval, ell_raw)
        met_inf = region_metrics(geval, ell_inf)
        raw[idx] = met_raw.excess_fraction
        infl[idx] = met_inf.excess_fraction
        counts[idx] = met_raw.included_count
    return raw, infl, counts


def run_shape(
    system: ParamVector,
    input_spec: InputSpec,
    noise_spec: NoiseSpec,
    n: int,
    p,
    m: int,
    trials: int,
    master_seed: int,
    grid: Optional[GridSpec] = None,
    points_per_axis: int = 31,
    box_margin: float = 1.8,
    inflation: float = 0.05,
    n_jobs: int = 1,
) -> ShapeReport:
    """Compare the grid-sampled region against the large-sample ellipsoid.

    q is the floor of (1 - p) m, so the realized confidence approaches p
    from above as m grows. Per trial the ellipsoid uses the estimated noise
    variance; the default inflation margin is ``inflation * mu * sigma^2``.
    When no grid is given, one is auto-sized per trial from the inflated
    ellipsoid's bounding box scaled by ``box_margin``.

    The non-asymptotic regime (small n) is reported as-is; the containment
    statement this checks is only expected to hold for large n and m.
    """
    p_frac = as_probability_fraction(p)
    q = int((1 - p_frac) * m)
    if q < 1:
        raise ConfigError(f"floor((1 - p) m) = {q}; need m large enough for q >= 1")
    if trials < 1:
        raise ConfigError(f"need trials >= 1, got {trials}")
    u, _ = generate_input(input_spec, n)
    args = (system, u, noise_spec, n, m, q, float(p_frac), inflation, master_seed)
    tail = (grid, points_per_axis, box_margin)
    if n_jobs > 1:
        import concurrent.futures as cf
        import multiprocessing as mp

        ctx = mp.get_context("spawn")
        bounds = _chunk_bounds(trials, n_jobs * 2)
        parts = []
        with cf.ProcessPoolExecutor(max_workers=n_jobs, mp_context=ctx) as pool:
            futs = [pool.submit(_shape_chunk, *args, lo, hi, *tail) for lo, hi in bounds]
            parts = [f.result() for f in futs]
        raw = np.concatenate([pt[0] for pt in parts])
        infl = np.concatenate([pt[1] for pt in parts])
        counts = np.concatenate([pt[2] for pt in parts])
    else:
        raw, infl, counts = _shape_chunk(*args, 0, trials, *tail)
    return ShapeReport(
        n=n,
        m=m,
        q=q,
        p=float(p_frac),
        trials=trials,
        master_seed=master_seed,
        inflation=inflation,
        excess_raw=raw,
        excess_inflated=infl,
        region_node_counts=counts,
        median_excess_raw=float(np.median(raw)),
        median_excess_inflated=float(np.median(infl)),
    )
