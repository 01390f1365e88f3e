"""Finite-sample confidence regions for ARX system parameters via
sign-perturbed sums, with an experiment harness for coverage, consistency,
and asymptotic-shape validation."""

__version__ = "0.1.0"

from .arx import (
    ArxOrder,
    Dataset,
    ParamVector,
    StabilityReport,
    ar_poly_stable,
    build_regressors,
    prediction_errors,
    simulate_arx,
)
from .errors import (
    ConfigError,
    DegeneracyError,
    DegenerateNormalizationWarning,
    NotPsdError,
)
from .experiments import (
    ConsistencyReport,
    CoverageReport,
    EnumerationResult,
    InputSpec,
    NoiseSpec,
    RankUniformityReport,
    ShapeReport,
    enumerate_exact_coverage,
    generate_input,
    generate_noise,
    mix_seed,
    run_consistency,
    run_coverage,
    run_rank_uniformity,
    run_shape,
)
from .numerics import (
    LstsqResult,
    PsdFactor,
    chi2_cdf,
    chi2_quantile,
    chi2_sf,
    psd_inv_sqrt,
    solve_least_squares,
)
from .regions import (
    Ellipsoid,
    GridSpec,
    IndicatorGrid,
    RegionMetrics,
    asymptotic_ellipsoid,
    ellipsoid_contains,
    noise_variance_estimate,
    region_metrics,
    sps_region_grid,
)
from .sps import (
    SpsEvaluation,
    SpsEvaluator,
    SpsSetup,
    choose_m_q,
    compute_s_vectors,
    perturbed_regressors,
    perturbed_trajectory,
    rank_under_pi,
    sps_indicator,
    sps_initialize,
)

__all__ = [
    "__version__",
    "ArxOrder",
    "ParamVector",
    "Dataset",
    "StabilityReport",
    "build_regressors",
    "simulate_arx",
    "prediction_errors",
    "ar_poly_stable",
    "ConfigError",
    "NotPsdError",
    "DegeneracyError",
    "DegenerateNormalizationWarning",
    "PsdFactor",
    "LstsqResult",
    "psd_inv_sqrt",
    "solve_least_squares",
    "chi2_cdf",
    "chi2_sf",
    "chi2_quantile",
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
    "GridSpec",
    "IndicatorGrid",
    "Ellipsoid",
    "RegionMetrics",
    "sps_region_grid",
    "noise_variance_estimate",
    "asymptotic_ellipsoid",
    "ellipsoid_contains",
    "region_metrics",
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
