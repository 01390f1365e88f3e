import math
from fractions import Fraction

import numpy as np
import pytest
from numpy.testing import assert_allclose

from conftest import DEMO_INPUT, DEMO_NOISE, make_dataset
from spsident import (
    ConfigError,
    Dataset,
    GridSpec,
    InputSpec,
    NoiseSpec,
    ParamVector,
    SpsEvaluator,
    SpsSetup,
    chi2_sf,
    enumerate_exact_coverage,
    generate_input,
    generate_noise,
    mix_seed,
    run_consistency,
    run_coverage,
    run_rank_uniformity,
    run_shape,
    simulate_arx,
    sps_initialize,
)
from spsident.sps import _rank0


class TestMixSeed:
    def test_deterministic_and_distinct(self):
        a = mix_seed(123, 0)
        assert a == mix_seed(123, 0)
        vals = {mix_seed(123, k) for k in range(1000)}
        assert len(vals) == 1000
        assert all(0 <= v < 2**64 for v in vals)
        assert mix_seed(124, 0) != a


class TestGenerateNoise:
    def test_laplacian_scale_and_variance(self):
        draws = generate_noise(NoiseSpec(kind="laplacian", variance=0.1), 200_000, seed=1)
        # Laplace scale sqrt(variance / 2); check through the sample variance
        assert np.var(draws) == pytest.approx(0.1, rel=0.02)
        assert math.sqrt(0.1 / 2) == pytest.approx(0.22360679, abs=1e-8)

    def test_sample_mean_near_zero(self):
        for kind in ("gaussian", "laplacian", "uniform_symmetric"):
            draws = generate_noise(NoiseSpec(kind=kind, variance=0.5), 10**6, seed=3)
            assert abs(draws.mean()) < 4 * math.sqrt(0.5 / 10**6)

    def test_uniform_symmetric_support(self):
        draws = generate_noise(NoiseSpec(kind="uniform_symmetric", variance=1.0), 10**5, seed=5)
        w = math.sqrt(3.0)
        assert draws.min() >= -w and draws.max() <= w
        assert np.var(draws) == pytest.approx(1.0, rel=0.02)

    def test_alternating_variances_by_index_parity(self):
        spec = NoiseSpec(
            kind="alternating",
            even=NoiseSpec(kind="gaussian", variance=1.0),
            odd=NoiseSpec(kind="laplacian", variance=4.0),
        )
        draws = generate_noise(spec, 200_000, seed=7)
        assert np.var(draws[0::2]) == pytest.approx(1.0, rel=0.05)
        assert np.var(draws[1::2]) == pytest.approx(4.0, rel=0.05)

    def test_scaled_step_profile(self):
        spec = NoiseSpec(kind="scaled", inner=NoiseSpec(kind="gaussian", variance=1.0),
                         scale_fn="step")
        draws = generate_noise(spec, 100_000, seed=9)
        first, second = draws[: 50_000], draws[50_000 :]
        assert np.var(second) / np.var(first) == pytest.approx(4.0, rel=0.1)

    def test_validation(self):
        with pytest.raises(ConfigError):
            NoiseSpec(kind="cauchy")
        with pytest.raises(ConfigError):
            NoiseSpec(kind="gaussian", variance=-1.0)
        with pytest.raises(ConfigError):
            NoiseSpec(kind="alternating")
        with pytest.raises(ConfigError):
            NoiseSpec(kind="scaled", inner=NoiseSpec(kind="gaussian"), scale_fn="bogus")


class TestGenerateInput:
    def test_ar1_lag_autocorrelation(self):
        u, u_init = generate_input(InputSpec(kind="ar1", coeff=0.75, variance=1.0), 10**5, n_init=1, seed=11)
        r = np.corrcoef(u[1:], u[:-1])[0, 1]
        assert r == pytest.approx(0.75, abs=0.03)
        assert_allclose(u_init, [0.0])

    def test_constant_and_explicit(self):
        u, _ = generate_input(InputSpec(kind="constant", value=1.0), 7)
        assert_allclose(u, np.ones(7))
        seq = np.array([3.0, 1.0, 4.0, 1.0, 5.0])
        u, _ = generate_input(InputSpec(kind="explicit", sequence=seq), 5)
        assert_allclose(u, seq)
        u, _ = generate_input(InputSpec(kind="explicit", sequence=seq), 3)
        assert_allclose(u, seq[:3])
        with pytest.raises(ConfigError):
            generate_input(InputSpec(kind="explicit", sequence=seq), 9)

    def test_unstable_ar1_rejected(self):
        with pytest.raises(ConfigError):
            InputSpec(kind="ar1", coeff=1.0, variance=1.0)


class TestEnumeration:
    """Coverage checked exactly, with zero statistical error."""

    def setup_method(self):
        self.system = ParamVector(a=[-0.7], b=[1.0])
        self.u2, _ = generate_input(DEMO_INPUT, 2)
        self.u3, _ = generate_input(DEMO_INPUT, 3)

    def test_n2_m2_exactly_one_half(self):
        res = enumerate_exact_coverage([0.7, 1.3], self.system, self.u2, m=2, q=1)
        assert res.coverage == Fraction(1, 2)
        assert res.total == 2**2 * 2**2 * 2

    def test_n2_m3_exactly_two_thirds(self):
        res = enumerate_exact_coverage([0.7, 1.3], self.system, self.u2, m=3, q=1)
        assert res.coverage == Fraction(2, 3)
        assert res.total == 2**2 * 2**4 * 6

    def test_n3_m2_exactly_one_half(self):
        # generic nonzero initial conditions keep the statistics distinct
        # whenever the sign patterns differ
        res = enumerate_exact_coverage(
            [0.7, 1.3, 0.4], self.system, self.u3, m=2, q=1,
            y_init=[0.2], u_init=[0.5],
        )
        assert res.coverage == Fraction(1, 2)
        assert res.total == 2**3 * 2**3 * 2

    def test_fir_m3_q2_exactly_one_third(self):
        fir = ParamVector(a=[], b=[0.8, -0.3])
        res = enumerate_exact_coverage(
            [0.7, 1.3], fir, self.u2, m=3, q=2, u_init=[0.5, -0.2]
        )
        assert res.coverage == Fraction(1, 3)

    def test_budget_cap(self):
        with pytest.raises(ConfigError):
            enumerate_exact_coverage(np.ones(10), self.system, np.ones(10), m=4, q=1)

    def test_nominal_echo(self):
        res = enumerate_exact_coverage([0.7, 1.3], self.system, self.u2, m=2, q=1)
        assert res.nominal == Fraction(1, 2)


class TestCoverage:
    def test_smallest_m_band(self, demo_system):
        trials = 1500
        rep = run_coverage(
            demo_system, DEMO_INPUT, DEMO_NOISE, 25,
            m=2, q=1, trials=trials, master_seed=101,
        )
        assert rep.nominal == pytest.approx(0.5)
        band = 3 * math.sqrt(0.25 / trials)
        assert abs(rep.empirical - 0.5) < band
        assert rep.rank_histogram.sum() == trials
        assert rep.hits == round(rep.empirical * trials)

    def test_bit_reproducible(self, demo_system):
        kw = dict(m=5, q=1, trials=200, master_seed=555, evaluate_lse=True)
        r1 = run_coverage(demo_system, DEMO_INPUT, DEMO_NOISE, 20, **kw)
        r2 = run_coverage(demo_system, DEMO_INPUT, DEMO_NOISE, 20, **kw)
        assert r1.hits == r2.hits
        assert r1.lse_hits == r2.lse_hits
        assert np.array_equal(r1.rank_histogram, r2.rank_histogram)

    def test_parallel_matches_serial(self, demo_system):
        kw = dict(m=4, q=1, trials=120, master_seed=777, evaluate_lse=True)
        serial = run_coverage(demo_system, DEMO_INPUT, DEMO_NOISE, 15, **kw)
        parallel = run_coverage(
            demo_system, DEMO_INPUT, DEMO_NOISE, 15, n_jobs=2, **kw
        )
        assert serial.hits == parallel.hits
        assert serial.lse_hits == parallel.lse_hits
        assert np.array_equal(serial.rank_histogram, parallel.rank_histogram)

    def test_nonstationary_noise_same_band(self, demo_system):
        trials = 1500
        spec = NoiseSpec(
            kind="alternating",
            even=NoiseSpec(kind="gaussian", variance=0.1),
            odd=NoiseSpec(kind="laplacian", variance=0.4),
        )
        rep = run_coverage(
            demo_system, DEMO_INPUT, spec, 25, m=2, q=1,
            trials=trials, master_seed=303,
        )
        assert abs(rep.empirical - 0.5) < 3 * math.sqrt(0.25 / trials)


class TestRankUniformity:
    def test_m2_histogram_split(self, demo_system):
        trials = 2000
        rep = run_rank_uniformity(
            demo_system, DEMO_INPUT, DEMO_NOISE, 20,
            m=2, q=1, trials=trials, master_seed=131,
        )
        hist = rep.coverage.rank_histogram
        assert abs(hist[0] - trials / 2) < 3 * math.sqrt(trials) / 2
        assert rep.dof == 1
        assert 0.0 <= rep.p_value <= 1.0

    def test_biased_mutant_detected(self, demo_system):
        # a rank that ignores the permutation tie-break is biased once exact
        # ties are common; discrete noise that is frequently zero provokes
        # ties between sign rows agreeing on the nonzero samples
        n, m, trials = 8, 5, 800
        u, _ = generate_input(DEMO_INPUT, n)
        order = demo_system.order
        rng = np.random.default_rng(17)
        correct_hist = np.zeros(m, dtype=np.int64)
        mutant_hist = np.zeros(m, dtype=np.int64)
        for k in range(trials):
            noise = rng.choice([0.0, -0.9, 0.9], p=[0.8, 0.1, 0.1], size=n)
            y = simulate_arx(demo_system, u, noise)
            ds = Dataset(u=u, y=y, y_init=np.zeros(1), u_init=np.zeros(1))
            setup = sps_initialize(n=n, seed=int(rng.integers(2**63)), m=m, q=1)
            norms = SpsEvaluator(ds, setup).s_sq_norms(demo_system.theta)
            correct_hist[_rank0(norms, setup.perm) - 1] += 1
            mutant_rank = 1 + int(np.sum(norms[0] > norms[1:]))
            mutant_hist[mutant_rank - 1] += 1

        def gof_pvalue(hist):
            expected = trials / m
            chi2 = float(np.sum((hist - expected) ** 2) / expected)
            return chi2_sf(chi2, m - 1)

        assert gof_pvalue(correct_hist) > 0.001
        assert gof_pvalue(mutant_hist) < 1e-10


class TestConsistency:
    GRID = GridSpec(lower=[-1.0, 0.5], upper=[-0.4, 1.5], points_per_axis=[15, 15])

    def test_diameters_shrink_with_more_data(self, demo_system):
        rep = run_consistency(
            demo_system, DEMO_INPUT, DEMO_NOISE, [30, 300],
            m=10, q=1, trials=6, master_seed=909, grid=self.GRID,
        )
        assert rep.diameters.shape == (2, 6)
        assert rep.median_diameters[1] < rep.median_diameters[0]
        assert rep.monotone_decreasing()

    def test_zero_noise_collapses_to_grid_resolution(self, demo_system):
        rep = run_consistency(
            demo_system, DEMO_INPUT, NoiseSpec(kind="gaussian", variance=0.0),
            [40], m=6, q=1, trials=2, master_seed=11, grid=self.GRID,
        )
        cell = np.array([0.6 / 15, 1.0 / 15])
        assert rep.median_diameters[0] <= 2.1 * np.linalg.norm(cell)

    def test_single_n_reports_distribution(self, demo_system):
        rep = run_consistency(
            demo_system, DEMO_INPUT, DEMO_NOISE, [25],
            m=8, q=2, trials=5, master_seed=13, grid=self.GRID,
        )
        assert rep.diameters.shape == (1, 5)
        assert np.all(rep.diameters >= 0.0)

    def test_requires_increasing_n(self, demo_system):
        with pytest.raises(ConfigError):
            run_consistency(
                demo_system, DEMO_INPUT, DEMO_NOISE, [40, 40],
                m=4, q=1, trials=1, master_seed=1, grid=self.GRID,
            )


class TestShape:
    def test_small_run_fields_and_determinism(self, demo_system):
        kw = dict(trials=3, master_seed=515, points_per_axis=9)
        r1 = run_shape(demo_system, DEMO_INPUT, DEMO_NOISE, 150, 0.95, 20, **kw)
        r2 = run_shape(demo_system, DEMO_INPUT, DEMO_NOISE, 150, 0.95, 20, **kw)
        assert r1.q == 1  # floor(0.05 * 20)
        assert r1.excess_raw.shape == (3,)
        assert np.all((0.0 <= r1.excess_raw) & (r1.excess_raw <= 1.0))
        assert np.all(r1.excess_inflated <= r1.excess_raw + 1e-15)
        assert np.array_equal(r1.excess_inflated, r2.excess_inflated)
        assert np.array_equal(r1.region_node_counts, r2.region_node_counts)

    def test_q_floor_uses_exact_rational(self, demo_system):
        # 0.05 * 100 must floor to 5, not to 4 via float error
        rep = run_shape(
            demo_system, DEMO_INPUT, DEMO_NOISE, 60, 0.95, 100,
            trials=1, master_seed=1, points_per_axis=5,
        )
        assert rep.q == 5

    def test_q_must_be_positive(self, demo_system):
        with pytest.raises(ConfigError):
            run_shape(
                demo_system, DEMO_INPUT, DEMO_NOISE, 60, 0.95, 10,
                trials=1, master_seed=1,
            )
