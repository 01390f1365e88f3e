import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.stats import chi2 as scipy_chi2

from spsident import (
    ArxOrder,
    ConfigError,
    Dataset,
    NotPsdError,
    build_regressors,
    chi2_cdf,
    chi2_quantile,
    psd_inv_sqrt,
    solve_least_squares,
)
from spsident.numerics import inv_sqrt_apply_batched, symmetrize


def random_psd(rng, d, rank=None):
    rank = d if rank is None else rank
    basis = rng.normal(size=(d, rank))
    return basis @ basis.T


def range_projector(mat):
    """Independent oracle: projector onto the range via SVD."""
    u, s, _ = np.linalg.svd(mat)
    keep = s > 1e-10 * max(1.0, s.max(initial=0.0))
    ur = u[:, keep]
    return ur @ ur.T


def test_psd_inv_sqrt_identity():
    fac = psd_inv_sqrt(np.eye(2))
    assert_allclose(fac.inv_sqrt, np.eye(2), atol=1e-14)
    assert fac.rank == 2


def test_psd_inv_sqrt_diagonal():
    fac = psd_inv_sqrt(np.diag([4.0, 9.0]))
    assert_allclose(fac.inv_sqrt, np.diag([0.5, 1.0 / 3.0]), atol=1e-14)
    assert fac.rank == 2
    assert fac.min_eig == pytest.approx(4.0)
    assert fac.max_eig == pytest.approx(9.0)


def test_psd_inv_sqrt_pseudoinverse_on_null_direction():
    fac = psd_inv_sqrt(np.diag([4.0, 0.0]))
    assert_allclose(fac.inv_sqrt, np.diag([0.5, 0.0]), atol=1e-14)
    assert fac.rank == 1


def test_psd_inv_sqrt_rejects_negative_eigenvalue():
    with pytest.raises(NotPsdError):
        psd_inv_sqrt(np.diag([1.0, -0.5]))


def test_symmetrize_rejects_asymmetry():
    with pytest.raises(ConfigError):
        symmetrize(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_projector_identity_on_random_psd_matrices():
    rng = np.random.default_rng(42)
    for _ in range(50):
        d = int(rng.integers(1, 7))
        rank = int(rng.integers(1, d + 1))
        mat = random_psd(rng, d, rank)
        fac = psd_inv_sqrt(mat)
        proj = fac.inv_sqrt @ mat @ fac.inv_sqrt
        assert np.max(np.abs(proj - range_projector(mat))) < 1e-8


def test_inv_sqrt_apply_batched_matches_single():
    rng = np.random.default_rng(3)
    mats = np.stack([random_psd(rng, 3, r) for r in (3, 2, 1)])
    vecs = rng.normal(size=(3, 3))
    out, ranks = inv_sqrt_apply_batched(mats, vecs)
    assert list(ranks) == [3, 2, 1]
    for i in range(3):
        assert_allclose(out[i], psd_inv_sqrt(mats[i]).inv_sqrt @ vecs[i], atol=1e-10)


def test_solve_least_squares_two_sample_by_hand():
    phi = np.array([[0.0, 1.0], [-1.0, 1.0]])
    fit = solve_least_squares(phi, [1.0, 1.7])
    assert_allclose(fit.theta, [-0.7, 1.0], atol=1e-12)
    assert not fit.degenerate
    assert fit.rank == 2


def test_solve_least_squares_noise_free_recovery(demo_system):
    from conftest import make_dataset
    from spsident import NoiseSpec

    ds = make_dataset(demo_system, n=40, noise_seed=0,
                      noise_spec=NoiseSpec(kind="gaussian", variance=0.0))
    fit = solve_least_squares(build_regressors(ds, ArxOrder(1, 1)), ds.y)
    assert_allclose(fit.theta, demo_system.theta, atol=1e-10)


def test_solve_least_squares_degenerate_minimum_norm():
    phi = np.zeros((5, 2))
    fit = solve_least_squares(phi, np.ones(5))
    assert_allclose(fit.theta, [0.0, 0.0])
    assert fit.degenerate
    assert fit.rank == 0
    assert math.isinf(fit.cond)


def test_solve_least_squares_residual_orthogonality():
    rng = np.random.default_rng(9)
    phi = rng.normal(size=(50, 3))
    y = rng.normal(size=50)
    fit = solve_least_squares(phi, y)
    grad = phi.T @ (y - phi @ fit.theta)
    assert np.max(np.abs(grad)) < 1e-8 * max(1.0, np.abs(y).max()) * 50


def test_chi2_quantile_closed_form_dof2():
    # for two degrees of freedom the quantile is -2 log(1 - p)
    assert chi2_quantile(0.95, 2) == pytest.approx(-2.0 * math.log(0.05), abs=1e-9)
    assert chi2_quantile(0.5, 2) == pytest.approx(-2.0 * math.log(0.5), abs=1e-9)
    assert chi2_quantile(0.95, 2) == pytest.approx(5.991464547107979, abs=1e-9)


def test_chi2_quantile_round_trip_and_cross_check():
    for dof in (1, 2, 3, 6, 11):
        for p in (0.001, 0.05, 0.31, 0.5, 0.9, 0.95, 0.999):
            mu = chi2_quantile(p, dof)
            assert chi2_cdf(mu, dof) == pytest.approx(p, abs=1e-9)
            assert mu == pytest.approx(scipy_chi2.ppf(p, dof), abs=1e-8)


def test_chi2_quantile_strictly_increasing():
    ps = np.linspace(0.01, 0.99, 25)
    for dof in (1, 4):
        qs = [chi2_quantile(p, dof) for p in ps]
        assert np.all(np.diff(qs) > 0)


def test_chi2_quantile_domain_errors():
    with pytest.raises(ConfigError):
        chi2_quantile(0.0, 2)
    with pytest.raises(ConfigError):
        chi2_quantile(1.0, 2)
    with pytest.raises(ConfigError):
        chi2_quantile(1.5, 2)
    with pytest.raises(ConfigError):
        chi2_quantile(0.5, 0)
