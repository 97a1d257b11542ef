"""Baseline filters/smoothers: unscented machinery and oracle equivalences."""

import numpy as np
import pytest

from pathkf import (
    VARIANCE_FLOOR,
    AffineStepDynamics,
    GaussianEstimate,
    InvalidParameterError,
    ModelKind,
    SigmaPoints,
    TimeGrid,
    TimeSeriesData,
    UT_DEFAULT,
    UtParams,
    merwe_sigma_points,
    run_adaptive_kf,
    run_ipls,
    run_ukf,
    run_urts,
    statistical_linearization,
    unscented_transform,
)

from oracles import linear_kf, linear_rts


def series_from_groups(groups, times=None):
    times = np.arange(float(len(groups))) if times is None else np.asarray(times)
    return TimeSeriesData(
        "s", TimeGrid(times), tuple(np.asarray(g, dtype=float) for g in groups)
    )


def random_series(rng, n=25, loc=50.0, sd=3.0, replicates=8):
    groups = [rng.normal(loc + rng.normal(0, 10), sd, replicates) for _ in range(n)]
    return series_from_groups(groups)


class TestUnscentedTransform:
    def test_identity_preserves_moments(self):
        est = GaussianEstimate(2.5, 4.0)
        out = unscented_transform(est, lambda x: x)
        np.testing.assert_allclose([out.mean, out.variance], [2.5, 4.0], rtol=1e-12)

    def test_affine_exactness(self):
        out = unscented_transform(GaussianEstimate(1.0, 4.0), lambda x: 3.0 * x + 2.0)
        np.testing.assert_allclose([out.mean, out.variance], [5.0, 36.0], rtol=1e-12)

    def test_square_against_monte_carlo(self):
        rng = np.random.default_rng(12)
        draws = rng.standard_normal(1_000_000)
        mc_mean = float(np.mean(draws**2))
        out = unscented_transform(GaussianEstimate(0.0, 1.0), lambda x: x**2)
        assert abs(out.mean - mc_mean) <= 0.1 * mc_mean

    def test_variance_clamped_at_floor(self):
        out = unscented_transform(GaussianEstimate(1.0, 0.0), lambda x: x)
        assert out.variance == VARIANCE_FLOOR

    def test_scalar_callable_supported(self):
        import math

        out = unscented_transform(GaussianEstimate(1.0, 0.25), lambda x: math.exp(x))
        assert np.isfinite(out.mean) and out.variance > 0


class TestSigmaPoints:
    def test_mean_weights_sum_to_one(self):
        pts = merwe_sigma_points(3.0, 2.0, UT_DEFAULT)
        assert abs(float(np.sum(pts.mean_weights)) - 1.0) <= 1e-12
        assert len(pts.points) == 3

    def test_default_params_place_points_at_one_sigma(self):
        pts = merwe_sigma_points(0.0, 4.0, UT_DEFAULT)
        np.testing.assert_allclose(sorted(pts.points), [-2.0, 0.0, 2.0], atol=1e-14)

    def test_invalid_scaling_rejected(self):
        with pytest.raises(InvalidParameterError):
            merwe_sigma_points(0.0, 1.0, UtParams(alpha=1.0, kappa=-1.0))

    def test_point_count_validated(self):
        with pytest.raises(Exception):
            SigmaPoints(np.zeros(2), np.array([0.5, 0.5]), np.array([0.5, 0.5]))


class TestStatisticalLinearization:
    def test_affine_is_exact(self):
        slope, intercept, residual = statistical_linearization(2.0, 3.0, lambda x: 4.0 * x - 1.0)
        np.testing.assert_allclose([slope, intercept], [4.0, -1.0], rtol=1e-10)
        assert residual <= 1e-12

    def test_residual_non_negative_for_nonlinear_map(self):
        slope, _, residual = statistical_linearization(1.0, 1.0, lambda x: x**2)
        assert residual >= 0.0
        np.testing.assert_allclose(slope, 2.0, rtol=1e-8)


class TestAdaptiveKF:
    def test_balanced_gain_when_variances_match(self):
        # flat data; at the third point V(Z) = V(M) + q forces w = 1/2
        d = 0.5
        c = 3.0
        v_z = 2 * d * d
        groups = [[1.0, 1.0], [1.0, 1.0], [c - d, c + d]]
        data = series_from_groups(groups)
        q = v_z - VARIANCE_FLOOR  # birth-death posterior variance sits at the floor
        out = run_adaptive_kf(data, ModelKind.BIRTH_DEATH, q=q)
        # model propagates the previous filter mean (1.0) along flat data
        np.testing.assert_allclose(out.means[2], 0.5 * c + 0.5 * 1.0, rtol=1e-9)

    def test_huge_q_tracks_data(self):
        rng = np.random.default_rng(13)
        data = random_series(rng)
        z_means, _ = data.summaries()
        out = run_adaptive_kf(data, ModelKind.BIRTH_DEATH, q=1e12)
        np.testing.assert_allclose(out.means, z_means, rtol=1e-6)

    def test_variances_floored_and_finite(self):
        rng = np.random.default_rng(14)
        data = random_series(rng)
        out = run_adaptive_kf(data, ModelKind.BIRTH_DEATH, q=1.0)
        assert np.all(out.variances >= VARIANCE_FLOOR)
        assert np.all(np.isfinite(out.means))


@pytest.fixture
def affine_case():
    """Noisy series plus affine dynamics shared by the oracle tests."""
    rng = np.random.default_rng(15)
    slope, intercept, q = 0.9, 4.0, 2.0
    n = 30
    y = np.empty(n)
    y[0] = 30.0
    for t in range(1, n):
        y[t] = slope * y[t - 1] + intercept
    data = series_from_groups([rng.normal(y[t], 2.0, 6) for t in range(n)])
    return data, AffineStepDynamics(slope, intercept), slope, intercept, q


class TestUnscentedKF:
    def test_affine_oracle(self, affine_case):
        data, dynamics, slope, intercept, q = affine_case
        out = run_ukf(data, ModelKind.BIRTH_DEATH, q=q, dynamics=dynamics)
        z_means, z_vars = data.summaries()
        m_ref, p_ref, _, _ = linear_kf(data.grid.times, z_means, z_vars, slope, intercept, q)
        np.testing.assert_allclose(out.means, m_ref, rtol=1e-8)
        np.testing.assert_allclose(out.variances, p_ref, rtol=1e-8)

    def test_constant_data_fixed_point(self):
        data = series_from_groups([[10.0, 10.0]] * 8)
        out = run_ukf(data, ModelKind.BIRTH_DEATH, q=1.0)
        np.testing.assert_allclose(out.means, 10.0, rtol=1e-8)

    def test_output_shape_and_floors(self):
        rng = np.random.default_rng(16)
        data = random_series(rng)
        out = run_ukf(data, ModelKind.BIRTH_DEATH, q=1.0)
        assert len(out.means) == len(data.grid)
        assert np.all(out.variances >= VARIANCE_FLOOR)


class TestUnscentedRTS:
    def test_last_point_equals_forward_estimate(self):
        rng = np.random.default_rng(17)
        data = random_series(rng)
        forward = run_ukf(data, ModelKind.BIRTH_DEATH, q=2.0)
        smoothed = run_urts(data, ModelKind.BIRTH_DEATH, q=2.0)
        assert smoothed.means[-1] == forward.means[-1]
        assert smoothed.variances[-1] == forward.variances[-1]

    def test_affine_oracle(self, affine_case):
        data, dynamics, slope, intercept, q = affine_case
        out = run_urts(data, ModelKind.BIRTH_DEATH, q=q, dynamics=dynamics)
        z_means, z_vars = data.summaries()
        ms_ref, ps_ref = linear_rts(data.grid.times, z_means, z_vars, slope, intercept, q)
        np.testing.assert_allclose(out.means, ms_ref, rtol=1e-8)
        np.testing.assert_allclose(out.variances, ps_ref, rtol=1e-8)


class TestIpls:
    def test_single_iteration_equals_urts(self):
        rng = np.random.default_rng(18)
        data = random_series(rng)
        urts = run_urts(data, ModelKind.BIRTH_DEATH, q=1.0)
        ipls = run_ipls(data, ModelKind.BIRTH_DEATH, q=1.0, iterations=1)
        np.testing.assert_array_equal(ipls.means, urts.means)
        np.testing.assert_array_equal(ipls.variances, urts.variances)

    def test_affine_iterations_are_fixed_points(self, affine_case):
        data, dynamics, slope, intercept, q = affine_case
        one = run_ipls(data, ModelKind.BIRTH_DEATH, q=q, iterations=1, dynamics=dynamics)
        five = run_ipls(data, ModelKind.BIRTH_DEATH, q=q, iterations=5, dynamics=dynamics)
        np.testing.assert_allclose(five.means, one.means, rtol=1e-8)
        np.testing.assert_allclose(five.variances, one.variances, rtol=1e-8)

    def test_affine_oracle(self, affine_case):
        data, dynamics, slope, intercept, q = affine_case
        out = run_ipls(data, ModelKind.BIRTH_DEATH, q=q, iterations=4, dynamics=dynamics)
        z_means, z_vars = data.summaries()
        ms_ref, ps_ref = linear_rts(data.grid.times, z_means, z_vars, slope, intercept, q)
        np.testing.assert_allclose(out.means, ms_ref, rtol=1e-8)
        np.testing.assert_allclose(out.variances, ps_ref, rtol=1e-8)

    def test_iterations_validated(self, affine_case):
        data, *_ = affine_case
        with pytest.raises(InvalidParameterError):
            run_ipls(data, ModelKind.BIRTH_DEATH, q=1.0, iterations=0)
