import numpy as np
import pytest

from gmmfilter.baselines import (
    ParticleCloud,
    density_from_particles,
    kalman_filter,
    particle_filter,
    silverman_bandwidth,
    systematic_resample,
)
from gmmfilter.errors import ParticleDegeneracyError
from gmmfilter.filter import FilterConfig, run_filter
from gmmfilter.mixture import GaussianMixture
from gmmfilter.model import GmmStateSpaceModel, MeasurementComponent, ProcessComponent, simulate

_A = np.array([[1.0, 0.01], [0.0, 1.0]])
_C = np.array([[1.0, 0.0]])


def _linear_model(prior_var=1.0):
    prior = GaussianMixture.single([0.0, 0.0], np.sqrt(prior_var) * np.eye(2))
    return GmmStateSpaceModel(prior, [ProcessComponent(1.0, _A, 0.1 * np.eye(2))],
                              [MeasurementComponent(1.0, _C, [[np.sqrt(0.1)]])])


class TestKalman:
    def test_static_state(self):
        k = 12
        res = kalman_filter([[1.0]], [[0.0]], [[1.0]], [[1.0]], [0.0], [[1.0]], np.ones((k, 1)))
        expected = 1.0 / (np.arange(1, k + 1) + 1.0)
        np.testing.assert_allclose(res.filt_covs[:, 0, 0], expected, rtol=1e-12)
        assert res.pred_means.shape == (k + 1, 1)

    def test_no_measurements(self):
        res = kalman_filter(_A, 0.01 * np.eye(2), _C, [[0.1]], [1.0, 2.0], np.diag([3.0, 4.0]),
                            np.empty((0, 1)))
        np.testing.assert_array_equal(res.pred_means, [[1.0, 2.0]])
        np.testing.assert_allclose(res.pred_covs[0], np.diag([3.0, 4.0]), atol=1e-15)
        assert res.filt_means.shape == (0, 2)

    def test_matches_run_filter(self, rng):
        model = _linear_model()
        ys = simulate(model, 50, rng).measurements
        tr = run_filter(model, ys, FilterConfig(reduction=False))
        res = kalman_filter(_A, 0.01 * np.eye(2), _C, [[0.1]], [0.0, 0.0], np.eye(2), ys)
        np.testing.assert_allclose(res.pred_means[:-1], tr.pred_means, atol=1e-10)
        np.testing.assert_allclose(res.filt_covs, tr.filt_covs, atol=1e-10)
        np.testing.assert_allclose(res.loglik, tr.loglik, atol=1e-10)

    def test_offsets(self):
        res = kalman_filter([[1.0]], [[1.0]], [[1.0]], [[1.0]], [0.0], [[1.0]], [[0.0]],
                            u=lambda t: np.array([2.0 * t]))
        assert res.pred_means[1, 0] == pytest.approx(2.0)


class TestResampling:
    def test_unbiased(self, rng):
        x = rng.normal(size=200)
        w = rng.dirichlet(np.ones(200))
        target = w @ x
        means = [x[systematic_resample(w, rng)].mean() for _ in range(200)]
        se = np.std(means, ddof=1) / np.sqrt(len(means))
        assert abs(np.mean(means) - target) < 3 * se + 1e-12

    def test_indices_in_range(self, rng):
        w = np.array([0.0, 0.5, 0.0, 0.5])
        idx = systematic_resample(w, rng)
        assert set(idx.tolist()) <= {1, 3}
        assert np.bincount(idx, minlength=4).tolist() == [0, 2, 0, 2]


class TestParticleFilter:
    def test_tracks_kalman(self):
        model = _linear_model()
        ys = simulate(model, 10, np.random.default_rng(1)).measurements
        pf = particle_filter(model, ys, 100_000, np.random.default_rng(0), keep=True)
        res = kalman_filter(_A, 0.01 * np.eye(2), _C, [[0.1]], [0.0, 0.0], np.eye(2), ys)
        # standard error from the effective sample size of each weighted cloud
        for i in range(len(ys)):
            cloud = pf.filtered[i + 1]
            se = np.sqrt(np.diag(res.filt_covs[i]) / cloud.ess)
            assert np.all(np.abs(pf.filt_means[i] - res.filt_means[i]) < 3 * se)

    def test_noiseless_observable(self, rng):
        prior = GaussianMixture.single([1.0], [[0.5]])
        model = GmmStateSpaceModel(prior, [ProcessComponent(1.0, [[1.0]], [[0.0]])],
                                   [MeasurementComponent(1.0, [[1.0]], [[0.05]])])
        sim = simulate(model, 15, rng)
        pf = particle_filter(model, sim.measurements, 5000, rng)
        assert abs(pf.filt_means[-1, 0] - sim.states[-1, 0]) < 0.05

    def test_reproducible(self):
        model = _linear_model()
        ys = simulate(model, 8, np.random.default_rng(0)).measurements
        a = particle_filter(model, ys, 500, np.random.default_rng(9), keep=True)
        b = particle_filter(model, ys, 500, np.random.default_rng(9), keep=True)
        assert a.filt_means.tobytes() == b.filt_means.tobytes()
        assert a.filtered[8].particles.tobytes() == b.filtered[8].particles.tobytes()

    def test_weights_after_resampling(self):
        model = _linear_model()
        ys = simulate(model, 10, np.random.default_rng(0)).measurements
        pf = particle_filter(model, ys, 300, np.random.default_rng(1), keep=True)
        assert pf.resampled.any()
        t = int(np.argmax(pf.resampled)) + 2
        np.testing.assert_array_equal(pf.predicted[t].weights, np.full(300, 1 / 300))
        assert all(1.0 <= e <= 300.0 + 1e-9 for e in pf.ess)

    def test_degeneracy(self, rng):
        prior = GaussianMixture.single([0.0], [[1.0]])
        model = GmmStateSpaceModel(prior, [ProcessComponent(1.0, [[1.0]], [[0.1]])],
                                   [MeasurementComponent(1.0, [[1.0]], [[1e-3]])])
        with pytest.raises(ParticleDegeneracyError, match="step 2"):
            particle_filter(model, [[0.0], [1e300]], 100, rng)

    def test_too_few_particles(self, rng):
        with pytest.raises(ValueError):
            particle_filter(_linear_model(), [[0.0]], 1, rng)


class TestDensity:
    def test_single_particle_bump(self):
        cloud = ParticleCloud(np.array([[2.0]]), np.array([1.0]))
        grid = np.linspace(-5, 9, 1401)
        dens = density_from_particles(cloud, grid)
        assert grid[np.argmax(dens)] == pytest.approx(2.0)
        assert dens.max() == pytest.approx(1 / np.sqrt(2 * np.pi * silverman_bandwidth(cloud)[0, 0]))

    def test_integrates_to_one_1d(self, rng):
        cloud = ParticleCloud(rng.normal(size=(2000, 1)), rng.dirichlet(np.ones(2000)))
        grid = np.linspace(-8, 8, 2001)
        assert np.trapezoid(density_from_particles(cloud, grid), grid) == pytest.approx(1.0, abs=1e-2)

    def test_integrates_to_one_2d(self, rng):
        cloud = ParticleCloud(rng.normal(size=(500, 2)), np.full(500, 1 / 500))
        gx = gy = np.linspace(-7, 7, 141)
        dens = density_from_particles(cloud, (gx, gy))
        assert dens.shape == (141, 141)
        assert np.trapezoid(np.trapezoid(dens, gy, axis=1), gx) == pytest.approx(1.0, abs=1e-2)

    def test_symmetric_cloud(self, rng):
        half = rng.normal(loc=3.0, size=(400, 1))
        cloud = ParticleCloud(np.vstack([half, -half]), np.full(800, 1 / 800))
        grid = np.linspace(-8, 8, 801)
        dens = density_from_particles(cloud, grid)
        np.testing.assert_allclose(dens, dens[::-1], rtol=1e-10, atol=1e-14)

    def test_empty(self):
        with pytest.raises(ValueError):
            density_from_particles(ParticleCloud(np.empty((0, 1)), np.empty(0)), np.zeros(3))
