import numpy as np
import pytest

from gmmfilter.baselines import kalman_filter
from gmmfilter.errors import GmmFilterError, ModelMismatchError, SingularInnovationError
from gmmfilter.filter import (
    FilterConfig,
    measurement_update,
    predicted_measurement_mixture,
    run_filter,
    time_update,
)
from gmmfilter.mixture import GaussianMixture, evaluate_pdf
from gmmfilter.model import (
    GmmStateSpaceModel,
    MeasurementComponent,
    ProcessComponent,
    SplitConfig,
    build_nonlinear,
    simulate,
)

from conftest import random_factor


def _scalar(mean, var):
    return GaussianMixture.single([mean], [[np.sqrt(var)]])


def _random_model(rng, n, p, L, K, J):
    prior = GaussianMixture(rng.dirichlet(np.ones(L)), rng.normal(size=(L, n)),
                            np.stack([random_factor(rng, n) for _ in range(L)]))
    proc = [ProcessComponent(b, np.eye(n) + 0.1 * rng.normal(size=(n, n)),
                             random_factor(rng, n, 0.3), rng.normal(size=n))
            for b in rng.dirichlet(np.ones(J))]
    meas = [MeasurementComponent(g, rng.normal(size=(p, n)), random_factor(rng, p, 0.5),
                                 rng.normal(size=p))
            for g in rng.dirichlet(np.ones(K))]
    return GmmStateSpaceModel(prior, proc, meas)


class TestFilterConfig:
    def test_defaults(self):
        cfg = FilterConfig()
        assert cfg.filter_reduction.max_components == 100
        assert cfg.predict_reduction.threshold == 0.01
        assert not cfg.splits_before("measurement")

    def test_invalid_bounds(self):
        with pytest.raises(ValueError):
            FilterConfig(filter_min=5, filter_max=2)

    def test_split_stages(self):
        cfg = FilterConfig(split=SplitConfig(3, 0.5), split_stages=["time"])
        assert cfg.splits_before("time") and not cfg.splits_before("measurement")
        with pytest.raises(ValueError):
            FilterConfig(split_stages=["smoothing"])


class TestMeasurementUpdate:
    def test_scalar_hand_case(self):
        out, loglik = measurement_update(_scalar(0.0, 1.0), [2.0],
                                         [MeasurementComponent(1.0, [[1.0]], [[1.0]])], 1, True)
        assert out.weights.tolist() == [1.0]
        assert out.means[0, 0] == pytest.approx(1.0, abs=1e-15)
        assert out.covariances[0, 0, 0] == pytest.approx(0.5, abs=1e-15)
        # p(y) = N(2; 0, 2)
        assert loglik == pytest.approx(-1.0 - 0.5 * np.log(4 * np.pi), abs=1e-14)

    def test_zero_gain(self, rng):
        pred = GaussianMixture([0.3, 0.7], rng.normal(size=(2, 2)),
                               np.stack([random_factor(rng, 2) for _ in range(2)]))
        out = measurement_update(pred, [4.0], [MeasurementComponent(1.0, [[0.0, 0.0]], [[1.0]])], 1)
        np.testing.assert_allclose(out.means, pred.means, atol=1e-15)
        np.testing.assert_allclose(out.covariances, pred.covariances, atol=1e-14)
        np.testing.assert_allclose(out.weights, pred.weights, atol=1e-15)

    def test_growth_and_ordering(self, rng):
        pred = GaussianMixture(np.full(3, 1 / 3), rng.normal(size=(3, 1)), np.ones((3, 1, 1)))
        meas = [MeasurementComponent(0.5, [[1.0]], [[1.0]], [5.0]),
                MeasurementComponent(0.5, [[1.0]], [[1.0]], [-5.0])]
        out = measurement_update(pred, [0.0], meas, 1)
        assert len(out) == 6
        # component l*K + k uses predicted component l and measurement component k
        single = measurement_update(GaussianMixture.single(pred.means[2], [[1.0]]), [0.0], [meas[1]], 1)
        np.testing.assert_allclose(out.means[5], single.means[0], atol=1e-15)

    def test_measurement_dimension_differs_from_state(self, rng):
        # normalizer uses the measurement dimension
        model = _random_model(rng, 3, 2, 1, 1, 1)
        pred = model.prior
        y = rng.normal(size=2)
        _, loglik = measurement_update(pred, y, model.measurement, 1, True)
        ref = evaluate_pdf(predicted_measurement_mixture(pred, model.measurement, 1), y)
        assert np.exp(loglik) == pytest.approx(ref, rel=1e-10)

    def test_wrong_measurement_shape(self):
        with pytest.raises(ValueError):
            measurement_update(_scalar(0.0, 1.0), [1.0, 2.0],
                               [MeasurementComponent(1.0, [[1.0]], [[1.0]])], 1)

    def test_singular_innovation(self):
        with pytest.raises(SingularInnovationError):
            measurement_update(_scalar(0.0, 1.0), [1.0],
                               [MeasurementComponent(1.0, [[0.0]], [[0.0]])], 1)

    def test_zero_density_everywhere(self):
        pred = _scalar(0.0, 1e-4)
        with pytest.raises(ModelMismatchError):
            measurement_update(pred, [1e300], [MeasurementComponent(1.0, [[1.0]], [[1e-3]])], 1)


class TestTimeUpdate:
    def test_scalar_hand_case(self):
        out = time_update(_scalar(1.0, 0.5), [ProcessComponent(1.0, [[1.0]], [[0.1]])], 1)
        assert out.means[0, 0] == 1.0
        assert out.covariances[0, 0, 0] == pytest.approx(0.51, abs=1e-15)

    def test_identity_dynamics(self, rng):
        filt = GaussianMixture([0.4, 0.6], rng.normal(size=(2, 2)),
                               np.stack([random_factor(rng, 2) for _ in range(2)]))
        out = time_update(filt, [ProcessComponent(1.0, np.eye(2), np.zeros((2, 2)))], 1)
        np.testing.assert_allclose(out.means, filt.means, atol=0)
        np.testing.assert_allclose(out.covariances, filt.covariances, atol=1e-14)

    def test_growth_and_weights(self, rng):
        filt = GaussianMixture([0.25, 0.75], rng.normal(size=(2, 1)), np.ones((2, 1, 1)))
        proc = [ProcessComponent(0.9, [[1.0]], [[0.1]]), ProcessComponent(0.1, [[0.5]], [[0.2]], [3.0])]
        out = time_update(filt, proc, 1)
        assert len(out) == 4
        np.testing.assert_allclose(out.weights, [0.225, 0.025, 0.675, 0.075], atol=1e-15)
        assert np.sum(out.weights) == pytest.approx(1.0, abs=1e-15)
        assert out.means[3, 0] == pytest.approx(0.5 * filt.means[1, 0] + 3.0, abs=1e-15)


class TestRunFilter:
    def test_single_measurement(self):
        model = GmmStateSpaceModel(_scalar(0.0, 1.0), [ProcessComponent(1.0, [[1.0]], [[0.1]])],
                                   [MeasurementComponent(1.0, [[1.0]], [[1.0]])])
        tr = run_filter(model, [[2.0]])
        assert len(tr) == 1 and len(tr.predicted) == 1 and len(tr.filtered) == 1
        assert tr.filt_means[0, 0] == pytest.approx(1.0, abs=1e-15)
        assert tr.final_prediction.covariances[0, 0, 0] == pytest.approx(0.51, abs=1e-15)

    def test_matches_kalman(self, rng):
        A = np.array([[1.0, 0.1], [0.0, 1.0]])
        Q, R = 0.05 * np.eye(2), np.array([[0.3]])
        C = np.array([[1.0, 0.0]])
        P0 = np.diag([2.0, 1.0])
        ys = rng.normal(size=(40, 1))
        model = GmmStateSpaceModel(GaussianMixture.single([0.0, 0.0], np.sqrt(P0)),
                                   [ProcessComponent(1.0, A, np.sqrt(Q))],
                                   [MeasurementComponent(1.0, C, np.sqrt(R))])
        tr = run_filter(model, ys)
        # plain covariance-form Kalman recursion as the oracle
        x, P = np.zeros(2), P0
        for i, y in enumerate(ys):
            np.testing.assert_allclose(tr.pred_means[i], x, atol=1e-8)
            np.testing.assert_allclose(tr.pred_covs[i], P, atol=1e-8)
            S = C @ P @ C.T + R
            K = P @ C.T @ np.linalg.inv(S)
            x = x + K @ (y - C @ x)
            P = (np.eye(2) - K @ C) @ P
            np.testing.assert_allclose(tr.filt_means[i], x, atol=1e-8)
            np.testing.assert_allclose(tr.filt_covs[i], P, atol=1e-8)
            x, P = A @ x, A @ P @ A.T + Q

    def test_growth_law_without_reduction(self, rng):
        model = _random_model(rng, 2, 1, 2, 2, 2)
        ys = simulate(model, 5, rng).measurements
        tr = run_filter(model, ys, FilterConfig(reduction=False))
        np.testing.assert_array_equal(tr.n_filt_pre, tr.n_pred_used * 2)
        np.testing.assert_array_equal(tr.n_pred_pre[1:], tr.n_filt_used[:-1] * 2)
        assert tr.n_pred_pre[-1] == 2 ** (2 * 5 - 1)

    def test_weights_normalized(self, rng):
        model = _random_model(rng, 2, 1, 3, 2, 2)
        tr = run_filter(model, simulate(model, 20, rng).measurements)
        for m in tr.predicted + tr.filtered:
            assert abs(np.sum(m.weights) - 1.0) <= 1e-10

    def test_likelihood_matches_density(self, rng):
        model = _random_model(rng, 2, 2, 2, 2, 2)
        ys = simulate(model, 10, rng).measurements
        tr = run_filter(model, ys)
        for i, (pred, y) in enumerate(zip(tr.predicted, ys)):
            ref = evaluate_pdf(predicted_measurement_mixture(pred, model.measurement, i + 1), y)
            assert tr.likelihood[i] == pytest.approx(ref, rel=1e-8)

    def test_nonlinear_with_splitting(self, rng):
        nm = build_nonlinear("ucm-benchmark", GaussianMixture.single([0.0], [[np.sqrt(5.0)]]))
        ys = simulate(nm, 20, rng).measurements
        cfg = FilterConfig(filter_max=20, predict_max=20, split=SplitConfig(3, 0.5),
                           split_stages=("measurement", "time"))
        tr = run_filter(nm, ys, cfg)
        np.testing.assert_array_equal(tr.n_pred_used, 3 * tr.n_pred)
        np.testing.assert_array_equal(tr.n_filt_used, 3 * tr.n_filt)
        assert np.all(tr.n_filt <= 20) and np.all(np.isfinite(tr.pred_means))

    def test_error_carries_step(self):
        model = GmmStateSpaceModel(_scalar(0.0, 1e-4), [ProcessComponent(1.0, [[1.0]], [[1e-3]])],
                                   [MeasurementComponent(1.0, [[1.0]], [[1e-3]])])
        with pytest.raises(GmmFilterError, match="step 3") as info:
            run_filter(model, [[0.0], [0.0], [1e300]])
        assert info.value.step == 3

    def test_rejects_empty_and_bad_shape(self):
        model = GmmStateSpaceModel(_scalar(0.0, 1.0), [ProcessComponent(1.0, [[1.0]], [[0.1]])],
                                   [MeasurementComponent(1.0, [[1.0]], [[1.0]])])
        with pytest.raises(ValueError):
            run_filter(model, np.empty((0, 1)))
        with pytest.raises(ValueError):
            run_filter(model, np.zeros((3, 2)))
