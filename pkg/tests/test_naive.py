import numpy as np
import pytest

from gmmfilter.errors import CovarianceBreakdownError
from gmmfilter.filter import FilterConfig, run_filter
from gmmfilter.linalg import sqrt_factor
from gmmfilter.mixture import GaussianMixture
from gmmfilter.model import (
    GmmStateSpaceModel,
    MeasurementComponent,
    ProcessComponent,
    SplitConfig,
    build_nonlinear,
    simulate,
)
from gmmfilter.naive import CovMixture, reduce_full, run_filter_naive
from gmmfilter.reduction import ReductionConfig, reduce

from conftest import assert_traces_match, random_factor


def _mixture(rng, k, n):
    return GaussianMixture(rng.dirichlet(np.ones(k)), rng.normal(scale=2.0, size=(k, n)),
                           np.stack([random_factor(rng, n) for _ in range(k)]))


class TestReduceFull:
    def test_matches_square_root_reduction(self, rng):
        for _ in range(20):
            n, k = int(rng.integers(1, 4)), int(rng.integers(2, 25))
            m = _mixture(rng, k, n)
            cfg = ReductionConfig(1, max(1, k // 2), 0.05)
            a, b = reduce(m, cfg), reduce_full(CovMixture.from_sqrt(m), cfg)
            assert len(a) == len(b)
            np.testing.assert_allclose(a.weights, b.weights, atol=1e-12)
            np.testing.assert_allclose(a.means, b.means, atol=1e-10)
            np.testing.assert_allclose(a.covariances, b.covariances, atol=1e-9)


class TestRunFilterNaive:
    def test_scalar_hand_case(self):
        model = GmmStateSpaceModel(GaussianMixture.single([0.0], [[1.0]]),
                                   [ProcessComponent(1.0, [[1.0]], [[0.1]])],
                                   [MeasurementComponent(1.0, [[1.0]], [[1.0]])])
        tr = run_filter_naive(model, [[2.0]])
        assert tr.filt_means[0, 0] == pytest.approx(1.0, abs=1e-15)
        assert tr.filt_covs[0, 0, 0] == pytest.approx(0.5, abs=1e-15)
        assert tr.final_prediction.covariances[0, 0, 0] == pytest.approx(0.51, abs=1e-15)

    def test_matches_square_root_linear(self, rng):
        prior = _mixture(rng, 4, 2)
        proc = [ProcessComponent(0.7, [[1.0, 0.1], [0.0, 0.9]], 0.2 * np.eye(2), [0.1, 0.0]),
                ProcessComponent(0.3, [[0.5, 0.0], [0.2, 0.5]], 0.4 * np.eye(2))]
        meas = [MeasurementComponent(0.6, [[1.0, 0.0]], [[0.5]], [1.0]),
                MeasurementComponent(0.4, [[1.0, 1.0]], [[0.8]], [-1.0])]
        model = GmmStateSpaceModel(prior, proc, meas)
        ys = simulate(model, 40, rng).measurements
        cfg = FilterConfig(filter_max=10, predict_max=10)
        assert_traces_match(run_filter(model, ys, cfg), run_filter_naive(model, ys, cfg))

    def test_matches_square_root_nonlinear(self, rng):
        nm = build_nonlinear("ucm-benchmark", GaussianMixture.single([0.0], [[np.sqrt(5.0)]]))
        ys = simulate(nm, 30, rng).measurements
        cfg = FilterConfig(filter_max=15, predict_max=15, split=SplitConfig(3, 0.5),
                           split_stages=("measurement", "time"))
        a, b = run_filter(nm, ys, cfg), run_filter_naive(nm, ys, cfg)
        assert_traces_match(a, b)

    def test_breaks_down_where_square_root_survives(self):
        P = 1e10 * np.array([[1.0, 0.999999], [0.999999, 1.0]])
        model = GmmStateSpaceModel(GaussianMixture.single([0.0, 0.0], sqrt_factor(P)),
                                   [ProcessComponent(1.0, np.eye(2), np.zeros((2, 2)))],
                                   [MeasurementComponent(1.0, [[1.0, 0.0]], [[1e-6]])])
        ys = np.zeros((5, 1))
        with pytest.raises(CovarianceBreakdownError, match="step 1"):
            run_filter_naive(model, ys, FilterConfig(reduction=False))
        tr = run_filter(model, ys, FilterConfig(reduction=False))
        assert np.all(np.linalg.eigvalsh(tr.filt_covs) >= 0)
