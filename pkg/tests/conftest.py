import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_factor(rng, n, scale=1.0):
    """Well-conditioned upper-triangular factor with positive diagonal."""
    R = np.triu(rng.normal(size=(n, n))) * 0.3 * scale
    R[np.diag_indices(n)] = scale * rng.uniform(0.5, 1.5, size=n)
    return R


def assert_traces_match(a, b, mean_tol=1e-8, cov_tol=1e-7, weight_tol=1e-9):
    """Component-by-component agreement of two filter traces."""
    assert len(a) == len(b)
    for key in ("n_pred_pre", "n_pred", "n_filt_pre", "n_filt"):
        np.testing.assert_array_equal(getattr(a, key), getattr(b, key), err_msg=key)
    for ma, mb in zip(a.predicted + a.filtered, b.predicted + b.filtered):
        np.testing.assert_allclose(ma.weights, mb.weights, rtol=0, atol=weight_tol)
        np.testing.assert_allclose(ma.means, mb.means, rtol=0, atol=mean_tol)
        np.testing.assert_allclose(ma.covariances, mb.covariances, rtol=0, atol=cov_tol)
