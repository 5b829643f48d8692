"""Reference estimators: a square-root Kalman filter and a bootstrap particle filter."""
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.special import logsumexp

from .errors import ParticleDegeneracyError
from .filter import FilterConfig, run_filter
from .linalg import sqrt_factor
from .mixture import GaussianMixture, sample
from .model import GmmStateSpaceModel, MeasurementComponent, ProcessComponent

_LOG_2PI = np.log(2.0 * np.pi)


class KalmanResult(NamedTuple):
    pred_means: np.ndarray
    pred_covs: np.ndarray
    filt_means: np.ndarray
    filt_covs: np.ndarray
    loglik: np.ndarray


def kalman_filter(A, Q, C, R, prior_mean, prior_cov, measurements, u=None, v=None):
    """Linear Kalman filter, run through the mixture filter with one component.

    ``u`` and ``v`` are optional offsets (constant vectors or callables of
    the step). Predicted arrays have one more row than filtered ones: the
    last row is the prediction past the final measurement.
    """
    prior_mean = np.atleast_1d(np.asarray(prior_mean, dtype=float))
    n = prior_mean.size
    prior = GaussianMixture.single(prior_mean, sqrt_factor(np.atleast_2d(prior_cov)))
    ys = np.asarray(measurements, dtype=float)
    if ys.size == 0:
        P0 = prior.covariances
        return KalmanResult(prior.means.copy(), P0, np.empty((0, n)), np.empty((0, n, n)),
                            np.empty(0))
    proc = ProcessComponent(1.0, A, sqrt_factor(np.atleast_2d(Q)), u)
    meas = MeasurementComponent(1.0, C, sqrt_factor(np.atleast_2d(R)), v)
    model = GmmStateSpaceModel(prior, [proc], [meas])
    trace = run_filter(model, ys, FilterConfig(reduction=False))
    final = trace.final_prediction
    return KalmanResult(
        np.vstack([trace.pred_means, final.means]),
        np.concatenate([trace.pred_covs, final.covariances]),
        trace.filt_means,
        trace.filt_covs,
        trace.loglik,
    )


@dataclass
class ParticleCloud:
    particles: np.ndarray
    weights: np.ndarray

    @property
    def ess(self):
        return 1.0 / float(np.sum(self.weights**2))

    def mean(self):
        return self.weights @ self.particles


@dataclass
class ParticleTrace:
    method: str
    t: np.ndarray
    pred_means: np.ndarray
    filt_means: np.ndarray
    loglik: np.ndarray
    ess: np.ndarray
    resampled: np.ndarray
    predicted: dict = field(default_factory=dict)
    filtered: dict = field(default_factory=dict)

    def __len__(self):
        return self.t.size


def systematic_resample(weights, rng):
    """Indices drawn by systematic resampling (one uniform offset)."""
    n = weights.size
    positions = (rng.random() + np.arange(n)) / n
    cdf = np.cumsum(weights)
    cdf[-1] = 1.0
    return np.searchsorted(cdf, positions, side="right")


def _log_likelihood(model, x, y, t):
    if model.is_linear:
        terms = []
        for c in model.measurement:
            mean = x @ c.C.T + c.offset(t)
            terms.append(np.log(c.weight) + _gauss_logpdf(y, mean, c.R_sqrt))
        return logsumexp(np.stack(terms), axis=0)
    return _gauss_logpdf(y, model.h(x, t), model.R_sqrt)


def _gauss_logpdf(y, mean, R_sqrt):
    p = R_sqrt.shape[0]
    diff = y - mean
    e = np.linalg.solve(R_sqrt.T, diff.T).T
    with np.errstate(over="ignore"):
        return -0.5 * np.sum(e * e, axis=-1) - np.sum(np.log(np.abs(np.diag(R_sqrt)))) - 0.5 * p * _LOG_2PI


def _propagate(model, x, t, rng):
    n_p, n = x.shape
    if model.is_linear:
        betas = np.array([c.weight for c in model.process])
        modes = rng.choice(betas.size, size=n_p, p=betas)
        out = np.empty_like(x)
        z = rng.standard_normal((n_p, n))
        for j, c in enumerate(model.process):
            sel = modes == j
            out[sel] = x[sel] @ c.A.T + c.offset(t) + z[sel] @ c.Q_sqrt
        return out
    return model.f(x, t) + rng.standard_normal((n_p, n)) @ model.Q_sqrt


def particle_filter(model, measurements, n_particles, rng, keep=()):
    """Bootstrap particle filter with systematic resampling at ESS < n/2.

    ``keep`` lists the steps whose predicted and filtered clouds are stored
    (``True`` keeps all of them).
    """
    if n_particles < 2:
        raise ValueError("need at least two particles")
    ys = np.asarray(measurements, dtype=float)
    if ys.ndim == 1:
        ys = ys[:, None]
    x = sample(model.prior, rng, n_particles)
    w = np.full(n_particles, 1.0 / n_particles)
    pred_means, filt_means, loglik, ess, resampled = [], [], [], [], []
    predicted, filtered = {}, {}
    for i, y in enumerate(ys):
        t = i + 1
        store = keep is True or t in keep
        pred_means.append(w @ x)
        if store:
            predicted[t] = ParticleCloud(x.copy(), w.copy())
        logw = np.log(w) + _log_likelihood(model, x, y, t)
        total = logsumexp(logw)
        if not np.isfinite(total):
            raise ParticleDegeneracyError("all particle weights are zero", step=t)
        loglik.append(total)
        w = np.exp(logw - total)
        w /= np.sum(w)
        filt_means.append(w @ x)
        if store:
            filtered[t] = ParticleCloud(x.copy(), w.copy())
        cur_ess = 1.0 / np.sum(w**2)
        ess.append(cur_ess)
        if cur_ess < n_particles / 2:
            x = x[systematic_resample(w, rng)]
            w = np.full(n_particles, 1.0 / n_particles)
            resampled.append(True)
        else:
            resampled.append(False)
        x = _propagate(model, x, t, rng)
    return ParticleTrace(
        "smc",
        np.arange(1, len(ys) + 1),
        np.array(pred_means),
        np.array(filt_means),
        np.array(loglik),
        np.array(ess),
        np.array(resampled),
        predicted,
        filtered,
    )


def silverman_bandwidth(cloud):
    """Kernel covariance from Silverman's rule on weighted samples.

    Uses the effective sample size ``1 / sum(w**2)``. Falls back to an
    identity covariance when the cloud has no spread.
    """
    x = np.atleast_2d(cloud.particles.T).T
    d = x.shape[1]
    w = cloud.weights / np.sum(cloud.weights)
    mean = w @ x
    diff = x - mean
    cov = np.atleast_2d((w[:, None] * diff).T @ diff)
    n_eff = 1.0 / np.sum(w**2)
    factor = (n_eff * (d + 2) / 4.0) ** (-1.0 / (d + 4))
    if not np.all(np.linalg.eigvalsh(cov) > 1e-300):
        cov = np.eye(d)
    return factor**2 * cov


def density_from_particles(cloud, grid, bandwidth=None, chunk=2_000_000):
    """Weighted Gaussian kernel density evaluated on a grid.

    ``grid`` is a 1-D array of points for scalar states or a pair of axes
    ``(gx, gy)`` for 2-D states, giving a ``(len(gx), len(gy))`` result.
    ``bandwidth`` overrides the kernel covariance.
    """
    if cloud.particles.size == 0:
        raise ValueError("cannot estimate a density from an empty cloud")
    x = cloud.particles
    if x.ndim == 1:
        x = x[:, None]
    d = x.shape[1]
    if d == 1:
        pts = np.asarray(grid, dtype=float).reshape(-1, 1)
        shape = (pts.shape[0],)
    elif d == 2:
        gx, gy = grid
        mx, my = np.meshgrid(gx, gy, indexing="ij")
        pts = np.column_stack([mx.ravel(), my.ravel()])
        shape = mx.shape
    else:
        raise ValueError("density grids are only supported for 1-D and 2-D states")
    H = silverman_bandwidth(ParticleCloud(x, cloud.weights)) if bandwidth is None else np.atleast_2d(bandwidth)
    L = np.linalg.cholesky(H)
    w = cloud.weights / np.sum(cloud.weights)
    norm_const = np.exp(-0.5 * d * _LOG_2PI) / np.prod(np.diag(L))
    xs = np.linalg.solve(L, x.T).T
    ps = np.linalg.solve(L, pts.T).T
    out = np.zeros(pts.shape[0])
    step = max(1, chunk // max(1, x.shape[0]))
    for a in range(0, pts.shape[0], step):
        diff = ps[a:a + step, None, :] - xs[None, :, :]
        out[a:a + step] = np.exp(-0.5 * np.sum(diff * diff, axis=-1)) @ w
    return (norm_const * out).reshape(shape)
