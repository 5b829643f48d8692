"""Square-root Gaussian mixture filter with Kullback-Leibler reduction.

Each step runs a measurement update, reduces the filtered mixture, runs the
time update and reduces the predicted mixture. Every covariance is carried
as an upper-triangular factor and updated with QR factorisations of stacked
pre-arrays.
"""
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    DegenerateWeightsError,
    GmmFilterError,
    ModelMismatchError,
    SingularFactorError,
    SingularInnovationError,
    with_step,
)
from .linalg import qr_r_factor, solve_upper_transposed, sqrt_factor
from .mixture import GaussianMixture, mixture_moments, normalize_log_weights
from .model import SplitConfig, linearize_measurement, linearize_process, split_mixture
from .reduction import ReductionConfig, reduce

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class FilterConfig:
    """Reduction bounds for the filtered and predicted mixtures, plus optional splitting.

    ``split_stages`` names the updates that receive split input: ``"measurement"``
    splits the predicted mixture before the measurement update, ``"time"``
    splits the filtered mixture before the time update.
    """

    filter_min: int = 1
    filter_max: int = 100
    filter_threshold: float = 0.01
    predict_min: int = 1
    predict_max: int = 100
    predict_threshold: float = 0.01
    split: Optional[SplitConfig] = None
    split_stages: tuple = ("measurement",)
    reduction: bool = True

    def __post_init__(self):
        # validates the bound pairs
        self.filter_reduction
        self.predict_reduction
        object.__setattr__(self, "split_stages", tuple(self.split_stages))
        unknown = set(self.split_stages) - {"measurement", "time"}
        if unknown:
            raise ValueError(f"unknown split stages {sorted(unknown)}")

    @property
    def filter_reduction(self):
        return ReductionConfig(self.filter_min, self.filter_max, self.filter_threshold)

    @property
    def predict_reduction(self):
        return ReductionConfig(self.predict_min, self.predict_max, self.predict_threshold)

    def splits_before(self, stage):
        return self.split is not None and self.split.n_split > 1 and stage in self.split_stages


@dataclass
class FilterTrace:
    """Per-step record of a filter run. Arrays are indexed by ``t - 1``.

    Counts: ``n_pred_pre`` is the predicted mixture size before reduction,
    ``n_pred`` after reduction and ``n_pred_used`` after any splitting (the
    input of the measurement update); likewise for the filtered mixture,
    whose ``n_filt_used`` is the input of the time update.
    """

    method: str
    t: np.ndarray
    n_pred_pre: np.ndarray
    n_pred: np.ndarray
    n_pred_used: np.ndarray
    n_filt_pre: np.ndarray
    n_filt: np.ndarray
    n_filt_used: np.ndarray
    pred_means: np.ndarray
    pred_covs: np.ndarray
    filt_means: np.ndarray
    filt_covs: np.ndarray
    loglik: np.ndarray
    wall_time: np.ndarray
    predicted: list = field(default_factory=list)
    filtered: list = field(default_factory=list)
    final_prediction: object = None

    def __len__(self):
        return self.t.size

    @property
    def likelihood(self):
        """Per-step ``p(y_t | Y_{t-1})``, the sum of the raw update weights."""
        return np.exp(self.loglik)


class _TraceBuilder:
    def __init__(self, method):
        self.method = method
        self.rows = []
        self.predicted = []
        self.filtered = []

    def add(self, t, counts, pred, filt, loglik, elapsed):
        pm, pc = mixture_moments(pred)
        fm, fc = mixture_moments(filt)
        self.rows.append((t, *counts, pm, pc, fm, fc, loglik, elapsed))
        self.predicted.append(pred)
        self.filtered.append(filt)

    def build(self, final_prediction):
        cols = list(zip(*self.rows))
        ints = [np.array(c, dtype=int) for c in cols[:7]]
        return FilterTrace(
            self.method,
            *ints,
            np.array(cols[7]),
            np.array(cols[8]),
            np.array(cols[9]),
            np.array(cols[10]),
            np.array(cols[11], dtype=float),
            np.array(cols[12], dtype=float),
            self.predicted,
            self.filtered,
            final_prediction,
        )


# -- array kernels ----------------------------------------------------------


def _measurement_arrays(weights, means, sqrts, y, gammas, C, v, R_meas):
    """Square-root measurement update over every (predicted, measurement) pair.

    ``C`` broadcasts to ``(L, K, p, n)``, ``v`` to ``(L, K, p)``, ``R_meas``
    is ``(K, p, p)``. Returns the flattened filtered arrays (index
    ``l * K + k``) and the log of the raw weight total.
    """
    L, n = means.shape
    K, p = R_meas.shape[0], R_meas.shape[1]
    C = np.broadcast_to(C, (L, K, p, n))
    v = np.broadcast_to(v, (L, K, p))
    Rl = np.broadcast_to(sqrts[:, None], (L, K, n, n))
    pre = np.zeros((L, K, p + n, p + n))
    pre[:, :, :p, :p] = R_meas[None]
    pre[:, :, p:, :p] = Rl @ np.swapaxes(C, -1, -2)
    pre[:, :, p:, p:] = Rl
    post = qr_r_factor(pre)
    R11 = post[..., :p, :p]
    R12 = post[..., :p, p:]
    R22 = post[..., p:, p:]
    e = y - np.einsum("lkij,lj->lki", C, means) - v
    try:
        e_tilde = solve_upper_transposed(R11, e)
    except SingularFactorError as exc:
        raise SingularInnovationError(f"innovation factor is singular: {exc}") from None
    new_means = means[:, None, :] + np.einsum("lkij,lki->lkj", R12, e_tilde)
    log_sigma = np.sum(np.log(np.abs(np.diagonal(R11, axis1=-2, axis2=-1))), axis=-1)
    with np.errstate(divide="ignore"):
        log_prior = np.log(weights)[:, None] + np.log(gammas)[None, :]
    with np.errstate(over="ignore"):
        # an overflowing innovation is a zero density, not an error here
        log_raw = log_prior - 0.5 * np.sum(e_tilde**2, axis=-1) - 0.5 * p * _LOG_2PI - log_sigma
    log_raw = log_raw.reshape(L * K)
    try:
        new_w, log_total = normalize_log_weights(log_raw)
    except DegenerateWeightsError:
        raise ModelMismatchError(
            "measurement has zero density under every predicted component"
        ) from None
    return new_w, new_means.reshape(L * K, n), R22.reshape(L * K, n, n), log_total


def _time_arrays(weights, means, sqrts, betas, A, u, Q_sqrt):
    """Square-root time update over every (filtered, process) pair.

    ``A`` broadcasts to ``(S, J, n, n)``, ``u`` to ``(S, J, n)``.
    """
    S, n = means.shape
    J = Q_sqrt.shape[0]
    A = np.broadcast_to(A, (S, J, n, n))
    u = np.broadcast_to(u, (S, J, n))
    pre = np.concatenate(
        [sqrts[:, None] @ np.swapaxes(A, -1, -2), np.broadcast_to(Q_sqrt[None], (S, J, n, n))],
        axis=-2,
    )
    R = qr_r_factor(pre)
    new_means = np.einsum("sjik,sk->sji", A, means) + u
    new_w = (weights[:, None] * betas[None, :]).reshape(S * J)
    return new_w, new_means.reshape(S * J, n), R.reshape(S * J, n, n)


def _stack_measurement(meas, t):
    gammas = np.array([c.weight for c in meas])
    C = np.stack([c.C for c in meas])
    v = np.stack([np.asarray(c.offset(t), dtype=float) for c in meas])
    R = np.stack([c.R_sqrt for c in meas])
    return gammas, C, v, R


def _stack_process(proc, t):
    betas = np.array([c.weight for c in proc])
    A = np.stack([c.A for c in proc])
    u = np.stack([np.asarray(c.offset(t), dtype=float) for c in proc])
    Q = np.stack([c.Q_sqrt for c in proc])
    return betas, A, u, Q


# -- public update steps ------------------------------------------------------


def measurement_update(pred, y, meas, t, return_loglik=False):
    """Bayes-correct ``pred`` with measurement ``y`` under the mixture likelihood ``meas``.

    The result has ``len(pred) * len(meas)`` components ordered with the
    measurement index varying fastest. With ``return_loglik`` the log of
    ``p(y_t | Y_{t-1})`` (the raw weight total) is returned as well.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    gammas, C, v, R = _stack_measurement(meas, t)
    if y.shape != (C.shape[1],):
        raise ValueError(f"measurement has shape {y.shape}, expected ({C.shape[1]},)")
    w, mu, S, loglik = _measurement_arrays(
        pred.weights, pred.means, pred.cov_sqrts, y, gammas, C[None], v[None], R
    )
    out = GaussianMixture(w, mu, S)
    return (out, loglik) if return_loglik else out


def time_update(filt, proc, t):
    """Propagate ``filt`` through the mixture process model ``proc`` at step ``t``.

    The result has ``len(filt) * len(proc)`` components ordered with the
    process index varying fastest.
    """
    betas, A, u, Q = _stack_process(proc, t)
    w, mu, S = _time_arrays(filt.weights, filt.means, filt.cov_sqrts, betas, A[None], u[None], Q)
    return GaussianMixture(w, mu, S)


def _nonlinear_measurement(model, pred, y, t):
    C, v = linearize_measurement(model, pred.means, t)
    w, mu, S, loglik = _measurement_arrays(
        pred.weights, pred.means, pred.cov_sqrts, y, np.ones(1),
        C[:, None], v[:, None], model.R_sqrt[None],
    )
    return GaussianMixture(w, mu, S), loglik


def _nonlinear_time(model, filt, t):
    A, u = linearize_process(model, filt.means, t)
    w, mu, S = _time_arrays(
        filt.weights, filt.means, filt.cov_sqrts, np.ones(1), A[:, None], u[:, None],
        model.Q_sqrt[None],
    )
    return GaussianMixture(w, mu, S)


def _check_measurements(model, measurements):
    ys = np.asarray(measurements, dtype=float)
    if ys.ndim == 1:
        ys = ys[:, None]
    if ys.shape[0] < 1:
        raise ValueError("need at least one measurement")
    if ys.shape[1] != model.p:
        raise ValueError(f"measurements have dimension {ys.shape[1]}, model expects {model.p}")
    return ys


def run_filter(model, measurements, cfg=None, keep_mixtures=True):
    """Run the square-root mixture filter over ``measurements`` (steps ``t = 1..N``).

    ``model`` is a :class:`~gmmfilter.model.GmmStateSpaceModel` or a
    :class:`~gmmfilter.model.NonlinearModel`; the latter is linearized about
    each component mean before every update.
    """
    cfg = cfg or FilterConfig()
    ys = _check_measurements(model, measurements)
    fcfg, pcfg = cfg.filter_reduction, cfg.predict_reduction
    trace = _TraceBuilder("gmmf")
    pred = model.prior
    n_pred_pre = len(pred)
    for i, y in enumerate(ys):
        t = i + 1
        start = time.perf_counter()
        try:
            pred_used = split_mixture(pred, cfg.split) if cfg.splits_before("measurement") else pred
            if model.is_linear:
                filt_raw, loglik = measurement_update(pred_used, y, model.measurement, t, True)
            else:
                filt_raw, loglik = _nonlinear_measurement(model, pred_used, y, t)
            filt = reduce(filt_raw, fcfg) if cfg.reduction else filt_raw
            filt_used = split_mixture(filt, cfg.split) if cfg.splits_before("time") else filt
            if model.is_linear:
                pred_raw = time_update(filt_used, model.process, t)
            else:
                pred_raw = _nonlinear_time(model, filt_used, t)
            pred_next = reduce(pred_raw, pcfg) if cfg.reduction else pred_raw
        except GmmFilterError as exc:
            raise with_step(exc, t) from exc
        counts = (n_pred_pre, len(pred), len(pred_used), len(filt_raw), len(filt), len(filt_used))
        trace.add(t, counts, pred, filt, loglik, time.perf_counter() - start)
        if not keep_mixtures:
            trace.predicted[-1] = trace.filtered[-1] = None
        pred, n_pred_pre = pred_next, len(pred_raw)
    return trace.build(pred)


def predicted_measurement_mixture(pred, meas, t):
    """Mixture ``p(y_t | Y_{t-1})`` over measurement space, built from full covariances.

    Used to cross-check the likelihood returned by :func:`measurement_update`.
    """
    w, mus, roots = [], [], []
    P = pred.covariances
    for l in range(len(pred)):
        for c in meas:
            w.append(pred.weights[l] * c.weight)
            mus.append(c.C @ pred.means[l] + np.asarray(c.offset(t)))
            S = c.C @ P[l] @ c.C.T + c.R_sqrt.T @ c.R_sqrt
            roots.append(sqrt_factor(S))
    return GaussianMixture(w, np.array(mus), np.array(roots))
