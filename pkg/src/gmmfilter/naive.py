"""Covariance-form twin of the square-root filter, kept as a test oracle.

Propagates full covariance matrices with explicit symmetrisation and runs the
same greedy reduction using full-matrix merges and log-determinants. It
shares no numerical kernels with :mod:`gmmfilter.filter`.
"""
import time

import numpy as np

from .errors import CovarianceBreakdownError, DegenerateWeightsError, GmmFilterError, with_step
from .filter import FilterConfig, _TraceBuilder, _check_measurements
from .mixture import normalize_log_weights
from .model import linearize_measurement, linearize_process
from .reduction import PRUNE_WEIGHT

_LOG_2PI = np.log(2.0 * np.pi)


class CovMixture:
    """Mixture with full covariances ``(N, n, n)``."""

    def __init__(self, weights, means, covariances):
        self.weights = np.asarray(weights, dtype=float)
        self.means = np.asarray(means, dtype=float)
        self.covariances = np.asarray(covariances, dtype=float)

    def __len__(self):
        return self.weights.size

    @classmethod
    def from_sqrt(cls, m):
        return cls(m.weights, m.means, m.covariances)


def _sym(P):
    return 0.5 * (P + np.swapaxes(P, -1, -2))


def _check_pd(P, what):
    try:
        np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        raise CovarianceBreakdownError(f"{what} covariance lost positive definiteness") from None


def _logdet(P):
    sign, ld = np.linalg.slogdet(P)
    if np.any(sign <= 0):
        raise CovarianceBreakdownError("covariance has nonpositive determinant")
    return ld


def _merge_full(wi, wj, mi, mj, Pi, Pj):
    w = wi + wj
    a, b = wi / w, wj / w
    d = mi - mj
    mean = a[..., None] * mi + b[..., None] * mj
    P = a[..., None, None] * Pi + b[..., None, None] * Pj + (a * b)[..., None, None] * (
        d[..., :, None] * d[..., None, :]
    )
    return w, mean, _sym(P)


def _bound_full(wi, wj, mi, mj, Pi, Pj, ldi, ldj):
    w, _, P = _merge_full(wi, wj, mi, mj, Pi, Pj)
    return np.maximum(0.5 * (w * _logdet(P) - wi * ldi - wj * ldj), 0.0)


def reduce_full(m, cfg):
    """Same greedy reduction as :func:`gmmfilter.reduction.reduce`, on full covariances."""
    keep = m.weights >= PRUNE_WEIGHT
    if not np.any(keep):
        raise DegenerateWeightsError("every component weight is below the pruning floor")
    w = m.weights[keep].copy()
    mu = m.means[keep].copy()
    P = m.covariances[keep].copy()
    ld = _logdet(P)
    k = w.size
    B = np.full((k, k), np.inf)
    if k > 1:
        iu, ju = np.triu_indices(k, 1)
        B[iu, ju] = _bound_full(w[iu], w[ju], mu[iu], mu[ju], P[iu], P[ju], ld[iu], ld[ju])
    min_b = B.min() if k > 1 else np.inf
    while k > cfg.max_components or (k > cfg.min_components and min_b < cfg.threshold):
        i, j = divmod(int(np.argmin(B)), k)
        w[i], mu[i], P[i] = _merge_full(w[i], w[j], mu[i], mu[j], P[i], P[j])
        ld[i] = _logdet(P[i])
        w, mu, P, ld = (np.delete(a, j, axis=0) for a in (w, mu, P, ld))
        B = np.delete(np.delete(B, j, axis=0), j, axis=1)
        k -= 1
        for o in range(k):
            if o < i:
                B[o, i] = _bound_full(w[o], w[i], mu[o], mu[i], P[o], P[i], ld[o], ld[i])
            elif o > i:
                B[i, o] = _bound_full(w[i], w[o], mu[i], mu[o], P[i], P[o], ld[i], ld[o])
        min_b = B.min() if k > 1 else np.inf
    w = w / np.sum(w)
    return CovMixture(w / np.sum(w), mu, P)


def _split_full(m, cfg):
    s, frac = cfg.offsets()
    out_w, out_mu, out_P = [], [], []
    for w, mu, P in zip(m.weights, m.means, m.covariances):
        vals, vecs = np.linalg.eigh(P)
        lam, axis = max(vals[-1], 0.0), vecs[:, -1]
        axis = axis * np.sign(axis[np.argmax(np.abs(axis))])
        P_sub = _sym(P - frac * lam * np.outer(axis, axis))
        for si in s:
            out_w.append(w / cfg.n_split)
            out_mu.append(mu + si * np.sqrt(lam) * axis)
            out_P.append(P_sub)
    return CovMixture(out_w, out_mu, out_P)


def _measurement_full(pred, y, gammas, Cs, vs, Rs):
    """Kalman update for each (l, k) pair; ``Cs[l][k]``, ``vs[l][k]``, ``Rs[k]``."""
    p = y.size
    log_raw, means, covs = [], [], []
    for l in range(len(pred)):
        x, P = pred.means[l], pred.covariances[l]
        for k, g in enumerate(gammas):
            C, v, R = Cs[l][k], vs[l][k], Rs[k]
            S = _sym(C @ P @ C.T + R)
            _check_pd(S, "innovation")
            e = y - C @ x - v
            K = np.linalg.solve(S, C @ P).T
            Pn = _sym(P - K @ S @ K.T)
            _check_pd(Pn, "filtered")
            means.append(x + K @ e)
            covs.append(Pn)
            with np.errstate(divide="ignore"):
                lw = np.log(pred.weights[l]) + np.log(g)
            log_raw.append(
                lw - 0.5 * e @ np.linalg.solve(S, e) - 0.5 * p * _LOG_2PI
                - 0.5 * np.linalg.slogdet(S)[1]
            )
    w, log_total = normalize_log_weights(np.array(log_raw))
    return CovMixture(w, np.array(means), np.array(covs)), log_total


def _time_full(filt, betas, As, us, Qs):
    """Propagation for each (s, j) pair; ``As[s][j]``, ``us[s][j]``, ``Qs[j]``."""
    w, means, covs = [], [], []
    for s in range(len(filt)):
        x, P = filt.means[s], filt.covariances[s]
        for j, b in enumerate(betas):
            A = As[s][j]
            Pn = _sym(A @ P @ A.T + Qs[j])
            _check_pd(Pn, "predicted")
            w.append(filt.weights[s] * b)
            means.append(A @ x + us[s][j])
            covs.append(Pn)
    return CovMixture(w, np.array(means), np.array(covs))


def run_filter_naive(model, measurements, cfg=None):
    """Covariance-form filter with the same step structure as :func:`run_filter`."""
    cfg = cfg or FilterConfig()
    ys = _check_measurements(model, measurements)
    trace = _TraceBuilder("naive")
    pred = CovMixture.from_sqrt(model.prior)
    n_pred_pre = len(pred)
    for i, y in enumerate(ys):
        t = i + 1
        start = time.perf_counter()
        try:
            pred_used = _split_full(pred, cfg.split) if cfg.splits_before("measurement") else pred
            L = len(pred_used)
            if model.is_linear:
                gammas = [c.weight for c in model.measurement]
                Cs = [[c.C for c in model.measurement]] * L
                vs = [[np.asarray(c.offset(t)) for c in model.measurement]] * L
                Rs = [c.R_sqrt.T @ c.R_sqrt for c in model.measurement]
            else:
                gammas = [1.0]
                Cs, vs = [], []
                for x in pred_used.means:
                    C, v = linearize_measurement(model, x, t)
                    Cs.append([np.atleast_2d(C)])
                    vs.append([np.atleast_1d(v)])
                Rs = [model.R_sqrt.T @ model.R_sqrt]
            filt_raw, loglik = _measurement_full(pred_used, y, gammas, Cs, vs, Rs)
            filt = reduce_full(filt_raw, cfg.filter_reduction) if cfg.reduction else filt_raw
            filt_used = _split_full(filt, cfg.split) if cfg.splits_before("time") else filt
            S = len(filt_used)
            if model.is_linear:
                betas = [c.weight for c in model.process]
                As = [[c.A for c in model.process]] * S
                us = [[np.asarray(c.offset(t)) for c in model.process]] * S
                Qs = [c.Q_sqrt.T @ c.Q_sqrt for c in model.process]
            else:
                betas = [1.0]
                As, us = [], []
                for x in filt_used.means:
                    A, u = linearize_process(model, x, t)
                    As.append([np.atleast_2d(A)])
                    us.append([np.atleast_1d(u)])
                Qs = [model.Q_sqrt.T @ model.Q_sqrt]
            pred_raw = _time_full(filt_used, betas, As, us, Qs)
            pred_next = reduce_full(pred_raw, cfg.predict_reduction) if cfg.reduction else pred_raw
        except GmmFilterError as exc:
            raise with_step(exc, t) from exc
        counts = (n_pred_pre, len(pred), len(pred_used), len(filt_raw), len(filt), len(filt_used))
        trace.add(t, counts, pred, filt, loglik, time.perf_counter() - start)
        pred, n_pred_pre = pred_next, len(pred_raw)
    return trace.build(pred)
