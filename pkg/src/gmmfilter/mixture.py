"""Gaussian mixtures with covariances held as upper-triangular square-root factors."""
import json
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import DegenerateWeightsError
from .linalg import half_logdet_from_factor, is_upper_triangular, solve_upper_transposed

_LOG_2PI = np.log(2.0 * np.pi)

# linear-space sums below this lose too much precision; switch to log space
_TINY_SUM = 1e-280


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GaussianComponent:
    """One weighted Gaussian ``weight * N(mean, cov_sqrt.T @ cov_sqrt)``."""

    weight: float
    mean: np.ndarray
    cov_sqrt: np.ndarray

    def __post_init__(self):
        mean = _frozen(np.atleast_1d(self.mean))
        cov_sqrt = _frozen(np.atleast_2d(self.cov_sqrt))
        if mean.ndim != 1:
            raise ValueError("component mean must be a vector")
        if cov_sqrt.shape != (mean.size, mean.size):
            raise ValueError(
                f"cov_sqrt shape {cov_sqrt.shape} does not match mean dimension {mean.size}"
            )
        if not is_upper_triangular(cov_sqrt):
            raise ValueError("cov_sqrt must be upper triangular")
        w = float(self.weight)
        if not np.isfinite(w) or w < 0.0:
            raise ValueError(f"component weight must be finite and >= 0, got {w}")
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov_sqrt", cov_sqrt)

    @property
    def dim(self):
        return self.mean.size

    @property
    def cov(self):
        return self.cov_sqrt.T @ self.cov_sqrt


class GaussianMixture:
    """Ordered collection of Gaussian components stored as stacked arrays.

    Parameters
    ----------
    weights : array_like
        ``(N,)`` nonnegative component weights.
    means : array_like
        ``(N, n)`` component means.
    cov_sqrts : array_like
        ``(N, n, n)`` upper-triangular factors, ``P_i = R_i.T @ R_i``.
    """

    def __init__(self, weights, means, cov_sqrts):
        w = np.atleast_1d(np.asarray(weights, dtype=float))
        mu = np.asarray(means, dtype=float)
        if mu.ndim == 1:
            mu = mu[:, None]
        R = np.asarray(cov_sqrts, dtype=float)
        if R.ndim == 1:
            R = R[:, None, None]
        if w.ndim != 1 or w.size == 0:
            raise ValueError("a mixture needs at least one component")
        N, n = mu.shape
        if w.size != N or R.shape != (N, n, n):
            raise ValueError(
                f"inconsistent mixture shapes: weights {w.shape}, means {mu.shape}, "
                f"cov_sqrts {R.shape}"
            )
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(mu)) and np.all(np.isfinite(R))):
            raise ValueError("mixture data must be finite")
        if np.any(w < 0.0):
            raise ValueError("mixture weights must be nonnegative")
        if not is_upper_triangular(R):
            raise ValueError("cov_sqrts must be upper triangular")
        self.weights = _frozen(w)
        self.means = _frozen(mu)
        self.cov_sqrts = _frozen(R)

    @classmethod
    def from_components(cls, components):
        components = list(components)
        if not components:
            raise ValueError("a mixture needs at least one component")
        return cls(
            [c.weight for c in components],
            np.stack([c.mean for c in components]),
            np.stack([c.cov_sqrt for c in components]),
        )

    @classmethod
    def single(cls, mean, cov_sqrt, weight=1.0):
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        return cls([weight], mean[None, :], np.atleast_2d(cov_sqrt)[None, :, :])

    def __len__(self):
        return self.weights.size

    def __getitem__(self, i):
        return GaussianComponent(self.weights[i], self.means[i], self.cov_sqrts[i])

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def __repr__(self):
        return f"GaussianMixture(n_components={len(self)}, dim={self.dim})"

    @property
    def components(self):
        return list(self)

    @property
    def dim(self):
        return self.means.shape[1]

    @property
    def covariances(self):
        return np.swapaxes(self.cov_sqrts, -1, -2) @ self.cov_sqrts

    def is_normalized(self, tol=1e-12):
        return abs(float(np.sum(self.weights)) - 1.0) <= tol

    def with_weights(self, weights):
        return GaussianMixture(weights, self.means, self.cov_sqrts)

    # -- serialization -----------------------------------------------------

    def to_dict(self):
        return {
            "components": [
                {
                    "weight": float(c.weight),
                    "mean": [float(v) for v in c.mean],
                    "cov_sqrt": [float(v) for v in c.cov_sqrt.ravel()],
                }
                for c in self
            ]
        }

    @classmethod
    def from_dict(cls, data):
        try:
            items = data["components"]
        except (KeyError, TypeError):
            raise ValueError("mixture JSON needs a 'components' list") from None
        if not isinstance(items, list) or not items:
            raise ValueError("mixture JSON needs a nonempty 'components' list")
        comps = []
        for idx, item in enumerate(items):
            try:
                mean = np.asarray(item["mean"], dtype=float).ravel()
                flat = np.asarray(item["cov_sqrt"], dtype=float).ravel()
                if flat.size != mean.size**2:
                    raise ValueError(
                        f"cov_sqrt has {flat.size} entries, expected {mean.size ** 2}"
                    )
                comps.append(
                    GaussianComponent(
                        float(item["weight"]), mean, flat.reshape(mean.size, mean.size)
                    )
                )
            except KeyError as exc:
                raise ValueError(f"component {idx}: missing field {exc}") from None
            except (TypeError, ValueError) as exc:
                raise ValueError(f"component {idx}: {exc}") from None
        if len({c.dim for c in comps}) != 1:
            raise ValueError("components have differing dimensions")
        return cls.from_components(comps)

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def normalize_log_weights(log_weights):
    """Normalize weights given as logarithms.

    Returns ``(weights, log_total)``. The exponentials are summed directly
    unless that sum underflows, in which case a log-sum-exp is used.
    """
    log_weights = np.asarray(log_weights, dtype=float)
    w = np.exp(log_weights)
    total = float(np.sum(w))
    if np.isfinite(total) and total > _TINY_SUM:
        return w / total, float(np.log(total))
    lse = float(logsumexp(log_weights))
    if not np.isfinite(lse):
        raise DegenerateWeightsError("all mixture weights are zero")
    return np.exp(log_weights - lse), lse


def normalize_weights(m):
    """Rescale the weights of ``m`` to sum to one."""
    total = float(np.sum(m.weights))
    if not np.isfinite(total) or total <= 0.0:
        raise DegenerateWeightsError(f"cannot normalize weights with sum {total}")
    w = m.weights / total
    # one correction pass pulls the sum to within an ulp or two of 1
    w = w / np.sum(w)
    return m.with_weights(w)


def component_log_pdf(means, cov_sqrts, x):
    """Log-density of each component at each point.

    ``x`` is ``(n,)`` or ``(M, n)``; the result is ``(N,)`` or ``(M, N)``.
    """
    x = np.asarray(x, dtype=float)
    n = means.shape[1]
    if x.shape[-1] != n:
        raise ValueError(f"point dimension {x.shape[-1]} does not match mixture dimension {n}")
    diff = x[..., None, :] - means  # (..., N, n)
    e = solve_upper_transposed(cov_sqrts, diff)
    return (
        -0.5 * np.sum(e * e, axis=-1)
        - half_logdet_from_factor(cov_sqrts)
        - 0.5 * n * _LOG_2PI
    )


def evaluate_pdf(m, x):
    """Mixture density at ``x`` (a point ``(n,)`` or a batch ``(M, n)``)."""
    x = np.asarray(x, dtype=float)
    if m.dim == 1 and x.ndim == 1 and x.size != 1:
        x = x[:, None]
    logp = component_log_pdf(m.means, m.cov_sqrts, x)
    with np.errstate(divide="ignore"):
        logw = np.log(m.weights)
    out = np.exp(logsumexp(logp + logw, axis=-1))
    return float(out) if np.ndim(out) == 0 else out


def mixture_moments(m):
    """Overall mean and covariance of a normalized mixture."""
    w = m.weights
    mean = w @ m.means
    d = m.means - mean
    cov = np.einsum("i,ijk->jk", w, m.covariances) + np.einsum("i,ij,ik->jk", w, d, d)
    return mean, 0.5 * (cov + cov.T)


def sample(m, rng, n):
    """Draw ``n`` points from the mixture using the supplied generator.

    Returns an ``(n, dim)`` array.
    """
    if n < 0:
        raise ValueError("sample count must be nonnegative")
    if n == 0:
        return np.empty((0, m.dim))
    p = m.weights / np.sum(m.weights)
    idx = rng.choice(len(m), size=n, p=p)
    z = rng.standard_normal((n, m.dim))
    return m.means[idx] + np.einsum("sji,sj->si", m.cov_sqrts[idx], z)
