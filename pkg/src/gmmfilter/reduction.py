"""Greedy Kullback-Leibler mixture reduction by moment-preserving pairwise merges.

Every covariance stays in square-root form: a merged factor is the R factor
of a stacked ``(2n + 1, n)`` array, and the merge cost comes straight from
the triangular diagonals.
"""
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateWeightsError
from .linalg import half_logdet_from_factor, qr_r_factor
from .mixture import GaussianComponent, GaussianMixture, normalize_weights

#: Components lighter than this are dropped before any bound is formed.
PRUNE_WEIGHT = 1e-300


@dataclass(frozen=True)
class ReductionConfig:
    """Bounds and threshold for :func:`reduce`.

    Merging continues while there are more than ``max_components``, or while
    there are more than ``min_components`` and the cheapest merge costs less
    than ``threshold``.
    """

    min_components: int = 1
    max_components: int = 100
    threshold: float = 0.01

    def __post_init__(self):
        if not 1 <= self.min_components <= self.max_components:
            raise ValueError(
                "need 1 <= min_components <= max_components, got "
                f"{self.min_components}, {self.max_components}"
            )
        if not self.threshold > 0.0:
            raise ValueError(f"threshold must be > 0, got {self.threshold}")


def _merge_arrays(wi, wj, mi, mj, Ri, Rj):
    """Batched moment-preserving merge. Leading axes broadcast."""
    w = wi + wj
    if np.any(~(w > 0.0)):
        raise DegenerateWeightsError("cannot merge components with zero combined weight")
    a = wi / w
    b = wj / w
    mean = a[..., None] * mi + b[..., None] * mj
    diff = (mi - mj) * np.sqrt(a * b)[..., None]
    stacked = np.concatenate(
        [np.sqrt(a)[..., None, None] * Ri, np.sqrt(b)[..., None, None] * Rj, diff[..., None, :]],
        axis=-2,
    )
    return w, mean, qr_r_factor(stacked)


def _bound_arrays(wi, wj, mi, mj, Ri, Rj, hld_i, hld_j):
    w, _, R = _merge_arrays(wi, wj, mi, mj, Ri, Rj)
    return w * half_logdet_from_factor(R) - wi * hld_i - wj * hld_j


def merge_pair(ci, cj):
    """Merge two components into one with the same weight, mean and covariance."""
    if ci.dim != cj.dim:
        raise ValueError(f"dimension mismatch: {ci.dim} vs {cj.dim}")
    w, mean, R = _merge_arrays(
        np.float64(ci.weight), np.float64(cj.weight), ci.mean, cj.mean, ci.cov_sqrt, cj.cov_sqrt
    )
    return GaussianComponent(float(w), mean, R)


def kl_bound(ci, cj):
    """Upper bound on the discrimination incurred by merging ``ci`` and ``cj``.

    Equals ``0.5 * (w_ij log|P_ij| - w_i log|P_i| - w_j log|P_j|)``, evaluated
    from the triangular factors.
    """
    if ci.dim != cj.dim:
        raise ValueError(f"dimension mismatch: {ci.dim} vs {cj.dim}")
    b = _bound_arrays(
        np.float64(ci.weight),
        np.float64(cj.weight),
        ci.mean,
        cj.mean,
        ci.cov_sqrt,
        cj.cov_sqrt,
        half_logdet_from_factor(ci.cov_sqrt),
        half_logdet_from_factor(cj.cov_sqrt),
    )
    return max(float(b), 0.0)


class BoundTable:
    """Working state of a reduction: surviving components and pairwise bounds.

    Bounds are held in the strict upper triangle of ``upper`` (``+inf``
    elsewhere) so a row-major ``argmin`` breaks ties by smallest ``i`` then
    smallest ``j``.
    """

    def __init__(self, weights, means, cov_sqrts):
        self.weights = np.array(weights, dtype=float)
        self.means = np.array(means, dtype=float)
        self.cov_sqrts = np.array(cov_sqrts, dtype=float)
        self.hld = half_logdet_from_factor(self.cov_sqrts)
        k = self.weights.size
        self.upper = np.full((k, k), np.inf)
        if k > 1:
            iu, ju = np.triu_indices(k, 1)
            self.upper[iu, ju] = self._bounds(iu, ju)

    def __len__(self):
        return self.weights.size

    def _bounds(self, i, j):
        b = _bound_arrays(
            self.weights[i],
            self.weights[j],
            self.means[i],
            self.means[j],
            self.cov_sqrts[i],
            self.cov_sqrts[j],
            self.hld[i],
            self.hld[j],
        )
        # B >= 0 in exact arithmetic
        return np.maximum(b, 0.0)

    def matrix(self):
        """Symmetric bound matrix with zero diagonal."""
        U = np.where(np.isfinite(self.upper), self.upper, 0.0)
        return U + U.T

    def argmin(self):
        """Return ``(i, j, bound)`` of the cheapest merge with ``i < j``."""
        flat = int(np.argmin(self.upper))
        i, j = divmod(flat, len(self))
        return i, j, float(self.upper[i, j])

    def min_bound(self):
        return float(np.min(self.upper)) if len(self) > 1 else np.inf

    def merge(self, i, j):
        """Replace component ``i`` by its merge with ``j``, then drop ``j``."""
        w, mean, R = _merge_arrays(
            self.weights[i], self.weights[j], self.means[i], self.means[j],
            self.cov_sqrts[i], self.cov_sqrts[j],
        )
        self.weights[i], self.means[i], self.cov_sqrts[i] = w, mean, R
        self.hld[i] = half_logdet_from_factor(R)
        self.weights = np.delete(self.weights, j)
        self.means = np.delete(self.means, j, axis=0)
        self.cov_sqrts = np.delete(self.cov_sqrts, j, axis=0)
        self.hld = np.delete(self.hld, j)
        self.upper = np.delete(np.delete(self.upper, j, axis=0), j, axis=1)
        if j < i:
            i -= 1
        # only row/column i changed; keep (smaller, larger) argument order
        k = len(self)
        before = np.arange(i)
        after = np.arange(i + 1, k)
        if before.size:
            self.upper[before, i] = self._bounds(before, np.full(before.size, i))
        if after.size:
            self.upper[i, after] = self._bounds(np.full(after.size, i), after)
        return i

    def to_mixture(self):
        return GaussianMixture(self.weights, self.means, self.cov_sqrts)


@dataclass(frozen=True)
class ReductionReport:
    mixture: GaussianMixture
    n_input: int
    n_pruned: int
    merges: tuple
    min_bound: float

    @property
    def n_output(self):
        return len(self.mixture)


def reduce_with_report(m, cfg):
    """Run the reduction and return the mixture together with diagnostics.

    ``merges`` lists ``(i, j, bound)`` in the order performed, indices
    referring to the working list at that moment.
    """
    keep = m.weights >= PRUNE_WEIGHT
    if not np.any(keep):
        raise DegenerateWeightsError("every component weight is below the pruning floor")
    table = BoundTable(m.weights[keep], m.means[keep], m.cov_sqrts[keep])
    merges = []
    k = len(table)
    min_b = table.min_bound()
    while k > cfg.max_components or (k > cfg.min_components and min_b < cfg.threshold):
        i, j, b = table.argmin()
        table.merge(i, j)
        merges.append((i, j, b))
        k -= 1
        min_b = table.min_bound()
    out = normalize_weights(table.to_mixture())
    return ReductionReport(out, len(m), int(np.sum(~keep)), tuple(merges), min_b)


def reduce(m, cfg):
    """Reduce ``m`` by greedy lowest-bound merging; see :class:`ReductionConfig`."""
    return reduce_with_report(m, cfg).mixture


def bound_table(m):
    """Full symmetric bound matrix for the components of ``m``."""
    return BoundTable(m.weights, m.means, m.cov_sqrts).matrix()
