"""Triangular-factor linear algebra used by every square-root routine.

Covariances are carried as upper-triangular ``R`` with ``P = R.T @ R``.
All functions accept a single matrix or a stack with leading batch axes.
"""
import numpy as np

from .errors import SingularFactorError

#: Relative floor below which a factor diagonal counts as singular.
SINGULARITY_FLOOR = 1e-12


def _as_finite(M, name="matrix"):
    M = np.asarray(M, dtype=float)
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} contains non-finite entries")
    return M


def qr_r_factor(M):
    """Upper-triangular factor of a QR decomposition, with nonnegative diagonal.

    Parameters
    ----------
    M : array_like
        ``(..., rows, cols)`` with ``rows >= cols``.

    Returns
    -------
    ndarray
        ``(..., cols, cols)`` upper-triangular ``R`` with ``R.T @ R == M.T @ M``.
        The orthogonal factor is never formed.
    """
    M = _as_finite(M)
    if M.ndim < 2:
        raise ValueError("qr_r_factor needs a matrix")
    rows, cols = M.shape[-2:]
    if rows < cols:
        raise ValueError(f"qr_r_factor needs rows >= cols, got {rows}x{cols}")
    R = np.linalg.qr(M, mode="r")
    d = np.diagonal(R, axis1=-2, axis2=-1)
    sign = np.where(d < 0.0, -1.0, 1.0)
    return R * sign[..., :, None]


def sqrt_factor(P):
    """Upper-triangular square-root factor of a symmetric PSD matrix.

    Uses Cholesky when ``P`` is positive definite and falls back to an
    eigenvalue square root (re-triangularised by QR) for semidefinite input.
    """
    P = _as_finite(P, "covariance")
    P = 0.5 * (P + np.swapaxes(P, -1, -2))
    try:
        L = np.linalg.cholesky(P)
        return qr_r_factor(np.swapaxes(L, -1, -2))
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(P)
        if np.any(vals < -1e-10 * max(1.0, float(np.max(np.abs(vals))))):
            raise ValueError("covariance is not positive semidefinite")
        root = np.sqrt(np.clip(vals, 0.0, None))[..., :, None] * np.swapaxes(vecs, -1, -2)
        return qr_r_factor(root)


def _check_diagonal(d):
    scale = np.max(np.abs(d), axis=-1, keepdims=True)
    scale = np.where(scale < SINGULARITY_FLOOR, 1.0, scale)
    bad = d <= SINGULARITY_FLOOR * scale
    if np.any(bad):
        raise SingularFactorError(
            f"triangular factor is singular (smallest diagonal {float(np.min(d)):.3e})"
        )


def solve_upper_transposed(R, b):
    """Solve ``R.T @ x = b`` by forward substitution.

    ``R`` may be ``(n, n)`` or ``(..., n, n)``; ``b`` broadcasts as ``(..., n)``.
    """
    R = _as_finite(R, "factor")
    b = _as_finite(b, "right-hand side")
    n = R.shape[-1]
    if R.shape[-2] != n or b.shape[-1] != n:
        raise ValueError(f"shape mismatch: factor {R.shape}, vector {b.shape}")
    d = np.diagonal(R, axis1=-2, axis2=-1)
    _check_diagonal(d)
    shape = np.broadcast_shapes(R.shape[:-2], b.shape[:-1]) + (n,)
    x = np.zeros(shape)
    for i in range(n):
        # column i of R above the diagonal is row i of R.T left of the diagonal
        acc = np.einsum("...j,...j->...", R[..., :i, i], x[..., :i])
        x[..., i] = (b[..., i] - acc) / R[..., i, i]
    return x


def half_logdet_from_factor(R):
    """Return ``sum(log(diag(R)))``, i.e. ``0.5 * log|R.T @ R|``."""
    R = np.asarray(R, dtype=float)
    d = np.diagonal(R, axis1=-2, axis2=-1)
    if np.any(~(d > 0.0)):
        raise SingularFactorError("factor has a nonpositive diagonal entry")
    return np.sum(np.log(d), axis=-1)


def is_upper_triangular(R, tol=0.0):
    R = np.asarray(R)
    return bool(np.all(np.abs(np.tril(R, -1)) <= tol))
