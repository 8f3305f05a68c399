"""Schatten norms and singular value soft-thresholding."""

import numpy as np


def singular_values(A):
    return np.linalg.svd(np.asarray(A, dtype=float), compute_uv=False)


def nuclear_norm(A):
    """Schatten-1 norm (sum of singular values)."""
    return float(np.sum(singular_values(A)))


def spectral_norm(A):
    """Schatten-infinity norm (largest singular value)."""
    s = singular_values(A)
    return float(s[0]) if s.size else 0.0


def frobenius_norm(A):
    return float(np.linalg.norm(A))


def svt_prox(A, threshold):
    r"""Soft-threshold the singular values of `A`.

    Returns the minimizer of :math:`\tfrac12\|Z - A\|_2^2 + \tau\|Z\|_1`
    for :math:`\tau` = `threshold`.  The result does not depend on how ties
    between singular values are broken by the SVD.
    """
    if threshold < 0:
        raise ValueError("threshold must be nonnegative")
    A = np.asarray(A, dtype=float)
    if threshold == 0:
        return A.copy()
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    shrunk = np.maximum(s - threshold, 0.0)
    keep = shrunk > 0
    if not np.any(keep):
        return np.zeros_like(A)
    return (U[:, keep] * shrunk[keep]) @ Vt[keep]


def numerical_rank(A, rtol=1e-10):
    s = singular_values(A)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def project_simplex_l1(v, radius):
    """Euclidean projection of a nonnegative vector onto ``{x >= 0, sum(x) <= radius}``."""
    v = np.maximum(np.asarray(v, dtype=float), 0.0)
    if v.sum() <= radius:
        return v
    if radius <= 0:
        return np.zeros_like(v)
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    idx = np.arange(1, u.size + 1)
    hits = np.nonzero(u - (css - radius) / idx > 0)[0]
    # the first index always qualifies in exact arithmetic
    k = hits[-1] if hits.size else 0
    theta = (css[k] - radius) / (k + 1)
    return np.maximum(v - theta, 0.0)


def project_nuclear_ball(A, radius):
    """Frobenius projection of `A` onto the nuclear-norm ball of the given radius."""
    U, s, Vt = np.linalg.svd(np.asarray(A, dtype=float), full_matrices=False)
    return (U * project_simplex_l1(s, radius)) @ Vt
