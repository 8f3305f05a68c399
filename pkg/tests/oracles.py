"""Independent reference solvers used by the tests."""

import warnings

import cvxpy as cp
import numpy as np

_TOL = dict(tol_gap_abs=1e-11, tol_gap_rel=1e-11, tol_feas=1e-11)


def _solve(prob):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        prob.solve(solver="CLARABEL", **_TOL)


def cvx_penalized_fit(pmf, S, lam):
    """Generic conic solve of sum(pi A^2) - 2<S, A> + lam ||A||_*."""
    A = cp.Variable(pmf.shape)
    obj = cp.sum(cp.multiply(pmf, cp.square(A))) - 2 * cp.sum(cp.multiply(S, A)) + lam * cp.normNuc(A)
    prob = cp.Problem(cp.Minimize(obj))
    _solve(prob)
    return A.value


def cvx_svt(X, tau):
    """Generic conic solve of 0.5 ||Z - X||_F^2 + tau ||Z||_*."""
    Z = cp.Variable(X.shape)
    prob = cp.Problem(cp.Minimize(0.5 * cp.sum_squares(Z - X) + tau * cp.normNuc(Z)))
    _solve(prob)
    return Z.value


def rank_one_grid_min(pmf, points=181):
    """min of sqrt(sum pi u^2 v^2) over unit u, v, sampled on the simplex of squares.

    Only valid for 2 x 2: u = (cos a, sin a), v = (cos b, sin b).
    """
    ang = np.linspace(0.0, np.pi / 2, points)
    u2 = np.stack([np.cos(ang) ** 2, np.sin(ang) ** 2])
    vals = np.einsum("ia,ij,jb->ab", u2, pmf, u2)
    return float(np.sqrt(vals.min()))
