import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from artifact.linalg import (
    nuclear_norm,
    numerical_rank,
    project_nuclear_ball,
    project_simplex_l1,
    spectral_norm,
    svt_prox,
)
from oracles import cvx_svt

shapes = st.tuples(st.integers(1, 5), st.integers(1, 5))


def test_norms_of_diagonal():
    A = np.diag([3.0, -2.0, 0.5])
    assert nuclear_norm(A) == pytest.approx(5.5)
    assert spectral_norm(A) == pytest.approx(3.0)


def test_svt_zero_and_negative():
    A = np.ones((2, 3))
    np.testing.assert_array_equal(svt_prox(A, 0.0), A)
    with pytest.raises(ValueError):
        svt_prox(A, -1.0)
    assert not svt_prox(A, 10.0).any()


@pytest.mark.parametrize("seed", range(5))
def test_svt_matches_generic_solver(seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((3, 4))
    tau = 0.4 * spectral_norm(X)
    np.testing.assert_allclose(svt_prox(X, tau), cvx_svt(X, tau), atol=1e-6)


def test_svt_tie_independent():
    # repeated singular values: result must not depend on the SVD basis
    X = np.eye(3) * 2.0
    np.testing.assert_allclose(svt_prox(X, 0.5), np.eye(3) * 1.5)


@given(shapes, st.integers(0, 2**31), st.floats(0.0, 3.0))
def test_svt_shrinks_singular_values(shape, seed, tau):
    X = np.random.default_rng(seed).standard_normal(shape)
    s = np.linalg.svd(X, compute_uv=False)
    s_out = np.linalg.svd(svt_prox(X, tau), compute_uv=False)
    np.testing.assert_allclose(np.sort(s_out)[::-1], np.maximum(s - tau, 0.0), atol=1e-10)


@given(shapes, st.integers(0, 2**31), st.floats(0.01, 5.0))
def test_nuclear_ball_projection(shape, seed, radius):
    X = 3.0 * np.random.default_rng(seed).standard_normal(shape)
    P = project_nuclear_ball(X, radius)
    assert nuclear_norm(P) <= radius * (1 + 1e-9) + 1e-12
    if nuclear_norm(X) <= radius:
        np.testing.assert_allclose(P, X, atol=1e-10)


@given(st.lists(st.floats(0.0, 10.0), min_size=1, max_size=10), st.floats(0.0, 20.0))
def test_simplex_projection(v, radius):
    x = project_simplex_l1(np.array(v), radius)
    assert np.all(x >= 0)
    assert x.sum() <= radius + 1e-9 or np.allclose(x, v)


def test_numerical_rank():
    A = np.outer([1.0, 2.0], [1.0, 1.0, 1.0]) + 1e-14 * np.eye(2, 3)
    assert numerical_rank(A) == 1
    assert numerical_rank(np.zeros((2, 2))) == 0
