from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from divbasis.diffmat import barycentric_weights, diff_1d, simplex_diff
from divbasis.quadrature import gauss_jacobi_01, simplex_rule


def test_barycentric_weights_examples():
    np.testing.assert_allclose(barycentric_weights([0.0, 1.0]), [-1.0, 1.0])
    np.testing.assert_allclose(barycentric_weights([0.0, 0.5, 1.0]), [2.0, -4.0, 2.0])
    np.testing.assert_allclose(barycentric_weights([1 / 3]), [1.0])


def test_duplicate_nodes_rejected():
    with pytest.raises(ValueError, match="duplicate"):
        barycentric_weights([0.1, 0.4, 0.1])


def test_single_node_derivative_is_zero():
    D = diff_1d(gauss_jacobi_01(1, 0))
    assert D.shape == (1, 1) and D[0, 0] == 0.0


def test_two_node_derivative_of_identity():
    r = gauss_jacobi_01(2, 1)
    np.testing.assert_allclose(diff_1d(r) @ r.nodes, [1.0, 1.0], atol=1e-14)


@pytest.mark.parametrize("alpha", [0, 1, 2])
@pytest.mark.parametrize("k", [1, 4, 9, 15])
def test_one_dimensional_monomials(k, alpha):
    r = gauss_jacobi_01(k + 1, alpha)
    D = diff_1d(r)
    z = r.nodes
    for m in range(k + 1):
        want = m * z ** (m - 1) if m else np.zeros_like(z)
        assert np.abs(D @ z ** m - want).max() <= 1e-11 * max(1.0, np.abs(want).max())


def test_xy_derivative_in_2d():
    q = simplex_rule(3, 2)
    dm = simplex_diff(q)
    x, y = q.points.T
    np.testing.assert_allclose(dm.apply(0, x * y), y, atol=1e-11)
    np.testing.assert_allclose(dm.apply(1, x * y), x, atol=1e-11)


def test_last_coordinate_in_3d():
    q = simplex_rule(1, 3)
    dm = simplex_diff(q)
    np.testing.assert_allclose(dm.apply(2, q.points[:, 2]), 1.0, atol=1e-12)


@pytest.mark.parametrize("d,k", [(1, 15), (2, 6), (2, 15), (3, 5), (3, 10)])
def test_constants_and_coordinates(d, k):
    q = simplex_rule(k, d)
    dm = simplex_diff(q)
    for i in range(d):
        assert np.abs(dm.apply(i, np.ones(q.npoints))).max() <= 1e-12
        for j in range(d):
            want = 1.0 if i == j else 0.0
            assert np.abs(dm.apply(i, q.points[:, j]) - want).max() <= 1e-12


@pytest.mark.parametrize("d,k", [(1, 15), (2, 8), (2, 15), (3, 6), (3, 12)])
def test_exact_on_all_monomials(d, k):
    q = simplex_rule(k, d)
    dm = simplex_diff(q)
    x = q.points
    exps = [a for a in product(range(k + 1), repeat=d) if sum(a) <= k]
    V = np.column_stack([np.prod(x ** np.array(a), axis=1) for a in exps])
    for i in range(d):
        want = np.zeros_like(V)
        for c, a in enumerate(exps):
            if a[i]:
                b = list(a)
                b[i] -= 1
                want[:, c] = a[i] * np.prod(x ** np.array(b), axis=1)
        got = dm.apply(i, V)
        scale = np.maximum(np.abs(want).max(axis=0), 1.0)
        assert (np.abs(got - want).max(axis=0) / scale).max() <= 1e-10


@settings(max_examples=30, deadline=None)
@given(d=st.integers(1, 3), k=st.integers(1, 7), seed=st.integers(0, 2**31 - 1))
def test_random_polynomials(d, k, seed):
    rng = np.random.default_rng(seed)
    q = simplex_rule(k, d)
    dm = simplex_diff(q)
    x = q.points
    exps = [a for a in product(range(k + 1), repeat=d) if sum(a) <= k]
    coef = rng.standard_normal(len(exps))
    vals = sum(c * np.prod(x ** np.array(a), axis=1) for c, a in zip(coef, exps))
    for i in range(d):
        want = np.zeros(q.npoints)
        for c, a in zip(coef, exps):
            if a[i]:
                b = list(a)
                b[i] -= 1
                want += c * a[i] * np.prod(x ** np.array(b), axis=1)
        assert np.abs(dm.apply(i, vals) - want).max() <= 1e-10 * max(1.0, np.abs(want).max())


def test_dense_matches_matrix_free():
    q = simplex_rule(4, 3)
    dm = simplex_diff(q)
    v = np.random.default_rng(0).standard_normal(q.npoints)
    for i in range(3):
        np.testing.assert_allclose(dm.dense(i) @ v, dm.apply(i, v), atol=1e-12)
    assert len(dm.dx) == 3 and dm.dx[0].shape == (125, 125)


def test_dense_refuses_huge_matrices():
    dm = simplex_diff(simplex_rule(27, 3))
    with pytest.raises(MemoryError):
        dm.dense(0)
