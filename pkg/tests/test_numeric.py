import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from alpharim.numeric import (
    GradientOracleError,
    ShapeError,
    finite_diff_grad,
    glorot_uniform,
    init_matrix,
    make_rng,
    matmul,
    max_relative_error,
    orthogonal_init,
    softmax_rows,
)

from conftest import triple_loop_matmul

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


def test_matmul_identity():
    m = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(matmul(np.eye(2), m), m)


def test_matmul_row_by_column():
    assert matmul([[1, 2]], [[3], [4]]).tolist() == [[11.0]]


def test_matmul_matches_triple_loop(rng):
    a, b = rng.standard_normal((3, 4)), rng.standard_normal((4, 2))
    np.testing.assert_allclose(matmul(a, b), triple_loop_matmul(a, b), rtol=0, atol=1e-12)


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\) vs \(2, 3\)"):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_matmul_associativity(rng):
    for _ in range(20):
        a, b, c = (rng.standard_normal(s) for s in [(3, 5), (5, 4), (4, 2)])
        left, right = matmul(matmul(a, b), c), matmul(a, matmul(b, c))
        assert np.max(np.abs(left - right)) <= 1e-9 * max(1.0, np.max(np.abs(left)))


def test_softmax_examples():
    np.testing.assert_allclose(softmax_rows([[0.0, 0.0, 0.0]]), [[1 / 3] * 3], atol=1e-15)
    np.testing.assert_allclose(softmax_rows([[1000.0, 0.0, 0.0]]), [[1.0, 0.0, 0.0]], atol=1e-12)
    # frozen from a 30-digit mpmath evaluation of exp(k)/sum exp
    np.testing.assert_allclose(
        softmax_rows([[1.0, 2.0, 3.0]]), [[0.0900305731704, 0.244728471055, 0.665240955775]], atol=1e-11
    )


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)), elements=finite), finite)
def test_softmax_rows_sum_to_one_and_shift_invariant(m, c):
    s = softmax_rows(m)
    assert np.all(s >= 0)
    np.testing.assert_allclose(s.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(softmax_rows(m + c), s, atol=1e-12)


def test_glorot_bounds():
    r = make_rng(3)
    assert np.all(np.abs(glorot_uniform(1, 5, r)) <= 1.0)
    assert np.max(np.abs(glorot_uniform(3, 3, r))) <= 1.0


def test_glorot_sample_mean():
    w = glorot_uniform(100, 100, make_rng(42))
    limit = np.sqrt(6 / 200)
    assert abs(w.mean()) <= 3 * (limit / np.sqrt(3)) / 100


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 40), st.integers(1, 40), st.integers(0, 2**32 - 1))
def test_glorot_never_exceeds_limit(rows, cols, seed):
    w = glorot_uniform(rows, cols, make_rng(seed))
    assert w.shape == (rows, cols)
    assert np.max(np.abs(w)) <= np.sqrt(6 / (rows + cols))


def test_orthogonal_one_by_one():
    w = orthogonal_init(1, make_rng(0))
    assert abs(abs(w[0, 0]) - 1.0) < 1e-15


@pytest.mark.parametrize("n", range(1, 17))
def test_orthogonal_gram_is_identity(n):
    w = orthogonal_init(n, make_rng(n))
    assert np.max(np.abs(w.T @ w - np.eye(n))) <= 1e-10


def test_orthogonal_singular_values():
    w = orthogonal_init(8, make_rng(5))
    sv = np.linalg.svd(w, compute_uv=False)
    np.testing.assert_allclose(sv, 1.0, atol=1e-8)


def test_init_kinds():
    r = make_rng(0)
    assert not init_matrix("zeros", 2, 3, r).any()
    with pytest.raises(ShapeError):
        init_matrix("orthogonal", 2, 3, r)
    with pytest.raises(ValueError):
        init_matrix("he", 2, 2, r)


def test_same_seed_is_bitwise_reproducible():
    a = orthogonal_init(6, make_rng(9)), glorot_uniform(4, 7, make_rng(9))
    b = orthogonal_init(6, make_rng(9)), glorot_uniform(4, 7, make_rng(9))
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_finite_diff_examples():
    np.testing.assert_allclose(finite_diff_grad(lambda t: t[0] ** 2, [3.0]), [6.0], atol=1e-6)
    np.testing.assert_allclose(finite_diff_grad(lambda t: t[0] * t[1], [2.0, 5.0]), [5.0, 2.0], atol=1e-6)


def test_finite_diff_reports_coordinate():
    f = lambda t: np.inf if t[1] > 1.0 else float(t.sum())
    with pytest.raises(GradientOracleError) as info:
        finite_diff_grad(f, [0.0, 1.0])
    assert info.value.index == 1


def test_finite_diff_rejects_bad_eps():
    with pytest.raises(ValueError):
        finite_diff_grad(lambda t: 0.0, [1.0], eps=0.0)


def test_max_relative_error_floor():
    assert max_relative_error([0.0], [1e-9], floor=1e-6) == pytest.approx(1e-3)
    assert max_relative_error([2.0], [2.0]) == 0.0
