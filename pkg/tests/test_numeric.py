import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from unilab.errors import ConfigError, DegenerateVectorError, DimensionError
from unilab.numeric import (
    IMAGE, REPORT, RaggedBatch, cosine, cosine_matrix, dot, logsumexp, normalize_rows_unit, softmax_rows,
)

import oracles

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


@pytest.mark.parametrize("a, b, want", [([1, 0], [0, 1], 0.0), ([1, 2], [3, 4], 11.0), ([0.6, 0.8], [0.6, 0.8], 1.0)])
def test_dot_examples(a, b, want):
    assert dot(a, b) == pytest.approx(want, abs=1e-15)


def test_dot_length_mismatch():
    with pytest.raises(DimensionError):
        dot([1, 2], [1, 2, 3])


@pytest.mark.parametrize("a, b, want", [([2, 0], [5, 0], 1.0), ([1, 0], [-1, 0], -1.0)])
def test_cosine_examples(a, b, want):
    assert cosine(a, b) == want


def test_cosine_45_degrees():
    assert abs(cosine([1, 1], [1, 0]) - oracles.COS_45_DEG) <= 1e-15


def test_cosine_zero_vector():
    with pytest.raises(DegenerateVectorError):
        cosine([0, 0], [1, 0])


@given(arrays(np.float64, 5, elements=finite), arrays(np.float64, 5, elements=finite))
def test_cosine_bounded(a, b):
    if np.linalg.norm(a) == 0 or np.linalg.norm(b) == 0:
        return
    assert -1.0 <= cosine(a, b) <= 1.0


def test_cosine_matrix_matches_pairwise(rng):
    a, b = rng.standard_normal((3, 4)), rng.standard_normal((5, 4))
    m = cosine_matrix(a, b)
    for i in range(3):
        for j in range(5):
            assert m[i, j] == pytest.approx(cosine(a[i], b[j]), abs=1e-15)


@pytest.mark.parametrize("v, want", [([0, 0], math.log(2)), ([5], 5.0)])
def test_logsumexp_examples(v, want):
    assert logsumexp(v) == pytest.approx(want, abs=1e-15)


def test_logsumexp_large_values():
    assert logsumexp([1000, 1000]) == pytest.approx(oracles.LSE_1000_1000, abs=1e-12)


def test_logsumexp_neg_inf_slice():
    out = logsumexp(np.array([[-np.inf, -np.inf], [0.0, 0.0]]), axis=1)
    assert out[0] == -np.inf and out[1] == pytest.approx(math.log(2))


@given(arrays(np.float64, st.integers(1, 8), elements=finite), finite)
def test_logsumexp_shift_equivariance(v, c):
    assert logsumexp(v + c) == pytest.approx(logsumexp(v) + c, abs=1e-9)


@given(arrays(np.float64, st.integers(1, 8), elements=finite))
def test_logsumexp_bounds(v):
    lse = logsumexp(v)
    assert v.max() - 1e-12 <= lse <= v.max() + math.log(v.size) + 1e-12


def test_softmax_examples():
    assert np.allclose(softmax_rows([[0, 0]], 3.0), [[0.5, 0.5]])
    assert np.allclose(softmax_rows([[math.log(3), 0]]), [[0.75, 0.25]], atol=1e-15)
    assert np.allclose(softmax_rows([[2, 2, 2]]), [[1 / 3] * 3])


def test_softmax_bad_temperature():
    with pytest.raises(ConfigError):
        softmax_rows([[1, 2]], 0.0)


@given(arrays(np.float64, (3, 4), elements=finite), st.floats(0.05, 5))
def test_softmax_rows_are_distributions(m, t):
    s = softmax_rows(m, t)
    assert np.all(s >= 0)
    assert np.allclose(s.sum(axis=1), 1.0, atol=1e-12)


def test_normalize_rows():
    assert np.allclose(normalize_rows_unit([[3, 4]]), [[0.6, 0.8]])
    u = normalize_rows_unit([[0.6, 0.8]])
    assert np.array_equal(normalize_rows_unit(u), u)
    with pytest.raises(DegenerateVectorError):
        normalize_rows_unit([[0, 0]])


def test_ragged_validation():
    b = RaggedBatch(REPORT, [np.ones((2, 3)), np.ones((4, 3))])
    assert b.n == 2 and b.d == 3 and b.sizes == [2, 4]
    with pytest.raises(DimensionError):
        RaggedBatch(IMAGE, [np.ones((2, 3)), np.ones((4, 3))])
    with pytest.raises(DimensionError):
        RaggedBatch(REPORT, [np.ones((2, 3)), np.ones((2, 2))])
    with pytest.raises(DimensionError):
        RaggedBatch(REPORT, [np.ones((0, 3))])
    with pytest.raises(ConfigError):
        RaggedBatch("audio", [np.ones((1, 1))])
