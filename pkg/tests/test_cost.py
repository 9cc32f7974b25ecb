import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from otclean.cost import LARGE, CostSpec, build_cost_matrix, read_cost_csv, write_cost_csv
from otclean.dist import Distribution, Schema
from otclean.errors import DomainError, ValidationError


def test_hamming_examples(xyz, hamming3):
    c = hamming3.entries
    assert c[xyz.encode((1, 0, 0)), xyz.encode((0, 0, 0))] == 1
    assert c[xyz.encode((1, 0, 0)), xyz.encode((0, 0, 1))] == 2
    assert np.all(np.diag(c) == 0)


def test_frozen_sentinel(xyz):
    c = build_cost_matrix(xyz, CostSpec("hamming", frozen=("Y",))).entries
    for i, j in itertools.product(range(8), repeat=2):
        differs = xyz.decode(i)[1] != xyz.decode(j)[1]
        assert (c[i, j] == LARGE) == differs


@pytest.mark.parametrize("kind", ["hamming", "euclidean"])
def test_symmetry_exhaustive(kind):
    s = Schema.from_pairs([("a", range(3)), ("b", range(2)), ("c", range(4))])
    c = build_cost_matrix(s, CostSpec(kind)).entries
    np.testing.assert_array_equal(c, c.T)


@pytest.mark.parametrize("kind", ["hamming", "euclidean"])
@given(st.integers(0, 10_000))
def test_triangle_inequality(kind, seed):
    s = Schema.from_pairs([("a", range(3)), ("b", range(2)), ("c", range(4))])
    c = build_cost_matrix(s, CostSpec(kind)).entries
    i, j, k = np.random.default_rng(seed).integers(0, s.size, 3)
    assert c[i, k] <= c[i, j] + c[j, k] + 1e-12


def test_weighted_ones_is_hamming():
    s = Schema.from_pairs([("a", range(3)), ("b", range(2))])
    w = build_cost_matrix(s, CostSpec("weighted-hamming", weights={"a": 1.0, "b": 1.0})).entries
    np.testing.assert_array_equal(w, build_cost_matrix(s, CostSpec("hamming")).entries)


def test_weighted_values():
    s = Schema.binary("a", "b")
    w = build_cost_matrix(s, CostSpec("weighted-hamming", weights={"a": 2.0, "b": 0.5})).entries
    assert w[s.encode((0, 0)), s.encode((1, 1))] == 2.5


def test_euclidean_standardized():
    # ordinal encodings 0,1,2 have uniform std sqrt(2/3)
    s = Schema.from_pairs([("a", range(3))])
    c = build_cost_matrix(s, CostSpec("euclidean")).entries
    assert c[0, 2] == pytest.approx(2 / np.sqrt(2 / 3))
    # binary under reference (.9, .1): std = sqrt(.9 * .1) = .3
    b = Schema.binary("x")
    ref = Distribution(b, np.array([0.9, 0.1]))
    c = build_cost_matrix(b, CostSpec("euclidean"), reference=ref).entries
    assert c[0, 1] == pytest.approx(1 / np.sqrt(0.09))


def test_euclidean_numeric_labels():
    s = Schema.from_pairs([("a", ["lo", "hi"])], numeric=[(0.0, 10.0)])
    c = build_cost_matrix(s, CostSpec("euclidean")).entries
    assert c[0, 1] == pytest.approx(2.0)


def test_external_matrix(tmp_path):
    s = Schema.binary("a")
    path = tmp_path / "c.csv"
    write_cost_csv(path, np.array([[0.0, 3.0], [1.5, 0.0]]))
    c = build_cost_matrix(s, CostSpec("external-matrix", matrix_path=str(path))).entries
    np.testing.assert_array_equal(c, [[0, 3], [1.5, 0]])
    np.testing.assert_array_equal(read_cost_csv(path), c)


@pytest.mark.parametrize(
    "bad",
    [np.array([[0.0, 1.0]]), np.array([[0.0, -1.0], [1.0, 0.0]]), np.array([[1.0, 1.0], [1.0, 0.0]])],
)
def test_external_matrix_errors(bad):
    s = Schema.binary("a")
    with pytest.raises(ValidationError):
        build_cost_matrix(s, CostSpec("external-matrix", matrix_path="unused"), matrix=bad)


def test_spec_validation(xyz):
    with pytest.raises(ValidationError):
        CostSpec("manhattan")
    with pytest.raises(ValidationError):
        CostSpec("weighted-hamming")
    with pytest.raises(ValidationError):
        CostSpec("hamming", weights={"X": 1.0})
    with pytest.raises(ValidationError):
        CostSpec("external-matrix")
    with pytest.raises(ValidationError):
        CostSpec("weighted-hamming", weights={"X": -1.0})
    with pytest.raises(DomainError):
        build_cost_matrix(xyz, CostSpec("hamming", frozen=("Q",)))
