import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from otclean.cost import CostSpec, build_cost_matrix
from otclean.dist import CIConstraint, Distribution, Schema, cmi, empirical_distribution
from otclean.errors import CoverageError, UndefinedRODError, ValidationError
from otclean.ot import TransportPlan
from otclean.repair import ProbabilisticCleaner, apply_cleaner, cleaner_from_plan, distortion, rod

from conftest import D2_ROWS, random_distribution

YSA = Schema.binary("Yhat", "S", "A")


def test_split_cleaner(split_plan):
    c = cleaner_from_plan(split_plan)
    assert c.row((1, 1, 0)) == {(1, 1, 0): 0.5, (1, 1, 1): 0.5}
    assert c.row((1, 0, 0)) == {(1, 0, 0): 1.0}
    assert sorted(c.rows) == [4, 5, 6]


def test_identity_cleaner(xyz):
    rng = np.random.default_rng(0)
    p = rng.dirichlet(np.ones(8))
    c = cleaner_from_plan(TransportPlan(np.diag(p), xyz))
    assert all(row == [(i, 1.0)] for i, row in c.rows.items())
    data = [xyz.decode(i) for i in rng.integers(0, 8, 50)]
    assert apply_cleaner(data, c, seed=3) == data


@given(st.integers(0, 10_000))
def test_rows_normalized_and_reconstitute(seed):
    rng = np.random.default_rng(seed)
    s = Schema.binary("A", "B")
    m = rng.random((4, 4)) * (rng.random((4, 4)) > 0.3)
    m[0, 0] += 0.1
    plan = TransportPlan(m / m.sum(), s)
    c = cleaner_from_plan(plan)
    back = np.zeros((4, 4))
    marg = plan.source_marginal()
    for i, row in c.rows.items():
        assert sum(p for _, p in row) == pytest.approx(1.0, abs=1e-9)
        for j, p in row:
            back[i, j] = p * marg[i]
    np.testing.assert_allclose(back, plan.mass, atol=1e-12)


def test_cleaner_validation(xyz):
    with pytest.raises(ValidationError):
        ProbabilisticCleaner(xyz, {0: [(0, 0.5), (1, 0.4)]})
    with pytest.raises(ValidationError):
        ProbabilisticCleaner(xyz, {0: [(0, 1.5), (1, -0.5)]})


def test_cleaner_json_round_trip(xyz, split_plan):
    c = cleaner_from_plan(split_plan)
    back = ProbabilisticCleaner.from_json(json.loads(c.dumps()), xyz)
    assert back.rows == c.rows
    with pytest.raises(ValidationError):
        ProbabilisticCleaner.from_json(c.to_json(), Schema.binary("A", "B", "C"))


def test_d3_sampling(xyz, split_plan, sigma_yz):
    n = 5000
    data = D2_ROWS * n
    out = apply_cleaner(data, cleaner_from_plan(split_plan), seed=0)
    assert len(out) == len(data)
    sd = math.sqrt(2 * n * 0.25)
    assert abs(out.count((1, 1, 0)) - n) <= 3 * sd
    assert abs(out.count((1, 1, 1)) - n) <= 3 * sd
    assert cmi(empirical_distribution(out, xyz), sigma_yz) <= 0.005
    # rows that map to themselves keep their position
    assert out[0] == (1, 0, 0) and out[1] == (1, 0, 1)


def test_same_seed_same_output(split_plan):
    c = cleaner_from_plan(split_plan)
    data = D2_ROWS * 100
    assert apply_cleaner(data, c, seed=9) == apply_cleaner(data, c, seed=9)
    assert apply_cleaner(data, c, seed=9) != apply_cleaner(data, c, seed=10)


def test_coverage_error(split_plan):
    with pytest.raises(CoverageError, match=r"\(0, 0, 0\)"):
        apply_cleaner([(1, 0, 0), (0, 0, 0)], cleaner_from_plan(split_plan), seed=0)


@pytest.mark.parametrize("n", [1000, 10_000])
def test_law_of_large_numbers(n, xyz):
    rng = np.random.default_rng(1)
    p = random_distribution(rng, xyz)
    m = rng.random((8, 8))
    plan = TransportPlan(m / m.sum(axis=1, keepdims=True) * p.mass[:, None], xyz)
    counts = rng.multinomial(n, p.mass)
    data = [xyz.decode(i) for i in np.repeat(np.arange(8), counts)]
    out = empirical_distribution(apply_cleaner(data, cleaner_from_plan(plan), seed=n), xyz)
    # the source sample is itself random, so both stages count toward the band
    target = plan.target_marginal()
    band = 3 * np.sqrt(2 * target * (1 - target) / n)
    assert np.all(np.abs(out.mass - target) <= band)


def test_distortion_examples(d2, hamming3, split_plan):
    assert distortion(d2, d2, hamming3) == 0.0
    assert distortion(d2, split_plan.target(), hamming3) == pytest.approx(0.25, abs=1e-12)
    with pytest.raises(ValidationError):
        distortion(d2, Distribution.uniform(Schema.binary("A", "B", "C")), hamming3)


@given(st.integers(0, 10_000))
def test_distortion_symmetric_and_triangle(seed):
    rng = np.random.default_rng(seed)
    s = Schema.binary("A", "B", "C")
    C = build_cost_matrix(s, CostSpec("hamming"))
    p, q, r = (random_distribution(rng, s) for _ in range(3))
    assert distortion(p, q, C) == pytest.approx(distortion(q, p, C), abs=1e-9)
    assert distortion(p, r, C) <= distortion(p, q, C) + distortion(q, r, C) + 1e-9


def single_stratum(p1_s0, p1_s1):
    s = Schema.binary("Yhat", "S")
    m = np.array([[1 - p1_s0, 1 - p1_s1], [p1_s0, p1_s1]]) * 0.5
    return Distribution(s, m.ravel())


def test_rod_single_stratum():
    r, log_r = rod(single_stratum(0.8, 0.5), "Yhat", "S")
    assert r == pytest.approx(4.0)
    assert log_r == pytest.approx(math.log(4.0))
    swapped, _ = rod(single_stratum(0.5, 0.8), "Yhat", "S")
    assert swapped == pytest.approx(0.25)


def test_rod_independent_is_one():
    t = np.einsum("a,ys->ysa", [0.4, 0.6], np.outer([0.3, 0.7], [0.5, 0.5])).copy()
    t[:, :, 1] = np.outer([0.8, 0.2], [0.25, 0.75]) * 0.6
    r, log_r = rod(Distribution(YSA, t.ravel()), "Yhat", "S", ["A"])
    assert r == pytest.approx(1.0) and log_r == pytest.approx(0.0, abs=1e-12)
    assert cmi(Distribution(YSA, t.ravel()), CIConstraint("Yhat", "S", "A")) <= 1e-12


def test_rod_stratified_mean():
    # stratum a=0 has odds ratio 4, stratum a=1 has odds ratio 2
    t = np.zeros((2, 2, 2))
    t[:, :, 0] = np.array([[0.2, 0.5], [0.8, 0.5]]) * 0.25
    t[:, :, 1] = np.array([[0.5, 2 / 3], [0.5, 1 / 3]]) * 0.25
    r, _ = rod(Distribution(YSA, t.ravel()), "Yhat", "S", ["A"])
    assert r == pytest.approx(3.0)


def test_rod_errors():
    with pytest.raises(UndefinedRODError):
        rod(single_stratum(1.0, 0.5), "Yhat", "S")
    s = Schema.from_pairs([("Yhat", range(3)), ("S", range(2))])
    with pytest.raises(ValidationError):
        rod(Distribution.uniform(s), "Yhat", "S")


def test_rod_zero_numerator():
    r, log_r = rod(single_stratum(0.0, 0.5), "Yhat", "S")
    assert r == 0.0 and log_r == -math.inf
