import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from otclean.cost import CostSpec, build_cost_matrix
from otclean.dist import CIConstraint, Distribution, Schema, cmi, marginalize
from otclean.errors import MisuseError, ShapeError, ValidationError
from otclean.fastotclean import CleanerConfig
from otclean.ot import TransportPlan, transport_cost
from otclean.unsaturated import (
    SplitSchema,
    build_coupling_greedy,
    lift_product,
    reduce_properties,
    repair_unsaturated,
)

from conftest import random_distribution

XYW = Schema.binary("X", "Y", "W")
XY = Schema.binary("X", "Y")
SIGMA = CIConstraint("X", "Y")

PI_STAR = {
    ((0, 0, 0), (0, 0, 0)): 0.1,
    ((1, 1, 0), (1, 1, 0)): 0.1,
    ((0, 0, 1), (0, 0, 1)): 0.15,
    ((0, 0, 1), (0, 1, 1)): 0.25,
    ((1, 1, 1), (1, 1, 1)): 0.15,
    ((1, 1, 1), (1, 0, 1)): 0.25,
}
Q_STAR = {(0, 0, 0): 0.1, (1, 1, 0): 0.1, (0, 0, 1): 0.15, (1, 1, 1): 0.15, (0, 1, 1): 0.25, (1, 0, 1): 0.25}


def cells(plan):
    s = plan.src
    return {(s.decode(i), s.decode(j)): plan.mass[i, j] for i, j in zip(*np.nonzero(plan.mass))}


def random_plan(rng, p_u, schema):
    # any coupling with source marginal p_u
    m = rng.random((p_u.size, p_u.size)) * (rng.random((p_u.size, p_u.size)) > 0.4)
    m[np.arange(p_u.size), np.arange(p_u.size)] += 1e-3
    m = m / m.sum(axis=1, keepdims=True) * p_u[:, None]
    return TransportPlan(m, schema)


def test_split_schema():
    split = SplitSchema.from_sigma(XYW, SIGMA)
    assert split.u_attrs == ("X", "Y") and split.w_attrs == ("W",)
    with pytest.raises(ValidationError):
        SplitSchema(XYW, ("X",), ("X", "W"))


def test_greedy_xyw(app_p, app_pi_sigma):
    plan = build_coupling_greedy(app_p, app_pi_sigma)
    got = cells(plan)
    assert set(got) == set(PI_STAR)
    for k, v in PI_STAR.items():
        assert abs(got[k] - v) <= 1e-12
    assert plan.target().to_dict() == pytest.approx(Q_STAR, abs=1e-12)


def test_product_xyw(app_p, app_pi_sigma):
    plan = lift_product(app_p, app_pi_sigma)
    got = cells(plan)
    assert got[((0, 0, 1), (0, 1, 1))] == pytest.approx(0.2, abs=1e-12)
    assert got[((0, 0, 0), (0, 0, 0))] == pytest.approx(0.05, abs=1e-12)
    assert reduce_properties(app_p, app_pi_sigma, plan) == {"u_marginal": 0.0, "source": 0.0, "w_changed": 0.0}


@pytest.mark.parametrize("lift", [lift_product, build_coupling_greedy])
def test_identity_lift(lift):
    rng = np.random.default_rng(3)
    P = random_distribution(rng, XYW)
    p_u = marginalize(P, ["X", "Y"]).mass
    plan = lift(P, TransportPlan(np.diag(p_u), XY))
    np.testing.assert_allclose(plan.mass, np.diag(P.mass), atol=1e-15)


@pytest.mark.parametrize("lift", [lift_product, build_coupling_greedy])
@given(seed=st.integers(0, 10_000))
def test_reduce_properties_random(lift, seed):
    rng = np.random.default_rng(seed)
    P = random_distribution(rng, XYW, 0.2)
    plan_s = random_plan(rng, marginalize(P, ["X", "Y"]).mass, XY)
    plan = lift(P, plan_s)
    props = reduce_properties(P, plan_s, plan)
    assert props["u_marginal"] <= 1e-9 and props["source"] <= 1e-9
    assert props["w_changed"] == 0.0
    C_U = build_cost_matrix(XY, CostSpec("hamming"))
    C_V = build_cost_matrix(XYW, CostSpec("hamming", frozen=()))
    assert transport_cost(plan, C_V) == pytest.approx(transport_cost(plan_s, C_U), abs=1e-9)


@pytest.mark.parametrize("lift", [lift_product, build_coupling_greedy])
def test_marginal_mismatch(lift, app_p):
    with pytest.raises(ValidationError):
        lift(app_p, TransportPlan(np.full((4, 4), 1 / 16), XY))


def test_repair_unsaturated_xyw(app_p):
    C_U = build_cost_matrix(XY, CostSpec("hamming"))
    for lift in ("product", "greedy"):
        res = repair_unsaturated(app_p, SIGMA, C_U, lift=lift)
        plan, target = res
        assert cmi(marginalize(target, ["X", "Y"]), SIGMA) <= 1e-10
        assert transport_cost(res.marginal_plan, C_U) == pytest.approx(0.5, abs=0.02)
        props = reduce_properties(app_p, res.marginal_plan, plan)
        assert max(props.values()) <= 1e-9


def test_repair_unsaturated_consistent_input():
    s = Schema.binary("X", "Y", "W")
    P = Distribution(s, np.einsum("x,y,w->xyw", [0.3, 0.7], [0.4, 0.6], [0.5, 0.5]).ravel())
    res = repair_unsaturated(P, SIGMA, build_cost_matrix(XY, CostSpec("hamming")))
    # the relaxed marginals shift Q off P by about log(p) / (2 rho lam) ~ 1e-6
    assert transport_cost(res.marginal_plan, build_cost_matrix(XY, CostSpec("hamming"))) <= 1e-5
    np.testing.assert_allclose(res.plan.mass, np.diag(P.mass), atol=1e-5)


def test_repair_unsaturated_errors(app_p):
    C_U = build_cost_matrix(XY, CostSpec("hamming"))
    with pytest.raises(MisuseError):
        repair_unsaturated(app_p, CIConstraint("X", "Y", "W"), C_U)
    with pytest.raises(ValidationError):
        repair_unsaturated(app_p, SIGMA, C_U, lift="random")
    with pytest.raises(ShapeError):
        repair_unsaturated(app_p, SIGMA, build_cost_matrix(XYW, CostSpec("hamming")))


@settings(max_examples=5)
@given(st.integers(0, 10_000))
def test_repair_unsaturated_random(seed):
    rng = np.random.default_rng(seed)
    s = Schema.binary("X", "Y", "Z", "W")
    P = random_distribution(rng, s, 0.3)
    sigma = CIConstraint("X", "Y", "Z")
    C_U = build_cost_matrix(Schema.binary("X", "Y", "Z"), CostSpec("hamming"))
    res = repair_unsaturated(P, sigma, C_U, CleanerConfig(outer_max=30), lift="greedy")
    assert cmi(marginalize(res.target, ["X", "Y", "Z"]), sigma) <= 1e-10
    assert max(reduce_properties(P, res.marginal_plan, res.plan).values()) <= 1e-9
