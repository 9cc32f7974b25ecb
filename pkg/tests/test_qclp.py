import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from otclean.cost import CostSpec, build_cost_matrix
from otclean.dist import CIConstraint, Distribution, Schema, cmi
from otclean.errors import ShapeError
from otclean.fastotclean import nmf_init
from otclean.lp import solve_lp
from otclean.ot import exact_ot_lp, transport_cost
from otclean.qclp import build_qclp, independence_residual, solve_qclp_alternating

from conftest import random_distribution


def test_d2_program_shape(d2, hamming3, sigma_yz):
    prog = build_qclp(d2, hamming3, sigma_yz)
    assert (prog.n_rows, prog.n_cols) == (3, 8)
    assert prog.constraint_counts() == {"validity": 24, "marginal": 3, "independence": 4}
    assert prog.marginal.sum() == pytest.approx(1.0)


def test_point_mass_program(xyz, hamming3):
    P = Distribution.from_dict(xyz, {(0, 1, 1): 1.0})
    prog = build_qclp(P, hamming3, CIConstraint("X", "Y", "Z"))
    assert (prog.n_rows, prog.n_cols) == (1, 8)
    assert prog.constraint_counts()["marginal"] == 1


def test_program_json(d2, hamming3, sigma_yz):
    obj = json.loads(build_qclp(d2, hamming3, sigma_yz).dumps())
    assert obj["grid"] == [3, 8]
    assert len(obj["cost"]) == 24
    trip = obj["marginal"]["A"]
    assert trip["shape"] == [3, 24] and len(trip["val"]) == 24
    assert max(trip["row"]) < 3 and max(trip["col"]) < 24
    assert obj["constraints"] == {"validity": 24, "marginal": 3, "independence": 4}


def test_d2_solution(d2, hamming3, sigma_yz):
    prog = build_qclp(d2, hamming3, sigma_yz)
    res = solve_qclp_alternating(prog, nmf_init(d2, sigma_yz))
    assert res.converged
    assert res.residual <= 1e-6
    # the true optimum is 1/6; see test_oracles
    assert transport_cost(res.plan, hamming3) == pytest.approx(1 / 6, abs=1e-9)
    assert cmi(res.target, sigma_yz) <= 1e-10
    np.testing.assert_allclose(res.plan.source_marginal(), d2.mass, atol=1e-9)
    plan, target, converged = res
    assert converged and target is res.target


def test_consistent_fixed_point(hamming3, xyz):
    slices = [np.outer([0.3, 0.7], [0.6, 0.4]) * w for w in (0.45, 0.55)]
    P = Distribution(xyz, np.stack(slices, axis=2).ravel())
    res = solve_qclp_alternating(build_qclp(P, hamming3, CIConstraint("X", "Y", "Z")), P)
    assert res.converged and len(res.costs) == 2
    assert transport_cost(res.plan, hamming3) == 0.0
    np.testing.assert_allclose(res.plan.mass, np.diag(P.mass), atol=1e-12)


@settings(max_examples=15)
@given(st.integers(0, 10_000))
def test_random_two_attribute(seed):
    rng = np.random.default_rng(seed)
    s = Schema.from_pairs([("X", range(2)), ("Y", range(3))])
    P = random_distribution(rng, s, 0.3)
    C = build_cost_matrix(s, CostSpec("hamming"))
    sigma = CIConstraint("X", "Y")
    prog = build_qclp(P, C, sigma)
    res = solve_qclp_alternating(prog, nmf_init(P, sigma))
    tail = np.array(res.costs[1:])
    assert np.all(np.diff(tail) <= 1e-9)
    np.testing.assert_allclose(res.plan.source_marginal(), P.mass, atol=1e-9)
    if res.converged:
        assert res.residual <= 1e-6


def test_residual_of_initial_independent_plan(d2, hamming3, sigma_yz):
    prog = build_qclp(d2, hamming3, sigma_yz)
    q = nmf_init(d2, sigma_yz).mass
    x = (prog.marginal[:, None] * q[None, :]).reshape(-1)
    assert independence_residual(prog, x) <= 1e-12
    ident = np.zeros((3, 8))
    ident[np.arange(3), prog.rows] = prog.marginal
    assert independence_residual(prog, ident.reshape(-1)) > 0.01


def test_init_schema_checked(d2, hamming3, sigma_yz):
    prog = build_qclp(d2, hamming3, sigma_yz)
    with pytest.raises(ShapeError):
        solve_qclp_alternating(prog, Distribution.uniform(Schema.binary("A", "B")))


def test_lp_subroutine_matches_oracle():
    rng = np.random.default_rng(50)
    for _ in range(50):
        n, m = rng.integers(1, 9, 2)
        p, q = rng.dirichlet(np.ones(n)), rng.dirichlet(np.ones(m))
        C = rng.random((n, m))
        A = np.vstack([np.kron(np.eye(n), np.ones(m)), np.kron(np.ones(n), np.eye(m))])
        assert solve_lp(C.ravel(), A, np.r_[p, q]).fun == pytest.approx(exact_ot_lp(p, q, C)[0], abs=1e-9)
