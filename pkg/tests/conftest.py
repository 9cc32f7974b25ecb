import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from otclean.cost import CostSpec, build_cost_matrix
from otclean.dist import CIConstraint, Distribution, Schema, empirical_distribution
from otclean.ot import TransportPlan

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

D2_ROWS = [(1, 0, 0), (1, 0, 1), (1, 1, 0), (1, 1, 0)]


@pytest.fixture
def xyz():
    return Schema.binary("X", "Y", "Z")


@pytest.fixture
def d2(xyz):
    return empirical_distribution(D2_ROWS, xyz)


@pytest.fixture
def hamming3(xyz):
    return build_cost_matrix(xyz, CostSpec("hamming"))


@pytest.fixture
def sigma_yz():
    return CIConstraint("Y", "Z")


def split_plan_matrix(schema):
    m = np.zeros((schema.size, schema.size))
    for v in [(1, 0, 0), (1, 0, 1)]:
        i = schema.encode(v)
        m[i, i] = 0.25
    i = schema.encode((1, 1, 0))
    m[i, i] = 0.25
    m[i, schema.encode((1, 1, 1))] = 0.25
    return m


@pytest.fixture
def split_plan(xyz):
    return TransportPlan(split_plan_matrix(xyz), xyz)


def xyw_p():
    s = Schema.binary("X", "Y", "W")
    return Distribution.from_dict(s, {(0, 0, 0): 0.1, (1, 1, 0): 0.1, (0, 0, 1): 0.4, (1, 1, 1): 0.4})


def xyw_pi_sigma():
    s = Schema.binary("X", "Y")
    m = np.zeros((4, 4))
    m[0, 0] = m[0, 1] = m[3, 3] = m[3, 2] = 0.25
    return TransportPlan(m, s)


@pytest.fixture
def app_p():
    return xyw_p()


@pytest.fixture
def app_pi_sigma():
    return xyw_pi_sigma()


def random_distribution(rng, schema, sparsity=0.0):
    w = rng.dirichlet(np.ones(schema.size))
    if sparsity:
        w[rng.random(schema.size) < sparsity] = 0.0
        if w.sum() == 0:
            w[0] = 1.0
    return Distribution(schema, w / w.sum())


# one line per acceptance criterion, filled by test_acceptance and printed at the end
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
