"""Alternating cleaner: relaxed Sinkhorn against Q, then re-project Q onto the CI set."""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import xlogy

from .cost import CostMatrix, as_array
from .dist import CIConstraint, Distribution, cmi
from .errors import ShapeError, ValidationError
from .ot import ScalingState, SolverParams, TransportPlan, sinkhorn_relaxed
from .project import project_mass, project_to_ci

INITS = ("nmf", "random")


@dataclass(frozen=True)
class CleanerConfig:
    solver: SolverParams = field(default_factory=SolverParams)
    mu: float = 0.0
    outer_tol: float = 1e-7
    outer_max: int = 200
    init: str = "nmf"
    seed: int = 0
    warm_start: bool = True
    workers: int = 1

    def __post_init__(self):
        if not self.outer_tol > 0:
            raise ValidationError("outer_tol must be positive")
        if int(self.outer_max) < 1:
            raise ValidationError("outer_max must be at least 1")
        if self.mu < 0:
            raise ValidationError("mu must be nonnegative")
        if self.init not in INITS:
            raise ValidationError(f"init must be one of {INITS}, got {self.init!r}")


@dataclass(frozen=True)
class TraceRecord:
    iter: int
    objective: float
    cost: float
    delta_sigma: float
    sinkhorn_iters: int

    def as_dict(self) -> dict:
        return {
            "iter": self.iter,
            "objective": self.objective,
            "cost": self.cost,
            "delta_sigma": self.delta_sigma,
            "sinkhorn_iters": self.sinkhorn_iters,
        }


@dataclass
class CleanerResult:
    plan: TransportPlan
    target: Distribution
    trace: list[TraceRecord]
    converged: bool
    seconds: float = 0.0

    @property
    def outer_iterations(self) -> int:
        return len(self.trace)

    @property
    def inner_iterations(self) -> int:
        return sum(r.sinkhorn_iters for r in self.trace)


def _gkl(a: np.ndarray, b: np.ndarray) -> float:
    """Generalized KL ``sum(a log(a/b) - a + b)`` for nonnegative vectors."""
    if np.any((a > 0) & (b <= 0)):
        return np.inf
    return float(np.sum(xlogy(a, a) - xlogy(a, np.where(a > 0, b, 1.0))) - a.sum() + b.sum())


def objective_value(plan, q, p, cost, rho: float, lam: float, mu: float = 0.0, sigma: CIConstraint | None = None) -> float:
    """``<C, pi> - H(pi)/rho + lam*(KL(pi cols, q) + KL(pi rows, p)) + mu*cmi(q)``.

    ``plan`` may be unnormalized; KL terms use the generalized form, which
    reduces to the usual KL when both arguments sum to one.
    """
    m = plan.mass if isinstance(plan, TransportPlan) else np.asarray(plan, dtype=float)
    qv = q.mass if isinstance(q, Distribution) else np.asarray(q, dtype=float)
    pv = p.mass if isinstance(p, Distribution) else np.asarray(p, dtype=float)
    C = as_array(cost)
    if m.shape != C.shape or m.shape != (pv.size, qv.size):
        raise ShapeError("plan, cost and marginals disagree in shape")
    entropy = -float(np.sum(xlogy(m, m)))
    value = float(np.sum(m * C)) - entropy / rho + lam * (_gkl(m.sum(axis=0), qv) + _gkl(m.sum(axis=1), pv))
    if mu and sigma is not None:
        value += mu * cmi(Distribution(q.schema, qv) if isinstance(q, Distribution) else q, sigma)
    return value


def nmf_init(P: Distribution, sigma: CIConstraint, seed: int = 0, workers: int = 1) -> Distribution:
    return project_to_ci(P, sigma, seed=seed, workers=workers)


def random_init(P: Distribution, sigma: CIConstraint, seed: int = 0, workers: int = 1) -> Distribution:
    """CI projection of a Dirichlet(1) draw over the whole domain."""
    rng = np.random.default_rng(seed)
    draw = Distribution(P.schema, rng.dirichlet(np.ones(P.schema.size)))
    return project_to_ci(draw, sigma, seed=seed, workers=workers)


def fast_otclean(P: Distribution, C, sigma: CIConstraint, cfg: CleanerConfig = CleanerConfig()) -> CleanerResult:
    """Repair ``P`` towards the CI-consistent set under ``sigma``.

    Rows of the plan are confined to the support of ``P``.  Each outer step
    solves the relaxed problem against the current ``Q`` and then replaces
    ``Q`` by the projection of the plan's column marginal.  The traced
    objective is evaluated on the unnormalized plan, which is the exact
    coordinate minimiser, so the trace is non-increasing up to the inner
    solver tolerance.  An unsaturated ``sigma`` keeps the conditional of the
    remaining attributes from the plan's column marginal.
    """
    start = time.perf_counter()
    schema = P.schema
    sigma.validate(schema)
    Cfull = as_array(C)
    if Cfull.shape != (schema.size, schema.size):
        raise ShapeError(f"cost is {Cfull.shape}, domain has {schema.size} cells")
    rows = np.flatnonzero(P.mass > 0)
    p_act = P.mass[rows]
    C_act = Cfull[rows]
    sp = cfg.solver
    if cfg.init == "nmf":
        q = nmf_init(P, sigma, cfg.seed, cfg.workers).mass
    else:
        q = random_init(P, sigma, cfg.seed, cfg.workers).mass
    state: ScalingState | None = None
    trace: list[TraceRecord] = []
    converged = False
    raw = None
    for it in range(1, int(cfg.outer_max) + 1):
        res = sinkhorn_relaxed(p_act, q, C_act, sp, state if cfg.warm_start else None)
        state = res.state
        raw = state.plan_matrix()
        col = raw.sum(axis=0)
        q_new = project_mass(col / col.sum(), schema, sigma, seed=cfg.seed, workers=cfg.workers)
        q_new = q_new / q_new.sum()
        obj = objective_value(raw, q_new, p_act, C_act, sp.rho, sp.lam)
        delta = cmi(Distribution(schema, q_new), sigma)
        trace.append(TraceRecord(it, obj + cfg.mu * delta, float(np.sum(res.plan.mass * C_act)), delta, res.iterations))
        change = float(np.max(np.abs(q_new - q)))
        q = q_new
        if change <= cfg.outer_tol:
            converged = True
            break
    full = np.zeros((schema.size, schema.size))
    full[rows] = raw / raw.sum()
    plan = TransportPlan(full, schema, schema)
    return CleanerResult(plan, Distribution(schema, q), trace, converged, time.perf_counter() - start)


def write_trace(trace, path: str | Path) -> None:
    with open(path, "w") as fh:
        for rec in trace:
            fh.write(json.dumps(rec.as_dict()) + "\n")


def read_trace(path: str | Path) -> list[TraceRecord]:
    with open(path) as fh:
        return [TraceRecord(**json.loads(line)) for line in fh if line.strip()]
