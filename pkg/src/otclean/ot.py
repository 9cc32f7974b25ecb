"""Entropic and relaxed Sinkhorn solvers, transport cost, and an exact LP oracle.

Plans are ``diag(u) K diag(v)`` with ``K = exp(-rho * C)``; ``1/rho`` is the
weight of the entropy term, so larger ``rho`` means a sharper plan.  Scaling
happens in the linear domain, which is why ``rho`` is capped at 500.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.optimize import linprog

from .cost import CostMatrix, as_array
from .dist import Distribution, Schema
from .errors import InfeasibleError, ShapeError, SizeCapError, ValidationError

TINY = 1e-300
RHO_MAX = 500.0
LP_CAP = 4096
RIDGE = 1e-12


@dataclass(frozen=True)
class SolverParams:
    rho: float = 200.0
    lam: float = 1e3
    tol: float = 1e-9
    max_iter: int = 10_000

    def __post_init__(self):
        if not 0 < self.rho <= RHO_MAX:
            raise ValidationError(f"rho must lie in (0, {RHO_MAX}], got {self.rho}")
        if not self.lam > 0:
            raise ValidationError("lam must be positive")
        if not self.tol > 0:
            raise ValidationError("tol must be positive")
        if int(self.max_iter) < 1:
            raise ValidationError("max_iter must be a positive integer")


@dataclass(frozen=True)
class TransportPlan:
    """Joint probabilities over (source cell, destination cell)."""

    mass: np.ndarray
    src: Schema | None = None
    dst: Schema | None = None

    def __post_init__(self):
        m = np.array(self.mass, dtype=float)
        if m.ndim != 2:
            raise ShapeError("plan mass must be a matrix")
        if np.any(m < 0) or not np.all(np.isfinite(m)):
            raise ValidationError("plan entries must be finite and nonnegative")
        if abs(m.sum() - 1.0) > 1e-9:
            raise ValidationError(f"plan mass sums to {m.sum()}, not 1")
        if self.src is not None and self.src.size != m.shape[0]:
            raise ShapeError("plan rows do not match the source schema")
        dst = self.dst if self.dst is not None else self.src
        if dst is not None and dst.size != m.shape[1]:
            raise ShapeError("plan columns do not match the destination schema")
        m.setflags(write=False)
        object.__setattr__(self, "mass", m)
        object.__setattr__(self, "dst", dst)

    @property
    def shape(self) -> tuple[int, int]:
        return self.mass.shape

    def source_marginal(self) -> np.ndarray:
        return self.mass.sum(axis=1)

    def target_marginal(self) -> np.ndarray:
        return self.mass.sum(axis=0)

    def target(self) -> Distribution:
        return Distribution(self.dst, self.target_marginal())

    def schema_hash(self) -> str:
        if self.src is None:
            return ""
        if self.dst is None or self.dst == self.src:
            return self.src.digest()
        return f"{self.src.digest()}:{self.dst.digest()}"

    def to_json(self) -> dict:
        rows, cols = np.nonzero(self.mass > 1e-15)
        return {
            "schema_hash": self.schema_hash(),
            "shape": list(self.mass.shape),
            "entries": [
                {"src_index": int(i), "dst_index": int(j), "mass": float(self.mass[i, j])}
                for i, j in zip(rows, cols)
            ],
        }

    @classmethod
    def from_json(cls, obj: dict, src: Schema | None = None, dst: Schema | None = None) -> "TransportPlan":
        dst = dst if dst is not None else src
        if src is not None:
            shape = (src.size, dst.size)
        elif "shape" in obj:
            shape = tuple(obj["shape"])
        else:
            raise ValidationError("plan JSON has no shape and no schema was supplied")
        m = np.zeros(shape)
        for e in obj["entries"]:
            i, j = int(e["src_index"]), int(e["dst_index"])
            if not (0 <= i < shape[0] and 0 <= j < shape[1]):
                raise ValidationError(f"plan entry ({i}, {j}) outside a {shape} grid")
            m[i, j] += float(e["mass"])
        total = m.sum()
        if total <= 0:
            raise ValidationError("plan JSON carries no mass")
        plan = cls(m / total, src, dst)
        expected = obj.get("schema_hash")
        if src is not None and expected and expected != plan.schema_hash():
            raise ValidationError("plan was built for a different schema")
        return plan

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1)


@dataclass
class ScalingState:
    u: np.ndarray
    v: np.ndarray
    kernel: np.ndarray = field(repr=False)

    def plan_matrix(self) -> np.ndarray:
        return self.u[:, None] * self.kernel * self.v[None, :]


class SinkhornResult(NamedTuple):
    plan: TransportPlan
    state: ScalingState
    iterations: int
    converged: bool


def _vec(x) -> np.ndarray:
    return x.mass if isinstance(x, Distribution) else np.asarray(x, dtype=float).reshape(-1)


def _schema(x):
    return x.schema if isinstance(x, Distribution) else None


def _prepare(p, q, cost):
    pv, qv, C = _vec(p), _vec(q), as_array(cost)
    if C.shape != (pv.size, qv.size):
        raise ShapeError(f"cost is {C.shape}, marginals are {pv.size} and {qv.size}")
    return pv, qv, C


def _check_kernel(K, p, q):
    rows = (K[:, q > 0].sum(axis=1) > 0) | (p == 0)
    cols = (K[p > 0, :].sum(axis=0) > 0) | (q == 0)
    if not rows.all() or not cols.all():
        raise InfeasibleError(
            "kernel row or column underflowed to zero; use a smaller rho or smaller costs"
        )


def _rel_change(new, old):
    s = new > 0
    if not s.any():
        return 0.0
    return float(np.max(np.abs(new[s] - old[s]) / new[s]))


def _init_scalings(warm, n, m, q):
    if warm is None:
        return np.ones(n), np.ones(m)
    u, v = np.array(warm.u, dtype=float), np.array(warm.v, dtype=float)
    if u.shape != (n,) or v.shape != (m,):
        raise ShapeError("warm-start scalings have the wrong length")
    v = np.where((v > 0) | (q == 0), v, 1.0)
    return u, v


def _finish(raw, state, it, converged, p, q):
    if not np.all(np.isfinite(raw)):
        raise InfeasibleError("scaling factors overflowed; use a smaller rho or smaller costs")
    total = raw.sum()
    if total <= 0:
        raise InfeasibleError("plan has no mass; kernel underflowed")
    plan = TransportPlan(raw / total, _schema(p), _schema(q))
    return SinkhornResult(plan, state, it, converged)


def sinkhorn(p, q, cost, params: SolverParams = SolverParams(), warm: ScalingState | None = None) -> SinkhornResult:
    """Entropic OT with exact marginals (alternating row/column scaling).

    As in ``sinkhorn_relaxed``, each sweep is followed by a damped Newton
    step on the dual; without it, plans that need a tiny transfer along an
    expensive cell stall for thousands of sweeps.
    """
    pv, qv, C = _prepare(p, q, cost)
    K = np.exp(-params.rho * C)
    _check_kernel(K, pv, qv)
    u, v = _init_scalings(warm, pv.size, qv.size, qv)
    newton = (pv > 0).any() and (qv > 0).any()
    converged = False
    it = 0
    for it in range(1, int(params.max_iter) + 1):
        u_new = pv / np.maximum(K @ v, TINY)
        v_new = qv / np.maximum(K.T @ u_new, TINY)
        if newton:
            u_new, v_new = _newton_step(u_new, v_new, K, pv, qv, None)
            # finish on a plain column update so the column marginal stays exact
            v_new = qv / np.maximum(K.T @ u_new, TINY)
        err = max(_rel_change(u_new, u), _rel_change(v_new, v))
        u, v = u_new, v_new
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise InfeasibleError("scaling factors overflowed; use a smaller rho or smaller costs")
        if err < params.tol:
            converged = True
            break
    state = ScalingState(u, v, K)
    return _finish(state.plan_matrix(), state, it, converged, p, q)


def _dual_value(u, v, K, pv, qv, rl) -> float:
    # rho times the dual objective, up to a constant; rl=None is the exact-marginal problem
    sp, sq = pv > 0, qv > 0
    if rl is None:
        return float(pv[sp] @ np.log(u[sp]) + qv[sq] @ np.log(v[sq])) - float(u @ K @ v)
    return -rl * (pv[sp] @ u[sp] ** (-1.0 / rl) + qv[sq] @ v[sq] ** (-1.0 / rl)) - float(u @ K @ v)


def _newton_step(u, v, K, pv, qv, rl):
    """One damped Newton step on the dual in (log u, log v).

    The plain updates shrink any rescaling ``(c*u, v/c)`` of a block that is
    nearly cut off from the rest of the plan by only about ``a**2`` per sweep.
    A Newton step on the concave dual treats every such direction at once.
    Only rows and columns carrying marginal mass take part.  A small ridge
    makes the Hessian invertible: with ``rl=None`` (exact marginals) it is
    singular along the gauge direction, and blocks joined only by entries
    far below machine precision split it numerically.  Along such directions
    the step falls back to a capped gradient move.
    """
    sp, sq = pv > 0, qv > 0
    us, vs = u[sp], v[sq]
    Pi = us[:, None] * K[np.ix_(sp, sq)] * vs[None, :]
    if rl is None:
        a, b, da, db = pv[sp], qv[sq], 0.0, 0.0
    else:
        a, b = pv[sp] * us ** (-1.0 / rl), qv[sq] * vs ** (-1.0 / rl)
        da, db = a / rl, b / rl
    r, c = Pi.sum(axis=1), Pi.sum(axis=0)
    grad = np.r_[a - r, b - c]
    H = np.block([[np.diag(da + r), Pi], [Pi.T, np.diag(db + c)]])
    # the ridge keeps nearly decoupled blocks and the gauge direction solvable
    H[np.diag_indices_from(H)] += RIDGE
    try:
        step = np.linalg.solve(H, grad)
    except np.linalg.LinAlgError:
        return u, v
    n = us.size
    if rl is None:
        # (c*u, v/c) leaves the plan unchanged; drop that component
        g = (step[:n].sum() - step[n:].sum()) / step.size
        step[:n] -= g
        step[n:] += g
    # cap the move in log space without bending the direction
    step *= min(1.0, 20.0 / max(np.abs(step).max(), TINY))
    f0 = _dual_value(u, v, K, pv, qv, rl)
    t = 1.0
    while t > 1e-6:
        u2, v2 = u.copy(), v.copy()
        u2[sp] = us * np.exp(t * step[:n])
        v2[sq] = vs * np.exp(t * step[n:])
        f = _dual_value(u2, v2, K, pv, qv, rl)
        if np.isfinite(f) and f >= f0:
            return u2, v2
        t *= 0.5
    return u, v


def sinkhorn_relaxed(
    p, q, cost, params: SolverParams = SolverParams(), warm: ScalingState | None = None
) -> SinkhornResult:
    """Entropic OT with KL-penalised marginals.

    Fixed point of ``u = (p / K v)^a``, ``v = (q / K^T u)^a`` with
    ``a = rho*lam / (rho*lam + 1)``.  The kernel carries an extra ``exp(-1)``
    so that the fixed point minimises the objective with the plain entropy
    ``-sum(pi log pi)`` and generalized KL penalties.

    Each sweep is followed by a damped Newton step on the dual, which
    leaves the fixed point unchanged but removes the slow rescaling drift
    of the plain updates.
    """
    pv, qv, C = _prepare(p, q, cost)
    K = np.exp(-params.rho * C - 1.0)
    _check_kernel(K, pv, qv)
    rl = params.rho * params.lam
    a = rl / (rl + 1.0)
    u, v = _init_scalings(warm, pv.size, qv.size, qv)
    gauge = (pv > 0).any() and (qv > 0).any()
    converged = False
    it = 0
    for it in range(1, int(params.max_iter) + 1):
        u_new = (pv / np.maximum(K @ v, TINY)) ** a
        v_new = (qv / np.maximum(K.T @ u_new, TINY)) ** a
        if gauge:
            u_new, v_new = _newton_step(u_new, v_new, K, pv, qv, rl)
        err = max(_rel_change(u_new, u), _rel_change(v_new, v))
        u, v = u_new, v_new
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise InfeasibleError("scaling factors overflowed; use a smaller rho or smaller costs")
        if err < params.tol:
            converged = True
            break
    state = ScalingState(u, v, K)
    return _finish(state.plan_matrix(), state, it, converged, p, q)


def transport_cost(plan, cost) -> float:
    m = plan.mass if isinstance(plan, TransportPlan) else np.asarray(plan, dtype=float)
    C = as_array(cost)
    if m.shape != C.shape:
        raise ShapeError(f"plan is {m.shape}, cost is {C.shape}")
    return float(np.sum(m * C))


def exact_ot_lp(p, q, cost) -> tuple[float, TransportPlan]:
    """Exact Kantorovich OT solved as an LP (HiGHS dual simplex, a vertex solution)."""
    pv, qv, C = _prepare(p, q, cost)
    n, m = C.shape
    if n * m > LP_CAP:
        raise SizeCapError(f"exact OT oracle limited to {LP_CAP} cells, got {n * m}")
    A = np.vstack([np.kron(np.eye(n), np.ones(m)), np.kron(np.ones(n), np.eye(m))])
    res = linprog(C.ravel(), A_eq=A, b_eq=np.r_[pv, qv], bounds=(0, None), method="highs-ds")
    if res.status != 0:
        raise InfeasibleError(f"exact OT LP failed: {res.message}")
    x = np.maximum(res.x, 0.0)
    x[x < 1e-15] = 0.0
    x = x.reshape(n, m)
    plan = TransportPlan(x / x.sum(), _schema(p), _schema(q))
    return float(np.sum(C * plan.mass)), plan


def round_to_coupling(mass, p, q) -> np.ndarray:
    """Nearby matrix whose row and column sums are exactly ``p`` and ``q``.

    Scale over-full rows and columns down, then spread the leftover row and
    column deficits as a rank-one correction.
    """
    F = np.array(mass, dtype=float)
    pv, qv = _vec(p), _vec(q)
    r = F.sum(axis=1)
    F *= np.minimum(1.0, pv / np.maximum(r, TINY))[:, None]
    c = F.sum(axis=0)
    F *= np.minimum(1.0, qv / np.maximum(c, TINY))[None, :]
    er = np.maximum(pv - F.sum(axis=1), 0.0)
    ec = np.maximum(qv - F.sum(axis=0), 0.0)
    total = er.sum()
    if total > 0:
        F += np.outer(er, ec) / total
    return F
