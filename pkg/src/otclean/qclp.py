"""Quadratically constrained repair program and its alternating linearization.

Variables are ``pi[i, j]`` for ``i`` in the active domain of ``P`` and ``j``
over the full domain, flattened row-major.  With ``Q`` the column sums
aggregated onto sigma's cells, the quadratic constraints read
``Q(x,y,z) Q_Z(z) = Q_XZ(x,z) Q_YZ(y,z)``.  Each step freezes one factor of
that product and solves the resulting LP:

* even steps fix ``h(y|z)`` and impose ``Q(x,y,z) = Q_XZ(x,z) h(y|z)``;
* odd steps fix ``g = Q_XZ`` and impose ``Q_XZ = g`` together with
  ``Q(x,y,z) g_Z(z) = g(x,z) Q_YZ(y,z)``.

Slices ``z`` with no mass in the frozen estimate are kept empty.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .cost import as_array
from .dist import CIConstraint, Distribution, Schema, ci_block
from .errors import EmptyInputError, OTCleanError, ShapeError
from .lp import LPInfeasible, solve_lp
from .ot import TransportPlan

MASS_TOL = 1e-12


@dataclass
class QclpProgram:
    schema: Schema
    sigma: CIConstraint
    rows: np.ndarray
    cost: np.ndarray
    marginal: np.ndarray
    block_shape: tuple[int, int, int]
    aggregate: np.ndarray = field(repr=False)

    @property
    def n_rows(self) -> int:
        return self.rows.size

    @property
    def n_cols(self) -> int:
        return self.schema.size

    @property
    def n_variables(self) -> int:
        return self.n_rows * self.n_cols

    @property
    def cells(self) -> list[tuple[int, int, int]]:
        dx, dy, dz = self.block_shape
        return [(x, y, z) for x in range(dx) for y in range(dy) for z in range(dz)]

    def constraint_counts(self) -> dict[str, int]:
        return {
            "validity": self.n_variables,
            "marginal": self.n_rows,
            "independence": len(self.cells),
        }

    def marginal_matrix(self) -> np.ndarray:
        return np.kron(np.eye(self.n_rows), np.ones(self.n_cols))

    def sigma_matrix(self) -> np.ndarray:
        """Maps the variable vector to the flattened (x, y, z) block of ``Q``."""
        return self.aggregate @ np.kron(np.ones(self.n_rows), np.eye(self.n_cols))

    def q_block(self, x: np.ndarray) -> np.ndarray:
        return (self.sigma_matrix() @ x).reshape(self.block_shape)

    def to_json(self) -> dict:
        def triplets(A):
            r, c = np.nonzero(A)
            return {"shape": list(A.shape), "row": r.tolist(), "col": c.tolist(), "val": A[r, c].tolist()}

        return {
            "schema_hash": self.schema.digest(),
            "grid": [self.n_rows, self.n_cols],
            "active_rows": self.rows.tolist(),
            "cost": self.cost.tolist(),
            "constraints": self.constraint_counts(),
            "marginal": {"A": triplets(self.marginal_matrix()), "b": self.marginal.tolist()},
            "sigma_aggregate": triplets(self.sigma_matrix()),
            "sigma_block_shape": list(self.block_shape),
            "independence": "Q[x,y,z]*Q_Z[z] == Q_XZ[x,z]*Q_YZ[y,z] for every listed cell",
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1)


def build_qclp(P: Distribution, C, sigma: CIConstraint) -> QclpProgram:
    schema = P.schema
    sigma.validate(schema)
    Cm = as_array(C)
    if Cm.shape != (schema.size, schema.size):
        raise ShapeError(f"cost is {Cm.shape}, domain has {schema.size} cells")
    rows = np.flatnonzero(P.mass > 0)
    if rows.size == 0:
        raise EmptyInputError("P has empty support")
    # column j -> its cell in the (x, y, z) block
    eye = np.eye(schema.size)
    agg = np.stack([ci_block(eye[j], schema, sigma).reshape(-1) for j in range(schema.size)], axis=1)
    shape = ci_block(eye[0], schema, sigma).shape
    return QclpProgram(schema, sigma, rows, Cm[rows].reshape(-1), P.mass[rows].copy(), shape, agg)


def _frozen_rows(prog: QclpProgram, est: np.ndarray, step: int):
    """Linear equality rows for one linearized step from the block estimate ``est``."""
    dx, dy, dz = prog.block_shape
    G = prog.sigma_matrix().reshape(dx, dy, dz, -1)
    A, b = [], []
    est_z = est.sum(axis=(0, 1))
    for z in range(dz):
        if est_z[z] <= MASS_TOL:
            for x in range(dx):
                for y in range(dy):
                    A.append(G[x, y, z])
                    b.append(0.0)
            continue
        if step % 2 == 0:
            h = est[:, :, z].sum(axis=0) / est_z[z]
            for x in range(dx):
                xz = G[x, :, z].sum(axis=0)
                for y in range(dy):
                    A.append(G[x, y, z] - h[y] * xz)
                    b.append(0.0)
        else:
            g = est[:, :, z].sum(axis=1)
            for x in range(dx):
                A.append(G[x, :, z].sum(axis=0))
                b.append(g[x])
            for y in range(dy):
                yz = G[:, y, z].sum(axis=0)
                for x in range(dx):
                    A.append(G[x, y, z] * est_z[z] - g[x] * yz)
                    b.append(0.0)
    return np.array(A), np.array(b)


def independence_residual(prog: QclpProgram, x: np.ndarray) -> float:
    t = prog.q_block(x)
    xz = t.sum(axis=1, keepdims=True)
    yz = t.sum(axis=0, keepdims=True)
    z = t.sum(axis=(0, 1), keepdims=True)
    return float(np.max(np.abs(t * z - xz * yz)))


@dataclass
class QclpResult:
    plan: TransportPlan
    target: Distribution
    converged: bool
    costs: list[float]
    residual: float

    def __iter__(self):
        return iter((self.plan, self.target, self.converged))


def _initial_plan(prog: QclpProgram, q0: np.ndarray) -> np.ndarray:
    # exact OT from P's active rows to q0
    A = np.vstack([prog.marginal_matrix(), np.kron(np.ones(prog.n_rows), np.eye(prog.n_cols))])
    return solve_lp(prog.cost, A, np.r_[prog.marginal, q0]).x


def solve_qclp_alternating(
    prog: QclpProgram, init: Distribution, outer_max: int = 50, tol: float = 1e-9
) -> QclpResult:
    """Alternate the two linearizations until the plan stops moving.

    The starting plan is the exact OT plan from ``P`` to ``init``.  Every
    step's feasible set contains the previous plan, so the cost never
    increases after the first step.  A period-two swap between equal-cost
    vertices also counts as converged.
    """
    if init.schema != prog.schema:
        raise ShapeError("init must share the program's schema")
    x = _initial_plan(prog, init.mass)
    M = prog.marginal_matrix()
    costs = [float(prog.cost @ x)]
    history = [x]
    converged = False
    for step in range(int(outer_max)):
        A, b = _frozen_rows(prog, prog.q_block(x), step)
        try:
            res = solve_lp(prog.cost, np.vstack([M, A]), np.r_[prog.marginal, b])
        except LPInfeasible as exc:
            raise OTCleanError(f"linearized step {step} is infeasible: {exc}") from exc
        change = float(np.max(np.abs(res.x - x)))
        x = res.x
        costs.append(res.fun)
        history.append(x)
        if change <= tol:
            converged = True
            break
        # two alternate optimal vertices swapping forever at equal cost
        if len(history) >= 3 and np.max(np.abs(x - history[-3])) <= tol and abs(costs[-1] - costs[-2]) <= tol:
            converged = True
            break
    full = np.zeros((prog.n_cols, prog.n_cols))
    full[prog.rows] = x.reshape(prog.n_rows, prog.n_cols)
    full = full / full.sum()
    plan = TransportPlan(full, prog.schema, prog.schema)
    return QclpResult(plan, plan.target(), converged, costs, independence_residual(prog, x))
