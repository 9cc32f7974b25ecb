"""Repair an unsaturated constraint on its own attributes, then lift to the full space.

``U`` is the set of attributes named by sigma and ``W`` the rest.  A plan
over ``U`` is extended to ``V = U + W`` without ever changing ``W``, so a
cost that is separable over attributes gives the same value on both sides.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cost import as_array
from .dist import CIConstraint, Distribution, Schema, marginalize
from .errors import MisuseError, ShapeError, ValidationError
from .fastotclean import CleanerConfig, CleanerResult, fast_otclean
from .ot import TransportPlan, round_to_coupling, sinkhorn

MARGINAL_TOL = 1e-9
LIFTS = ("product", "greedy")


@dataclass(frozen=True)
class SplitSchema:
    schema: Schema
    u_attrs: tuple[str, ...]
    w_attrs: tuple[str, ...]

    @classmethod
    def from_sigma(cls, schema: Schema, sigma: CIConstraint) -> "SplitSchema":
        sigma.validate(schema)
        u = tuple(n for n in schema.names if n in sigma.attributes)
        w = tuple(n for n in schema.names if n not in sigma.attributes)
        return cls(schema, u, w)

    def __post_init__(self):
        if set(self.u_attrs) & set(self.w_attrs):
            raise ValidationError("U and W must be disjoint")
        if set(self.u_attrs) | set(self.w_attrs) != set(self.schema.names):
            raise ValidationError("U and W must cover the schema")

    @property
    def u_schema(self) -> Schema:
        return self.schema.sub(self.u_attrs)

    @property
    def w_schema(self) -> Schema:
        return self.schema.sub(self.w_attrs)

    def indices(self) -> tuple[np.ndarray, np.ndarray]:
        """U-index and W-index of every joint index of the full schema."""
        coords = np.indices(self.schema.shape).reshape(len(self.schema.names), -1)
        ua, wa = self.schema.axes(self.u_attrs), self.schema.axes(self.w_attrs)
        u = np.ravel_multi_index(coords[ua], self.u_schema.shape)
        w = np.ravel_multi_index(coords[wa], self.w_schema.shape) if wa else np.zeros(self.schema.size, dtype=int)
        return u, w

    def joint_uw(self, P: Distribution) -> np.ndarray:
        """P as a (d_U, d_W) matrix."""
        u, w = self.indices()
        out = np.zeros((self.u_schema.size, self.w_schema.size if self.w_attrs else 1))
        np.add.at(out, (u, w), P.mass)
        return out


def _split_for(P: Distribution, plan_s: TransportPlan) -> SplitSchema:
    src = plan_s.src
    if src is None:
        raise ValidationError("the marginal plan must carry its schema")
    split = SplitSchema(P.schema, src.names, tuple(n for n in P.schema.names if n not in src.names))
    if split.u_schema != src:
        raise ShapeError("marginal plan schema does not match P's attributes")
    return split


def _check_marginal(joint: np.ndarray, plan_s: TransportPlan) -> None:
    gap = float(np.max(np.abs(plan_s.source_marginal() - joint.sum(axis=1))))
    if gap > MARGINAL_TOL:
        raise ValidationError(f"marginal plan source differs from P's U-marginal by {gap:.3e}")


def _assemble(split: SplitSchema, cells: np.ndarray) -> TransportPlan:
    # cells[u, w, u'] -> full-space mass on (u w -> u' w)
    u, w = split.indices()
    lookup = np.full((split.u_schema.size, cells.shape[1]), -1)
    lookup[u, w] = np.arange(split.schema.size)
    iu, iw, iu2 = np.meshgrid(*(np.arange(k) for k in cells.shape), indexing="ij")
    m = np.zeros((split.schema.size, split.schema.size))
    np.add.at(m, (lookup[iu, iw].ravel(), lookup[iu2, iw].ravel()), cells.ravel())
    return TransportPlan(m, split.schema, split.schema)


def lift_product(P: Distribution, plan_s: TransportPlan) -> TransportPlan:
    """``pi(uw, u'w) = pi_s(u, u') P(w | u)``; zero whenever ``w`` changes."""
    split = _split_for(P, plan_s)
    joint = split.joint_uw(P)
    _check_marginal(joint, plan_s)
    pu = joint.sum(axis=1, keepdims=True)
    cond = np.divide(joint, pu, out=np.zeros_like(joint), where=pu > 0)
    cells = cond[:, :, None] * plan_s.mass[:, None, :]
    return _assemble(split, cells)


def build_coupling_greedy(P: Distribution, plan_s: TransportPlan) -> TransportPlan:
    """Sequential lift: each source ``u`` hands its ``w`` cells out to destinations in order.

    Each source first serves itself (mass that stays put), then the other
    destinations ``u'`` in ascending index order.  The masses ``P(u, w)``
    are consumed in ascending ``w`` order, moving ``min(demand, remaining)``
    each time with ``w`` left unchanged.
    """
    split = _split_for(P, plan_s)
    joint = split.joint_uw(P)
    _check_marginal(joint, plan_s)
    du, dw = joint.shape
    cells = np.zeros((du, dw, du))
    for u in range(du):
        s = joint[u].copy()
        c = 0
        for dst in [u] + [k for k in range(du) if k != u]:
            d = plan_s.mass[u, dst]
            while d > 0:
                while c < dw and s[c] <= 0:
                    c += 1
                if c == dw:
                    if d > MARGINAL_TOL:
                        raise ValidationError(f"greedy sweep ran out of mass at source {u} ({d:.3e} unmet)")
                    break
                if d <= s[c]:
                    cells[u, c, dst] += d
                    s[c] -= d
                    d = 0.0
                else:
                    cells[u, c, dst] += s[c]
                    d -= s[c]
                    s[c] = 0.0
                    c += 1
        if s.sum() > MARGINAL_TOL:
            raise ValidationError(f"greedy sweep left {s.sum():.3e} unassigned at source {u}")
    return _assemble(split, cells)


def exact_marginal_plan(result: CleanerResult, P: Distribution, C, cfg: CleanerConfig) -> TransportPlan:
    """Coupling of ``P`` and ``result.target`` with both marginals exact.

    The relaxed plan only approximates its marginals, so the final ``Q`` is
    re-solved with exact-marginal Sinkhorn and rounded onto the coupling set.
    """
    rows = np.flatnonzero(P.mass > 0)
    q = result.target.mass
    res = sinkhorn(P.mass[rows], q, as_array(C)[rows], cfg.solver)
    m = np.zeros((P.schema.size, P.schema.size))
    m[rows] = round_to_coupling(res.plan.mass, P.mass[rows], q)
    return TransportPlan(m / m.sum(), P.schema, P.schema)


@dataclass
class UnsaturatedResult:
    plan: TransportPlan
    target: Distribution
    marginal_plan: TransportPlan
    cleaner: CleanerResult

    def __iter__(self):
        return iter((self.plan, self.target))


def repair_unsaturated(
    P: Distribution, sigma: CIConstraint, C_U, cfg: CleanerConfig = CleanerConfig(), lift: str = "product"
) -> UnsaturatedResult:
    """Clean the U-marginal with ``fast_otclean`` and lift the plan back to ``V``."""
    if lift not in LIFTS:
        raise ValidationError(f"lift must be one of {LIFTS}, got {lift!r}")
    if sigma.is_saturated(P.schema):
        raise MisuseError("constraint covers every attribute; call fast_otclean directly")
    split = SplitSchema.from_sigma(P.schema, sigma)
    PU = marginalize(P, split.u_attrs)
    if as_array(C_U).shape != (PU.schema.size, PU.schema.size):
        raise ShapeError("cost must be over sigma's attributes")
    res = fast_otclean(PU, C_U, sigma, cfg)
    plan_s = exact_marginal_plan(res, PU, C_U, cfg)
    plan = (lift_product if lift == "product" else build_coupling_greedy)(P, plan_s)
    return UnsaturatedResult(plan, plan.target(), plan_s, res)


def reduce_properties(P: Distribution, plan_s: TransportPlan, plan: TransportPlan) -> dict[str, float]:
    """Max violations of the three lifting properties (0 means exact)."""
    split = _split_for(P, plan_s)
    u, w = split.indices()
    du = split.u_schema.size
    agg = np.zeros((du, du))
    np.add.at(agg, (u[:, None].repeat(u.size, 1), u[None, :].repeat(u.size, 0)), plan.mass)
    moved_w = plan.mass[w[:, None] != w[None, :]]
    return {
        "u_marginal": float(np.max(np.abs(agg - plan_s.mass))),
        "source": float(np.max(np.abs(plan.source_marginal() - P.mass))),
        "w_changed": float(moved_w.sum()) if moved_w.size else 0.0,
    }
