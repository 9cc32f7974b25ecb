"""Rank-one KL factorization and projection onto CI-consistent distributions."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dist import CIConstraint, Distribution, Schema, ci_block
from .errors import DegenerateInputError, ValidationError

TINY = 1e-300


@dataclass(frozen=True)
class FactorPair:
    """``M ≈ outer(w, h)``; ``h`` sums to one and ``w`` carries the mass."""

    w: np.ndarray
    h: np.ndarray
    iterations: int = 0
    trace: tuple[float, ...] = field(default=(), repr=False)

    def outer(self) -> np.ndarray:
        return np.outer(self.w, self.h)


def kl_objective(M: np.ndarray, R: np.ndarray) -> float:
    """Generalized KL divergence ``sum(M log(M/R) - M + R)``."""
    pos = M > 0
    if np.any(R[pos] <= 0):
        return np.inf
    return float(np.sum(M[pos] * np.log(M[pos] / R[pos])) - M.sum() + R.sum())


def rank1_kl_nmf(M, tol: float = 1e-10, max_iter: int = 500, seed: int | None = 0) -> FactorPair:
    """Lee-Seung multiplicative updates for a rank-one KL factorization."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ValidationError("rank1_kl_nmf expects a matrix")
    if np.any(M < 0):
        raise ValidationError("matrix entries must be nonnegative")
    total = M.sum()
    if not total > 0:
        raise DegenerateInputError("cannot factorize an all-zero matrix")
    rng = np.random.default_rng(seed)
    w = rng.uniform(0.5, 1.5, M.shape[0])
    h = rng.uniform(0.5, 1.5, M.shape[1])
    trace = [kl_objective(M, np.outer(w, h))]
    it = 0
    for it in range(1, max_iter + 1):
        ratio = M / np.maximum(np.outer(w, h), TINY)
        w = w * (ratio @ h) / max(h.sum(), TINY)
        ratio = M / np.maximum(np.outer(w, h), TINY)
        h = h * (ratio.T @ w) / max(w.sum(), TINY)
        trace.append(kl_objective(M, np.outer(w, h)))
        prev, cur = trace[-2], trace[-1]
        if abs(prev - cur) <= tol * max(abs(prev), 1.0):
            break
    s = h.sum()
    h, w = h / s, w * s
    w = w * (total / w.sum())
    return FactorPair(w=w, h=h, iterations=it, trace=tuple(trace))


def _project_block(t: np.ndarray, tol: float, max_iter: int, seed: int | None, workers: int = 1) -> np.ndarray:
    def one(z):
        m = t[:, :, z]
        return rank1_kl_nmf(m, tol, max_iter, seed).outer() if m.sum() > 0 else np.zeros_like(m)

    zs = range(t.shape[2])
    if workers > 1 and t.shape[2] > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            slices = list(pool.map(one, zs))
    else:
        slices = [one(z) for z in zs]
    return np.stack(slices, axis=2)


def project_to_ci(
    dist: Distribution,
    sigma: CIConstraint,
    tol: float = 1e-10,
    max_iter: int = 500,
    seed: int | None = 0,
    workers: int = 1,
) -> Distribution:
    """KL-closest CI-consistent distribution, slice by slice over ``z``.

    For an unsaturated ``sigma`` the marginal over sigma's attributes is
    projected and the remaining attributes keep their conditional
    distribution given sigma's attributes (their overall marginal where that
    conditional is undefined).
    """
    sigma.validate(dist.schema)
    return Distribution(dist.schema, project_mass(dist.mass, dist.schema, sigma, tol, max_iter, seed, workers))


def project_mass(mass, schema: Schema, sigma: CIConstraint, tol=1e-10, max_iter=500, seed=0, workers=1) -> np.ndarray:
    """Array-level ``project_to_ci``; ``mass`` may be unnormalized."""
    mass = np.asarray(mass, dtype=float)
    t = ci_block(mass, schema, sigma)
    q_block = _project_block(t, tol, max_iter, seed, workers)
    names = list(schema.names)
    order = schema.axes(sigma.attributes)
    group_shape = [schema.shape[i] for i in order]
    if sigma.is_saturated(schema):
        q = np.transpose(q_block.reshape(group_shape), np.argsort(order))
        return q.reshape(-1)
    # unsaturated: Q(u, w) = Q_U(u) * P(w | u)
    rest = [i for i in range(len(names)) if i not in order]
    full = mass.reshape(schema.shape)
    perm = order + rest
    pu_w = np.transpose(full, perm).reshape(int(np.prod(group_shape)), -1)
    pu = pu_w.sum(axis=1, keepdims=True)
    pw = pu_w.sum(axis=0, keepdims=True)
    cond = np.where(pu > 0, pu_w / np.where(pu > 0, pu, 1.0), pw)
    q = q_block.reshape(-1, 1) * cond
    rest_shape = [schema.shape[i] for i in rest]
    q = np.transpose(q.reshape(group_shape + rest_shape), np.argsort(perm))
    return q.reshape(-1)
