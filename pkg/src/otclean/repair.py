"""Per-tuple probabilistic cleaners, seeded application, distortion and ROD."""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dist import Distribution, Schema, conditional, encode, marginalize
from .errors import CoverageError, UndefinedRODError, ValidationError
from .ot import TransportPlan, exact_ot_lp

# numpy's PCG64 bit generator, seeded directly; fixed for reproducibility
BIT_GENERATOR = "PCG64"


@dataclass(frozen=True)
class ProbabilisticCleaner:
    """``rows[src] = [(dst, prob), ...]`` with destinations in ascending order."""

    schema: Schema
    rows: dict[int, list[tuple[int, float]]]

    def __post_init__(self):
        for src, row in self.rows.items():
            probs = np.array([p for _, p in row])
            if np.any(probs < 0):
                raise ValidationError(f"negative probability in row {src}")
            if abs(probs.sum() - 1.0) > 1e-9:
                raise ValidationError(f"row {src} sums to {probs.sum()}, not 1")

    def row(self, values: Sequence) -> dict[tuple, float]:
        src = self.schema.encode(values)
        return {self.schema.decode(j): p for j, p in self.rows[src]}

    def to_json(self) -> dict:
        return {
            "schema_hash": self.schema.digest(),
            "rows": {str(k): [[j, p] for j, p in v] for k, v in sorted(self.rows.items())},
        }

    @classmethod
    def from_json(cls, obj: dict, schema: Schema) -> "ProbabilisticCleaner":
        if obj.get("schema_hash") and obj["schema_hash"] != schema.digest():
            raise ValidationError("cleaner was built for a different schema")
        rows = {int(k): [(int(j), float(p)) for j, p in v] for k, v in obj["rows"].items()}
        return cls(schema, rows)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1)


def cleaner_from_plan(plan: TransportPlan, eps: float = 0.0) -> ProbabilisticCleaner:
    """Row-normalize ``plan``; rows with no source mass are left out."""
    if plan.src is None:
        raise ValidationError("plan must carry its schema")
    if plan.dst is not None and plan.dst != plan.src:
        raise ValidationError("cleaners map a domain onto itself")
    m = plan.mass
    marg = m.sum(axis=1)
    rows = {}
    for i in np.flatnonzero(marg > 0):
        cols = np.flatnonzero(m[i] > eps)
        probs = m[i, cols] / m[i, cols].sum()
        rows[int(i)] = [(int(j), float(p)) for j, p in zip(cols, probs)]
    return ProbabilisticCleaner(plan.src, rows)


def apply_cleaner(dataset: Sequence[Sequence], cleaner: ProbabilisticCleaner, seed: int) -> list[tuple]:
    """Resample every tuple from its cleaner row by inverse CDF.

    One uniform draw per row, in row order, from ``Generator(PCG64(seed))``.
    The first destination whose cumulative probability exceeds the draw is
    taken, so ties go to the lowest destination index.
    """
    schema = cleaner.schema
    cdfs = {}
    for src, row in cleaner.rows.items():
        dst = np.array([j for j, _ in row])
        cdf = np.cumsum([p for _, p in row])
        cdf[-1] = 1.0
        cdfs[src] = (dst, cdf)
    codes = []
    for values in dataset:
        src = encode(values, schema)
        if src not in cdfs:
            raise CoverageError(f"no cleaner row for tuple {tuple(values)}")
        codes.append(src)
    draws = np.random.Generator(np.random.PCG64(seed)).random(len(codes))
    out = []
    for src, r in zip(codes, draws):
        dst, cdf = cdfs[src]
        out.append(schema.decode(int(dst[np.searchsorted(cdf, r, side="right")])))
    return out


def distortion(p: Distribution, q: Distribution, C) -> float:
    """Earth mover distance between ``p`` and ``q`` under cost ``C``."""
    if p.schema != q.schema:
        raise ValidationError("distortion needs two distributions over the same schema")
    return exact_ot_lp(p, q, C)[0]


def rod(dist: Distribution, yhat: str, s: str, a: Sequence[str] = ()) -> tuple[float, float]:
    """Ratio of observational discrimination and its natural log.

    Averages ``P(Y=1|S=0,a) P(Y=0|S=1,a) / (P(Y=0|S=0,a) P(Y=1|S=1,a))``
    over the strata ``a`` in which both groups have mass.
    """
    a = list(a)
    for name in (yhat, s):
        if len(dist.schema.domains[dist.schema.axis(name)]) != 2:
            raise ValidationError(f"{name} must be binary")
    dist = marginalize(dist, [yhat, s] + a)
    sch = dist.schema
    y0, y1 = sch.domains[sch.axis(yhat)]
    s0, s1 = sch.domains[sch.axis(s)]
    cond = conditional(dist, [yhat], [s] + a)
    given = sch.sub([s] + a).names

    def key(group, stratum):
        values = dict(zip(a, stratum), **{s: group})
        return tuple(values[n] for n in given)

    strata = sch.sub(a).tuples() if a else [()]
    ratios = []
    for stratum in strata:
        g0, g1 = cond.get(key(s0, stratum)), cond.get(key(s1, stratum))
        if g0 is None and g1 is None:
            continue
        if g0 is None or g1 is None:
            raise UndefinedRODError(f"stratum {dict(zip(a, stratum))} has mass in only one group")
        num = g0.prob((y1,)) * g1.prob((y0,))
        den = g0.prob((y0,)) * g1.prob((y1,))
        if den <= 0:
            raise UndefinedRODError(f"stratum {dict(zip(a, stratum))} has a zero denominator cell")
        ratios.append(num / den)
    if not ratios:
        raise UndefinedRODError("no stratum has mass")
    value = float(np.mean(ratios))
    return value, float(np.log(value)) if value > 0 else -np.inf
