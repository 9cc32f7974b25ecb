"""Discrete joint domains, distributions over them, and information measures.

A :class:`Schema` fixes an ordered list of categorical attributes.  Tuples are
flattened to a single joint index in mixed radix with the first declared
attribute most significant, which is exactly numpy's C order for an array of
shape ``schema.shape``.  All logarithms are natural (nats).
"""
from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np
from scipy.special import rel_entr

from .errors import ArityError, DomainError, EmptyInputError, ShapeError, ValidationError

NORMALIZATION_TOL = 1e-6
FACTORIZATION_TOL = 1e-12


@dataclass(frozen=True)
class Schema:
    """Ordered categorical attributes.

    ``numeric`` optionally assigns a real value to each category of an
    attribute (``None`` means "use the ordinal position").
    """

    names: tuple[str, ...]
    domains: tuple[tuple[Hashable, ...], ...]
    numeric: tuple[tuple[float, ...] | None, ...] | None = None
    _lookup: tuple[dict, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        names = tuple(self.names)
        domains = tuple(tuple(d) for d in self.domains)
        if len(names) != len(domains):
            raise ValidationError("names and domains differ in length")
        if len(set(names)) != len(names):
            raise ValidationError(f"duplicate attribute names in {names}")
        for name, dom in zip(names, domains):
            if not dom:
                raise ValidationError(f"attribute {name!r} has an empty domain")
            if len(set(dom)) != len(dom):
                raise ValidationError(f"attribute {name!r} has duplicate labels")
        numeric = self.numeric
        if numeric is not None:
            numeric = tuple(None if v is None else tuple(float(x) for x in v) for v in numeric)
            if len(numeric) != len(names):
                raise ValidationError("numeric encoding must list every attribute")
            for name, dom, vals in zip(names, domains, numeric):
                if vals is not None and len(vals) != len(dom):
                    raise ValidationError(f"numeric encoding of {name!r} has wrong length")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "domains", domains)
        object.__setattr__(self, "numeric", numeric)
        object.__setattr__(self, "_lookup", tuple({lab: i for i, lab in enumerate(d)} for d in domains))

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, Sequence[Hashable]]], numeric=None) -> "Schema":
        pairs = list(pairs)
        return cls(tuple(n for n, _ in pairs), tuple(tuple(d) for _, d in pairs), numeric)

    @classmethod
    def binary(cls, *names: str) -> "Schema":
        """Schema whose attributes all take the integer labels 0 and 1."""
        return cls(tuple(names), tuple((0, 1) for _ in names))

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(d) for d in self.domains)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64))

    def axis(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise DomainError(f"unknown attribute {name!r}") from None

    def axes(self, names: Iterable[str]) -> list[int]:
        return [self.axis(n) for n in names]

    def label_index(self, axis: int, label) -> int:
        try:
            return self._lookup[axis][label]
        except (KeyError, TypeError):
            raise DomainError(
                f"label {label!r} not in domain of attribute {self.names[axis]!r}"
            ) from None

    def numeric_values(self, axis: int) -> np.ndarray:
        vals = None if self.numeric is None else self.numeric[axis]
        if vals is None:
            return np.arange(len(self.domains[axis]), dtype=float)
        return np.asarray(vals, dtype=float)

    def sub(self, names: Iterable[str]) -> "Schema":
        """Sub-schema over ``names``, kept in this schema's declared order."""
        keep = set(names)
        for n in keep:
            self.axis(n)
        idx = [i for i, n in enumerate(self.names) if n in keep]
        numeric = None if self.numeric is None else tuple(self.numeric[i] for i in idx)
        return Schema(tuple(self.names[i] for i in idx), tuple(self.domains[i] for i in idx), numeric)

    def tuples(self) -> list[tuple]:
        """Every tuple of the joint domain, in joint-index order."""
        return [self.decode(i) for i in range(self.size)]

    def encode(self, values: Sequence) -> int:
        return encode(values, self)

    def decode(self, index: int) -> tuple:
        return decode(index, self)

    def digest(self) -> str:
        """Stable hash identifying attribute names and label order."""
        payload = json.dumps([[n, [str(x) for x in d]] for n, d in zip(self.names, self.domains)])
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def encode(values: Sequence, schema: Schema) -> int:
    """Mixed-radix joint index of ``values``; first attribute most significant."""
    if len(values) != len(schema.names):
        raise ArityError(f"expected {len(schema.names)} values, got {len(values)}")
    index = 0
    for axis, (lab, radix) in enumerate(zip(values, schema.shape)):
        index = index * radix + schema.label_index(axis, lab)
    return index


def decode(index: int, schema: Schema) -> tuple:
    if not 0 <= index < schema.size:
        raise DomainError(f"joint index {index} outside [0, {schema.size})")
    pos = np.unravel_index(int(index), schema.shape)
    return tuple(dom[int(i)] for dom, i in zip(schema.domains, pos))


@dataclass(frozen=True)
class Distribution:
    """Probability vector over the joint domain of ``schema``."""

    schema: Schema
    mass: np.ndarray

    def __post_init__(self):
        mass = np.array(self.mass, dtype=float).reshape(-1)
        if mass.shape != (self.schema.size,):
            raise ShapeError(f"mass has {mass.size} entries, schema needs {self.schema.size}")
        if not np.all(np.isfinite(mass)) or np.any(mass < 0):
            raise ValidationError("probabilities must be finite and nonnegative")
        total = mass.sum()
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise ValidationError(f"probabilities sum to {total}, not 1")
        mass = mass / total
        mass.setflags(write=False)
        object.__setattr__(self, "mass", mass)

    @classmethod
    def from_dict(cls, schema: Schema, probs: Mapping[tuple, float]) -> "Distribution":
        mass = np.zeros(schema.size)
        for t, pr in probs.items():
            mass[encode(t, schema)] += pr
        return cls(schema, mass)

    @classmethod
    def uniform(cls, schema: Schema) -> "Distribution":
        return cls(schema, np.full(schema.size, 1.0 / schema.size))

    def tensor(self) -> np.ndarray:
        return self.mass.reshape(self.schema.shape)

    def prob(self, values: Sequence) -> float:
        return float(self.mass[encode(values, self.schema)])

    def to_dict(self, eps: float = 0.0) -> dict[tuple, float]:
        return {self.schema.decode(i): float(m) for i, m in enumerate(self.mass) if m > eps}

    def support(self) -> np.ndarray:
        return np.flatnonzero(self.mass > 0)


@dataclass(frozen=True)
class CIConstraint:
    """``x ⫫ y | z`` over attribute names; ``z`` may be empty."""

    x: tuple[str, ...]
    y: tuple[str, ...]
    z: tuple[str, ...] = ()

    def __post_init__(self):
        for attr in ("x", "y", "z"):
            val = getattr(self, attr)
            object.__setattr__(self, attr, (val,) if isinstance(val, str) else tuple(val))
        if not self.x or not self.y:
            raise ValidationError("x and y must be nonempty")
        sets = [set(self.x), set(self.y), set(self.z)]
        if sum(map(len, sets)) != len(set().union(*sets)) or any(
            len(s) != len(t) for s, t in zip(sets, (self.x, self.y, self.z))
        ):
            raise ValidationError(f"x, y, z must be disjoint without repeats: {self}")

    @property
    def attributes(self) -> tuple[str, ...]:
        return self.x + self.y + self.z

    def validate(self, schema: Schema) -> None:
        missing = [a for a in self.attributes if a not in schema.names]
        if missing:
            raise DomainError(f"constraint attributes not in schema: {missing}")

    def is_saturated(self, schema: Schema) -> bool:
        self.validate(schema)
        return set(self.attributes) == set(schema.names)

    def __str__(self):
        s = f"{','.join(self.x)} ⫫ {','.join(self.y)}"
        return s + (f" | {','.join(self.z)}" if self.z else "")


def ci_block(mass: np.ndarray, schema: Schema, sigma: CIConstraint) -> np.ndarray:
    """Marginal of ``mass`` onto sigma's attributes as a (d_X, d_Y, d_Z) array.

    Multi-attribute groups are flattened in the order they are listed in
    ``sigma``.  Attributes outside sigma are summed out.
    """
    sigma.validate(schema)
    t = np.asarray(mass, dtype=float).reshape(schema.shape)
    order = schema.axes(sigma.attributes)
    rest = tuple(i for i in range(len(schema.names)) if i not in order)
    if rest:
        t = t.sum(axis=rest)
        # after summing, remaining axes keep their relative order
        remaining = [i for i in range(len(schema.names)) if i not in rest]
        order = [remaining.index(i) for i in order]
    t = np.transpose(t, order)
    dx = int(np.prod([schema.shape[schema.axis(a)] for a in sigma.x]))
    dy = int(np.prod([schema.shape[schema.axis(a)] for a in sigma.y]))
    return t.reshape(dx, dy, -1)


def empirical_distribution(dataset: Iterable[Sequence], schema: Schema) -> Distribution:
    counts = Counter(encode(t, schema) for t in dataset)
    n = sum(counts.values())
    if n == 0:
        raise EmptyInputError("dataset is empty")
    mass = np.zeros(schema.size)
    for idx, c in counts.items():
        mass[idx] = c / n
    return Distribution(schema, mass)


def marginalize(dist: Distribution, keep: Iterable[str]) -> Distribution:
    keep = list(keep)
    if not keep:
        raise DomainError("keep must name at least one attribute")
    sub = dist.schema.sub(keep)
    drop = tuple(i for i, n in enumerate(dist.schema.names) if n not in sub.names)
    t = dist.tensor().sum(axis=drop) if drop else dist.tensor()
    return Distribution(sub, t.reshape(-1))


def conditional(dist: Distribution, target: Iterable[str], given: Iterable[str]) -> dict[tuple, Distribution]:
    """Map each positive-mass value of ``given`` to P(target | given=value)."""
    target, given = list(target), list(given)
    if set(target) & set(given):
        raise DomainError("target and given must be disjoint")
    joint = marginalize(dist, target + given)
    tsch, gsch = dist.schema.sub(target), dist.schema.sub(given) if given else None
    if gsch is None:
        return {(): marginalize(dist, target)}
    # reorder the joint to (target..., given...)
    names = joint.schema.names
    perm = [names.index(n) for n in tsch.names] + [names.index(n) for n in gsch.names]
    t = np.transpose(joint.tensor(), perm).reshape(tsch.size, gsch.size)
    col = t.sum(axis=0)
    out = {}
    for g in range(gsch.size):
        if col[g] > 0:
            out[gsch.decode(g)] = Distribution(tsch, t[:, g] / col[g])
    return out


def kl_divergence(p: Distribution, q: Distribution) -> float:
    """KL(p || q) in nats; ``inf`` when p puts mass where q has none."""
    if p.schema != q.schema:
        raise ShapeError("KL divergence needs distributions over the same schema")
    return float(np.sum(rel_entr(p.mass, q.mass)))


def cmi(dist: Distribution, sigma: CIConstraint) -> float:
    """Conditional mutual information I(X; Y | Z) in nats."""
    t = ci_block(dist.mass, dist.schema, sigma)
    pxz = t.sum(axis=1, keepdims=True)
    pyz = t.sum(axis=0, keepdims=True)
    pz = t.sum(axis=(0, 1), keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        product = np.where(pz > 0, pxz * pyz / np.where(pz > 0, pz, 1.0), 0.0)
    if np.max(np.abs(t - product)) <= FACTORIZATION_TOL:
        return 0.0
    value = float(np.sum(rel_entr(t, product)))
    return max(value, 0.0)
