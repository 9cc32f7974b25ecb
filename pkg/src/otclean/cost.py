"""Cost matrices over a joint domain."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .dist import Distribution, Schema, marginalize
from .errors import ValidationError

LARGE = 1e9
KINDS = ("hamming", "euclidean", "weighted-hamming", "external-matrix")


@dataclass(frozen=True)
class CostSpec:
    kind: str = "hamming"
    weights: Mapping[str, float] | None = None
    frozen: tuple[str, ...] = ()
    matrix_path: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown cost kind {self.kind!r}; expected one of {KINDS}")
        object.__setattr__(self, "frozen", tuple(self.frozen))
        if self.kind == "weighted-hamming":
            if not self.weights:
                raise ValidationError("weighted-hamming needs per-attribute weights")
            if any(w < 0 for w in self.weights.values()):
                raise ValidationError("weights must be nonnegative")
        elif self.weights is not None:
            raise ValidationError(f"weights are only valid for weighted-hamming, not {self.kind}")
        if (self.kind == "external-matrix") != (self.matrix_path is not None):
            raise ValidationError("matrix_path is required for, and only for, external-matrix")

    @property
    def separable(self) -> bool:
        """True for kinds where cost(uw -> u'w) depends only on u, u'."""
        return self.kind != "external-matrix"

    def restrict(self, names) -> "CostSpec":
        """Same spec on a sub-schema containing only ``names``."""
        names = set(names)
        weights = None if self.weights is None else {k: v for k, v in self.weights.items() if k in names}
        return CostSpec(self.kind, weights, tuple(a for a in self.frozen if a in names), self.matrix_path)


@dataclass(frozen=True)
class CostMatrix:
    schema: Schema
    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.array(self.entries, dtype=float)
        n = self.schema.size
        if c.shape != (n, n):
            raise ValidationError(f"cost matrix must be {n}x{n}, got {c.shape}")
        _check_entries(c)
        c.setflags(write=False)
        object.__setattr__(self, "entries", c)


def _check_entries(c: np.ndarray) -> None:
    if np.any(np.isnan(c)) or np.any(c < 0):
        raise ValidationError("cost entries must be nonnegative numbers")
    if np.any(np.diag(c) != 0):
        raise ValidationError("cost matrix diagonal must be exactly zero")


def _coords(schema: Schema) -> np.ndarray:
    # (n_attrs, d_V) category positions of every joint index
    return np.indices(schema.shape).reshape(len(schema.shape), -1)


def build_cost_matrix(
    schema: Schema, spec: CostSpec, reference: Distribution | None = None, matrix: np.ndarray | None = None
) -> CostMatrix:
    """Dense cost matrix for ``spec``.

    ``reference`` sets the distribution under which euclidean coordinates are
    standardized (uniform over each attribute's domain when omitted).
    ``matrix`` supplies an external matrix directly instead of reading
    ``spec.matrix_path``.
    """
    for a in spec.frozen:
        schema.axis(a)
    if spec.weights:
        for a in spec.weights:
            schema.axis(a)
    coords = _coords(schema)
    n = schema.size

    if spec.kind == "external-matrix":
        c = np.asarray(matrix, dtype=float) if matrix is not None else read_cost_csv(spec.matrix_path)
        if c.shape != (n, n):
            raise ValidationError(f"external cost matrix must be {n}x{n}, got {c.shape}")
        _check_entries(c)
        c = c.copy()
    elif spec.kind == "euclidean":
        sq = np.zeros((n, n))
        for axis, pos in enumerate(coords):
            vals = schema.numeric_values(axis)
            if reference is not None:
                if reference.schema.names != schema.names:
                    reference = marginalize(reference, schema.names)
                w = reference.tensor().sum(axis=tuple(i for i in range(len(schema.shape)) if i != axis))
            else:
                w = np.full(len(vals), 1.0 / len(vals))
            mean = np.dot(w, vals)
            std = float(np.sqrt(np.dot(w, (vals - mean) ** 2)))
            x = vals[pos] / (std if std > 0 else 1.0)
            sq += (x[:, None] - x[None, :]) ** 2
        c = np.sqrt(sq)
    else:
        weights = spec.weights or {}
        c = np.zeros((n, n))
        for axis, pos in enumerate(coords):
            w = weights.get(schema.names[axis], 0.0) if spec.kind == "weighted-hamming" else 1.0
            if w:
                c += w * (pos[:, None] != pos[None, :])
    for a in spec.frozen:
        pos = coords[schema.axis(a)]
        c[pos[:, None] != pos[None, :]] = LARGE
    np.fill_diagonal(c, 0.0)
    return CostMatrix(schema, c)


def read_cost_csv(path: str | Path) -> np.ndarray:
    """Headerless numeric CSV; row ``i`` holds costs from joint index ``i``."""
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            try:
                rows.append([float(x) for x in row])
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: non-numeric cost entry") from None
    if not rows or any(len(r) != len(rows[0]) for r in rows):
        raise ValidationError(f"{path}: cost matrix rows are ragged or empty")
    return np.array(rows)


def write_cost_csv(path: str | Path, c: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows([[repr(float(x)) for x in row] for row in np.asarray(c)])


def as_array(cost) -> np.ndarray:
    return cost.entries if isinstance(cost, CostMatrix) else np.asarray(cost, dtype=float)

