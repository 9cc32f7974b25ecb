"""CSV, constraint, domain and artifact files."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .dist import CIConstraint, Distribution, Schema
from .errors import ValidationError


@dataclass
class Table:
    header: tuple[str, ...]
    rows: list[tuple[str, ...]]


def read_csv(path: str | Path) -> Table:
    """Header row required; every data row must have the header's width."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = tuple(h.strip() for h in next(reader))
        except StopIteration:
            raise ValidationError(f"{path}: empty file, expected a header row") from None
        if len(set(header)) != len(header) or any(not h for h in header):
            raise ValidationError(f"{path}:1: header has blank or duplicate column names")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValidationError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            rows.append(tuple(row))
    return Table(header, rows)


def write_csv(path: str | Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows([[str(v) for v in r] for r in rows])


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def bin_numeric(table: Table, k: int) -> Table:
    """Equi-width binning of columns that are entirely numeric with more than ``k`` values.

    Binned cells are replaced by their bin index (``0`` to ``k-1``).
    """
    if k < 1:
        raise ValidationError("--bins must be at least 1")
    cols = list(zip(*table.rows)) if table.rows else [()] * len(table.header)
    new_cols = []
    for col in cols:
        if col and all(_is_number(v) for v in col) and len(set(col)) > k:
            x = np.array([float(v) for v in col])
            edges = np.linspace(x.min(), x.max(), k + 1)
            idx = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, k - 1)
            new_cols.append(tuple(str(int(i)) for i in idx))
        else:
            new_cols.append(col)
    return Table(table.header, [tuple(r) for r in zip(*new_cols)] if table.rows else [])


def infer_schema(tables: Sequence[Table], domain: dict | None = None) -> Schema:
    """Domains from ``domain`` when given, else first appearance across ``tables``."""
    header = tables[0].header
    for t in tables[1:]:
        if t.header != header:
            raise ValidationError("CSV files have different headers")
    if domain is not None:
        missing = [h for h in header if h not in domain]
        if missing:
            raise ValidationError(f"domain file has no entry for {missing}")
        doms = [tuple(str(x) for x in domain[h]) for h in header]
    else:
        doms = [dict() for _ in header]
        for t in tables:
            for row in t.rows:
                for d, v in zip(doms, row):
                    d.setdefault(v, None)
        doms = [tuple(d) for d in doms]
    numeric = tuple(
        tuple(float(x) for x in d) if all(_is_number(x) for x in d) else None for d in doms
    )
    return Schema(header, doms, numeric)


def table_distribution(table: Table, schema: Schema, source: str = "data") -> Distribution:
    """Empirical distribution with line-numbered label errors."""
    mass = np.zeros(schema.size)
    lookup = [dict((lab, i) for i, lab in enumerate(d)) for d in schema.domains]
    strides = np.cumprod((schema.shape[1:] + (1,))[::-1])[::-1]
    for lineno, row in enumerate(table.rows, start=2):
        idx = 0
        for name, lk, stride, v in zip(schema.names, lookup, strides, row):
            if v not in lk:
                raise ValidationError(f"{source}:{lineno}: unknown label {v!r} for column {name!r}")
            idx += lk[v] * int(stride)
        mass[idx] += 1
    if not table.rows:
        raise ValidationError(f"{source}: no data rows")
    return Distribution(schema, mass / mass.sum())


def load_json(path: str | Path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from None


def load_constraint(path: str | Path, schema: Schema | None = None) -> CIConstraint:
    obj = load_json(path)
    if not isinstance(obj, dict) or "x" not in obj or "y" not in obj:
        raise ValidationError(f"{path}: constraint needs 'x' and 'y' lists")
    sigma = CIConstraint(tuple(obj["x"]), tuple(obj["y"]), tuple(obj.get("z", ())))
    if schema is not None:
        missing = [a for a in sigma.attributes if a not in schema.names]
        if missing:
            raise ValidationError(f"constraint names attributes not in the data: {missing}")
    return sigma


def dump_json(path: str | Path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def distribution_json(dist: Distribution) -> dict:
    return {
        "schema_hash": dist.schema.digest(),
        "attributes": list(dist.schema.names),
        "entries": [
            {"index": int(i), "values": list(dist.schema.decode(int(i))), "mass": float(dist.mass[i])}
            for i in np.flatnonzero(dist.mass > 1e-15)
        ],
    }


def domain_json(schema: Schema) -> dict:
    return {n: list(d) for n, d in zip(schema.names, schema.domains)}
