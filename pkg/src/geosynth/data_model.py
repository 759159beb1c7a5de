"""Microdata with point geocodes: schema, dataset container and CSV I/O.

Categorical cells are stored as 1-based category indices in an ``(n, p)``
integer array, geocodes as an ``(n, 2)`` float array of meter offsets.
Datasets are treated as immutable once built.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import yaml

GEO_COLUMNS = ("geo_x", "geo_y")

CATEGORICAL = "categorical"
GEOCODE = "geocode"


class SchemaError(ValueError):
    pass


class DataError(ValueError):
    """Malformed input data; message carries row and column."""


@dataclass(frozen=True)
class Variable:
    name: str
    kind: str
    levels: tuple[str, ...] = ()

    @property
    def d(self) -> int:
        return len(self.levels)


@dataclass(frozen=True)
class GeoPoint:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite geocode ({self.x}, {self.y})")


@dataclass(frozen=True)
class Schema:
    """Ordered variable declarations.

    Declared schemas carry exactly one geocode variable and at least two
    levels per categorical variable (``strict=True``). Derived schemas,
    e.g. after encoding the geocode as a categorical variable, may have no
    geocode and single-level variables.
    """

    variables: tuple[Variable, ...]
    synthesis_targets: tuple[str, ...] = ()
    quasi_identifiers: tuple[str, ...] = ()
    strict: bool = True

    def __post_init__(self):
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate variable names")
        n_geo = sum(v.kind == GEOCODE for v in self.variables)
        for v in self.variables:
            if v.kind not in (CATEGORICAL, GEOCODE):
                raise SchemaError(f"unknown kind {v.kind!r} for {v.name}")
            if v.kind == CATEGORICAL:
                if len(set(v.levels)) != len(v.levels):
                    raise SchemaError(f"duplicate levels for {v.name}")
                if v.d < (2 if self.strict else 1):
                    raise SchemaError(f"variable {v.name} needs at least 2 levels")
        if self.strict and n_geo != 1:
            raise SchemaError(f"schema needs exactly one geocode variable, got {n_geo}")
        if n_geo > 1:
            raise SchemaError("at most one geocode variable allowed")
        for group in ("synthesis_targets", "quasi_identifiers"):
            unknown = set(getattr(self, group)) - set(names)
            if unknown:
                raise SchemaError(f"{group} not declared: {sorted(unknown)}")

    @property
    def names(self) -> list[str]:
        return [v.name for v in self.variables]

    @property
    def categorical(self) -> list[Variable]:
        return [v for v in self.variables if v.kind == CATEGORICAL]

    @property
    def categorical_names(self) -> list[str]:
        return [v.name for v in self.categorical]

    @property
    def geocode(self) -> Variable | None:
        for v in self.variables:
            if v.kind == GEOCODE:
                return v
        return None

    def variable(self, name: str) -> Variable:
        for v in self.variables:
            if v.name == name:
                return v
        raise KeyError(name)

    def column_index(self, name: str) -> int:
        """Position of a categorical variable in the code matrix."""
        return self.categorical_names.index(name)

    def header(self) -> list[str]:
        cols = []
        for v in self.variables:
            cols.extend(GEO_COLUMNS if v.kind == GEOCODE else (v.name,))
        return cols

    def to_dict(self) -> dict:
        out = {
            "variables": [
                {"name": v.name, "kind": v.kind, **({"levels": list(v.levels)} if v.kind == CATEGORICAL else {})}
                for v in self.variables
            ],
            "synthesis_targets": list(self.synthesis_targets),
            "quasi_identifiers": list(self.quasi_identifiers),
        }
        return out

    @classmethod
    def from_dict(cls, raw: Mapping) -> "Schema":
        variables = []
        for item in raw["variables"]:
            kind = item.get("kind", CATEGORICAL)
            levels = tuple(str(lv) for lv in item.get("levels", ()))
            variables.append(Variable(str(item["name"]), kind, levels))
        return cls(
            tuple(variables),
            tuple(raw.get("synthesis_targets", ())),
            tuple(raw.get("quasi_identifiers", ())),
        )


def load_schema(path: str | Path) -> Schema:
    with open(path, encoding="utf-8") as fh:
        return Schema.from_dict(yaml.safe_load(fh))


def save_schema(schema: Schema, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(schema.to_dict(), fh, sort_keys=False)


@dataclass(frozen=True, eq=False)
class Dataset:
    """n records: categorical codes ``(n, p)`` plus geocodes ``(n, 2)``.

    ``row_ids`` holds the original row index of each record so that cluster
    splits can be reassembled.
    """

    schema: Schema
    codes: np.ndarray
    geo: np.ndarray | None = None
    row_ids: np.ndarray = field(default=None)

    def __post_init__(self):
        codes = np.asarray(self.codes, dtype=np.int64)
        if codes.ndim != 2:
            codes = codes.reshape(-1, len(self.schema.categorical))
        object.__setattr__(self, "codes", codes)
        n = codes.shape[0]
        if self.schema.geocode is not None:
            geo = np.asarray(self.geo, dtype=np.float64).reshape(n, 2)
            object.__setattr__(self, "geo", geo)
        elif self.geo is not None:
            raise SchemaError("geocode array given but schema has no geocode")
        if self.row_ids is None:
            object.__setattr__(self, "row_ids", np.arange(n, dtype=np.int64))
        else:
            object.__setattr__(self, "row_ids", np.asarray(self.row_ids, dtype=np.int64))
        for a in (codes, self.geo, self.row_ids):
            if a is not None:
                a.setflags(write=False)

    @property
    def n(self) -> int:
        return self.codes.shape[0]

    def __len__(self) -> int:
        return self.n

    def column(self, name: str) -> np.ndarray:
        return self.codes[:, self.schema.column_index(name)]

    def check(self) -> None:
        """Assert every cell index lies in 1..d_k."""
        for j, v in enumerate(self.schema.categorical):
            col = self.codes[:, j]
            bad = np.flatnonzero((col < 1) | (col > v.d))
            if bad.size:
                raise DataError(f"row {bad[0]}: {v.name} index {col[bad[0]]} outside 1..{v.d}")
        if self.geo is not None and not np.all(np.isfinite(self.geo)):
            raise DataError("non-finite geocode")

    def take(self, idx: np.ndarray) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(
            self.schema,
            self.codes[idx],
            None if self.geo is None else self.geo[idx],
            self.row_ids[idx],
        )

    def with_columns(self, columns: Mapping[str, np.ndarray] | None = None, geo: np.ndarray | None = None) -> "Dataset":
        """Copy with some categorical columns and/or the geocode replaced."""
        codes = self.codes.copy()
        for name, values in (columns or {}).items():
            codes[:, self.schema.column_index(name)] = values
        return Dataset(self.schema, codes, self.geo if geo is None else geo, self.row_ids)

    def frame(self) -> dict[str, np.ndarray]:
        """Columns by name; geocode split into float ``geo_x``/``geo_y``."""
        out: dict[str, np.ndarray] = {}
        for v in self.schema.variables:
            if v.kind == GEOCODE:
                out[GEO_COLUMNS[0]] = self.geo[:, 0]
                out[GEO_COLUMNS[1]] = self.geo[:, 1]
            else:
                out[v.name] = self.column(v.name)
        return out

    def equals(self, other: "Dataset") -> bool:
        if self.schema != other.schema or self.n != other.n:
            return False
        if not np.array_equal(self.codes, other.codes):
            return False
        if (self.geo is None) != (other.geo is None):
            return False
        return self.geo is None or np.array_equal(self.geo, other.geo)


@dataclass
class SyntheticRelease:
    """m partially synthetic replicates of one original dataset."""

    replicates: list[Dataset]
    synthesized_variables: tuple[str, ...]

    @property
    def m(self) -> int:
        return len(self.replicates)

    def check_against(self, original: Dataset) -> None:
        """Replicates share n and schema; unsynthesized columns are untouched."""
        keep = [v.name for v in original.schema.categorical if v.name not in self.synthesized_variables]
        geo_synth = original.schema.geocode is not None and original.schema.geocode.name in self.synthesized_variables
        for rep in self.replicates:
            if rep.schema != original.schema or rep.n != original.n:
                raise DataError("replicate layout differs from original")
            for name in keep:
                if not np.array_equal(rep.column(name), original.column(name)):
                    raise DataError(f"unsynthesized column {name} altered")
            if original.geo is not None and not geo_synth and not np.array_equal(rep.geo, original.geo):
                raise DataError("unsynthesized geocode altered")


def _format_float(v: float) -> str:
    return repr(float(v))


def load_csv(path: str | Path, schema: Schema) -> Dataset:
    expected = schema.header()
    lookups = [{lv: i + 1 for i, lv in enumerate(v.levels)} for v in schema.categorical]
    codes: list[list[int]] = []
    geo: list[tuple[float, float]] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != expected:
            raise DataError(f"header {header} does not match schema columns {expected}")
        for row_no, row in enumerate(reader, start=1):
            if len(row) != len(expected):
                raise DataError(f"row {row_no}: expected {len(expected)} fields, got {len(row)}")
            rec: list[int] = []
            pos = 0
            cat_j = 0
            for v in schema.variables:
                if v.kind == GEOCODE:
                    try:
                        x, y = float(row[pos]), float(row[pos + 1])
                    except ValueError:
                        raise DataError(f"row {row_no}: non-numeric geocode {row[pos:pos + 2]}") from None
                    if not (math.isfinite(x) and math.isfinite(y)):
                        raise DataError(f"row {row_no}: non-finite geocode")
                    geo.append((x, y))
                    pos += 2
                else:
                    label = row[pos]
                    try:
                        rec.append(lookups[cat_j][label])
                    except KeyError:
                        raise DataError(f"row {row_no}, column {v.name}: unknown category {label!r}") from None
                    cat_j += 1
                    pos += 1
            codes.append(rec)
    n = len(codes)
    p = len(schema.categorical)
    return Dataset(
        schema,
        np.array(codes, dtype=np.int64).reshape(n, p),
        np.array(geo, dtype=np.float64).reshape(n, 2),
    )


def save_csv(ds: Dataset, path: str | Path) -> None:
    schema = ds.schema
    cats = schema.categorical
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(schema.header())
        for i in range(ds.n):
            row: list[str] = []
            cat_j = 0
            for v in schema.variables:
                if v.kind == GEOCODE:
                    row.append(_format_float(ds.geo[i, 0]))
                    row.append(_format_float(ds.geo[i, 1]))
                else:
                    row.append(cats[cat_j].levels[ds.codes[i, cat_j] - 1])
                    cat_j += 1
            writer.writerow(row)


@dataclass(frozen=True)
class GeoCodebook:
    """Maps categorical geocode levels (1-based) back to points."""

    points: np.ndarray  # (d_geo, 2)

    @property
    def d(self) -> int:
        return self.points.shape[0]

    def decode(self, codes: np.ndarray) -> np.ndarray:
        return self.points[np.asarray(codes, dtype=np.int64) - 1]

    def point(self, code: int) -> GeoPoint:
        x, y = self.points[code - 1]
        return GeoPoint(float(x), float(y))


def encode_points(geo: np.ndarray) -> tuple[np.ndarray, GeoCodebook]:
    """Distinct points by exact bit equality; codes are 1-based."""
    geo = np.ascontiguousarray(geo, dtype=np.float64)
    if geo.shape[0] == 0:
        return np.zeros(0, dtype=np.int64), GeoCodebook(np.zeros((0, 2)))
    # view rows as raw bytes so that equality is bitwise (0.0 vs -0.0 stay distinct)
    keys = geo.view(np.dtype((np.void, 16))).ravel()
    _, first, inverse = np.unique(keys, return_index=True, return_inverse=True)
    # number levels by first appearance, which keeps the codebook independent of byte order
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    codes = rank[inverse.ravel()] + 1
    return codes.astype(np.int64), GeoCodebook(geo[first[order]].copy())


def concat_geocode_as_categorical(ds: Dataset, name: str | None = None) -> tuple[Dataset, GeoCodebook]:
    """Replace the geocode by an unordered categorical variable of distinct points."""
    geo_var = ds.schema.geocode
    if geo_var is None:
        raise SchemaError("dataset has no geocode")
    codes, book = encode_points(ds.geo)
    name = name or geo_var.name
    new_vars = []
    for v in ds.schema.variables:
        if v.kind == GEOCODE:
            new_vars.append(Variable(name, CATEGORICAL, tuple(str(i) for i in range(1, book.d + 1))))
        else:
            new_vars.append(v)
    schema = Schema(
        tuple(new_vars),
        ds.schema.synthesis_targets,
        ds.schema.quasi_identifiers,
        strict=False,
    )
    cols = []
    for v in ds.schema.variables:
        cols.append(codes if v.kind == GEOCODE else ds.column(v.name))
    mat = np.column_stack(cols) if cols else np.zeros((ds.n, 0), dtype=np.int64)
    return Dataset(schema, mat, None, ds.row_ids), book


def decode_geocode_categorical(enc: Dataset, book: GeoCodebook, original_schema: Schema) -> Dataset:
    """Inverse of :func:`concat_geocode_as_categorical`."""
    geo_name = original_schema.geocode.name
    geo = book.decode(enc.column(geo_name))
    cols = [enc.column(v.name) for v in original_schema.categorical]
    mat = np.column_stack(cols) if cols else np.zeros((enc.n, 0), dtype=np.int64)
    return Dataset(original_schema, mat, geo, enc.row_ids)


def reassemble(parts: Sequence[Dataset], n: int | None = None) -> Dataset:
    """Put split datasets back in original row order using ``row_ids``."""
    if not parts:
        raise ValueError("nothing to reassemble")
    row_ids = np.concatenate([p.row_ids for p in parts])
    n = row_ids.size if n is None else n
    if row_ids.size != n or not np.array_equal(np.sort(row_ids), np.arange(n)):
        raise DataError("parts do not cover rows 0..n-1 exactly once")
    order = np.argsort(row_ids, kind="stable")
    codes = np.concatenate([p.codes for p in parts])[order]
    schema = parts[0].schema
    geo = None if schema.geocode is None else np.concatenate([p.geo for p in parts])[order]
    return Dataset(schema, codes, geo, np.arange(n))

