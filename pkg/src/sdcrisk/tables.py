"""
Sparse frequency tables over categorical key variables.

A table is a mapping from integer cell coordinates to positive counts; empty
cells are never stored.  The same structure holds a sample table ``f`` and a
population table ``F``.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from math import prod
from pathlib import Path
from types import MappingProxyType
from typing import Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple

CellKey = Tuple[int, ...]


class SchemaError(ValueError):
    """Raised when records or tables do not fit their schema."""


class TableFormatError(ValueError):
    """Raised for malformed table or microdata files."""


@dataclass(frozen=True)
class Attribute:
    name: str
    levels: int
    ordinal: bool = True

    def __post_init__(self):
        if int(self.levels) < 1:
            raise SchemaError(f"attribute {self.name!r}: level count must be >= 1")


@dataclass(frozen=True)
class TableSchema:
    """Ordered attribute metadata for an m-way table."""

    attributes: Tuple[Attribute, ...]

    def __post_init__(self):
        attrs = tuple(self.attributes)
        object.__setattr__(self, "attributes", attrs)
        if not attrs:
            raise SchemaError("schema needs at least one attribute")
        names = [a.name for a in attrs]
        if len(set(names)) != len(names):
            raise SchemaError(f"duplicate attribute names in {names}")

    @classmethod
    def from_levels(cls, levels: Sequence[int], names: Optional[Sequence[str]] = None,
                    ordinal: Optional[Sequence[bool]] = None) -> "TableSchema":
        if names is None:
            names = [f"a{i}" for i in range(len(levels))]
        if ordinal is None:
            ordinal = [True] * len(levels)
        return cls(tuple(Attribute(str(n), int(l), bool(o))
                         for n, l, o in zip(names, levels, ordinal)))

    @property
    def m(self) -> int:
        return len(self.attributes)

    @property
    def K(self) -> int:
        return prod(a.levels for a in self.attributes)

    @property
    def names(self) -> List[str]:
        return [a.name for a in self.attributes]

    @property
    def levels(self) -> Tuple[int, ...]:
        return tuple(a.levels for a in self.attributes)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise SchemaError(f"unknown attribute {name!r}") from None

    def resolve(self, attrs: Iterable) -> List[int]:
        """Map a mix of attribute names and indices to indices."""
        out = []
        for a in attrs:
            if isinstance(a, str):
                out.append(self.index(a))
            else:
                i = int(a)
                if not 0 <= i < self.m:
                    raise SchemaError(f"attribute index {i} out of range for m={self.m}")
                out.append(i)
        return out

    def contains(self, key: Sequence[int]) -> bool:
        return len(key) == self.m and all(0 <= k < a.levels for k, a in zip(key, self.attributes))

    def check_key(self, key: Sequence[int], where: str = "") -> CellKey:
        key = tuple(int(k) for k in key)
        if len(key) != self.m:
            raise SchemaError(f"{where}cell {key} has length {len(key)}, expected {self.m}")
        for k, a in zip(key, self.attributes):
            if not 0 <= k < a.levels:
                raise SchemaError(f"{where}attribute {a.name!r}: level {k} outside [0, {a.levels - 1}]")
        return key

    def sub(self, attrs: Sequence[int]) -> "TableSchema":
        return TableSchema(tuple(self.attributes[i] for i in attrs))

    def to_dict(self) -> dict:
        return {"attributes": [{"name": a.name, "levels": a.levels, "ordinal": a.ordinal}
                               for a in self.attributes]}

    @classmethod
    def from_dict(cls, d: Mapping) -> "TableSchema":
        return cls(tuple(Attribute(str(a["name"]), int(a["levels"]), bool(a.get("ordinal", True)))
                         for a in d["attributes"]))


class FreqTable:
    """Immutable sparse frequency table.

    Parameters
    ----------
    schema : TableSchema
    counts : mapping of cell key -> nonnegative int
        Zero entries are dropped.
    """

    __slots__ = ("schema", "_counts", "total")

    def __init__(self, schema: TableSchema, counts: Mapping[Sequence[int], int] = None,
                 validate: bool = True):
        store: Dict[CellKey, int] = {}
        for k, v in (counts or {}).items():
            v = int(v)
            if v < 0:
                raise SchemaError(f"negative count {v} in cell {tuple(k)}")
            if v == 0:
                continue
            key = schema.check_key(k) if validate else tuple(k)
            store[key] = store.get(key, 0) + v
        self.schema = schema
        self._counts = store
        self.total = sum(store.values())

    @property
    def counts(self) -> Mapping[CellKey, int]:
        return MappingProxyType(self._counts)

    def __getitem__(self, key: Sequence[int]) -> int:
        return self._counts.get(tuple(key), 0)

    def get(self, key: Sequence[int], default: int = 0) -> int:
        return self._counts.get(tuple(key), default)

    def __len__(self) -> int:
        return len(self._counts)

    def __iter__(self) -> Iterator[CellKey]:
        return iter(sorted(self._counts))

    def items(self) -> List[Tuple[CellKey, int]]:
        """Nonzero cells in lexicographic key order."""
        return sorted(self._counts.items())

    def __eq__(self, other) -> bool:
        if not isinstance(other, FreqTable):
            return NotImplemented
        return self.schema == other.schema and self._counts == other._counts

    def __repr__(self) -> str:
        return f"FreqTable(m={self.schema.m}, K={self.schema.K}, cells={len(self)}, total={self.total})"

    def digest(self) -> str:
        """SHA-256 of the canonical CSV form; identifies a table across methods."""
        h = hashlib.sha256()
        h.update(",".join(self.schema.names).encode())
        for k, v in self.items():
            h.update(("\n" + ",".join(map(str, k)) + f",{v}").encode())
        return h.hexdigest()


@dataclass
class Microdata:
    """Integer-coded records plus optional auxiliary per-record attributes."""

    schema: TableSchema
    records: List[CellKey]
    aux: Dict[str, list] = field(default_factory=dict)

    def __post_init__(self):
        self.records = [self.schema.check_key(r, where=f"record {i}: ")
                        for i, r in enumerate(self.records)]
        for name, values in self.aux.items():
            if len(values) != len(self.records):
                raise SchemaError(f"auxiliary attribute {name!r} has {len(values)} values "
                                  f"for {len(self.records)} records")

    def __len__(self) -> int:
        return len(self.records)

    def column(self, name: str) -> list:
        if name in self.aux:
            return list(self.aux[name])
        i = self.schema.index(name)
        return [r[i] for r in self.records]

    def project(self, names: Sequence[str]) -> List[tuple]:
        cols = [self.column(n) for n in names]
        return list(zip(*cols)) if cols else [() for _ in self.records]


def ingest_microdata(rows: Microdata) -> FreqTable:
    """Cross-classify records into a frequency table."""
    counts: Dict[CellKey, int] = {}
    for r in rows.records:
        counts[r] = counts.get(r, 0) + 1
    return FreqTable(rows.schema, counts, validate=False)


def sample_uniques(f: FreqTable) -> List[CellKey]:
    """Cells with count exactly one, in lexicographic order."""
    return sorted(k for k, v in f.counts.items() if v == 1)


def margin(f: FreqTable, attrs: Sequence) -> FreqTable:
    """Collapse ``f`` onto the given attributes (names or indices), in that order."""
    idx = f.schema.resolve(attrs)
    if not idx:
        raise SchemaError("margin needs at least one attribute")
    out: Dict[CellKey, int] = {}
    for k, v in f.counts.items():
        sk = tuple(k[i] for i in idx)
        out[sk] = out.get(sk, 0) + v
    return FreqTable(f.schema.sub(idx), out, validate=False)


# ---------------------------------------------------------------------------
# CSV I/O
# ---------------------------------------------------------------------------

def _schema_path(path: Path) -> Path:
    return path.with_name(path.name + ".schema.json")


def write_table_csv(f: FreqTable, path, schema_sidecar: bool = True) -> None:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(f.schema.names + ["count"])
        for k, v in f.items():
            w.writerow(list(k) + [v])
    if schema_sidecar:
        _schema_path(path).write_text(json.dumps(f.schema.to_dict(), indent=2) + "\n")


def _parse_int(text: str, line: int, col: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise TableFormatError(f"line {line}: column {col!r}: not an integer: {text!r}") from None


def read_table_csv(path, schema: Optional[TableSchema] = None,
                   levels: Optional[Sequence[int]] = None) -> FreqTable:
    """Read a table CSV (coordinate columns plus ``count``).

    The schema comes from, in order: the ``schema`` argument, a
    ``<file>.schema.json`` sidecar, or inference (levels = max code + 1, or
    ``levels`` when given).
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise TableFormatError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if "count" not in header:
        raise TableFormatError(f"{path}: missing 'count' column")
    ci = header.index("count")
    names = [h for i, h in enumerate(header) if i != ci]
    counts: Dict[CellKey, int] = {}
    for ln, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise TableFormatError(f"{path}: line {ln}: expected {len(header)} fields, got {len(row)}")
        key = tuple(_parse_int(row[i], ln, header[i]) for i in range(len(header)) if i != ci)
        c = _parse_int(row[ci], ln, "count")
        if c < 0:
            raise TableFormatError(f"{path}: line {ln}: negative count")
        counts[key] = counts.get(key, 0) + c
    if schema is None and _schema_path(path).exists():
        schema = TableSchema.from_dict(json.loads(_schema_path(path).read_text()))
    if schema is None:
        if levels is None:
            levels = [max((k[i] for k in counts), default=0) + 1 for i in range(len(names))]
        schema = TableSchema.from_levels(levels, names)
    if schema.names != names:
        raise SchemaError(f"{path}: columns {names} do not match schema {schema.names}")
    return FreqTable(schema, counts)


def read_microdata_csv(path, aux: Sequence[str] = (), schema: Optional[TableSchema] = None,
                       levels: Optional[Sequence[int]] = None):
    """Read integer-coded microdata.

    Columns named in ``aux`` become auxiliary attributes (kept as raw strings
    unless integer-valued); all others are key variables.  Returns
    ``(Microdata, codebook)`` where ``codebook`` maps each key variable with
    non-integer labels to its ``label -> code`` dictionary.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise TableFormatError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    missing = [a for a in aux if a not in header]
    if missing:
        raise TableFormatError(f"{path}: auxiliary columns not found: {missing}")
    body = [r for r in rows[1:] if r]
    for ln, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise TableFormatError(f"{path}: line {ln}: expected {len(header)} fields, got {len(r)}")
    key_cols = [i for i, h in enumerate(header) if h not in aux]
    codebook: Dict[str, Dict[str, int]] = {}
    columns = []
    for i in key_cols:
        raw = [r[i].strip() for r in body]
        try:
            columns.append([int(v) for v in raw])
        except ValueError:
            # raw labels: code in sorted order
            book = {lab: c for c, lab in enumerate(sorted(set(raw)))}
            codebook[header[i]] = book
            columns.append([book[v] for v in raw])
    names = [header[i] for i in key_cols]
    if schema is None:
        if levels is None:
            levels = [max(col, default=0) + 1 for col in columns]
        schema = TableSchema.from_levels(levels, names)
    elif schema.names != names:
        raise SchemaError(f"{path}: key columns {names} do not match schema {schema.names}")
    aux_values = {}
    for a in aux:
        j = header.index(a)
        vals = [r[j].strip() for r in body]
        try:
            aux_values[a] = [int(v) for v in vals]
        except ValueError:
            aux_values[a] = vals
    records = list(zip(*columns)) if columns else []
    return Microdata(schema, records, aux_values), codebook
