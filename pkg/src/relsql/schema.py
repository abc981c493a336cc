"""Relational schemas and database content, read from Spider-format files.

Every table carries its own wildcard column ``*`` as the first column of the
table; column ids are dense and follow table order.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Iterable

DATA_TYPES = ("text", "number", "time", "boolean", "others")
WILDCARD = "*"


class SchemaError(Exception):
    pass


@dataclass(frozen=True)
class Column:
    name: str
    data_type: str
    natural_name: str = ""

    @property
    def is_wildcard(self) -> bool:
        return self.name == WILDCARD

    @property
    def display_name(self) -> str:
        return self.natural_name or self.name


@dataclass(frozen=True)
class Table:
    name: str
    columns: tuple[Column, ...]
    natural_name: str = ""

    @property
    def display_name(self) -> str:
        return self.natural_name or self.name


@dataclass(frozen=True)
class Schema:
    """A database schema.

    ``foreign_keys`` holds ``(source column id, referenced column id)`` pairs and
    ``primary_keys`` a set of column ids, all in this schema's dense column ids.
    """

    db_id: str
    tables: tuple[Table, ...]
    foreign_keys: tuple[tuple[int, int], ...] = ()
    primary_keys: frozenset[int] = frozenset()
    column_table: tuple[int, ...] = field(init=False, repr=False, compare=False)
    column_list: tuple[Column, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.tables:
            raise SchemaError(f"schema {self.db_id!r} has no tables")
        owner, cols = [], []
        seen_tables = set()
        for t_id, table in enumerate(self.tables):
            if table.name.lower() in seen_tables:
                raise SchemaError(f"duplicate table name {table.name!r}")
            seen_tables.add(table.name.lower())
            if not table.columns or not table.columns[0].is_wildcard:
                raise SchemaError(f"table {table.name!r} must start with its wildcard column")
            names = set()
            for col in table.columns:
                if col.name.lower() in names:
                    raise SchemaError(f"duplicate column name {col.name!r} in table {table.name!r}")
                if col.data_type not in DATA_TYPES:
                    raise SchemaError(f"unknown data type {col.data_type!r} for {table.name}.{col.name}")
                names.add(col.name.lower())
                owner.append(t_id)
                cols.append(col)
        object.__setattr__(self, "column_table", tuple(owner))
        object.__setattr__(self, "column_list", tuple(cols))
        n = len(cols)
        for src, dst in self.foreign_keys:
            if not (0 <= src < n and 0 <= dst < n):
                raise SchemaError(f"dangling foreign key {src} -> {dst}")
            if owner[src] == owner[dst]:
                raise SchemaError(f"foreign key {src} -> {dst} stays within one table")
        for pk in self.primary_keys:
            if not 0 <= pk < n:
                raise SchemaError(f"dangling primary key {pk}")

    @property
    def num_columns(self) -> int:
        return len(self.column_list)

    def table_of(self, column_id: int) -> int:
        return self.column_table[column_id]

    def wildcard_of(self, table_id: int) -> int:
        return self.column_table.index(table_id)

    def table_id(self, name: str) -> int:
        name = name.lower()
        for i, t in enumerate(self.tables):
            if t.name.lower() == name:
                return i
        raise KeyError(name)

    def column_id(self, table: str | int, column: str) -> int:
        t_id = table if isinstance(table, int) else self.table_id(table)
        column = column.lower()
        for c_id in range(self.num_columns):
            if self.column_table[c_id] == t_id and self.column_list[c_id].name.lower() == column:
                return c_id
        raise KeyError(f"{self.tables[t_id].name}.{column}")

    def qualified_name(self, column_id: int) -> str:
        """Canonical literal naming a column: ``table.column``, lowercased."""
        table = self.tables[self.column_table[column_id]].name
        return f"{table}.{self.column_list[column_id].name}".lower()

    def resolve_qualified(self, name: str) -> int:
        table, _, column = name.partition(".")
        return self.column_id(table, column)

    def table_columns(self, table_id: int) -> list[int]:
        return [c for c in range(self.num_columns) if self.column_table[c] == table_id]


@dataclass(frozen=True)
class ContentIndex:
    """Cell values per column id."""

    cells: dict[int, tuple[str, ...]] = field(default_factory=dict)

    def validate(self, schema: Schema) -> None:
        for c_id in self.cells:
            if not 0 <= c_id < schema.num_columns:
                raise SchemaError(f"content references unknown column id {c_id}")


# ---------------------------------------------------------------------------
# Spider tables.json


def schema_from_spider(entry: dict) -> Schema:
    """Build a :class:`Schema` from one ``tables.json`` entry.

    Spider numbers columns globally with a single ``*`` at index 0; that column
    is dropped and a wildcard injected at the head of each table.
    """
    try:
        db_id = entry["db_id"]
        t_orig = entry.get("table_names_original") or entry["table_names"]
        t_nat = entry.get("table_names") or t_orig
        c_orig = entry.get("column_names_original") or entry["column_names"]
        c_nat = entry.get("column_names") or c_orig
        c_types = entry["column_types"]
    except KeyError as exc:
        raise SchemaError(f"tables.json entry lacks field {exc.args[0]!r}") from None
    if not t_orig:
        raise SchemaError(f"schema {db_id!r} has no tables")
    if not (len(c_orig) == len(c_nat) == len(c_types)):
        raise SchemaError(f"schema {db_id!r}: column lists differ in length")

    per_table: list[list[tuple[int, Column]]] = [[] for _ in t_orig]
    for spider_id, ((t_idx, name), (_, nat), ctype) in enumerate(zip(c_orig, c_nat, c_types)):
        if t_idx < 0:
            continue
        if t_idx >= len(t_orig):
            raise SchemaError(f"column {name!r} references table index {t_idx} out of range")
        per_table[t_idx].append((spider_id, Column(name, ctype if ctype in DATA_TYPES else "others", nat)))

    spider_to_ours: dict[int, int] = {}
    tables = []
    next_id = 0
    for t_idx, name in enumerate(t_orig):
        cols = [Column(WILDCARD, "others", WILDCARD)]
        next_id += 1
        for spider_id, col in per_table[t_idx]:
            spider_to_ours[spider_id] = next_id
            cols.append(col)
            next_id += 1
        tables.append(Table(name, tuple(cols), t_nat[t_idx]))

    def remap(idx: int) -> int:
        if idx not in spider_to_ours:
            raise SchemaError(f"schema {db_id!r}: key references column index {idx} out of range")
        return spider_to_ours[idx]

    fks = []
    for pair in entry.get("foreign_keys", []):
        src, dst = pair
        fks.append((remap(src), remap(dst)))
    pks = set()
    for pk in entry.get("primary_keys", []):
        # composite keys appear as nested lists in newer dumps
        for idx in pk if isinstance(pk, list) else [pk]:
            pks.add(remap(idx))
    return Schema(db_id, tuple(tables), tuple(fks), frozenset(pks))


def schema_to_spider(schema: Schema) -> dict:
    """Inverse of :func:`schema_from_spider` (wildcards collapse to one ``*``)."""
    c_orig: list = [[-1, "*"]]
    c_nat: list = [[-1, "*"]]
    c_types = ["text"]
    ours_to_spider = {}
    for c_id, col in enumerate(schema.column_list):
        if col.is_wildcard:
            continue
        ours_to_spider[c_id] = len(c_orig)
        t = schema.column_table[c_id]
        c_orig.append([t, col.name])
        c_nat.append([t, col.display_name])
        c_types.append(col.data_type)
    return {
        "db_id": schema.db_id,
        "table_names_original": [t.name for t in schema.tables],
        "table_names": [t.display_name for t in schema.tables],
        "column_names_original": c_orig,
        "column_names": c_nat,
        "column_types": c_types,
        "primary_keys": sorted(ours_to_spider[c] for c in schema.primary_keys),
        "foreign_keys": [[ours_to_spider[a], ours_to_spider[b]] for a, b in schema.foreign_keys],
    }


def _read_json(path: str | os.PathLike):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: malformed JSON: {exc}") from exc


def load_schemas(path: str | os.PathLike) -> dict[str, Schema]:
    """Read every schema of a ``tables.json`` file, keyed by ``db_id``."""
    data = _read_json(path)
    entries = data if isinstance(data, list) else [data]
    out = {}
    for entry in entries:
        if not isinstance(entry, dict):
            raise SchemaError(f"{path}: expected a list of schema objects")
        schema = schema_from_spider(entry)
        out[schema.db_id] = schema
    return out


def load_schema(path: str | os.PathLike, db_id: str | None = None) -> Schema:
    schemas = load_schemas(path)
    if db_id is not None:
        try:
            return schemas[db_id]
        except KeyError:
            raise SchemaError(f"{path}: no schema with db_id {db_id!r}") from None
    if len(schemas) != 1:
        raise SchemaError(f"{path}: holds {len(schemas)} schemas, pass db_id")
    return next(iter(schemas.values()))


def save_schemas(schemas: Iterable[Schema], path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([schema_to_spider(s) for s in schemas], fh, indent=1)
        fh.write("\n")


# ---------------------------------------------------------------------------
# content.json: {"column_id": ["cell", ...]}
#
# Keys are Spider column indices as they appear in tables.json, or qualified
# "table.column" names.


def load_content(path: str | os.PathLike, schema: Schema) -> ContentIndex:
    data = _read_json(path)
    if not isinstance(data, dict):
        raise SchemaError(f"{path}: content must be a JSON object")
    spider = schema_to_spider(schema)
    spider_to_ours = {}
    for c_id, col in enumerate(schema.column_list):
        if not col.is_wildcard:
            t = schema.column_table[c_id]
            spider_to_ours[spider["column_names_original"].index([t, col.name])] = c_id
    cells: dict[int, tuple[str, ...]] = {}
    for key, values in data.items():
        if key.lstrip("-").isdigit():
            if int(key) not in spider_to_ours:
                raise SchemaError(f"{path}: content key {key} is not a column")
            c_id = spider_to_ours[int(key)]
        else:
            try:
                c_id = schema.resolve_qualified(key)
            except KeyError:
                raise SchemaError(f"{path}: unknown column {key!r}") from None
        cells[c_id] = tuple(str(v) for v in values)
    return ContentIndex(cells)


def content_to_json(index: ContentIndex, schema: Schema) -> dict[str, list[str]]:
    return {schema.qualified_name(c): list(v) for c, v in sorted(index.cells.items())}
