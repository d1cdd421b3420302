"""Source-of-truth tables and contract-scoped segment extraction.

The store is the only component that ever sees full tables. Everything
downstream works on Segments: filtered, projected, point-in-time copies
cut to exactly what one grant allows.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

from .contracts import Grant
from .errors import BadConfig, DuplicateTable, StateError, TypeMismatch, UnknownSource
from .model import (
    COLUMN_TYPES,
    DATE,
    Predicate,
    SchemaCatalog,
    check_cell,
    compare,
    date_to_days,
)


@dataclass
class Table:
    name: str  # qualified "namespace.table"
    schema: tuple[tuple[str, str], ...]  # (column, type) in declared order
    rows: list[tuple]


@dataclass(frozen=True)
class Segment:
    """A snapshot slice of one table, scoped by one grant.

    Rows are copies: later changes to the source table never show up
    here, and the segment carries everything the gateway needs so no
    store handle has to survive past provisioning.
    """

    origin: str  # qualified source table name
    columns: tuple[str, ...]
    column_types: tuple[str, ...]
    rows: tuple[tuple, ...]
    extracted_at: int


def eval_predicate(row: tuple, schema: tuple[tuple[str, str], ...], p: Predicate | None) -> bool:
    """Does `row` (laid out by `schema`) satisfy every conjunct of `p`?"""
    if p is None:
        return True
    index = {col: i for i, (col, _) in enumerate(schema)}
    for comp in p.conjuncts:
        if comp.column not in index:
            return False
        if not compare(row[index[comp.column]], comp.op, comp.literal.value):
            return False
    return True


class TableStore:
    """Registry of immutable-schema tables; every read is counted.

    The read counter exists so tests can prove the serving path never
    touches the store once an enclave is sealed.
    """

    def __init__(self):
        self._tables: dict[str, Table] = {}
        self.reads = 0

    def register_table(
        self, name: str, schema: tuple[tuple[str, str], ...], rows: list[tuple]
    ) -> Table:
        if name in self._tables:
            raise DuplicateTable(f"table {name} already registered")
        if "." not in name:
            raise BadConfig(f"table name must be qualified namespace.table, got {name!r}")
        for col, typ in schema:
            if typ not in COLUMN_TYPES:
                raise TypeMismatch(f"{name}.{col}: unknown column type {typ!r}")
        names = [col for col, _ in schema]
        if len(set(names)) != len(names):
            raise BadConfig(f"table {name}: duplicate column names")
        checked = []
        for rownum, row in enumerate(rows):
            if len(row) != len(schema):
                raise TypeMismatch(f"{name} row {rownum}: expected {len(schema)} cells")
            checked.append(
                tuple(
                    check_cell(cell, typ, f"{name} row {rownum} column {col}")
                    for cell, (col, typ) in zip(row, schema)
                )
            )
        table = Table(name, tuple(schema), checked)
        self._tables[name] = table
        return table

    def append_row(self, name: str, row: tuple) -> None:
        """Admin-side mutation; serialized by the broker, never by the gateway."""
        table = self._get(name)
        if len(row) != len(table.schema):
            raise TypeMismatch(f"{name}: expected {len(table.schema)} cells")
        table.rows.append(
            tuple(check_cell(cell, typ, f"{name}.{col}") for cell, (col, typ) in zip(row, table.schema))
        )

    def _get(self, name: str) -> Table:
        if name not in self._tables:
            raise UnknownSource(f"unknown table {name}")
        return self._tables[name]

    def has_table(self, name: str) -> bool:
        return name in self._tables

    def table_rows(self, name: str) -> list[tuple]:
        self.reads += 1
        return list(self._get(name).rows)

    def catalog(self) -> SchemaCatalog:
        return SchemaCatalog({name: t.schema for name, t in self._tables.items()})

    def extract_segment(self, name: str, g: Grant, now: int) -> Segment:
        """Filter by the grant predicate, project to the granted columns, copy.

        Row order follows the source table. The grant must already have
        been validated against this store's catalog.
        """
        self.reads += 1
        table = self._get(name)
        schema = table.schema
        if g.columns is None:
            wanted = [col for col, _ in schema]
        else:
            wanted = list(g.columns)
        index = {col: i for i, (col, _) in enumerate(schema)}
        for col in wanted:
            if col not in index:
                raise StateError(f"grant names column {col!r} absent from {name}; validate first")
        picks = [index[col] for col in wanted]
        types = [schema[i][1] for i in picks]
        rows = tuple(
            tuple(row[i] for i in picks)
            for row in table.rows
            if eval_predicate(row, schema, g.row_predicate)
        )
        return Segment(
            origin=name,
            columns=tuple(wanted),
            column_types=tuple(types),
            rows=rows,
            extracted_at=now,
        )


def load_table_csv(store: TableStore, name: str, path) -> Table:
    """Load one CSV (RFC 4180) with a two-row header: names, then types."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            names = next(reader)
            types = [t.strip() for t in next(reader)]
        except StopIteration:
            raise BadConfig(f"{path}: missing header rows") from None
        if len(names) != len(types):
            raise BadConfig(f"{path}: header rows disagree on column count")
        schema = tuple(zip([n.strip() for n in names], types))
        rows = []
        for rownum, record in enumerate(reader, start=3):
            if len(record) != len(schema):
                raise TypeMismatch(f"{path} line {rownum}: expected {len(schema)} cells")
            rows.append(
                tuple(
                    _parse_cell(cell, typ, f"{path} line {rownum} column {col}")
                    for cell, (col, typ) in zip(record, schema)
                )
            )
    return store.register_table(name, schema, rows)


def _parse_cell(text: str, column_type: str, where: str):
    try:
        if column_type == "INT":
            return int(text)
        if column_type == "REAL":
            return check_cell(float(text), "REAL", where)
        if column_type == DATE:
            return date_to_days(text.strip())
        if column_type == "TEXT":
            return text
    except TypeMismatch:
        raise
    except ValueError as exc:
        raise TypeMismatch(f"{where}: {exc}") from None
    raise TypeMismatch(f"{where}: unknown column type {column_type!r}")
