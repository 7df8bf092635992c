"""Unified database interface every tool is built on."""

from __future__ import annotations

import abc
import datetime as _dt
import decimal
import re
import sqlite3
from dataclasses import dataclass, field
from typing import Any

import sqlglot
from sqlglot.errors import TokenError
from sqlglot.tokens import TokenType

from bridgescope.analyzer import DIALECT, ObjectRef
from bridgescope.errors import BackendError
from bridgescope.privileges import PrivilegeSet


@dataclass(frozen=True)
class BackendCapabilities:
    transactional_ddl: bool
    isolation_default: str
    identifier_folding: str  # lower | upper | exact


@dataclass
class ExecResult:
    kind: str  # "rows" | "affected"
    rows: list[dict[str, Any]] = field(default_factory=list)
    columns: list[str] = field(default_factory=list)
    affected_count: int = 0

    def to_payload(self):
        if self.kind == "rows":
            return [{k: to_jsonable(v) for k, v in r.items()} for r in self.rows]
        return {"affected": self.affected_count}


@dataclass(frozen=True)
class ColumnInfo:
    name: str
    type: str
    nullable: bool
    default: str | None = None


@dataclass(frozen=True)
class ForeignKeyInfo:
    columns: tuple[str, ...]
    ref_object: ObjectRef
    ref_columns: tuple[str, ...]


@dataclass(frozen=True)
class IndexInfo:
    name: str
    columns: tuple[str, ...]
    unique: bool


@dataclass
class ObjectDetail:
    ref: ObjectRef
    columns: list[ColumnInfo]
    primary_key: tuple[str, ...] = ()
    unique: list[tuple[str, ...]] = field(default_factory=list)
    foreign_keys: list[ForeignKeyInfo] = field(default_factory=list)
    indexes: list[IndexInfo] = field(default_factory=list)

    def column(self, name: str) -> ColumnInfo | None:
        for c in self.columns:
            if c.name == name:
                return c
        return None


def to_jsonable(value):
    if isinstance(value, decimal.Decimal):
        # integral numerics come back as ints on every engine (70.00 -> 70)
        return int(value) if value.is_finite() and value == value.to_integral_value() else float(value)
    if isinstance(value, (_dt.date, _dt.datetime, _dt.time)):
        return value.isoformat()
    if isinstance(value, (bytes, bytearray, memoryview)):
        return bytes(value).hex()
    return value


_TYPE_ALIASES = {
    "int": "integer",
    "int4": "integer",
    "integer": "integer",
    "int8": "bigint",
    "bigint": "bigint",
    "int2": "smallint",
    "smallint": "smallint",
    "float8": "double precision",
    "double": "double precision",
    "double precision": "double precision",
    "float4": "real",
    "real": "real",
    "float": "double precision",
    "bool": "boolean",
    "boolean": "boolean",
    "timestamp without time zone": "timestamp",
    "timestamptz": "timestamp with time zone",
    "character varying": "varchar",
    "character": "char",
    "decimal": "numeric",
}


def canonical_type(declared: str) -> str:
    """Map an engine's spelling of a column type to one canonical spelling."""
    t = re.sub(r"\s+", " ", declared.strip().lower())
    t = re.sub(r"\s*\(\s*", "(", t)
    t = re.sub(r"\s*,\s*", ",", t)
    t = t.replace(" )", ")")
    m = re.match(r"^([a-z ]+?)(\(.*\))?$", t)
    if not m:
        return t
    base, args = m.group(1).strip(), m.group(2) or ""
    return _TYPE_ALIASES.get(base, base) + args


def split_statements(script: str) -> list[str]:
    """Split a SQL script on top-level semicolons (strings and comments respected)."""
    if "$" not in script and "\\" not in script:
        # no dollar quoting or backslash escapes: SQLite's statement scanner
        # agrees with PostgreSQL's and is much faster on large fixtures
        return _split_simple(script)
    try:
        tokens = sqlglot.tokenize(script, read=DIALECT)
    except TokenError as e:
        raise BackendError(f"cannot tokenize script: {e}") from None
    statements, start = [], 0
    for tok in tokens:
        if tok.token_type == TokenType.SEMICOLON:
            text = script[start : tok.start].strip()
            if text:
                statements.append(text)
            start = tok.end + 1
    tail = script[start:].strip()
    if tail and any(t.start >= start for t in tokens):
        statements.append(tail)
    return statements


def _split_simple(script: str) -> list[str]:
    statements, start, pos = [], 0, 0
    while True:
        pos = script.find(";", pos)
        if pos < 0:
            break
        pos += 1
        if sqlite3.complete_statement(script[start:pos]):
            text = script[start : pos - 1].strip()
            if text and not _only_comments(text):
                statements.append(text)
            start = pos
    tail = script[start:].strip()
    if tail and not _only_comments(tail):
        statements.append(tail)
    return statements


def _only_comments(text: str) -> bool:
    return not re.sub(r"--[^\n]*|/\*.*?\*/", "", text, flags=re.S).strip()


def quote_ident(name: str) -> str:
    return '"' + name.replace('"', '""') + '"'


def qualified_name(ref: ObjectRef) -> str:
    if ref.schema_name:
        return f"{quote_ident(ref.schema_name)}.{quote_ident(ref.object_name)}"
    return quote_ident(ref.object_name)


class Connection(abc.ABC):
    """One backend connection; owned by exactly one session at a time."""

    user: str | None
    capabilities: BackendCapabilities

    @abc.abstractmethod
    def execute(self, sql: str) -> ExecResult: ...

    @abc.abstractmethod
    def txn_begin(self) -> None: ...

    @abc.abstractmethod
    def txn_commit(self) -> None: ...

    @abc.abstractmethod
    def txn_rollback(self) -> None: ...

    @property
    @abc.abstractmethod
    def in_transaction(self) -> bool: ...

    @abc.abstractmethod
    def list_objects(self) -> list[ObjectRef]: ...

    @abc.abstractmethod
    def object_detail(self, obj: ObjectRef) -> ObjectDetail: ...

    @abc.abstractmethod
    def distinct_values(self, obj: ObjectRef, column: str, cap: int) -> tuple[list, bool]:
        """Up to ``cap`` distinct non-null values and whether the domain was truncated."""

    @abc.abstractmethod
    def introspect_privileges(self, user: str) -> PrivilegeSet: ...

    @abc.abstractmethod
    def close(self) -> None: ...

    def current_user(self) -> str | None:
        """Identity the connection runs as."""
        return self.user

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class Backend(abc.ABC):
    name: str
    default_schema = "public"

    @abc.abstractmethod
    def connect(self, user: str | None = None, *, statement_timeout: float | None = None) -> Connection:
        """Open a connection; ``user=None`` connects with administrative rights."""

    @abc.abstractmethod
    def run_script(self, script: str) -> None:
        """Run a fixture script (DDL, DML, roles and grants) as administrator."""

    def close(self) -> None:
        pass

    def dump(self) -> str:
        """Deterministic full dump of user objects: structure plus ordered rows."""
        with self.connect() as conn:
            return dump_database(conn)


def dump_database(conn: Connection) -> str:
    lines = []
    for ref in conn.list_objects():
        detail = conn.object_detail(ref)
        cols = ", ".join(f"{c.name} {canonical_type(c.type)}{'' if c.nullable else ' not null'}" for c in detail.columns)
        lines.append(f"{ref.kind} {ref.qualified} ({cols}) pk={list(detail.primary_key)}")
        if ref.kind != "table":
            continue
        order = ", ".join(str(i + 1) for i in range(len(detail.columns)))
        result = conn.execute(f"SELECT * FROM {qualified_name(ref)} ORDER BY {order}")
        for row in result.rows:
            lines.append("  " + repr(tuple(to_jsonable(v) for v in row.values())))
    return "\n".join(lines) + "\n"
