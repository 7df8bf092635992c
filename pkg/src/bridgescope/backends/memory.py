"""Reference backend on SQLite, emulating the PostgreSQL privilege model.

Storage is a private temporary database in WAL mode so that every session
gets its own connection with snapshot isolation; the file is removed on
``close()``. Roles, grants and ownership live in ``__bs_*`` catalog tables and
are transactional like the data. An SQLite authorizer enforces privileges
inside the engine, independently of the tool-side gate.

Statements are written in the PostgreSQL dialect; the small set of
constructs SQLite lacks (``public.`` qualifiers, TRUNCATE, row locks, ILIKE,
``::`` casts) is rewritten through sqlglot before execution.
"""

from __future__ import annotations

import os
import re
import shutil
import sqlite3
import tempfile
import threading
import time

import sqlglot
from sqlglot import exp

from bridgescope.analyzer import DATA_ACTIONS, DIALECT, Action, ObjectRef, fold_identifier
from bridgescope.backends.base import (
    Backend,
    BackendCapabilities,
    ColumnInfo,
    Connection,
    ExecResult,
    ForeignKeyInfo,
    IndexInfo,
    ObjectDetail,
    quote_ident,
    split_statements,
)
from bridgescope.errors import BackendError, StatementTimeout, UnknownObject
from bridgescope.privileges import WILDCARD, PrivilegeSet

SUPERUSER = "postgres"
SCHEMA = "public"
OWNER_ACTIONS = DATA_ACTIONS - {Action.CREATE}
TABLE_PRIVILEGES = {Action.SELECT, Action.INSERT, Action.UPDATE, Action.DELETE, Action.TRUNCATE}

_CATALOG = """
CREATE TABLE IF NOT EXISTS __bs_roles (name TEXT PRIMARY KEY, superuser INTEGER NOT NULL DEFAULT 0);
CREATE TABLE IF NOT EXISTS __bs_grants (
    role TEXT NOT NULL, action TEXT NOT NULL, schema_name TEXT NOT NULL, object_name TEXT NOT NULL,
    PRIMARY KEY (role, action, schema_name, object_name));
CREATE TABLE IF NOT EXISTS __bs_owners (
    schema_name TEXT NOT NULL, object_name TEXT NOT NULL, owner TEXT NOT NULL,
    PRIMARY KEY (schema_name, object_name));
INSERT OR IGNORE INTO __bs_roles VALUES ('postgres', 1);
"""

CAPABILITIES = BackendCapabilities(transactional_ddl=True, isolation_default="serializable", identifier_folding="lower")

# SQLite authorizer action codes
_A = sqlite3
_DDL_CREATE = {_A.SQLITE_CREATE_TABLE, _A.SQLITE_CREATE_VIEW}
_DDL_DROP = {_A.SQLITE_DROP_TABLE, _A.SQLITE_DROP_VIEW, _A.SQLITE_DROP_INDEX}
_ALWAYS_OK = {
    _A.SQLITE_SELECT,
    _A.SQLITE_FUNCTION,
    _A.SQLITE_TRANSACTION,
    _A.SQLITE_SAVEPOINT,
    _A.SQLITE_RECURSIVE,
    _A.SQLITE_REINDEX,
    _A.SQLITE_ANALYZE,
}

_ENGINE_CODES = [
    ("UNIQUE constraint failed", "23505"),
    ("NOT NULL constraint failed", "23502"),
    ("FOREIGN KEY constraint failed", "23503"),
    ("CHECK constraint failed", "23514"),
    ("not authorized", "42501"),
    ("is prohibited", "42501"),
    ("permission denied", "42501"),
    ("no such table", "42P01"),
    ("no such column", "42703"),
    ("already exists", "42P07"),
    ("syntax error", "42601"),
    ("interrupted", "57014"),
    ("database is locked", "55P03"),
]

_ROLE_RE = re.compile(r"^\s*CREATE\s+(?:ROLE|USER)\s+(\w+)(.*)$", re.I | re.S)
_DROP_ROLE_RE = re.compile(r"^\s*DROP\s+(?:ROLE|USER)\s+(?:IF\s+EXISTS\s+)?(\w+)\s*$", re.I)
_GRANT_RE = re.compile(
    r"^\s*(GRANT|REVOKE)\s+(.+?)\s+ON\s+(?:(TABLE|SCHEMA|ALL\s+TABLES\s+IN\s+SCHEMA)\s+)?(.+?)\s+(?:TO|FROM)\s+(.+?)\s*$",
    re.I | re.S,
)
_DDL_VERB = re.compile(r"^(?:\s+|--[^\n]*\n|/\*.*?\*/)*(?:CREATE|DROP|ALTER|SELECT\b.*\bINTO\b)", re.I | re.S)
_OWNER_RE = re.compile(r"^\s*ALTER\s+(?:TABLE|VIEW)\s+(\S+)\s+OWNER\s+TO\s+(\w+)\s*$", re.I)
_NEEDS_REWRITE = re.compile(r"(?i)(\"?public\"?\s*\.|\btruncate\b|\bfor\s+(?:update|share|no\s+key|key\s+share)\b|\bilike\b|::)")


def _engine_error(e: sqlite3.Error) -> BackendError:
    message = str(e)
    code = next((c for pat, c in _ENGINE_CODES if pat in message), None)
    if code == "57014":
        return StatementTimeout("canceling statement due to statement timeout", engine_code=code)
    return BackendError(message, engine_code=code)


def _local_name(name: str) -> ObjectRef:
    ref = ObjectRef.parse(name)
    return ObjectRef(ref.schema_name or SCHEMA, ref.object_name)


class MemoryBackend(Backend):
    name = "memory"

    def __init__(self, script: str | None = None):
        self._dir = tempfile.mkdtemp(prefix="bridgescope-")
        self.path = os.path.join(self._dir, "db.sqlite")
        self._closed = False
        with self._raw() as raw:
            raw.execute("PRAGMA journal_mode=WAL")
            raw.executescript(_CATALOG)
        if script:
            self.run_script(script)

    def _raw(self) -> sqlite3.Connection:
        raw = sqlite3.connect(self.path, isolation_level=None, check_same_thread=False, timeout=5.0)
        raw.execute("PRAGMA foreign_keys=ON")
        raw.execute("PRAGMA synchronous=OFF")
        return raw

    def connect(self, user: str | None = None, *, statement_timeout: float | None = None) -> MemoryConnection:
        if self._closed:
            raise BackendError("backend is closed")
        return MemoryConnection(self, self._raw(), user, statement_timeout)

    def run_script(self, script: str) -> None:
        with self.connect() as conn:
            for stmt in split_statements(script):
                conn.execute(stmt)

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            shutil.rmtree(self._dir, ignore_errors=True)


class MemoryConnection(Connection):
    capabilities = CAPABILITIES

    def __init__(self, backend: MemoryBackend, raw: sqlite3.Connection, user: str | None, timeout: float | None):
        self.backend = backend
        self.raw = raw
        self.user = user
        self.statement_timeout = timeout
        self._lock = threading.RLock()
        self._internal = False
        self._superuser = True
        self._privs: PrivilegeSet = PrivilegeSet()
        self._truncating = False
        self._denied: str | None = None
        self._deadline: float | None = None
        raw.set_authorizer(self._authorize)
        raw.set_progress_handler(self._progress, 2000)
        if user is not None:
            self._refresh_privileges()

    # -- engine-side enforcement ------------------------------------------

    def _refresh_privileges(self) -> None:
        self._superuser = self.user is None or self._is_superuser(self.user)
        if not self._superuser:
            self._privs = self.introspect_privileges(self.user)

    def _is_superuser(self, user: str) -> bool:
        row = self._internal_query("SELECT superuser FROM __bs_roles WHERE name = ?", (user,))
        return bool(row and row[0][0])

    def _allowed(self, action: Action, table: str | None) -> bool:
        if table is None:
            return False
        ref = ObjectRef(SCHEMA, table.lower())
        if self._privs.allows(action, ref):
            return True
        self._denied = f"permission denied for {action.value} on {ref.qualified}"
        return False

    def _authorize(self, code, arg1, arg2, dbname, source):
        if self._internal or self._superuser:
            return sqlite3.SQLITE_OK
        if code in _ALWAYS_OK:
            return sqlite3.SQLITE_OK
        table = arg1
        if code in (_A.SQLITE_READ, _A.SQLITE_INSERT, _A.SQLITE_UPDATE, _A.SQLITE_DELETE) and table:
            if table.startswith("sqlite_"):
                return sqlite3.SQLITE_OK  # SQLite's own schema bookkeeping during DDL
            if table.startswith("__bs_"):
                self._denied = "permission denied"
                return sqlite3.SQLITE_DENY
        if code == _A.SQLITE_READ:
            ok = self._allowed(Action.SELECT, source or table)
        elif code == _A.SQLITE_INSERT:
            ok = self._allowed(Action.INSERT, table)
        elif code == _A.SQLITE_UPDATE:
            ok = self._allowed(Action.UPDATE, table)
        elif code == _A.SQLITE_DELETE:
            ok = self._allowed(Action.TRUNCATE if self._truncating else Action.DELETE, table)
        elif code in _DDL_CREATE:
            ok = self._allowed(Action.CREATE, WILDCARD)
        elif code == _A.SQLITE_CREATE_INDEX:
            ok = self._allowed(Action.ALTER, arg2)
        elif code in _DDL_DROP:
            ok = self._allowed(Action.DROP, arg1 if code != _A.SQLITE_DROP_INDEX else arg2)
        elif code == _A.SQLITE_ALTER_TABLE:
            ok = self._allowed(Action.ALTER, arg2)
        else:
            self._denied = "permission denied"
            ok = False
        return sqlite3.SQLITE_OK if ok else sqlite3.SQLITE_DENY

    def _progress(self):
        if self._deadline is not None and time.monotonic() > self._deadline:
            return 1
        return 0

    def _internal_query(self, sql: str, params=()):
        prev, self._internal = self._internal, True
        try:
            return self.raw.execute(sql, params).fetchall()
        finally:
            self._internal = prev

    # -- statement execution ----------------------------------------------

    def execute(self, sql: str) -> ExecResult:
        with self._lock:
            admin = self._admin_statement(sql)
            if admin is not None:
                return admin
            if self.user is not None:
                self._refresh_privileges()
            statements, truncating = _translate(sql)
            self._denied = None
            self._truncating = truncating
            self._deadline = time.monotonic() + self.statement_timeout if self.statement_timeout else None
            try:
                result = ExecResult("affected")
                implicit = len(statements) > 1 and not self.raw.in_transaction
                if implicit:
                    self.raw.execute("BEGIN")
                try:
                    for stmt in statements:
                        result = self._run_one(stmt)
                except BaseException:
                    if implicit:
                        self.raw.execute("ROLLBACK")
                    raise
                if implicit:
                    self.raw.execute("COMMIT")
                self._track_ownership(sql)
                return result
            except sqlite3.Error as e:
                err = _engine_error(e)
                if err.engine_code == "42501" and self._denied:
                    err = BackendError(self._denied, engine_code="42501")
                raise err from None
            finally:
                self._deadline = None
                self._truncating = False

    def _run_one(self, stmt: str) -> ExecResult:
        cur = self.raw.execute(stmt)
        if cur.description is not None:
            columns = [d[0] for d in cur.description]
            rows = [dict(zip(columns, r)) for r in cur.fetchall()]
            return ExecResult("rows", rows=rows, columns=columns)
        return ExecResult("affected", affected_count=max(cur.rowcount, 0))

    def _track_ownership(self, sql: str) -> None:
        from bridgescope.analyzer import parse

        if not _DDL_VERB.match(sql):
            return
        try:
            parsed = parse(sql)
        except Exception:
            return
        owner = self.user or SUPERUSER
        for req in parsed.requirements:
            ref = ObjectRef(req.object.schema_name or SCHEMA, req.object.object_name)
            if req.action is Action.CREATE and parsed.action is Action.CREATE:
                self._internal_query("INSERT OR REPLACE INTO __bs_owners VALUES (?, ?, ?)", (*_key(ref), owner))
            elif req.action is Action.DROP and parsed.action is Action.DROP:
                self._internal_query("DELETE FROM __bs_owners WHERE schema_name=? AND object_name=?", _key(ref))
                self._internal_query("DELETE FROM __bs_grants WHERE schema_name=? AND object_name=?", _key(ref))
        if parsed.action is Action.ALTER:
            tree = sqlglot.parse_one(sql, read=DIALECT)
            rename = tree.find(exp.AlterRename)
            if rename is not None and isinstance(tree.this, exp.Table):
                old = _key(ObjectRef(SCHEMA, fold_identifier(tree.this.name, tree.this.this.quoted)))
                new = fold_identifier(rename.this.name, rename.this.this.quoted)
                for table in ("__bs_owners", "__bs_grants"):
                    self._internal_query(
                        f"UPDATE {table} SET object_name=? WHERE schema_name=? AND object_name=?", (new, *old)
                    )

    # -- role and grant statements ----------------------------------------

    def _admin_statement(self, sql: str) -> ExecResult | None:
        m_role, m_drop = _ROLE_RE.match(sql), _DROP_ROLE_RE.match(sql)
        m_grant, m_owner = _GRANT_RE.match(sql), _OWNER_RE.match(sql)
        if not (m_role or m_drop or m_grant or m_owner):
            return None
        if self.user is not None and not self._is_superuser(self.user):
            raise BackendError("permission denied to manage roles and grants", engine_code="42501")
        if m_role:
            name = m_role.group(1).lower()
            superuser = bool(re.search(r"\bSUPERUSER\b", m_role.group(2), re.I))
            if self._internal_query("SELECT 1 FROM __bs_roles WHERE name=?", (name,)):
                raise BackendError(f'role "{name}" already exists', engine_code="42710")
            self._internal_query("INSERT INTO __bs_roles VALUES (?, ?)", (name, int(superuser)))
        elif m_drop:
            name = m_drop.group(1).lower()
            self._internal_query("DELETE FROM __bs_roles WHERE name=?", (name,))
            self._internal_query("DELETE FROM __bs_grants WHERE role=?", (name,))
        elif m_owner:
            ref = _local_name(m_owner.group(1))
            self._internal_query("INSERT OR REPLACE INTO __bs_owners VALUES (?, ?, ?)", (*_key(ref), m_owner.group(2).lower()))
        else:
            self._grant(m_grant)
        return ExecResult("affected")

    def _grant(self, m: re.Match) -> None:
        verb, privs, target_kind, targets, roles = m.groups()
        target_kind = re.sub(r"\s+", " ", (target_kind or "TABLE").upper())
        privs = privs.upper().replace("PRIVILEGES", "").split(",")
        privs = [p.strip() for p in privs if p.strip()]
        roles = [r.strip().lower() for r in roles.split(",")]
        for role in roles:
            if not self._internal_query("SELECT 1 FROM __bs_roles WHERE name=?", (role,)):
                raise BackendError(f'role "{role}" does not exist', engine_code="42704")
        if target_kind == "SCHEMA":
            actions = [Action.CREATE] if "CREATE" in privs or "ALL" in privs else []
            objects = [(t.strip().lower(), WILDCARD) for t in targets.split(",")]
        else:
            if "ALL" in privs:
                actions = sorted(TABLE_PRIVILEGES)
            else:
                try:
                    actions = [Action(p) for p in privs]
                except ValueError as e:
                    raise BackendError(f"unsupported privilege: {e}", engine_code="0LP01") from None
            if target_kind == "ALL TABLES IN SCHEMA":
                schema = targets.strip().lower()
                objects = [_key(r) for r in self.list_objects() if r.schema_name == schema]
            else:
                objects = [_key(_local_name(t.strip())) for t in targets.split(",")]
                known = {_key(r) for r in self.list_objects()}
                for obj in objects:
                    if obj not in known:
                        raise BackendError(f'relation "{obj[1]}" does not exist', engine_code="42P01")
        for role in roles:
            for action in actions:
                for schema, name in objects:
                    if verb.upper() == "GRANT":
                        self._internal_query(
                            "INSERT OR IGNORE INTO __bs_grants VALUES (?, ?, ?, ?)", (role, action.value, schema, name)
                        )
                    else:
                        self._internal_query(
                            "DELETE FROM __bs_grants WHERE role=? AND action=? AND schema_name=? AND object_name=?",
                            (role, action.value, schema, name),
                        )

    # -- transactions -----------------------------------------------------

    def txn_begin(self) -> None:
        with self._lock:
            if self.raw.in_transaction:
                raise BackendError("there is already a transaction in progress", engine_code="25001")
            self.raw.execute("BEGIN")

    def txn_commit(self) -> None:
        with self._lock:
            if not self.raw.in_transaction:
                raise BackendError("there is no transaction in progress", engine_code="25P01")
            try:
                self.raw.execute("COMMIT")
            except sqlite3.Error as e:
                raise _engine_error(e) from None

    def txn_rollback(self) -> None:
        with self._lock:
            if not self.raw.in_transaction:
                raise BackendError("there is no transaction in progress", engine_code="25P01")
            self.raw.execute("ROLLBACK")

    @property
    def in_transaction(self) -> bool:
        return self.raw.in_transaction

    # -- introspection ----------------------------------------------------

    def list_objects(self) -> list[ObjectRef]:
        rows = self._internal_query(
            "SELECT name, type FROM sqlite_master WHERE type IN ('table', 'view') "
            "AND name NOT LIKE 'sqlite\\_%' ESCAPE '\\' AND name NOT LIKE '\\_\\_bs\\_%' ESCAPE '\\'"
        )
        refs = {ObjectRef(SCHEMA, name.lower(), kind) for name, kind in rows}
        return sorted(refs, key=ObjectRef.sort_key)

    def _sqlite_name(self, obj: ObjectRef) -> tuple[str, str]:
        if (obj.schema_name or SCHEMA) != SCHEMA:
            raise UnknownObject(f"unknown object: {obj.qualified}")
        rows = self._internal_query(
            "SELECT name, type FROM sqlite_master WHERE type IN ('table', 'view') AND lower(name) = ?",
            (obj.object_name.lower(),),
        )
        if not rows or obj.object_name.startswith("__bs_") or obj.object_name.startswith("sqlite_"):
            raise UnknownObject(f"unknown object: {obj.qualified}")
        return rows[0]

    def object_detail(self, obj: ObjectRef) -> ObjectDetail:
        name, kind = self._sqlite_name(obj)
        q = quote_ident(name)
        info = self._internal_query(f"PRAGMA table_info({q})")
        pk = tuple(r[1].lower() for r in sorted((r for r in info if r[5]), key=lambda r: r[5]))
        columns = [
            ColumnInfo(r[1].lower(), (r[2] or "").lower(), nullable=not (r[3] or r[1].lower() in pk), default=r[4])
            for r in info
        ]
        fks: dict[int, list] = {}
        for r in self._internal_query(f"PRAGMA foreign_key_list({q})"):
            fks.setdefault(r[0], []).append(r)
        foreign_keys = []
        for _, parts in sorted(fks.items()):
            parts.sort(key=lambda r: r[1])
            ref_table = parts[0][2].lower()
            ref_cols = [p[4] for p in parts]
            if any(c is None for c in ref_cols):
                parent = self._internal_query(f"PRAGMA table_info({quote_ident(parts[0][2])})")
                ref_cols = [r[1] for r in sorted((r for r in parent if r[5]), key=lambda r: r[5])]
            foreign_keys.append(
                ForeignKeyInfo(
                    tuple(p[3].lower() for p in parts), ObjectRef(SCHEMA, ref_table, "table"), tuple(c.lower() for c in ref_cols)
                )
            )
        unique, indexes = [], []
        for r in self._internal_query(f"PRAGMA index_list({q})"):
            idx_name, is_unique, origin = r[1], bool(r[2]), r[3]
            cols = tuple(
                c[2].lower() for c in sorted(self._internal_query(f"PRAGMA index_info({quote_ident(idx_name)})"))
            )
            if origin == "u":
                unique.append(cols)
            elif origin == "c":
                indexes.append(IndexInfo(idx_name.lower(), cols, is_unique))
        return ObjectDetail(
            ref=ObjectRef(SCHEMA, name.lower(), kind),
            columns=columns,
            primary_key=pk if kind == "table" else (),
            unique=sorted(unique),
            foreign_keys=sorted(foreign_keys, key=lambda f: f.columns),
            indexes=sorted(indexes, key=lambda i: i.name),
        )

    def distinct_values(self, obj: ObjectRef, column: str, cap: int) -> tuple[list, bool]:
        name, _ = self._sqlite_name(obj)
        col = quote_ident(column)
        result = self.execute(
            f"SELECT DISTINCT {col} AS v FROM {quote_ident(name)} WHERE {col} IS NOT NULL ORDER BY 1 LIMIT {int(cap) + 1}"
        )
        values = [r["v"] for r in result.rows]
        return values[:cap], len(values) > cap

    def introspect_privileges(self, user: str) -> PrivilegeSet:
        user = user.lower()
        role = self._internal_query("SELECT superuser FROM __bs_roles WHERE name=?", (user,))
        if not role:
            return PrivilegeSet()
        objects = self.list_objects()
        pairs: set[tuple[Action, ObjectRef]] = set()
        if role[0][0]:
            for ref in objects:
                pairs.update((a, ref) for a in OWNER_ACTIONS)
            pairs.add((Action.CREATE, ObjectRef(SCHEMA, WILDCARD)))
            return PrivilegeSet(frozenset(pairs))
        existing = {_key(r): r for r in objects}
        for schema, name in self._internal_query("SELECT schema_name, object_name FROM __bs_owners WHERE owner=?", (user,)):
            if (schema, name) in existing:
                pairs.update((a, existing[(schema, name)]) for a in OWNER_ACTIONS)
        for action, schema, name in self._internal_query(
            "SELECT action, schema_name, object_name FROM __bs_grants WHERE role=?", (user,)
        ):
            if name == WILDCARD:
                pairs.add((Action(action), ObjectRef(schema, WILDCARD)))
            elif (schema, name) in existing:
                pairs.add((Action(action), existing[(schema, name)]))
        return PrivilegeSet(frozenset(pairs))

    def current_user(self) -> str:
        return self.user or SUPERUSER

    def close(self) -> None:
        try:
            self.raw.close()
        except sqlite3.Error:
            pass


def _key(ref: ObjectRef) -> tuple[str, str]:
    return (ref.schema_name or SCHEMA, ref.object_name)


def _translate(sql: str) -> tuple[list[str], bool]:
    """Rewrite PostgreSQL-only syntax; returns statements and whether it was a TRUNCATE."""
    if not _NEEDS_REWRITE.search(sql):
        return [sql], False
    try:
        tree = sqlglot.parse_one(sql, read=DIALECT)
    except sqlglot.errors.SqlglotError:
        return [sql], False  # let the engine report the syntax error
    for table in tree.find_all(exp.Table):
        db = table.args.get("db")
        if isinstance(db, exp.Identifier) and fold_identifier(db.name, db.quoted) == SCHEMA:
            table.set("db", None)
    if isinstance(tree, exp.TruncateTable):
        return [f"DELETE FROM {t.sql(dialect='sqlite')}" for t in tree.expressions], True
    for select in tree.find_all(exp.Select):
        select.set("locks", None)
    return [tree.sql(dialect="sqlite")], False
