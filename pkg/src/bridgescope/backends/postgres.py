"""PostgreSQL adapter (psycopg 3).

Connections run in autocommit mode; transactions are explicit BEGIN/COMMIT/
ROLLBACK so that single writes outside a transaction stay atomic statements.
Introspection reads the system catalogs directly because
``information_schema`` hides objects the connected role has no privilege on.
"""

from __future__ import annotations

import threading

from bridgescope.analyzer import Action, ObjectRef
from bridgescope.backends.base import (
    Backend,
    BackendCapabilities,
    ColumnInfo,
    Connection,
    ExecResult,
    ForeignKeyInfo,
    IndexInfo,
    ObjectDetail,
    qualified_name,
    quote_ident,
    split_statements,
)
from bridgescope.errors import BackendError, BackendUnavailable, StatementTimeout, UnknownObject
from bridgescope.privileges import WILDCARD, PrivilegeSet

_USER_SCHEMAS = """
    n.nspname NOT IN ('pg_catalog', 'information_schema')
    AND n.nspname NOT LIKE 'pg\\_toast%%' AND n.nspname NOT LIKE 'pg\\_temp%%'
"""

LIST_OBJECTS_SQL = f"""
SELECT n.nspname::text, c.relname::text, c.relkind::text
FROM pg_class c JOIN pg_namespace n ON n.oid = c.relnamespace
WHERE c.relkind IN ('r', 'p', 'v', 'm') AND {_USER_SCHEMAS}
ORDER BY 1, 2
"""

RELATION_SQL = """
SELECT c.oid, c.relkind::text FROM pg_class c JOIN pg_namespace n ON n.oid = c.relnamespace
WHERE n.nspname = %s AND c.relname = %s AND c.relkind IN ('r', 'p', 'v', 'm')
"""

COLUMNS_SQL = """
SELECT a.attname::text, format_type(a.atttypid, a.atttypmod), NOT a.attnotnull, pg_get_expr(d.adbin, d.adrelid)
FROM pg_attribute a LEFT JOIN pg_attrdef d ON d.adrelid = a.attrelid AND d.adnum = a.attnum
WHERE a.attrelid = %s AND a.attnum > 0 AND NOT a.attisdropped
ORDER BY a.attnum
"""

CONSTRAINTS_SQL = """
SELECT con.contype::text,
       ARRAY(SELECT a.attname::text FROM unnest(con.conkey) WITH ORDINALITY k(n, i)
             JOIN pg_attribute a ON a.attrelid = con.conrelid AND a.attnum = k.n ORDER BY k.i),
       fn.nspname::text, fc.relname::text,
       ARRAY(SELECT a.attname::text FROM unnest(con.confkey) WITH ORDINALITY k(n, i)
             JOIN pg_attribute a ON a.attrelid = con.confrelid AND a.attnum = k.n ORDER BY k.i)
FROM pg_constraint con
LEFT JOIN pg_class fc ON fc.oid = con.confrelid
LEFT JOIN pg_namespace fn ON fn.oid = fc.relnamespace
WHERE con.conrelid = %s AND con.contype IN ('p', 'u', 'f')
"""

# explicit indexes only: those backing a PK/UNIQUE constraint are reported as constraints
INDEXES_SQL = """
SELECT ic.relname::text, i.indisunique,
       ARRAY(SELECT a.attname::text FROM unnest(i.indkey) WITH ORDINALITY k(n, o)
             JOIN pg_attribute a ON a.attrelid = i.indrelid AND a.attnum = k.n ORDER BY k.o)
FROM pg_index i JOIN pg_class ic ON ic.oid = i.indexrelid
WHERE i.indrelid = %s AND NOT EXISTS (SELECT 1 FROM pg_constraint con WHERE con.conindid = i.indexrelid)
"""

ROLE_SQL = "SELECT rolsuper FROM pg_roles WHERE rolname = %s"

TABLE_PRIVILEGES_SQL = f"""
SELECT n.nspname::text, c.relname::text, c.relkind::text,
       has_table_privilege(%(u)s, c.oid, 'SELECT'),
       has_table_privilege(%(u)s, c.oid, 'INSERT'),
       has_table_privilege(%(u)s, c.oid, 'UPDATE'),
       has_table_privilege(%(u)s, c.oid, 'DELETE'),
       has_table_privilege(%(u)s, c.oid, 'TRUNCATE'),
       pg_has_role(%(u)s, c.relowner, 'USAGE')
FROM pg_class c JOIN pg_namespace n ON n.oid = c.relnamespace
WHERE c.relkind IN ('r', 'p', 'v', 'm') AND {_USER_SCHEMAS}
"""

SCHEMA_CREATE_SQL = f"""
SELECT n.nspname::text FROM pg_namespace n
WHERE has_schema_privilege(%(u)s, n.oid, 'CREATE') AND {_USER_SCHEMAS}
"""

_KINDS = {"r": "table", "p": "table", "v": "view", "m": "view"}
_PRIV_COLUMNS = [Action.SELECT, Action.INSERT, Action.UPDATE, Action.DELETE, Action.TRUNCATE]

CAPABILITIES = BackendCapabilities(transactional_ddl=True, isolation_default="read committed", identifier_folding="lower")


def _psycopg():
    try:
        import psycopg
    except ImportError as e:  # pragma: no cover - depends on install extras
        raise BackendUnavailable("the PostgreSQL adapter needs the 'psycopg' package") from e
    return psycopg


def _engine_error(e) -> BackendError:
    sqlstate = getattr(e, "sqlstate", None)
    message = str(e).strip()
    if sqlstate == "57014":
        return StatementTimeout(message, engine_code=sqlstate)
    return BackendError(message, engine_code=sqlstate)


class PostgresBackend(Backend):
    name = "postgres"

    def __init__(self, url: str):
        self.url = url

    def connect(self, user: str | None = None, *, statement_timeout: float | None = None) -> PostgresConnection:
        psycopg = _psycopg()
        kwargs = {"user": user} if user else {}
        kwargs["client_encoding"] = "UTF8"
        try:
            raw = psycopg.connect(self.url, autocommit=True, **kwargs)
        except psycopg.OperationalError as e:
            raise BackendUnavailable(f"cannot connect to PostgreSQL: {str(e).strip()}") from None
        conn = PostgresConnection(raw, user)
        if statement_timeout:
            raw.execute(f"SET statement_timeout = {int(statement_timeout * 1000)}")
        return conn

    def run_script(self, script: str) -> None:
        psycopg = _psycopg()
        with self.connect() as conn:
            for stmt in split_statements(script):
                try:
                    conn.raw.execute(stmt)
                except psycopg.errors.DuplicateObject:
                    # roles are cluster-wide and survive between fixture databases
                    if not stmt.lstrip().upper().startswith(("CREATE ROLE", "CREATE USER")):
                        raise
                except psycopg.Error as e:
                    raise _engine_error(e) from None


class PostgresConnection(Connection):
    capabilities = CAPABILITIES

    def __init__(self, raw, user: str | None):
        self.raw = raw
        self.user = user
        self._lock = threading.RLock()
        self._txn = False

    def _query(self, sql: str, params=None):
        psycopg = _psycopg()
        try:
            with self.raw.cursor() as cur:
                cur.execute(sql, params)
                return cur.fetchall()
        except psycopg.Error as e:
            raise _engine_error(e) from None

    def execute(self, sql: str) -> ExecResult:
        psycopg = _psycopg()
        with self._lock:
            try:
                with self.raw.cursor() as cur:
                    cur.execute(sql)
                    if cur.description is not None:
                        columns = [d.name for d in cur.description]
                        rows = [dict(zip(columns, r)) for r in cur.fetchall()]
                        return ExecResult("rows", rows=rows, columns=columns)
                    return ExecResult("affected", affected_count=max(cur.rowcount, 0))
            except psycopg.Error as e:
                raise _engine_error(e) from None

    def txn_begin(self) -> None:
        with self._lock:
            if self._txn:
                raise BackendError("there is already a transaction in progress", engine_code="25001")
            self._query_noresult("BEGIN")
            self._txn = True

    def txn_commit(self) -> None:
        with self._lock:
            if not self._txn:
                raise BackendError("there is no transaction in progress", engine_code="25P01")
            self._txn = False
            self._query_noresult("COMMIT")

    def txn_rollback(self) -> None:
        with self._lock:
            if not self._txn:
                raise BackendError("there is no transaction in progress", engine_code="25P01")
            self._txn = False
            self._query_noresult("ROLLBACK")

    def _query_noresult(self, sql: str) -> None:
        psycopg = _psycopg()
        try:
            self.raw.execute(sql)
        except psycopg.Error as e:
            raise _engine_error(e) from None

    @property
    def in_transaction(self) -> bool:
        return self._txn

    def list_objects(self) -> list[ObjectRef]:
        return [ObjectRef(s, n, _KINDS[k]) for s, n, k in self._query(LIST_OBJECTS_SQL) if not n.startswith("__bs_")]

    def _relation(self, obj: ObjectRef) -> tuple[int, str]:
        rows = self._query(RELATION_SQL, (obj.schema_name or "public", obj.object_name))
        if not rows:
            raise UnknownObject(f"unknown object: {obj.qualified}")
        return rows[0]

    def object_detail(self, obj: ObjectRef) -> ObjectDetail:
        oid, relkind = self._relation(obj)
        ref = ObjectRef(obj.schema_name or "public", obj.object_name, _KINDS[relkind])
        columns = [ColumnInfo(n, t, bool(nullable), d) for n, t, nullable, d in self._query(COLUMNS_SQL, (oid,))]
        pk: tuple[str, ...] = ()
        unique, fks = [], []
        for contype, cols, fschema, ftable, fcols in self._query(CONSTRAINTS_SQL, (oid,)):
            if contype == "p":
                pk = tuple(cols)
            elif contype == "u":
                unique.append(tuple(cols))
            else:
                fks.append(ForeignKeyInfo(tuple(cols), ObjectRef(fschema, ftable, "table"), tuple(fcols)))
        indexes = [IndexInfo(n, tuple(cols), bool(u)) for n, u, cols in self._query(INDEXES_SQL, (oid,))]
        return ObjectDetail(
            ref=ref,
            columns=columns,
            primary_key=pk,
            unique=sorted(unique),
            foreign_keys=sorted(fks, key=lambda f: f.columns),
            indexes=sorted(indexes, key=lambda i: i.name),
        )

    def distinct_values(self, obj: ObjectRef, column: str, cap: int) -> tuple[list, bool]:
        self._relation(obj)
        col = quote_ident(column)
        result = self.execute(
            f"SELECT DISTINCT {col} AS v FROM {qualified_name(obj.resolve('public'))} "
            f"WHERE {col} IS NOT NULL ORDER BY 1 LIMIT {int(cap) + 1}"
        )
        values = [r["v"] for r in result.rows]
        return values[:cap], len(values) > cap

    def introspect_privileges(self, user: str) -> PrivilegeSet:
        if not self._query(ROLE_SQL, (user,)):
            return PrivilegeSet()
        pairs: set[tuple[Action, ObjectRef]] = set()
        for schema, name, kind, *flags, owns in self._query(TABLE_PRIVILEGES_SQL, {"u": user}):
            if name.startswith("__bs_"):
                continue
            ref = ObjectRef(schema, name, _KINDS[kind])
            pairs.update((a, ref) for a, granted in zip(_PRIV_COLUMNS, flags) if granted)
            if owns:
                pairs.update({(Action.ALTER, ref), (Action.DROP, ref)})
        for (schema,) in self._query(SCHEMA_CREATE_SQL, {"u": user}):
            pairs.add((Action.CREATE, ObjectRef(schema, WILDCARD)))
        return PrivilegeSet(frozenset(pairs))

    def current_user(self) -> str:
        if self.user:
            return self.user
        return self._query("SELECT current_user::text")[0][0]

    def close(self) -> None:
        try:
            self.raw.close()
        except Exception:
            pass
