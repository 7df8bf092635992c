"""Sessions and the SQL execution / transaction tools.

A session is one agent conversation: one database identity, one privilege
snapshot, one security policy and one backend connection. Every action tool
goes through the same pipeline before the backend is touched::

    parse -> action match -> verify(requirements) -> transaction state -> execute
"""

from __future__ import annotations

import contextlib
import enum
import queue
import threading
import uuid

from bridgescope.analyzer import TXN_ACTIONS, Action, parse
from bridgescope.backends.base import Backend, Connection
from bridgescope.config import Settings
from bridgescope.errors import (
    ActionMismatch,
    AlreadyInTransaction,
    BackendError,
    CommitAfterFailure,
    NoActiveTransaction,
    SecurityViolation,
    TransactionAborted,
)
from bridgescope.privileges import PrivilegeSet, SecurityPolicy, exposed_actions, verify


class TxnState(str, enum.Enum):
    NONE = "none"
    ACTIVE = "active"
    FAILED = "failed"  # active, but poisoned by an error: only rollback is accepted


class Session:
    def __init__(
        self,
        backend: Backend,
        user: str | None = None,
        policy: SecurityPolicy | None = None,
        settings: Settings | None = None,
        session_id: str | None = None,
    ):
        self.backend = backend
        self.settings = settings or Settings()
        self.policy = policy or SecurityPolicy()
        self.session_id = session_id or uuid.uuid4().hex
        self.conn: Connection = backend.connect(user, statement_timeout=self.settings.statement_timeout)
        self.user = self.conn.current_user()
        # privileges are a per-session snapshot; reconnecting refreshes them
        self.privileges: PrivilegeSet = self.conn.introspect_privileges(self.user)
        self.exposed: frozenset[Action] = frozenset(exposed_actions(self.privileges, self.policy))
        self.txn_state = TxnState.NONE
        # serializes calls within the session; held by the dispatcher
        self.lock = threading.RLock()
        self._readers: queue.SimpleQueue[Connection] = queue.SimpleQueue()
        self._all_readers: list[Connection] = []
        self._closed = False

    @contextlib.contextmanager
    def reader(self):
        """A spare read connection for concurrent read-only work (proxy fan-out)."""
        try:
            conn = self._readers.get_nowait()
        except queue.Empty:
            conn = self.backend.connect(self.user, statement_timeout=self.settings.statement_timeout)
            self._all_readers.append(conn)
        try:
            yield conn
        finally:
            self._readers.put(conn)

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        if self.txn_state is not TxnState.NONE:
            with contextlib.suppress(BackendError):
                self.conn.txn_rollback()
        for conn in [self.conn, *self._all_readers]:
            conn.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def run_action_tool(session: Session, action: Action, sql: str, conn: Connection | None = None):
    """Execute ``sql`` through the dedicated tool for ``action``.

    ``conn`` lets the proxy run read-only statements on a spare connection;
    it is only ever passed outside a transaction.
    """
    stmt = parse(sql)
    if stmt.action in TXN_ACTIONS:
        raise ActionMismatch("transaction control must use the begin, commit and rollback tools")
    if stmt.action is not action:
        raise ActionMismatch(f"the {action.value.lower()} tool only accepts {action.value} statements, got {stmt.action.value}")
    violation = verify(stmt.requirements, session.privileges, session.policy)
    if violation is not None:
        raise SecurityViolation(violation)
    if session.txn_state is TxnState.FAILED:
        raise TransactionAborted("current transaction is aborted; call rollback")
    target = conn or session.conn
    try:
        result = target.execute(stmt.raw_text)
    except BackendError:
        if session.txn_state is TxnState.ACTIVE and target is session.conn:
            session.txn_state = TxnState.FAILED
        raise
    return result.to_payload()


def begin(session: Session) -> dict:
    if session.txn_state is not TxnState.NONE:
        raise AlreadyInTransaction("a transaction is already active in this session")
    session.conn.txn_begin()
    session.txn_state = TxnState.ACTIVE
    return {"transaction": "active"}


def commit(session: Session) -> dict:
    if session.txn_state is TxnState.NONE:
        raise NoActiveTransaction("no transaction is active")
    if session.txn_state is TxnState.FAILED:
        raise CommitAfterFailure("the transaction failed; only rollback is accepted")
    try:
        session.conn.txn_commit()
    except BackendError:
        # a failed COMMIT (e.g. deferred constraint) ends the transaction
        with contextlib.suppress(BackendError):
            session.conn.txn_rollback()
        session.txn_state = TxnState.NONE
        raise
    session.txn_state = TxnState.NONE
    return {"transaction": "committed"}


def rollback(session: Session) -> dict:
    if session.txn_state is TxnState.NONE:
        raise NoActiveTransaction("no transaction is active")
    try:
        session.conn.txn_rollback()
    finally:
        session.txn_state = TxnState.NONE
    return {"transaction": "rolled back"}
