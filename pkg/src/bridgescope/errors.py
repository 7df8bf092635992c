"""Exception hierarchy with stable machine-readable error codes.

Every error that can cross the tool wire carries a ``code`` from the
``BS-<AREA>-<NNN>`` namespace. Codes are part of the protocol and must not be
renumbered.
"""

from __future__ import annotations


class BridgeScopeError(Exception):
    code = "BS-SYS-000"

    def __init__(self, message: str = "", *, path: str | None = None):
        super().__init__(message)
        self.message = message
        self.path = path

    def to_payload(self) -> dict:
        payload = {"error_code": self.code, "message": self.message}
        if self.path:
            payload["path"] = self.path
        return payload


# -- SQL analysis ---------------------------------------------------------


class SQLSyntaxError(BridgeScopeError):
    code = "BS-SQL-002"


class MultiStatement(BridgeScopeError):
    code = "BS-SQL-003"


class ActionMismatch(BridgeScopeError):
    code = "BS-SQL-001"


class BackendError(BridgeScopeError):
    """Engine-reported failure; ``engine_code`` is the backend's own code."""

    code = "BS-SQL-004"

    def __init__(self, message: str = "", *, engine_code: str | None = None, path: str | None = None):
        super().__init__(message, path=path)
        self.engine_code = engine_code

    def to_payload(self) -> dict:
        payload = super().to_payload()
        if self.engine_code:
            payload["engine_code"] = self.engine_code
        return payload


class StatementTimeout(BackendError):
    code = "BS-SQL-005"


# -- security -------------------------------------------------------------


class SecurityViolation(BridgeScopeError):
    """Raised form of a :class:`~bridgescope.privileges.Violation`."""

    code = "BS-SEC-000"

    def __init__(self, violation, *, path: str | None = None):
        super().__init__(violation.message, path=path)
        self.violation = violation
        self.code = violation.code


# -- transactions ---------------------------------------------------------


class AlreadyInTransaction(BridgeScopeError):
    code = "BS-TXN-001"


class NoActiveTransaction(BridgeScopeError):
    code = "BS-TXN-002"


class CommitAfterFailure(BridgeScopeError):
    code = "BS-TXN-003"


class TransactionAborted(BridgeScopeError):
    """A statement was sent to a transaction poisoned by an earlier failure."""

    code = "BS-TXN-004"


# -- context retrieval ----------------------------------------------------


class UnknownObject(BridgeScopeError):
    code = "BS-CTX-001"


class UnknownColumn(BridgeScopeError):
    code = "BS-CTX-002"


# -- proxy ----------------------------------------------------------------


class DepthExceeded(BridgeScopeError):
    code = "BS-PRX-001"


class ArgumentMismatch(BridgeScopeError):
    code = "BS-PRX-002"


class TransformError(BridgeScopeError):
    code = "BS-PRX-003"

    def __init__(self, message: str = "", *, step: int | None = None, path: str | None = None):
        super().__init__(message, path=path)
        self.step = step

    def to_payload(self) -> dict:
        payload = super().to_payload()
        if self.step is not None:
            payload["step"] = self.step
        return payload


# -- wire / registry ------------------------------------------------------


class UnknownTool(BridgeScopeError):
    code = "BS-RPC-001"

    def __init__(self, message: str = "tool is not available", *, path: str | None = None):
        super().__init__(message, path=path)


class ToolNotExposed(UnknownTool):
    """Tool exists but is hidden from this session.

    Shares the wire code and message of :class:`UnknownTool` so that hidden
    and nonexistent tools are indistinguishable to the agent.
    """


class MalformedArgs(BridgeScopeError):
    code = "BS-RPC-002"


class DuplicateName(BridgeScopeError):
    code = "BS-RPC-003"


class BackendUnavailable(BridgeScopeError):
    code = "BS-SYS-001"


class ConfigError(BridgeScopeError):
    code = "BS-SYS-002"


class ScenarioError(BridgeScopeError):
    code = "BS-HRN-001"
