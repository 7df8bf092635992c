"""Tool registry, dispatch and the JSON-RPC wire layer.

Methods: ``initialize``, ``ping``, ``tools/list`` and ``tools/call``.
Messages are newline-delimited JSON-RPC 2.0 on stdio or on a TCP socket; both
transports feed the same :meth:`ToolServer.handle_line`. A tool failure is a
normal result with ``isError: true`` whose text is the error payload::

    {"error_code": "BS-SEC-001", "message": "permission denied: ...", "path": "..."}
"""

from __future__ import annotations

import json
import logging
import socketserver
import sys
import threading
from dataclasses import dataclass
from typing import Any, Callable

import jsonschema

from bridgescope import context, proxy, session as sessions
from bridgescope.analyzer import Action
from bridgescope.backends import Backend, open_backend
from bridgescope.config import ServerConfig, Settings
from bridgescope.errors import BridgeScopeError, ConfigError, DuplicateName, MalformedArgs, ToolNotExposed, UnknownTool
from bridgescope.privileges import SecurityPolicy
from bridgescope.session import Session

log = logging.getLogger(__name__)

PROTOCOL_VERSION = "2024-11-05"
SERVER_NAME = "bridgescope"
RISK_CLASSES = ("read", "write", "ddl", "txn", "meta")


@dataclass(frozen=True)
class ToolDescriptor:
    name: str
    description: str
    input_schema: dict
    risk_class: str = "meta"

    def __post_init__(self):
        if self.risk_class not in RISK_CLASSES:
            raise ConfigError(f"risk_class must be one of {RISK_CLASSES}")
        try:
            jsonschema.Draft202012Validator.check_schema(self.input_schema)
        except jsonschema.SchemaError as e:
            raise ConfigError(f"invalid input schema for {self.name}: {e.message}") from None

    def to_wire(self) -> dict:
        return {"name": self.name, "description": self.description, "inputSchema": self.input_schema}


# handler(session, args, conn) -> JSON-able payload; conn is a spare read
# connection when the proxy fans out, else None
Handler = Callable[[Session, dict, Any], Any]


@dataclass
class Tool:
    descriptor: ToolDescriptor
    handler: Handler
    action: Action | None = None  # exposure gate; None means always exposed
    validator: Any = None

    def __post_init__(self):
        self.validator = jsonschema.Draft202012Validator(self.descriptor.input_schema)


def _schema(properties: dict | None = None, required=()) -> dict:
    return {"type": "object", "properties": properties or {}, "required": list(required), "additionalProperties": False}


_SQL_ARG = {"sql": {"type": "string", "minLength": 1}}

_ACTION_RISK = {
    Action.SELECT: "read",
    Action.INSERT: "write",
    Action.UPDATE: "write",
    Action.DELETE: "write",
    Action.CREATE: "ddl",
    Action.DROP: "ddl",
    Action.ALTER: "ddl",
    Action.TRUNCATE: "ddl",
}


def _action_tool(action: Action) -> Tool:
    name = action.value.lower()
    return Tool(
        ToolDescriptor(name, f"Execute one {action.value} statement.", _schema(_SQL_ARG, ["sql"]), _ACTION_RISK[action]),
        lambda s, a, conn, _act=action: sessions.run_action_tool(s, _act, a["sql"], conn),
        action,
    )


def builtin_tools(server: ToolServer) -> list[Tool]:
    tools = [
        Tool(
            ToolDescriptor(
                "get_schema",
                "Database schema: annotated definitions, or object names only for large databases.",
                _schema(),
                "read",
            ),
            lambda s, a, conn: context.get_schema(s, conn).to_payload(),
        ),
        Tool(
            ToolDescriptor(
                "get_object",
                "Annotated definition of one table or view.",
                _schema({"object": {"type": "string", "minLength": 1}}, ["object"]),
                "read",
            ),
            lambda s, a, conn: context.get_object(s, a["object"], conn),
        ),
        Tool(
            ToolDescriptor(
                "get_value",
                "Top-k values of column 'table.column' most similar to key.",
                _schema(
                    {
                        "column": {"type": "string", "minLength": 3},
                        "key": {"type": "string"},
                        "k": {"type": "integer", "minimum": 1},
                    },
                    ["column", "key"],
                ),
                "read",
            ),
            lambda s, a, conn: context.get_value(s, a["column"], a["key"], a.get("k"), conn),
        ),
    ]
    tools += [_action_tool(a) for a in _ACTION_RISK]
    for action, fn in ((Action.BEGIN, sessions.begin), (Action.COMMIT, sessions.commit), (Action.ROLLBACK, sessions.rollback)):
        name = action.value.lower()
        tools.append(
            Tool(
                ToolDescriptor(name, f"{name.capitalize()} a transaction.", _schema(), "txn"),
                lambda s, a, conn, _fn=fn: _fn(s),
                action,
            )
        )
    tools.append(
        Tool(
            ToolDescriptor(
                "proxy",
                "Run target_tool with arguments produced by other tools; only its output is returned. "
                'tool_args values: literal, {"literal": v}, or {"tool", "args", "transform"}.',
                _schema({"target_tool": {"type": "string"}, "tool_args": {"type": "object"}}, ["target_tool"]),
                "meta",
            ),
            server._run_proxy,
        )
    )
    return tools


def coarse_tools() -> list[Tool]:
    """Single generic executor with no action gating or object verification."""

    def schema_all(s: Session, a, conn):
        conn = conn or s.conn
        objects = []
        for ref in conn.list_objects():
            body = context.render_object(conn.object_detail(ref), s.privileges.default_schema)
            objects.append({"object": ref.qualified, "kind": ref.kind, "definition": body})
        return {"mode": context.FULL, "objects": objects}

    return [
        Tool(ToolDescriptor("get_schema", "Database schema.", _schema(), "read"), schema_all),
        Tool(
            ToolDescriptor("execute_sql", "Execute any SQL statement.", _schema(_SQL_ARG, ["sql"]), "write"),
            lambda s, a, conn: s.conn.execute(a["sql"]).to_payload(),
        ),
    ]


def _dumps(value) -> str:
    return json.dumps(value, ensure_ascii=False, separators=(",", ":"), default=str)


class ToolServer:
    def __init__(
        self,
        backend: Backend,
        *,
        policy: SecurityPolicy | None = None,
        settings: Settings | None = None,
        toolset: str = "fine",
        user: str | None = None,
    ):
        if toolset not in ("fine", "coarse"):
            raise ConfigError(f"unknown toolset {toolset!r}")
        self.backend = backend
        self.policy = policy or SecurityPolicy()
        self.settings = settings or Settings()
        self.toolset = toolset
        self.default_user = user
        tools = builtin_tools(self) if toolset == "fine" else coarse_tools()
        self._builtin = {t.descriptor.name: t for t in tools}
        self._external: dict[str, Tool] = {}
        self._registry_lock = threading.Lock()

    @classmethod
    def from_config(cls, config: ServerConfig) -> ToolServer:
        policy = SecurityPolicy.load(config.policy_file) if config.policy_file else None
        return cls(
            open_backend(config.backend_url),
            policy=policy,
            settings=config.settings,
            toolset=config.toolset,
            user=config.user,
        )

    # -- registry -------------------------------------------------------------

    def register_external_tool(self, descriptor: ToolDescriptor, handler: Callable[[dict], Any]) -> None:
        """Add a domain tool; it is listed for every session and usable in proxy units."""
        with self._registry_lock:
            if descriptor.name in self._builtin or descriptor.name in self._external:
                raise DuplicateName(f"a tool named {descriptor.name!r} is already registered")
            self._external[descriptor.name] = Tool(descriptor, lambda s, a, conn: handler(a))

    def _tools(self) -> list[Tool]:
        return [*self._builtin.values(), *self._external.values()]

    def _exposed(self, session: Session, tool: Tool) -> bool:
        return tool.action is None or tool.action in session.exposed

    def list_tools(self, session: Session) -> list[ToolDescriptor]:
        return [t.descriptor for t in self._tools() if self._exposed(session, t)]

    def _lookup(self, session: Session, name: str) -> Tool:
        tool = self._builtin.get(name) or self._external.get(name)
        if tool is None:
            raise UnknownTool()
        if not self._exposed(session, tool):
            raise ToolNotExposed()
        return tool

    # -- sessions -------------------------------------------------------------

    def open_session(self, user: str | None = None, *, policy: SecurityPolicy | None = None, session_id: str | None = None) -> Session:
        return Session(
            self.backend,
            user or self.default_user,
            policy or self.policy,
            self.settings,
            session_id,
        )

    # -- dispatch ---------------------------------------------------------------

    def invoke(self, session: Session, name: str, args: dict, conn=None):
        """Exposure check, argument validation and dispatch (no session lock)."""
        tool = self._lookup(session, name)
        if not isinstance(args, dict):
            raise MalformedArgs("arguments must be an object")
        error = jsonschema.exceptions.best_match(tool.validator.iter_errors(args))
        if error is not None:
            where = ".".join(str(p) for p in error.absolute_path)
            raise MalformedArgs(f"{name}: {error.message}" + (f" (at {where})" if where else ""))
        return tool.handler(session, args, conn)

    def call_tool(self, session: Session, name: str, args: dict | None = None):
        with session.lock:
            return self.invoke(session, name, args if args is not None else {})

    def _run_proxy(self, session: Session, args: dict, conn=None):
        def lookup(name: str) -> proxy.ToolInfo:
            tool = self._lookup(session, name)
            return proxy.ToolInfo(tool.descriptor.input_schema, tool.descriptor.risk_class == "read")

        plan = proxy.Planner(lookup, self.settings.proxy_depth_limit).plan(args)

        def invoke(node, bound):
            return self.invoke(session, node.tool, bound, conn)

        def invoke_parallel(node, bound):
            with session.reader() as reader:
                return self.invoke(session, node.tool, bound, reader)

        executor = proxy.Executor(
            invoke,
            parallel=session.txn_state is sessions.TxnState.NONE,
            workers=self.settings.proxy_workers,
            invoke_parallel=invoke_parallel,
        )
        return executor.run(plan)

    # -- JSON-RPC ---------------------------------------------------------------

    def handle_message(self, session: Session, msg) -> dict | None:
        if not isinstance(msg, dict) or msg.get("jsonrpc") != "2.0" or not isinstance(msg.get("method"), str):
            return _rpc_error(msg.get("id") if isinstance(msg, dict) else None, -32600, "invalid request")
        msg_id = msg.get("id")
        notification = "id" not in msg
        method, params = msg["method"], msg.get("params") or {}
        if not isinstance(params, dict):
            return None if notification else _rpc_error(msg_id, -32602, "params must be an object")
        if method == "initialize":
            result = {
                "protocolVersion": PROTOCOL_VERSION,
                "serverInfo": {"name": SERVER_NAME, "version": _version()},
                "capabilities": {"tools": {}},
            }
        elif method == "ping" or method.startswith("notifications/"):
            result = {}
        elif method == "tools/list":
            result = {"tools": [d.to_wire() for d in self.list_tools(session)]}
        elif method == "tools/call":
            name, arguments = params.get("name"), params.get("arguments", {})
            if not isinstance(name, str):
                return None if notification else _rpc_error(msg_id, -32602, "tools/call needs a tool name")
            result = self._call_result(session, name, arguments)
        else:
            return None if notification else _rpc_error(msg_id, -32601, f"method not found: {method}")
        return None if notification else {"jsonrpc": "2.0", "id": msg_id, "result": result}

    def _call_result(self, session: Session, name: str, arguments) -> dict:
        try:
            payload, is_error = self.call_tool(session, name, arguments), False
        except BridgeScopeError as e:
            payload, is_error = e.to_payload(), True
        except Exception:  # a bug in a tool must not take the server down
            log.exception("tool %s failed", name)
            payload, is_error = {"error_code": "BS-SYS-000", "message": "internal error"}, True
        return {"content": [{"type": "text", "text": _dumps(payload)}], "isError": is_error}

    def handle_line(self, session: Session, line: str) -> str | None:
        line = line.strip()
        if not line:
            return None
        try:
            msg = json.loads(line)
        except json.JSONDecodeError:
            return _dumps(_rpc_error(None, -32700, "parse error"))
        response = self.handle_message(session, msg)
        return None if response is None else _dumps(response)

    # -- transports -------------------------------------------------------------

    def serve_stdio(self, session: Session | None = None, stdin=None, stdout=None) -> None:
        stdin = stdin or sys.stdin
        stdout = stdout or sys.stdout
        own = session is None
        session = session or self.open_session()
        try:
            for line in stdin:
                out = self.handle_line(session, line)
                if out is not None:
                    stdout.write(out + "\n")
                    stdout.flush()
        finally:
            if own:
                session.close()

    def tcp_server(self, host: str = "127.0.0.1", port: int = 0) -> socketserver.ThreadingTCPServer:
        """A listener with one session per TCP connection; call ``serve_forever``."""
        server = self

        class _Handler(socketserver.StreamRequestHandler):
            def handle(self):
                with server.open_session() as s:
                    for raw in self.rfile:
                        out = server.handle_line(s, raw.decode("utf-8", errors="replace"))
                        if out is not None:
                            self.wfile.write(out.encode() + b"\n")
                            self.wfile.flush()

        class _Server(socketserver.ThreadingTCPServer):
            daemon_threads = True
            allow_reuse_address = True

        return _Server((host, port), _Handler)


def _rpc_error(msg_id, code: int, message: str) -> dict:
    return {"jsonrpc": "2.0", "id": msg_id, "error": {"code": code, "message": message}}


def _version() -> str:
    from bridgescope import __version__

    return __version__
