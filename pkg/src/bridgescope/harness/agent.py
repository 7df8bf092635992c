"""Scripted agents and the clients they use to talk to a tool server.

The agent only sees what comes back over the wire, and every response line
for ``tools/list`` and ``tools/call`` is counted toward ``agent_visible_bytes``.
In ``coarse_baseline`` mode the same script runs against the two-tool
baseline: SQL tools map onto ``execute_sql`` and proxy units are chained by
the agent itself, so all intermediate data passes through it.
"""

from __future__ import annotations

import json
import os
import subprocess
import sys
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

from bridgescope.backends import MemoryBackend
from bridgescope.config import Settings
from bridgescope.errors import ScenarioError
from bridgescope.harness.fixtures import fixture_sql
from bridgescope.harness.scenario import MODES, Scenario
from bridgescope.harness.tools import register_analytics
from bridgescope.privileges import SecurityPolicy, parse_annotation
from bridgescope.proxy import PROXY_TOOL, TransformSpec, apply_transform
from bridgescope.server import ToolServer

SQL_TOOLS = {"select", "insert", "update", "delete", "create", "drop", "alter", "truncate"}
TXN_TOOLS = {"begin": "BEGIN", "commit": "COMMIT", "rollback": "ROLLBACK"}
_SECURITY_CODES = ("BS-SEC-", "BS-RPC-001")


@dataclass
class RunMetrics:
    scenario: str
    mode: str
    tool_calls: int = 0
    agent_visible_bytes: int = 0
    sql_calls: int = 0
    aborted_before_sql: bool = False
    outcome: str = "completed"
    final_payload: Any = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("final_payload")
        return d


class ToolCallFailed(Exception):
    def __init__(self, payload: dict):
        super().__init__(payload.get("message", ""))
        self.payload = payload


# -- clients -------------------------------------------------------------------


class InProcessClient:
    """Feeds JSON-RPC lines straight into a server's dispatch core."""

    def __init__(self, server: ToolServer, user: str | None):
        self.server = server
        self.session = server.open_session(user)

    def send_line(self, line: str) -> str:
        return self.server.handle_line(self.session, line)

    def close(self) -> None:
        self.session.close()


class StdioClient:
    """Talks to ``bridgescope serve`` in a child process over stdin/stdout."""

    def __init__(self, argv: list[str], env: dict | None = None):
        self.proc = subprocess.Popen(
            argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True, encoding="utf-8", bufsize=1, env=env
        )

    def send_line(self, line: str) -> str:
        self.proc.stdin.write(line + "\n")
        self.proc.stdin.flush()
        out = self.proc.stdout.readline()
        if not out:
            raise ScenarioError("server process closed the connection")
        return out.rstrip("\n")

    def close(self) -> None:
        if self.proc.stdin:
            self.proc.stdin.close()
        self.proc.wait(timeout=30)


# -- agent -----------------------------------------------------------------------


class ScriptedAgent:
    def __init__(self, client, mode: str):
        if mode not in MODES:
            raise ScenarioError(f"mode must be one of {MODES}")
        self.client = client
        self.mode = mode
        self._id = 0
        self.tools: set[str] = set()
        self.schema: dict | None = None

    def _rpc(self, method: str, params: dict | None = None, counted: bool = True):
        self._id += 1
        line = self.client.send_line(json.dumps({"jsonrpc": "2.0", "id": self._id, "method": method, "params": params or {}}))
        if counted:
            self.metrics.agent_visible_bytes += len(line.encode("utf-8"))
        response = json.loads(line)
        if response.get("id") != self._id:
            raise ScenarioError(f"response id {response.get('id')!r} does not match request {self._id}")
        if "error" in response:
            raise ScenarioError(f"protocol error: {response['error']}")
        return response["result"]

    def _tool(self, name: str, args: dict):
        self.metrics.tool_calls += 1
        if name in SQL_TOOLS or name == "execute_sql" or name == PROXY_TOOL:
            self.metrics.sql_calls += 1
        result = self._rpc("tools/call", {"name": name, "arguments": args})
        payload = json.loads(result["content"][0]["text"])
        if result.get("isError"):
            raise ToolCallFailed(payload)
        return payload

    # coarse mode: route each scripted call through the baseline toolset
    def _call(self, name: str, args: dict):
        if self.mode == "fine_grained":
            return self._tool(name, args)
        if name in SQL_TOOLS:
            return self._tool("execute_sql", {"sql": args["sql"]})
        if name in TXN_TOOLS:
            return self._tool("execute_sql", {"sql": TXN_TOOLS[name]})
        if name == PROXY_TOOL:
            return self._chain(args["target_tool"], args.get("tool_args", {}))
        return self._tool(name, args)

    def _chain(self, tool: str, args: dict):
        """Run a proxy unit by hand, the way an agent without the proxy must."""
        if tool == PROXY_TOOL:
            return self._chain(args["target_tool"], args.get("tool_args", {}))
        bound = {}
        for key, value in args.items():
            if isinstance(value, dict) and "tool" in value:
                produced = self._chain(value["tool"], value.get("args", {}))
                bound[key] = apply_transform(TransformSpec.from_wire(value.get("transform")), produced)
            elif isinstance(value, dict) and set(value) == {"literal"}:
                bound[key] = value["literal"]
            else:
                bound[key] = value
        return self._call(tool, bound)

    def _has_tool(self, name: str) -> bool:
        if self.mode == "fine_grained":
            return name in self.tools
        if name in SQL_TOOLS or name in TXN_TOOLS:
            return "execute_sql" in self.tools
        return name == PROXY_TOOL or name in self.tools

    def _has_access(self, obj: str, actions: list[str]) -> bool:
        if self.schema is None:
            return False
        for entry in self.schema.get("objects", []):
            if obj not in (entry["object"], entry["object"].split(".", 1)[-1]):
                continue
            definition = entry.get("definition", "")
            if self.mode == "coarse_baseline" or not definition.startswith("-- Access:"):
                return True
            granted = {a.value for a in parse_annotation(definition)}
            return set(actions) <= granted
        return False

    def run(self, scenario: Scenario) -> RunMetrics:
        self.metrics = m = RunMetrics(scenario.name, self.mode)
        self._rpc("initialize", {"clientInfo": {"name": "scripted-agent"}}, counted=False)
        self.tools = {t["name"] for t in self._rpc("tools/list")["tools"]}
        for step in scenario.steps:
            if "finish" in step:
                break
            if "require_tools" in step:
                if not all(self._has_tool(t) for t in step["require_tools"]):
                    m.outcome = "aborted"
                    break
            elif "require_access" in step:
                need = step["require_access"]
                if not self._has_access(need["object"], need.get("actions", [])):
                    m.outcome = "aborted"
                    break
            else:
                try:
                    payload = self._call(step["call"], step.get("args", {}))
                except ToolCallFailed as e:
                    code = e.payload.get("error_code", "")
                    security = code.startswith(_SECURITY_CODES) or e.payload.get("engine_code") == "42501"
                    m.outcome = "aborted" if security else "failed"
                    m.final_payload = e.payload
                    break
                if step["call"] == "get_schema":
                    self.schema = payload
                m.final_payload = payload
        m.tool_calls += 1  # the final answer (or the decision to give up)
        m.aborted_before_sql = m.outcome == "aborted" and m.sql_calls == 0
        return m


# -- running -----------------------------------------------------------------------


def _policy_toml(policy: dict) -> str:
    lines = []
    for section, body in policy.items():
        lines.append(f"[{section}]")
        lines += [f"{k} = {json.dumps(v)}" for k, v in body.items()]
    return "\n".join(lines) + "\n"


def run_scenario(
    scenario: Scenario,
    mode: str,
    *,
    scale: int = 20_000,
    seed: int = 0,
    transport: str = "inproc",
    settings: Settings | None = None,
) -> RunMetrics:
    toolset = "fine" if mode == "fine_grained" else "coarse"
    script = fixture_sql(scenario.fixture, scale, seed)
    if transport == "inproc":
        backend = MemoryBackend(script)
        try:
            policy = SecurityPolicy.from_mapping(scenario.policy) if scenario.policy else None
            server = ToolServer(backend, policy=policy, settings=settings, toolset=toolset)
            register_analytics(server, scenario.tools)
            client = InProcessClient(server, scenario.user)
            try:
                return ScriptedAgent(client, mode).run(scenario)
            finally:
                client.close()
        finally:
            backend.close()
    if transport != "stdio":
        raise ScenarioError(f"unknown transport {transport!r}")
    with tempfile.TemporaryDirectory(prefix="bridgescope-run-") as tmp:
        fixture = Path(tmp) / "fixture.sql"
        fixture.write_text(script)
        argv = [
            sys.executable, "-m", "bridgescope", "serve",
            "--backend-url", f"memory://{fixture}",
            "--user", scenario.user,
            "--toolset", toolset,
        ]  # fmt: skip
        if scenario.tools:
            argv += ["--analytics", ",".join(scenario.tools)]
        if scenario.policy:
            policy_file = Path(tmp) / "policy.toml"
            policy_file.write_text(_policy_toml(scenario.policy))
            argv += ["--policy", str(policy_file)]
        # the child must not pick up connection overrides meant for other runs
        env = {k: v for k, v in os.environ.items() if not k.startswith("BRIDGESCOPE_")}
        client = StdioClient(argv, env)
        try:
            return ScriptedAgent(client, mode).run(scenario)
        finally:
            client.close()

