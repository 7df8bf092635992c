"""Scenario documents.

A scenario is a JSON file::

    {"name": "A_read", "role": "admin", "task_kind": "read", "fixture": "chain_store",
     "policy": {"actions": {"blacklist": ["DROP"]}},          # optional
     "tools": ["trend_analyze"],                              # optional external tools
     "steps": [
        {"require_tools": ["select"]},
        {"call": "get_schema"},
        {"require_access": {"object": "brand_a_sales", "actions": ["SELECT"]}},
        {"call": "select", "args": {"sql": "SELECT ..."}},
        {"finish": true}],
     "expected": {"fine_grained": {"outcome": "completed", "tool_calls": 3}}}

``require_*`` steps encode the agent's decision policy: when the listed tools
are missing, or the last schema shows no such access, the agent gives up.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from bridgescope.errors import ScenarioError
from bridgescope.harness.fixtures import FIXTURES, ROLES
from bridgescope.harness.tools import ANALYTICS_NAMES

ROLE_NAMES = tuple(ROLES)
TASK_KINDS = ("read", "write", "pipeline")
MODES = ("fine_grained", "coarse_baseline")
OUTCOMES = ("completed", "aborted", "failed")
STEP_KEYS = ("call", "require_tools", "require_access", "finish")


@dataclass
class Scenario:
    name: str
    role: str
    task_kind: str
    fixture: str
    steps: list[dict]
    policy: dict | None = None
    description: str = ""
    expected: dict = field(default_factory=dict)
    tools: list[str] = field(default_factory=list)
    source: str | None = None

    @property
    def user(self) -> str:
        return ROLES[self.role]

    @classmethod
    def from_dict(cls, doc: dict, source: str | None = None) -> Scenario:
        where = source or doc.get("name", "<scenario>")
        if not isinstance(doc, dict):
            raise ScenarioError(f"{where}: scenario must be an object")
        missing = {"name", "role", "task_kind", "fixture", "steps"} - set(doc)
        if missing:
            raise ScenarioError(f"{where}: missing keys {sorted(missing)}")
        unknown = set(doc) - {"name", "role", "task_kind", "fixture", "steps", "policy", "tools", "description", "expected"}
        if unknown:
            raise ScenarioError(f"{where}: unknown keys {sorted(unknown)}")
        if doc["role"] not in ROLE_NAMES:
            raise ScenarioError(f"{where}: role must be one of {ROLE_NAMES}")
        if doc["task_kind"] not in TASK_KINDS:
            raise ScenarioError(f"{where}: task_kind must be one of {TASK_KINDS}")
        if doc["fixture"] not in FIXTURES:
            raise ScenarioError(f"{where}: unknown fixture {doc['fixture']!r}")
        steps = doc["steps"]
        if not isinstance(steps, list) or not steps:
            raise ScenarioError(f"{where}: steps must be a non-empty list")
        for i, step in enumerate(steps):
            kinds = [k for k in STEP_KEYS if k in step] if isinstance(step, dict) else []
            if len(kinds) != 1:
                raise ScenarioError(f"{where}: step {i} must have exactly one of {STEP_KEYS}")
            if "call" in step and set(step) - {"call", "args"}:
                raise ScenarioError(f"{where}: step {i} has unknown keys")
        tools = doc.get("tools", [])
        if not isinstance(tools, list) or not all(t in ANALYTICS_NAMES for t in tools):
            raise ScenarioError(f"{where}: tools must list names from {ANALYTICS_NAMES}")
        if "finish" not in steps[-1]:
            raise ScenarioError(f"{where}: the last step must be finish")
        for mode, exp in doc.get("expected", {}).items():
            if mode not in MODES or exp.get("outcome", "completed") not in OUTCOMES:
                raise ScenarioError(f"{where}: bad expectation for {mode!r}")
        return cls(
            name=doc["name"],
            role=doc["role"],
            task_kind=doc["task_kind"],
            fixture=doc["fixture"],
            steps=steps,
            policy=doc.get("policy"),
            description=doc.get("description", ""),
            expected=doc.get("expected", {}),
            tools=list(tools),
            source=source,
        )

    @classmethod
    def load(cls, path: str | Path) -> Scenario:
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ScenarioError(f"cannot read scenario {path}: {e}") from None
        return cls.from_dict(doc, str(path))


def builtin_dir() -> Path:
    return Path(__file__).parent / "scenarios"


def load_suite(directory: str | Path | None = None) -> list[Scenario]:
    directory = Path(directory) if directory else builtin_dir()
    files = sorted(directory.glob("*.json"))
    if not files:
        raise ScenarioError(f"no scenario files in {directory}")
    return [Scenario.load(f) for f in files]


def find_scenario(name_or_path: str) -> Scenario:
    path = Path(name_or_path)
    if path.suffix == ".json" and path.exists():
        return Scenario.load(path)
    for s in load_suite():
        if s.name == name_or_path:
            return s
    raise ScenarioError(f"unknown scenario {name_or_path!r}")
