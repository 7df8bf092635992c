"""Proxy units: route producer outputs into a consumer tool without the agent.

Wire format of a proxy call::

    {"target_tool": "trend_analyze",
     "tool_args": {
        "sales":   {"tool": "select", "args": {"sql": "SELECT ..."}, "transform": ["identity"]},
        "window":  7,
        "label":   {"literal": {"tool": "not a producer"}}}}

An argument value is a producer when it is an object with a ``tool`` key, an
explicit literal when it is ``{"literal": v}``, and a plain literal otherwise.
A producer's own ``args`` follow the same rules, so units nest. A producer
whose tool is ``proxy`` takes ``target_tool``/``tool_args`` and is unfolded
into the equivalent nested unit.

Transform steps run left to right::

    "identity" | "concat"
    {"op": "project", "fields": ["x", "y"]}
    {"op": "rename", "mapping": {"old": "new"}}
    {"op": "pick", "path": ["rows", 0, "x"]}
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable

from bridgescope.errors import ArgumentMismatch, BridgeScopeError, DepthExceeded, MalformedArgs, TransformError

PROXY_TOOL = "proxy"
TRANSFORM_OPS = ("identity", "project", "rename", "pick", "concat")


# -- transforms ---------------------------------------------------------------


@dataclass(frozen=True)
class TransformStep:
    op: str
    fields: tuple[str, ...] = ()
    mapping: tuple[tuple[str, str], ...] = ()
    path: tuple[str | int, ...] = ()

    @classmethod
    def from_wire(cls, doc) -> TransformStep:
        if isinstance(doc, str):
            doc = {"op": doc}
        if not isinstance(doc, dict) or doc.get("op") not in TRANSFORM_OPS:
            raise MalformedArgs(f"unknown transform step: {doc!r}")
        op = doc["op"]
        expected = {"identity": set(), "concat": set(), "project": {"fields"}, "rename": {"mapping"}, "pick": {"path"}}[op]
        if set(doc) - {"op"} != expected:
            raise MalformedArgs(f"transform step {op!r} takes exactly {sorted(expected) or 'no'} parameters")
        if op == "project":
            if not isinstance(doc["fields"], list) or not all(isinstance(f, str) for f in doc["fields"]):
                raise MalformedArgs("project.fields must be a list of field names")
            return cls(op, fields=tuple(doc["fields"]))
        if op == "rename":
            m = doc["mapping"]
            if not isinstance(m, dict) or not all(isinstance(v, str) for v in m.values()):
                raise MalformedArgs("rename.mapping must map field names to field names")
            return cls(op, mapping=tuple(m.items()))
        if op == "pick":
            p = doc["path"]
            if not isinstance(p, list) or not all(isinstance(x, (str, int)) and not isinstance(x, bool) for x in p):
                raise MalformedArgs("pick.path must be a list of keys and indexes")
            return cls(op, path=tuple(p))
        return cls(op)


@dataclass(frozen=True)
class TransformSpec:
    steps: tuple[TransformStep, ...] = ()

    @classmethod
    def from_wire(cls, doc) -> TransformSpec:
        if doc is None:
            return cls()
        if not isinstance(doc, list):
            doc = [doc]
        return cls(tuple(TransformStep.from_wire(s) for s in doc))


def _records(value, step: int, op: str) -> tuple[list[dict], bool]:
    if isinstance(value, dict):
        return [value], True
    if isinstance(value, list) and all(isinstance(r, dict) for r in value):
        return value, False
    raise TransformError(f"{op} needs a record or a list of records", step=step)


def _apply_step(s: TransformStep, value, i: int):
    if s.op == "identity":
        return value
    if s.op == "project":
        rows, single = _records(value, i, s.op)
        out = []
        for r in rows:
            missing = [f for f in s.fields if f not in r]
            if missing:
                raise TransformError(f"project: field {missing[0]!r} not in input", step=i)
            out.append({f: r[f] for f in s.fields})
        return out[0] if single else out
    if s.op == "rename":
        rows, single = _records(value, i, s.op)
        mapping = dict(s.mapping)
        out = []
        for r in rows:
            missing = [k for k in mapping if k not in r]
            if missing:
                raise TransformError(f"rename: field {missing[0]!r} not in input", step=i)
            renamed = {mapping.get(k, k): v for k, v in r.items()}
            if len(renamed) != len(r):
                raise TransformError("rename: two fields would get the same name", step=i)
            out.append(renamed)
        return out[0] if single else out
    if s.op == "pick":
        cur = value
        for key in s.path:
            try:
                if isinstance(key, int) and isinstance(cur, list):
                    cur = cur[key]
                elif isinstance(key, str) and isinstance(cur, dict):
                    cur = cur[key]
                else:
                    raise KeyError(key)
            except (KeyError, IndexError):
                raise TransformError(f"pick: path element {key!r} not found", step=i) from None
        return cur
    # concat
    if not isinstance(value, list) or not all(isinstance(part, list) for part in value):
        raise TransformError("concat needs a list of lists", step=i)
    return [item for part in value for item in part]


def apply_transform(spec: TransformSpec, value):
    """Run the pipeline left to right; the failing step index is reported."""
    for i, step in enumerate(spec.steps):
        value = _apply_step(step, value, i)
    return value


# -- planning -----------------------------------------------------------------


@dataclass
class PlanNode:
    """One tool invocation in the execution tree.

    ``producers`` maps argument name to (child node, transform). ``order`` is
    the post-order index: children always run before their parent.
    """

    tool: str
    path: str
    literals: dict[str, Any] = field(default_factory=dict)
    producers: dict[str, tuple[PlanNode, TransformSpec]] = field(default_factory=dict)
    order: int = -1
    read_only: bool = True

    @property
    def levels(self) -> int:
        """Proxy-unit layers below and including this node (a plain tool call is 0)."""
        if not self.producers:
            return 0
        return 1 + max(child.levels for child, _ in self.producers.values())


@dataclass
class ToolInfo:
    """What the planner needs to know about a tool."""

    input_schema: dict
    read_only: bool


def _is_producer(value) -> bool:
    return isinstance(value, dict) and "tool" in value


def _unwrap_literal(value):
    if isinstance(value, dict) and set(value) == {"literal"}:
        return value["literal"]
    return value


class Planner:
    def __init__(self, lookup: Callable[[str], ToolInfo], depth_limit: int = 8):
        # lookup raises UnknownTool / ToolNotExposed
        self.lookup = lookup
        self.depth_limit = depth_limit
        self._counter = 0

    def plan(self, request: dict) -> PlanNode:
        if not isinstance(request, dict) or set(request) - {"target_tool", "tool_args"} or "target_tool" not in request:
            raise MalformedArgs("proxy takes 'target_tool' and 'tool_args'")
        self._counter = 0
        return self._unit(request.get("target_tool"), request.get("tool_args", {}), "target_tool", 1)

    def _unit(self, tool, args, path: str, level: int) -> PlanNode:
        if not isinstance(tool, str):
            raise MalformedArgs("tool names must be strings", path=path)
        if not isinstance(args, dict):
            raise MalformedArgs("tool arguments must be an object", path=path)
        if tool == PROXY_TOOL:
            if set(args) - {"target_tool", "tool_args"} or "target_tool" not in args:
                raise ArgumentMismatch("a proxy producer takes 'target_tool' and 'tool_args'", path=path)
            return self._unit(args["target_tool"], args.get("tool_args", {}), path, level)
        try:
            info = self.lookup(tool)
        except BridgeScopeError as e:
            e.path = e.path or path
            raise
        node = PlanNode(tool=tool, path=path, read_only=info.read_only)
        declared = info.input_schema.get("properties", {})
        required = set(info.input_schema.get("required", []))
        closed = info.input_schema.get("additionalProperties", True) is False
        undeclared = sorted(a for a in args if a not in declared) if closed else []
        if undeclared:
            raise ArgumentMismatch(f"{tool} has no argument {undeclared[0]!r}", path=path)
        missing = sorted(required - set(args))
        if missing:
            raise ArgumentMismatch(f"{tool} needs argument {missing[0]!r}", path=path)
        base = "tool_args" if path == "target_tool" else f"{path}.args"
        for name, value in args.items():
            if _is_producer(value):
                if level > self.depth_limit:
                    raise DepthExceeded(f"proxy nesting exceeds the limit of {self.depth_limit}", path=f"{base}.{name}")
                extra = set(value) - {"tool", "args", "transform"}
                if extra:
                    raise MalformedArgs(f"unknown producer keys {sorted(extra)}", path=f"{base}.{name}")
                try:
                    transform = TransformSpec.from_wire(value.get("transform"))
                except MalformedArgs as e:
                    e.path = f"{base}.{name}.transform"
                    raise
                child = self._unit(value["tool"], value.get("args", {}), f"{base}.{name}", level + 1)
                node.producers[name] = (child, transform)
                node.read_only = node.read_only and child.read_only
            else:
                node.literals[name] = _unwrap_literal(value)
        node.order = self._counter
        self._counter += 1
        return node


def walk(node: PlanNode):
    """Nodes in execution (post-) order."""
    for child, _ in node.producers.values():
        yield from walk(child)
    yield node


# -- execution ----------------------------------------------------------------


Invoke = Callable[[PlanNode, dict], Any]


class Executor:
    """Runs a plan bottom-up; ``invoke(node, args)`` performs one tool call."""

    def __init__(self, invoke: Invoke, *, parallel: bool, workers: int = 4, invoke_parallel: Invoke | None = None):
        self.invoke = invoke
        self.invoke_parallel = invoke_parallel or invoke
        self.parallel = parallel
        self.workers = workers

    def run(self, node: PlanNode):
        return self._run(node, self.invoke)

    def _run(self, node: PlanNode, invoke: Invoke):
        args = dict(node.literals)
        names = list(node.producers)
        fan_out = self.parallel and len(names) > 1 and all(node.producers[n][0].read_only for n in names)
        if fan_out:
            with ThreadPoolExecutor(max_workers=min(self.workers, len(names))) as pool:
                futures = {n: pool.submit(self._produce, node.producers[n], self.invoke_parallel) for n in names}
                # bind by name; completion order is irrelevant. Surface the
                # first failure in declared order for determinism.
                outcomes = {}
                for n in names:
                    try:
                        outcomes[n] = futures[n].result()
                    except BaseException as e:
                        outcomes[n] = e
                for n in names:
                    if isinstance(outcomes[n], BaseException):
                        raise outcomes[n]
                args.update(outcomes)
        else:
            for n in names:
                args[n] = self._produce(node.producers[n], invoke)
        try:
            return invoke(node, args)
        except BridgeScopeError as e:
            e.path = e.path or node.path
            raise

    def _produce(self, producer: tuple[PlanNode, TransformSpec], invoke: Invoke):
        child, transform = producer
        value = self._run(child, invoke)
        try:
            return apply_transform(transform, value)
        except TransformError as e:
            e.path = e.path or f"{child.path}.transform[{e.step}]"
            raise
