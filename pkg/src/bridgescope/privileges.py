"""Database-side privileges, user-side security policy, and the gate between them.

A grant on ``ObjectRef(schema, "*")`` covers every object of that schema; the
backends use it for schema-level CREATE.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from bridgescope.analyzer import (
    ACTION_ORDER,
    DATA_ACTIONS,
    TXN_ACTIONS,
    WRITE_ACTIONS,
    AccessRequirement,
    Action,
    ObjectRef,
)
from bridgescope.errors import ConfigError

DEFAULT_SCHEMA = "public"
WILDCARD = "*"


def _key(obj: ObjectRef, default_schema: str) -> tuple[str, str]:
    return (obj.schema_name or default_schema, obj.object_name)


@dataclass(frozen=True)
class PrivilegeSet:
    grants: frozenset[tuple[Action, ObjectRef]] = frozenset()
    default_schema: str = DEFAULT_SCHEMA
    _index: frozenset = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for action, _ in self.grants:
            if action not in DATA_ACTIONS:
                raise ValueError(f"{action} cannot be granted")
        index = frozenset((a, *_key(o, self.default_schema)) for a, o in self.grants)
        object.__setattr__(self, "_index", index)

    @classmethod
    def of(cls, pairs: Iterable[tuple[Action | str, ObjectRef | str]], default_schema: str = DEFAULT_SCHEMA):
        grants = set()
        for action, obj in pairs:
            if isinstance(obj, str):
                obj = ObjectRef.parse(obj)
            grants.add((Action(action), obj.resolve(default_schema)))
        return cls(frozenset(grants), default_schema)

    def allows(self, action: Action, obj: ObjectRef) -> bool:
        schema, name = _key(obj, self.default_schema)
        return (action, schema, name) in self._index or (action, schema, WILDCARD) in self._index

    def actions_on(self, obj: ObjectRef) -> set[Action]:
        """Actions granted on exactly ``obj`` (schema-wide grants excluded)."""
        schema, name = _key(obj, self.default_schema)
        return {a for a, s, n in self._index if s == schema and n == name}

    def actions(self) -> set[Action]:
        return {a for a, _ in self.grants}

    def objects(self) -> set[ObjectRef]:
        return {o for _, o in self.grants if o.object_name != WILDCARD}

    def __len__(self) -> int:
        return len(self.grants)


def _object_set(entries, default_schema: str) -> frozenset[tuple[str, str]]:
    return frozenset(_key(e if isinstance(e, ObjectRef) else ObjectRef.parse(e), default_schema) for e in entries)


def _matches(key: tuple[str, str], entries: frozenset[tuple[str, str]]) -> bool:
    return key in entries or (key[0], WILDCARD) in entries


@dataclass(frozen=True)
class SecurityPolicy:
    """User-side narrowing of privileges. Blacklists win over whitelists."""

    object_whitelist: frozenset[ObjectRef] | None = None
    object_blacklist: frozenset[ObjectRef] = frozenset()
    action_whitelist: frozenset[Action] | None = None
    action_blacklist: frozenset[Action] = frozenset()
    default_schema: str = DEFAULT_SCHEMA

    def __post_init__(self):
        for name in ("action_whitelist", "action_blacklist"):
            bad = {a for a in getattr(self, name) or () if a not in DATA_ACTIONS}
            if bad:
                raise ConfigError(f"{name} may only list SQL actions, got {sorted(map(str, bad))}")
        object.__setattr__(
            self,
            "_white",
            None if self.object_whitelist is None else _object_set(self.object_whitelist, self.default_schema),
        )
        object.__setattr__(self, "_black", _object_set(self.object_blacklist, self.default_schema))

    def permits_action(self, action: Action) -> bool:
        if action in self.action_blacklist:
            return False
        return self.action_whitelist is None or action in self.action_whitelist

    def permits_object(self, obj: ObjectRef) -> bool:
        key = _key(obj, self.default_schema)
        if _matches(key, self._black):
            return False
        return self._white is None or _matches(key, self._white)

    @classmethod
    def from_mapping(cls, doc: Mapping, default_schema: str = DEFAULT_SCHEMA) -> SecurityPolicy:
        """Build from the policy document layout::

            [objects]
            whitelist = ["public.sales"]   # optional
            blacklist = ["salaries"]
            [actions]
            blacklist = ["DROP"]
        """
        unknown = set(doc) - {"objects", "actions"}
        if unknown:
            raise ConfigError(f"unknown policy sections: {sorted(unknown)}")
        objects = doc.get("objects", {})
        actions = doc.get("actions", {})
        for section, body in (("objects", objects), ("actions", actions)):
            if not isinstance(body, Mapping) or set(body) - {"whitelist", "blacklist"}:
                raise ConfigError(f"[{section}] accepts only 'whitelist' and 'blacklist' arrays")

        def objs(values):
            try:
                return frozenset(ObjectRef.parse(v) for v in values)
            except (ValueError, AttributeError) as e:
                raise ConfigError(f"bad object name in policy: {e}") from None

        def acts(values):
            try:
                return frozenset(Action(str(v).upper()) for v in values)
            except ValueError as e:
                raise ConfigError(f"bad action in policy: {e}") from None

        return cls(
            object_whitelist=objs(objects["whitelist"]) if "whitelist" in objects else None,
            object_blacklist=objs(objects.get("blacklist", [])),
            action_whitelist=acts(actions["whitelist"]) if "whitelist" in actions else None,
            action_blacklist=acts(actions.get("blacklist", [])),
            default_schema=default_schema,
        )

    @classmethod
    def load(cls, path: str | Path, default_schema: str = DEFAULT_SCHEMA) -> SecurityPolicy:
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib
        try:
            with open(path, "rb") as f:
                doc = tomllib.load(f)
        except (OSError, tomllib.TOMLDecodeError) as e:
            raise ConfigError(f"cannot read policy file {path}: {e}") from None
        return cls.from_mapping(doc, default_schema)


class ViolationKind(str, enum.Enum):
    NO_PRIVILEGE = "NoPrivilege"
    POLICY_BLOCKED = "PolicyBlocked"
    ACTION_MISMATCH = "ActionMismatch"


_VIOLATION_CODES = {
    ViolationKind.NO_PRIVILEGE: "BS-SEC-001",
    ViolationKind.POLICY_BLOCKED: "BS-SEC-002",
    ViolationKind.ACTION_MISMATCH: "BS-SQL-001",
}


@dataclass(frozen=True)
class Violation:
    kind: ViolationKind
    requirement: AccessRequirement | None
    message: str

    @property
    def code(self) -> str:
        return _VIOLATION_CODES[self.kind]


def exposed_actions(priv: PrivilegeSet, policy: SecurityPolicy) -> set[Action]:
    """Actions whose dedicated tool this user may see."""
    result = {
        a
        for a, o in priv.grants
        if policy.permits_action(a) and policy.permits_object(o)
    }
    if result & WRITE_ACTIONS:
        result |= TXN_ACTIONS
    return result


def object_visible(obj: ObjectRef, priv: PrivilegeSet, policy: SecurityPolicy) -> bool:
    return bool(priv.actions_on(obj)) and policy.permits_object(obj)


def verify(reqs: Iterable[AccessRequirement], priv: PrivilegeSet, policy: SecurityPolicy) -> Violation | None:
    """Return ``None`` when every requirement is granted and permitted, else the first violation."""
    for req in sorted(reqs, key=AccessRequirement.sort_key):
        if not priv.allows(req.action, req.object):
            return Violation(
                ViolationKind.NO_PRIVILEGE, req, f"permission denied: {req.action} on {req.object.qualified}"
            )
        if not policy.permits_action(req.action):
            return Violation(
                ViolationKind.POLICY_BLOCKED, req, f"{req.action} is not permitted by the security policy"
            )
        if not policy.permits_object(req.object):
            # the object is granted, so naming it would confirm that it exists
            return Violation(
                ViolationKind.POLICY_BLOCKED, req, "the statement uses an object the security policy does not permit"
            )
    return None


ANNOTATION_PREFIX = "-- Access:"
_ANNOTATION_RE = re.compile(r"^-- Access:(True|False)(?:, Permissions:([A-Z,]*))?$")


def granted_actions(obj: ObjectRef, priv: PrivilegeSet, policy: SecurityPolicy | None = None) -> list[Action]:
    actions = priv.actions_on(obj)
    if policy is not None:
        actions = {a for a in actions if policy.permits_action(a)}
    return sorted(actions, key=ACTION_ORDER.__getitem__)


def annotation_line(actions: Iterable[Action]) -> str:
    actions = sorted(set(actions), key=ACTION_ORDER.__getitem__)
    if not actions:
        return f"{ANNOTATION_PREFIX}False"
    return f"{ANNOTATION_PREFIX}True, Permissions:{','.join(a.value for a in actions)}"


def annotate(obj: ObjectRef, rendered: str, priv: PrivilegeSet, policy: SecurityPolicy | None = None) -> str:
    """Prefix a rendered object with its privilege annotation line.

    With ``policy`` given, actions the policy blocks are left out so the agent
    is not told it may do what the gate will refuse.
    """
    return annotation_line(granted_actions(obj, priv, policy)) + "\n" + rendered


def parse_annotation(text: str) -> set[Action]:
    first = text.split("\n", 1)[0]
    m = _ANNOTATION_RE.match(first)
    if m is None:
        raise ValueError(f"not a privilege annotation: {first!r}")
    if m.group(1) == "False" or not m.group(2):
        return set()
    return {Action(a) for a in m.group(2).split(",")}
