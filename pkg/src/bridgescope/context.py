"""Context retrieval tools: get_schema, get_object and get_value."""

from __future__ import annotations

from dataclasses import dataclass

from bridgescope.analyzer import AccessRequirement, Action, ObjectRef
from bridgescope.backends.base import Connection, ObjectDetail, canonical_type
from bridgescope.errors import SecurityViolation, UnknownColumn, UnknownObject
from bridgescope.privileges import annotate, object_visible, verify

FULL = "full"
HIERARCHICAL = "hierarchical"


@dataclass
class SchemaRendering:
    mode: str
    entries: list[tuple[ObjectRef, str | None]]  # body is None in hierarchical mode

    def to_payload(self) -> dict:
        objects = []
        for ref, body in self.entries:
            item = {"object": ref.qualified, "kind": ref.kind}
            if body is not None:
                item["definition"] = body
            objects.append(item)
        return {"mode": self.mode, "objects": objects}


@dataclass(frozen=True)
class ValueMatch:
    value: str
    score: float


# -- rendering ---------------------------------------------------------------


def _name(ref: ObjectRef, default_schema: str) -> str:
    return ref.object_name if ref.schema_name in (None, default_schema) else ref.qualified


def render_object(detail: ObjectDetail, default_schema: str = "public") -> str:
    """DDL-like text for one object, without annotation."""
    name = _name(detail.ref, default_schema)
    lines = []
    for c in detail.columns:
        declared = canonical_type(c.type)
        line = f"  {c.name} {declared}" if declared else f"  {c.name}"
        if not c.nullable:
            line += " NOT NULL"
        if c.default is not None:
            line += f" DEFAULT {c.default}"
        lines.append(line)
    if detail.primary_key:
        lines.append(f"  PRIMARY KEY ({', '.join(detail.primary_key)})")
    for cols in detail.unique:
        lines.append(f"  UNIQUE ({', '.join(cols)})")
    for fk in detail.foreign_keys:
        lines.append(
            f"  FOREIGN KEY ({', '.join(fk.columns)}) REFERENCES "
            f"{_name(fk.ref_object, default_schema)}({', '.join(fk.ref_columns)})"
        )
    keyword = "VIEW" if detail.ref.kind == "view" else "TABLE"
    text = f"CREATE {keyword} {name} (\n" + ",\n".join(lines) + "\n);"
    for idx in detail.indexes:
        unique = "UNIQUE " if idx.unique else ""
        text += f"\nCREATE {unique}INDEX {idx.name} ON {name} ({', '.join(idx.columns)});"
    return text


def _visible_objects(session, conn: Connection) -> list[ObjectRef]:
    return [r for r in conn.list_objects() if object_visible(r, session.privileges, session.policy)]


def get_schema(session, conn: Connection | None = None) -> SchemaRendering:
    conn = conn or session.conn
    visible = _visible_objects(session, conn)
    if len(visible) >= session.settings.schema_threshold:
        return SchemaRendering(HIERARCHICAL, [(r, None) for r in visible])
    default = session.privileges.default_schema
    entries = [
        (r, annotate(r, render_object(conn.object_detail(r), default), session.privileges, session.policy))
        for r in visible
    ]
    return SchemaRendering(FULL, entries)


def resolve_visible(session, conn: Connection, name: str) -> ObjectRef:
    """Resolve a user-supplied object name; hidden and absent objects look the same."""
    try:
        ref = ObjectRef.parse(name).resolve(session.privileges.default_schema)
    except ValueError:
        raise UnknownObject(f"unknown object: {name}") from None
    for candidate in _visible_objects(session, conn):
        if candidate == ref:
            return candidate
    raise UnknownObject(f"unknown object: {name}")


def get_object(session, name: str, conn: Connection | None = None) -> dict:
    conn = conn or session.conn
    ref = resolve_visible(session, conn, name)
    detail = conn.object_detail(ref)
    body = annotate(ref, render_object(detail, session.privileges.default_schema), session.privileges, session.policy)
    return {"object": ref.qualified, "kind": ref.kind, "definition": body}


# -- value retrieval ----------------------------------------------------------


def trigrams(text: str) -> frozenset[str]:
    padded = "  " + text.casefold() + " "
    return frozenset(padded[i : i + 3] for i in range(len(padded) - 2))


def similarity(key: str, value: str) -> float:
    """Case-folded character-trigram Jaccard similarity; exact matches score 1.0."""
    if key.casefold() == value.casefold():
        return 1.0
    a, b = trigrams(key), trigrams(value)
    return len(a & b) / len(a | b)


def levenshtein(a: str, b: str) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def edit_ratio(a: str, b: str) -> float:
    longest = max(len(a), len(b))
    return 1.0 if longest == 0 else 1.0 - levenshtein(a, b) / longest


def rank_values(key: str, values, k: int) -> list[ValueMatch]:
    """Top-k distinct values by similarity, then edit-distance ratio, then value."""
    domain = {str(v) for v in values if v is not None}
    scored = sorted((-similarity(key, v), -edit_ratio(key, v), v) for v in domain)
    return [ValueMatch(v, -s) for s, _, v in scored[:k]]


def _split_column(session, text: str) -> tuple[str, str]:
    head, sep, column = text.rpartition(".")
    if not sep or not head or not column:
        raise UnknownColumn(f"column reference must be 'table.column', got {text!r}")
    if column.startswith('"') and column.endswith('"') and len(column) > 1:
        return head, column[1:-1].replace('""', '"')
    return head, column.lower()


def get_value(session, column: str, key: str, k: int | None = None, conn: Connection | None = None) -> dict:
    conn = conn or session.conn
    k = session.settings.default_k if k is None else k
    if k < 1:
        raise ValueError("k must be at least 1")
    table, col = _split_column(session, column)
    ref = resolve_visible(session, conn, table)
    violation = verify({AccessRequirement(ref, Action.SELECT)}, session.privileges, session.policy)
    if violation is not None:
        raise SecurityViolation(violation)
    detail = conn.object_detail(ref)
    if detail.column(col) is None:
        raise UnknownColumn(f"unknown column {col!r} in {ref.qualified}")
    values, truncated = conn.distinct_values(ref, col, session.settings.value_cap)
    matches = rank_values(key, values, k)
    return {
        "column": f"{ref.qualified}.{col}",
        "values": [{"value": m.value, "score": round(m.score, 6)} for m in matches],
        "truncated": truncated,
    }
