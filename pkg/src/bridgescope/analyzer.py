"""Single-statement SQL analysis.

Classifies a statement by its top-level action and enumerates every
``(object, action)`` pair the engine will check privileges for. Parsing is
done with sqlglot's PostgreSQL grammar; everything after the AST is ours.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from functools import lru_cache

import sqlglot
from sqlglot import exp
from sqlglot.errors import ParseError, TokenError
from sqlglot.tokens import TokenType

from bridgescope.errors import MultiStatement, SQLSyntaxError

# sqlglot logs a warning every time it falls back to exp.Command.
logging.getLogger("sqlglot").setLevel(logging.ERROR)

DIALECT = "postgres"


class Action(str, enum.Enum):
    SELECT = "SELECT"
    INSERT = "INSERT"
    UPDATE = "UPDATE"
    DELETE = "DELETE"
    CREATE = "CREATE"
    DROP = "DROP"
    ALTER = "ALTER"
    TRUNCATE = "TRUNCATE"
    BEGIN = "BEGIN"
    COMMIT = "COMMIT"
    ROLLBACK = "ROLLBACK"
    OTHER = "OTHER"

    def __str__(self) -> str:
        return self.value


ACTION_ORDER = {a: i for i, a in enumerate(Action)}
DATA_ACTIONS = frozenset(
    {
        Action.SELECT,
        Action.INSERT,
        Action.UPDATE,
        Action.DELETE,
        Action.CREATE,
        Action.DROP,
        Action.ALTER,
        Action.TRUNCATE,
    }
)
WRITE_ACTIONS = DATA_ACTIONS - {Action.SELECT}
TXN_ACTIONS = frozenset({Action.BEGIN, Action.COMMIT, Action.ROLLBACK})


def fold_identifier(name: str, quoted: bool = False) -> str:
    """PostgreSQL identifier folding: unquoted names are lower-cased."""
    return name if quoted else name.lower()


@dataclass(frozen=True)
class ObjectRef:
    """A database relation. ``kind`` is informational and ignored by equality."""

    schema_name: str | None
    object_name: str
    kind: str = field(default="unknown", compare=False)

    def __post_init__(self):
        if not self.object_name:
            raise ValueError("object_name must be non-empty")

    @property
    def qualified(self) -> str:
        return f"{self.schema_name}.{self.object_name}" if self.schema_name else self.object_name

    def resolve(self, default_schema: str) -> ObjectRef:
        if self.schema_name is not None:
            return self
        return ObjectRef(default_schema, self.object_name, self.kind)

    def sort_key(self) -> tuple[str, str]:
        return (self.schema_name or "", self.object_name)

    @classmethod
    def parse(cls, text: str, kind: str = "unknown") -> ObjectRef:
        """Parse ``name`` or ``schema.name`` with PostgreSQL quoting rules."""
        parts = _split_dotted(text)
        if len(parts) == 1:
            return cls(None, parts[0], kind)
        if len(parts) == 2:
            return cls(parts[0], parts[1], kind)
        raise ValueError(f"not an object name: {text!r}")

    def __str__(self) -> str:
        return self.qualified


def _split_dotted(text: str) -> list[str]:
    parts: list[str] = []
    buf: list[str] = []
    quoted = False
    was_quoted = False
    i = 0
    text = text.strip()
    while i < len(text):
        ch = text[i]
        if quoted:
            if ch == '"':
                if i + 1 < len(text) and text[i + 1] == '"':
                    buf.append('"')
                    i += 1
                else:
                    quoted = False
            else:
                buf.append(ch)
        elif ch == '"':
            quoted = was_quoted = True
        elif ch == ".":
            parts.append(fold_identifier("".join(buf).strip(), was_quoted))
            buf, was_quoted = [], False
        else:
            buf.append(ch)
        i += 1
    if quoted:
        raise ValueError(f"unterminated quoted identifier: {text!r}")
    parts.append(fold_identifier("".join(buf).strip(), was_quoted))
    if any(not p for p in parts):
        raise ValueError(f"not an object name: {text!r}")
    return parts


@dataclass(frozen=True)
class AccessRequirement:
    object: ObjectRef
    action: Action

    def __post_init__(self):
        if self.action not in DATA_ACTIONS:
            raise ValueError(f"{self.action} is not a privilege-bearing action")

    def sort_key(self) -> tuple:
        return (*self.object.sort_key(), ACTION_ORDER[self.action])


@dataclass(frozen=True)
class ParsedStatement:
    raw_text: str
    action: Action
    requirements: frozenset[AccessRequirement]

    def sorted_requirements(self) -> list[AccessRequirement]:
        return sorted(self.requirements, key=AccessRequirement.sort_key)


_TXN_VERBS = {
    "BEGIN": Action.BEGIN,
    "COMMIT": Action.COMMIT,
    "END": Action.COMMIT,
    "ROLLBACK": Action.ROLLBACK,
    "ABORT": Action.ROLLBACK,
}

_READ_NODES = (exp.Select, exp.SetOperation)
_DML_ACTIONS = {exp.Insert: Action.INSERT, exp.Update: Action.UPDATE, exp.Delete: Action.DELETE}
_TOP_LEVEL = {
    exp.Insert: Action.INSERT,
    exp.Update: Action.UPDATE,
    exp.Delete: Action.DELETE,
    exp.Create: Action.CREATE,
    exp.Drop: Action.DROP,
    exp.Alter: Action.ALTER,
    exp.TruncateTable: Action.TRUNCATE,
    exp.Transaction: Action.BEGIN,
    exp.Commit: Action.COMMIT,
    exp.Rollback: Action.ROLLBACK,
}
_CREATE_KINDS = {"TABLE": "table", "VIEW": "view", "SEQUENCE": "sequence"}


def parse(sql: str) -> ParsedStatement:
    """Parse exactly one statement and derive its action and requirements.

    Raises :class:`SQLSyntaxError` for unparseable or unsupported text and
    :class:`MultiStatement` when more than one statement is present. A single
    trailing semicolon is accepted.
    """
    if not isinstance(sql, str):
        raise SQLSyntaxError("SQL must be text")
    return _parse_cached(sql)


def classify_only(sql: str) -> Action:
    return parse(sql).action


@lru_cache(maxsize=4096)
def _parse_cached(sql: str) -> ParsedStatement:
    tokens = _tokenize(sql)
    verb = tokens[0].text.upper()
    if verb in _TXN_VERBS or (verb == "START" and len(tokens) > 1 and tokens[1].text.upper() == "TRANSACTION"):
        # Transaction control needs no AST; sqlglot mis-parses some spellings.
        return ParsedStatement(sql, _TXN_VERBS.get(verb, Action.BEGIN), frozenset())

    try:
        trees = [t for t in sqlglot.parse(sql, read=DIALECT) if t is not None]
    except (ParseError, TokenError) as e:
        raise SQLSyntaxError(f"could not parse statement: {_first_line(e)}") from None
    if len(trees) != 1:
        raise MultiStatement("exactly one statement is accepted per call")
    tree = trees[0]
    if isinstance(tree, exp.Command):
        raise SQLSyntaxError(f"unsupported statement: {tree.name.upper() or verb}")

    return ParsedStatement(sql, _classify(tree), frozenset(_requirements(tree)))


def _first_line(e: Exception) -> str:
    return str(e).splitlines()[0] if str(e) else type(e).__name__


def _tokenize(sql: str):
    if not sql.strip():
        raise SQLSyntaxError("empty statement")
    try:
        tokens = sqlglot.tokenize(sql, read=DIALECT)
    except TokenError as e:
        raise SQLSyntaxError(f"could not tokenize statement: {_first_line(e)}") from None
    while tokens and tokens[-1].token_type == TokenType.SEMICOLON:
        tokens.pop()
    if not tokens:
        raise SQLSyntaxError("empty statement")
    if any(t.token_type == TokenType.SEMICOLON for t in tokens):
        raise MultiStatement("exactly one statement is accepted per call")
    return tokens


# -- classification -------------------------------------------------------


def _classify(tree: exp.Expression) -> Action:
    embedded = {
        _DML_ACTIONS[type(cte.this)] for cte in tree.find_all(exp.CTE) if type(cte.this) in _DML_ACTIONS
    }
    if isinstance(tree, _READ_NODES):
        if isinstance(tree, exp.Select) and tree.args.get("into") is not None:
            top = Action.CREATE
        elif embedded:
            # writable CTE under a SELECT acts as its DML verb
            return embedded.pop() if len(embedded) == 1 else Action.OTHER
        else:
            return Action.SELECT
    else:
        top = _TOP_LEVEL.get(type(tree), Action.OTHER)
    if embedded - {top}:
        return Action.OTHER
    return top


# -- requirement extraction -----------------------------------------------


def _table_ref(table: exp.Table, kind: str = "unknown") -> ObjectRef | None:
    name_node = table.args.get("this")
    db_node = table.args.get("db")
    if isinstance(name_node, exp.Identifier):
        schema = fold_identifier(db_node.name, db_node.quoted) if isinstance(db_node, exp.Identifier) else None
        return ObjectRef(schema, fold_identifier(name_node.name, name_node.quoted), kind)
    if name_node is None and isinstance(db_node, exp.Identifier):
        # schema-level object, e.g. CREATE SCHEMA s / DROP SCHEMA s
        return ObjectRef(None, fold_identifier(db_node.name, db_node.quoted), kind)
    return None  # table function such as generate_series(...)


def _as_table(node: exp.Expression | None) -> exp.Table | None:
    if isinstance(node, exp.Schema):
        node = node.this
    return node if isinstance(node, exp.Table) else None


def _cte_names(tree: exp.Expression) -> set[str]:
    names = set()
    for cte in tree.find_all(exp.CTE):
        alias = cte.args.get("alias")
        if alias is not None and alias.this is not None:
            ident = alias.this
            names.add(fold_identifier(ident.name, getattr(ident, "quoted", False)))
    return names


def _requirements(tree: exp.Expression) -> set[AccessRequirement]:
    # id(table node) -> (action, kind); None marks a name that is not an access
    roles: dict[int, tuple[Action, str] | None] = {}
    extra: set[AccessRequirement] = set()

    def mark(table: exp.Table | None, action: Action, kind: str = "unknown") -> ObjectRef | None:
        if table is None:
            return None
        roles[id(table)] = (action, kind)
        return _table_ref(table, kind)

    for node in tree.walk():
        if isinstance(node, exp.Reference):
            for t in node.find_all(exp.Table):
                roles[id(t)] = None
        elif isinstance(node, exp.Insert):
            target = mark(_as_table(node.this), Action.INSERT)
            conflict = node.args.get("conflict")
            if target and conflict is not None and "UPDATE" in str(conflict.args.get("action") or "").upper():
                extra.add(AccessRequirement(target, Action.UPDATE))
                extra.add(AccessRequirement(target, Action.SELECT))
            if target and node.args.get("returning") is not None:
                extra.add(AccessRequirement(target, Action.SELECT))
        elif isinstance(node, (exp.Update, exp.Delete)):
            action = Action.UPDATE if isinstance(node, exp.Update) else Action.DELETE
            table = _as_table(node.this)
            target = mark(table, action)
            if target and _reads_target(node, table):
                extra.add(AccessRequirement(target, Action.SELECT))
        elif isinstance(node, exp.Select):
            into = node.args.get("into")
            if into is not None:
                mark(_as_table(into.this), Action.CREATE, "table")
            if node.args.get("locks"):
                for t in _own_scope_tables(node):
                    ref = _table_ref(t)
                    if ref:
                        extra.add(AccessRequirement(ref, Action.UPDATE))
        elif isinstance(node, exp.Create):
            kind = str(node.args.get("kind") or "").upper()
            if kind == "INDEX":
                index = node.this
                # index creation needs ownership of the indexed table
                if isinstance(index, exp.Index):
                    mark(_as_table(index.args.get("table")), Action.ALTER)
            else:
                mark(_as_table(node.this), Action.CREATE, _CREATE_KINDS.get(kind, "unknown"))
        elif isinstance(node, exp.Drop):
            for t in node.find_all(exp.Table):
                mark(t, Action.DROP)
        elif isinstance(node, exp.Alter):
            for action_node in node.args.get("actions") or []:
                for t in action_node.find_all(exp.Table):
                    roles[id(t)] = None
            mark(_as_table(node.this), Action.ALTER)
        elif isinstance(node, exp.TruncateTable):
            for t in node.expressions:
                mark(_as_table(t), Action.TRUNCATE)

    ctes = _cte_names(tree)
    reqs = set(extra)
    for t in tree.find_all(exp.Table):
        role = roles.get(id(t), (Action.SELECT, "unknown"))
        if role is None:
            continue
        action, kind = role
        ref = _table_ref(t, kind)
        if ref is None:
            continue
        if action is Action.SELECT and ref.schema_name is None and ref.object_name in ctes:
            continue
        reqs.add(AccessRequirement(ref, action))
    return reqs


def _own_scope_tables(select: exp.Select):
    for t in select.find_all(exp.Table):
        if t.find_ancestor(exp.Select) is select:
            yield t


def _reads_target(stmt: exp.Expression, table: exp.Table | None) -> bool:
    """Whether UPDATE/DELETE reads columns of its own target (needs SELECT)."""
    if table is None:
        return False
    if stmt.args.get("returning") is not None:
        return True
    names = {fold_identifier(table.name, table.this.quoted)}
    if table.alias:
        names = {fold_identifier(table.alias, table.args["alias"].this.quoted)}

    roots = [stmt.args.get("where")]
    if isinstance(stmt, exp.Update):
        roots.extend(eq.expression for eq in stmt.expressions if isinstance(eq, exp.EQ))
    for root in roots:
        if root is None:
            continue
        for col in root.find_all(exp.Column):
            qualifier = col.args.get("table")
            if qualifier is not None:
                if fold_identifier(qualifier.name, qualifier.quoted) in names:
                    return True
            elif col.find_ancestor(exp.Select, exp.Update, exp.Delete) is stmt:
                # unqualified column at statement level resolves to the target
                # (or a FROM/USING relation; over-approximating is safe)
                return True
    return False
