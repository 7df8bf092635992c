from __future__ import annotations

import pytest
from hypothesis import given, settings, strategies as st

from bridgescope.analyzer import DATA_ACTIONS, TXN_ACTIONS, WRITE_ACTIONS, AccessRequirement, Action, ObjectRef
from bridgescope.errors import ConfigError
from bridgescope.privileges import (
    PrivilegeSet,
    SecurityPolicy,
    ViolationKind,
    annotate,
    annotation_line,
    exposed_actions,
    object_visible,
    parse_annotation,
    verify,
)

OBJECTS = [ObjectRef("public", n) for n in ("sales", "refunds", "items", "salaries")] + [ObjectRef("shop", "orders")]
ACTIONS = sorted(DATA_ACTIONS, key=lambda a: a.value)

objects = st.sampled_from(OBJECTS)
actions = st.sampled_from(ACTIONS)
grants = st.frozensets(st.tuples(actions, objects), max_size=20)


@st.composite
def policies(draw):
    return SecurityPolicy(
        object_whitelist=draw(st.none() | st.frozensets(objects, max_size=4)),
        object_blacklist=draw(st.frozensets(objects, max_size=2)),
        action_whitelist=draw(st.none() | st.frozensets(actions, max_size=6)),
        action_blacklist=draw(st.frozensets(actions, max_size=2)),
    )


def permitted(policy: SecurityPolicy, action: Action, obj: ObjectRef) -> bool:
    # restated from the policy rules, independently of SecurityPolicy's methods
    if obj in policy.object_blacklist or action in policy.action_blacklist:
        return False
    if policy.object_whitelist is not None and obj not in policy.object_whitelist:
        return False
    return policy.action_whitelist is None or action in policy.action_whitelist


def expected_exposure(pairs, policy) -> set[Action]:
    out = {a for a, o in pairs if permitted(policy, a, o)}
    return out | set(TXN_ACTIONS) if out & WRITE_ACTIONS else out


@settings(max_examples=300, deadline=None)
@given(grants, policies())
def test_exposure_matches_definition(pairs, policy):
    assert exposed_actions(PrivilegeSet(pairs), policy) == expected_exposure(pairs, policy)


@settings(max_examples=300, deadline=None)
@given(grants, policies(), actions, objects)
def test_adding_a_grant_never_hides_a_tool(pairs, policy, action, obj):
    before = exposed_actions(PrivilegeSet(pairs), policy)
    after = exposed_actions(PrivilegeSet(pairs | {(action, obj)}), policy)
    assert before <= after


@settings(max_examples=300, deadline=None)
@given(grants, policies(), actions, objects)
def test_blacklisting_never_exposes_a_tool(pairs, policy, action, obj):
    priv = PrivilegeSet(pairs)
    before = exposed_actions(priv, policy)
    more_objects = SecurityPolicy(
        policy.object_whitelist, policy.object_blacklist | {obj}, policy.action_whitelist, policy.action_blacklist
    )
    more_actions = SecurityPolicy(
        policy.object_whitelist, policy.object_blacklist, policy.action_whitelist, policy.action_blacklist | {action}
    )
    assert exposed_actions(priv, more_objects) <= before
    assert exposed_actions(priv, more_actions) <= before


@settings(max_examples=500, deadline=None)
@given(grants, policies(), st.frozensets(st.tuples(actions, objects), min_size=1, max_size=5))
def test_gate_soundness(pairs, policy, wanted):
    reqs = {AccessRequirement(o, a) for a, o in wanted}
    violation = verify(reqs, PrivilegeSet(pairs), policy)
    authorized = all((a, o) in pairs and permitted(policy, a, o) for a, o in wanted)
    assert (violation is None) == authorized
    if violation is not None:
        first = sorted(reqs, key=AccessRequirement.sort_key)
        bad = [r for r in first if not ((r.action, r.object) in pairs and permitted(policy, r.action, r.object))]
        assert violation.requirement == bad[0]
        granted = (violation.requirement.action, violation.requirement.object) in pairs
        assert violation.kind is (ViolationKind.POLICY_BLOCKED if granted else ViolationKind.NO_PRIVILEGE)


@settings(max_examples=300, deadline=None)
@given(grants, policies(), st.frozensets(st.tuples(actions, objects), min_size=1, max_size=5))
def test_verified_statements_use_exposed_actions(pairs, policy, wanted):
    priv = PrivilegeSet(pairs)
    reqs = {AccessRequirement(o, a) for a, o in wanted}
    if verify(reqs, priv, policy) is None:
        assert {r.action for r in reqs} <= exposed_actions(priv, policy)


@settings(max_examples=300, deadline=None)
@given(grants, objects)
def test_annotation_round_trip(pairs, obj):
    priv = PrivilegeSet(pairs)
    text = annotate(obj, "CREATE TABLE x (\n  id integer\n);", priv)
    assert parse_annotation(text) == {a for a, o in pairs if o == obj}
    assert text.endswith("CREATE TABLE x (\n  id integer\n);")


def test_read_only_user_gets_select_only():
    priv = PrivilegeSet.of([("SELECT", "sales"), ("SELECT", "items")])
    assert exposed_actions(priv, SecurityPolicy()) == {Action.SELECT}


def test_drop_blacklist_hides_drop_keeps_transactions():
    priv = PrivilegeSet.of([(a, "sales") for a in DATA_ACTIONS])
    policy = SecurityPolicy(action_blacklist=frozenset({Action.DROP}))
    assert exposed_actions(priv, policy) == (DATA_ACTIONS - {Action.DROP}) | TXN_ACTIONS


def test_empty_privileges_expose_nothing():
    assert exposed_actions(PrivilegeSet(), SecurityPolicy()) == set()


def test_object_visibility():
    priv = PrivilegeSet.of([(a, "brand_a_sales") for a in DATA_ACTIONS] + [("SELECT", "salaries")])
    assert object_visible(ObjectRef(None, "brand_a_sales"), priv, SecurityPolicy())
    assert not object_visible(ObjectRef(None, "brand_b_sales"), priv, SecurityPolicy())
    policy = SecurityPolicy(object_blacklist=frozenset({ObjectRef.parse("salaries")}))
    assert not object_visible(ObjectRef("public", "salaries"), priv, policy)


def test_verify_examples():
    priv = PrivilegeSet.of([("INSERT", "sales"), ("SELECT", "brand_a_sales"), ("SELECT", "salaries")])
    ok = verify({AccessRequirement(ObjectRef(None, "sales"), Action.INSERT)}, priv, SecurityPolicy())
    assert ok is None

    denied = verify({AccessRequirement(ObjectRef(None, "brand_b_sales"), Action.SELECT)}, priv, SecurityPolicy())
    assert denied.kind is ViolationKind.NO_PRIVILEGE and denied.code == "BS-SEC-001"
    assert "brand_b_sales" in denied.message and "SELECT" in denied.message

    policy = SecurityPolicy.from_mapping({"objects": {"blacklist": ["salaries"]}})
    blocked = verify({AccessRequirement(ObjectRef(None, "salaries"), Action.SELECT)}, priv, policy)
    assert blocked.kind is ViolationKind.POLICY_BLOCKED and blocked.code == "BS-SEC-002"
    # a granted-but-blocked object is not named back to the agent
    assert "salaries" not in blocked.message


def test_blacklist_wins_over_whitelist():
    policy = SecurityPolicy.from_mapping(
        {"objects": {"whitelist": ["sales"], "blacklist": ["sales"]}, "actions": {"whitelist": ["select"], "blacklist": ["SELECT"]}}
    )
    assert not policy.permits_object(ObjectRef(None, "sales"))
    assert not policy.permits_action(Action.SELECT)


def test_empty_policy_permits_everything_granted():
    priv = PrivilegeSet.of([(a, o) for a in DATA_ACTIONS for o in OBJECTS])
    reqs = {AccessRequirement(o, a) for a in DATA_ACTIONS for o in OBJECTS}
    assert verify(reqs, priv, SecurityPolicy()) is None


def test_identifiers_are_case_normalized():
    policy = SecurityPolicy.from_mapping({"objects": {"blacklist": ["Public.Salaries"]}})
    assert not policy.permits_object(ObjectRef.parse("salaries"))
    priv = PrivilegeSet.of([("SELECT", "SALES")])
    assert priv.allows(Action.SELECT, ObjectRef("public", "sales"))
    assert not priv.allows(Action.SELECT, ObjectRef("public", "SALES"))


def test_schema_wide_grants():
    priv = PrivilegeSet.of([("SELECT", "shop.*")])
    assert priv.allows(Action.SELECT, ObjectRef("shop", "orders"))
    assert not priv.allows(Action.SELECT, ObjectRef("public", "orders"))


def test_transaction_actions_cannot_be_granted():
    with pytest.raises(ValueError):
        PrivilegeSet.of([("BEGIN", "sales")])
    with pytest.raises(ConfigError):
        SecurityPolicy.from_mapping({"actions": {"blacklist": ["COMMIT"]}})


@pytest.mark.parametrize(
    "doc",
    [
        {"tables": {}},
        {"objects": {"greylist": ["x"]}},
        {"actions": {"blacklist": ["EXPLODE"]}},
        {"objects": {"blacklist": ["a.b.c"]}},
        {"objects": []},
    ],
)
def test_bad_policy_documents(doc):
    with pytest.raises(ConfigError):
        SecurityPolicy.from_mapping(doc)


def test_policy_file(tmp_path):
    path = tmp_path / "policy.toml"
    path.write_text('[objects]\nblacklist = ["salaries"]\n[actions]\nblacklist = ["DROP", "truncate"]\n')
    policy = SecurityPolicy.load(path)
    assert policy.action_blacklist == {Action.DROP, Action.TRUNCATE}
    assert not policy.permits_object(ObjectRef(None, "salaries"))
    (tmp_path / "bad.toml").write_text("[objects\n")
    with pytest.raises(ConfigError):
        SecurityPolicy.load(tmp_path / "bad.toml")
    with pytest.raises(ConfigError):
        SecurityPolicy.load(tmp_path / "missing.toml")


def test_annotation_lines():
    assert annotation_line([Action.SELECT]) == "-- Access:True, Permissions:SELECT"
    assert annotation_line([Action.DELETE, Action.SELECT, Action.INSERT]) == "-- Access:True, Permissions:SELECT,INSERT,DELETE"
    assert annotation_line([]) == "-- Access:False"
    assert parse_annotation("-- Access:False\nCREATE TABLE t ();") == set()
    with pytest.raises(ValueError):
        parse_annotation("CREATE TABLE t ();")


def test_annotation_leaves_out_policy_blocked_actions():
    priv = PrivilegeSet.of([("SELECT", "sales"), ("DROP", "sales")])
    policy = SecurityPolicy(action_blacklist=frozenset({Action.DROP}))
    assert parse_annotation(annotate(ObjectRef(None, "sales"), "", priv, policy)) == {Action.SELECT}


def test_policy_schema_wildcard_and_case_folding():
    policy = SecurityPolicy.from_mapping({"objects": {"blacklist": ["hr.*", "Sales"]}})
    assert not policy.permits_object(ObjectRef.parse("hr.pay"))
    assert not policy.permits_object(ObjectRef.parse("public.sales"))
    assert policy.permits_object(ObjectRef.parse("items"))
