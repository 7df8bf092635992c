"""One black-box suite run against every backend.

The PostgreSQL leg runs when BRIDGESCOPE_PG_URL names a server on which the
connecting role may create databases and roles; otherwise it is skipped.
"""

from __future__ import annotations

import pytest

from bridgescope.analyzer import Action, ObjectRef
from bridgescope.backends import MemoryBackend
from bridgescope.backends.base import ForeignKeyInfo, IndexInfo, canonical_type
from bridgescope.errors import BackendError, StatementTimeout, UnknownObject
from dbfixtures import SHOP_OBJECTS, SHOP_SQL

BACKENDS = ["memory", "postgres"]


@pytest.fixture(params=BACKENDS)
def backend(request):
    if request.param == "memory":
        b = MemoryBackend(SHOP_SQL)
    else:
        from bridgescope.backends.postgres import PostgresBackend

        b = PostgresBackend(request.getfixturevalue("pg_scratch_url"))
        b.run_script(SHOP_SQL)
    yield b
    b.close()


def ref(name: str) -> ObjectRef:
    return ObjectRef.parse(name)


def table_dump(backend) -> str:
    # aggregate view columns are typed by PostgreSQL only; tables must match exactly
    return "\n".join(line for line in backend.dump().splitlines() if not line.startswith("view "))


EXPECTED_TABLE_DUMP = """\
table public.items (id integer not null, name text not null, category text, price numeric(10,2) not null) pk=['id']
  (1, 'Linen Shirt', 'women', 35)
  (2, 'Wool Coat', 'men', 120)
  (3, 'Rain Boots', 'kids', 28.5)
  (4, 'Silk Scarf', "women's wear", 19.99)
  (5, 'Cap', None, 9)
table public.refunds (id text not null, sale_id text not null, amount numeric(10,2) not null) pk=['id']
  ('r1', 's2', 120)
table public.sales (id text not null, date date not null, item_id integer not null, qty integer not null, amount numeric(10,2) not null) pk=['id']
  ('s1', '2025-03-01', 1, 2, 70)
  ('s2', '2025-03-01', 2, 1, 120)
  ('s3', '2025-03-02', 3, 3, 85.5)
table public.secrets (id integer not null, note text) pk=['id']
  (1, 'vault code')
table public.stock (store_id integer not null, item_id integer not null, units integer not null) pk=['store_id', 'item_id']
  (1, 1, 10)
  (1, 2, 4)
  (2, 1, 7)"""


def test_dump_of_the_fixture(backend):
    assert table_dump(backend) == EXPECTED_TABLE_DUMP


# -- execute --------------------------------------------------------------------


def test_select_rows_and_payload(backend):
    with backend.connect() as c:
        res = c.execute("SELECT id, date, amount FROM sales ORDER BY id")
        assert res.kind == "rows" and res.columns == ["id", "date", "amount"]
        assert res.to_payload() == [
            {"id": "s1", "date": "2025-03-01", "amount": 70},
            {"id": "s2", "date": "2025-03-01", "amount": 120},
            {"id": "s3", "date": "2025-03-02", "amount": 85.5},
        ]
        empty = c.execute("SELECT id FROM items WHERE id < 0")
        assert empty.kind == "rows" and empty.rows == []
        assert c.execute("SELECT COUNT(*) AS n, NULL AS z FROM items").to_payload() == [{"n": 5, "z": None}]


def test_write_counts(backend):
    with backend.connect() as c:
        assert c.execute("INSERT INTO stock VALUES (3, 1, 3), (3, 2, 4)").to_payload() == {"affected": 2}
        assert c.execute("UPDATE stock SET units = units + 1").affected_count == 5
        assert c.execute("DELETE FROM stock WHERE item_id = 2").affected_count == 2
        assert c.execute("UPDATE stock SET units = 0 WHERE store_id = 99").affected_count == 0


@pytest.mark.parametrize(
    "sql,code",
    [
        ("INSERT INTO items VALUES (1, 'dup', NULL, 1)", "23505"),
        ("INSERT INTO items VALUES (9, 'Linen Shirt', NULL, 1)", "23505"),
        ("INSERT INTO items (id, price) VALUES (9, 1)", "23502"),
        ("INSERT INTO sales VALUES ('s9', '2025-03-01', 42, 1, 1)", "23503"),
        ("INSERT INTO sales VALUES ('s9', '2025-03-01', 1, 0, 1)", "23514"),
        ("SELECT * FROM no_such_table", "42P01"),
        ("SELECT colour FROM items", "42703"),
        ("CREATE TABLE items (x INTEGER)", "42P07"),
        ("SELECT FROM WHERE", "42601"),
    ],
)
def test_engine_error_codes(backend, sql, code):
    with backend.connect() as c, pytest.raises(BackendError) as e:
        c.execute(sql)
    assert e.value.engine_code == code


def test_engine_denies_ungranted_access(backend):
    with backend.connect("analyst") as c:
        assert c.current_user() == "analyst"
        for sql in ("SELECT * FROM secrets", "DELETE FROM items", "INSERT INTO sales SELECT * FROM sales", "DROP TABLE items"):
            with pytest.raises(BackendError) as e:
                c.execute(sql)
            assert e.value.engine_code == "42501", sql
        assert c.execute("SELECT COUNT(*) AS n FROM item_totals").to_payload() == [{"n": 3}]


def test_statement_timeout(backend):
    slow = "WITH RECURSIVE n(i) AS (SELECT 1 UNION ALL SELECT i + 1 FROM n WHERE i < 100000000) SELECT COUNT(*) FROM n"
    with backend.connect(statement_timeout=0.2) as c:
        with pytest.raises(StatementTimeout):
            c.execute(slow)
        assert c.execute("SELECT 1 AS one").rows == [{"one": 1}]


# -- transactions -------------------------------------------------------------------


def test_commit_and_isolation(backend):
    with backend.connect() as a, backend.connect() as b:
        a.txn_begin()
        assert a.in_transaction
        a.execute("INSERT INTO stock VALUES (7, 1, 1)")
        assert b.execute("SELECT COUNT(*) AS n FROM stock").rows == [{"n": 3}]
        a.txn_commit()
        assert not a.in_transaction
        assert b.execute("SELECT COUNT(*) AS n FROM stock").rows == [{"n": 4}]


def test_rollback_after_failure_restores_the_dump(backend):
    before = backend.dump()
    with backend.connect("manager") as c:
        c.txn_begin()
        c.execute("INSERT INTO sales VALUES ('s7', '2025-03-04', 2, 1, 120.00)")
        c.execute("UPDATE items SET price = 0")
        with pytest.raises(BackendError):
            c.execute("INSERT INTO sales VALUES ('s8', '2025-03-04', 2, 0, 0)")
        c.txn_rollback()
        assert not c.in_transaction
    assert backend.dump() == before


def test_failed_autocommit_statement_is_atomic(backend):
    before = backend.dump()
    with backend.connect() as c, pytest.raises(BackendError):
        c.execute("INSERT INTO items VALUES (10, 'Belt', NULL, 1), (1, 'dup', NULL, 1)")
    assert backend.dump() == before


def test_closing_mid_transaction_discards_writes(backend):
    before = backend.dump()
    c = backend.connect("manager")
    c.txn_begin()
    c.execute("DELETE FROM refunds")
    c.close()
    assert backend.dump() == before


# -- introspection -------------------------------------------------------------------


def test_list_objects(backend):
    with backend.connect() as c:
        objects = c.list_objects()
    assert [o.object_name for o in objects] == SHOP_OBJECTS
    assert {o.schema_name for o in objects} == {"public"}
    assert {o.object_name for o in objects if o.kind == "view"} == {"item_totals"}


def test_object_detail_table(backend):
    with backend.connect() as c:
        items = c.object_detail(ref("items"))
        sales = c.object_detail(ref("public.sales"))
        stock = c.object_detail(ref("stock"))
    assert [(col.name, canonical_type(col.type), col.nullable) for col in items.columns] == [
        ("id", "integer", False),
        ("name", "text", False),
        ("category", "text", True),
        ("price", "numeric(10,2)", False),
    ]
    assert items.primary_key == ("id",)
    assert items.indexes == [IndexInfo("items_name_idx", ("name",), True)]
    assert sales.foreign_keys == [ForeignKeyInfo(("item_id",), ObjectRef("public", "items", "table"), ("id",))]
    assert stock.primary_key == ("store_id", "item_id")


def test_object_detail_view(backend):
    with backend.connect() as c:
        view = c.object_detail(ref("item_totals"))
    assert view.ref.kind == "view"
    assert [col.name for col in view.columns] == ["item_id", "units"]
    assert canonical_type(view.columns[0].type) == "integer"
    assert view.primary_key == () and view.foreign_keys == []


def test_object_detail_missing(backend):
    with backend.connect() as c, pytest.raises(UnknownObject):
        c.object_detail(ref("nope"))


def test_distinct_values(backend):
    with backend.connect() as c:
        assert c.distinct_values(ref("items"), "category", 10) == (["kids", "men", "women", "women's wear"], False)
        assert c.distinct_values(ref("items"), "category", 3) == (["kids", "men", "women"], True)
        assert c.distinct_values(ref("items"), "category", 4) == (["kids", "men", "women", "women's wear"], False)
        values, truncated = c.distinct_values(ref("sales"), "qty", 10)
        assert sorted(values) == [1, 2, 3] and not truncated


def test_introspect_privileges(backend):
    def pairs(user):
        with backend.connect() as c:
            return {(a.value, o.object_name) for a, o in c.introspect_privileges(user).grants}

    data = {Action.SELECT, Action.INSERT, Action.UPDATE, Action.DELETE}
    manager = {(a.value, t) for a in data for t in ("items", "sales", "refunds", "stock")} | {("SELECT", "item_totals")}
    assert pairs("manager") == manager
    assert pairs("analyst") == {("SELECT", "items"), ("SELECT", "sales"), ("SELECT", "item_totals")}
    assert pairs("outsider") == {("SELECT", "secrets"), ("INSERT", "secrets")}
    assert pairs("nobody") == set()


def test_grants_added_later_are_seen(backend):
    backend.run_script("GRANT UPDATE ON stock TO analyst;")
    with backend.connect() as c:
        assert (Action.UPDATE, ObjectRef("public", "stock", "table")) in c.introspect_privileges("analyst").grants
    with backend.connect("analyst") as c:
        assert c.execute("UPDATE stock SET units = 1").affected_count == 3
