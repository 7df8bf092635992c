"""Hand-enumerated analyzer oracle.

Each entry is ``(sql, action, {(object, action), ...})``. Requirements were
written down from PostgreSQL's privilege rules, not from the analyzer output.
"""

from __future__ import annotations

S, I, U, D = "SELECT", "INSERT", "UPDATE", "DELETE"
C, X, A, T = "CREATE", "DROP", "ALTER", "TRUNCATE"

CORPUS = [
    # plain reads, joins, CTEs, subqueries
    ("SELECT id FROM brand_A_sales", S, {("brand_a_sales", S)}),
    ("SELECT s.id, i.name FROM sales s JOIN items i ON i.id = s.item_id", S, {("sales", S), ("items", S)}),
    ("SELECT * FROM a LEFT JOIN b USING (id) CROSS JOIN c", S, {("a", S), ("b", S), ("c", S)}),
    ("WITH c AS (SELECT 1) SELECT * FROM c", S, set()),
    (
        "WITH recent AS (SELECT * FROM sales WHERE date > '2025-01-01') "
        "SELECT r.id FROM recent r JOIN items i ON i.id = r.item_id",
        S,
        {("sales", S), ("items", S)},
    ),
    ("SELECT * FROM items WHERE id IN (SELECT item_id FROM refunds)", S, {("items", S), ("refunds", S)}),
    ("SELECT name FROM items i WHERE EXISTS (SELECT 1 FROM sales s WHERE s.item_id = i.id)", S, {("items", S), ("sales", S)}),
    ("SELECT t.total FROM (SELECT SUM(amount) AS total FROM sales) AS t", S, {("sales", S)}),
    ("SELECT id FROM sales UNION SELECT id FROM refunds;", S, {("sales", S), ("refunds", S)}),
    ("SELECT * FROM shop.orders", S, {("shop.orders", S)}),
    ('SELECT * FROM "Mixed Case"', S, {("Mixed Case", S)}),
    ("SELECT 1", S, set()),
    ("SELECT * FROM items FOR UPDATE", S, {("items", S), ("items", U)}),
    # inserts
    ("INSERT INTO sales SELECT * FROM staging", I, {("sales", I), ("staging", S)}),
    ("INSERT INTO sales (id, qty) VALUES ('x', 1)", I, {("sales", I)}),
    ("INSERT INTO sales VALUES ('x', 1) RETURNING id", I, {("sales", I), ("sales", S)}),
    (
        "INSERT INTO items (id, name) VALUES (1, 'a') ON CONFLICT (id) DO UPDATE SET name = EXCLUDED.name",
        I,
        {("items", I), ("items", U), ("items", S)},
    ),
    # updates and deletes
    ("UPDATE items SET price = 10", U, {("items", U)}),
    ("UPDATE items SET price = price * 2 WHERE id = 3", U, {("items", U), ("items", S)}),
    (
        "UPDATE sales SET amount = 0 FROM refunds WHERE sales.id = refunds.id",
        U,
        {("sales", U), ("sales", S), ("refunds", S)},
    ),
    ("DELETE FROM sales WHERE id = 'x'", D, {("sales", D), ("sales", S)}),
    ("DELETE FROM sales USING refunds WHERE sales.id = refunds.id", D, {("sales", D), ("sales", S), ("refunds", S)}),
    ("WITH moved AS (DELETE FROM staging RETURNING *) SELECT * FROM moved", D, {("staging", D), ("staging", S)}),
    # DDL
    ("CREATE TABLE t2 (id INT)", C, {("t2", C)}),
    ("CREATE TABLE t3 AS SELECT * FROM sales", C, {("t3", C), ("sales", S)}),
    ("CREATE VIEW v AS SELECT id FROM items", C, {("v", C), ("items", S)}),
    ("DROP TABLE IF EXISTS sales, refunds", X, {("sales", X), ("refunds", X)}),
    ("DROP DATABASE prod", X, {("prod", X)}),
    ("ALTER TABLE items ADD COLUMN color TEXT", A, {("items", A)}),
    ("TRUNCATE staging, refunds", T, {("staging", T), ("refunds", T)}),
]

MULTI_STATEMENTS = [
    "SELECT 1; DROP TABLE t",
    "SELECT 1;SELECT 2",
    "INSERT INTO a VALUES (1); DELETE FROM a",
    "SELECT ';'; SELECT 2",
    "SELECT 1 -- trailing comment\n; DROP TABLE x",
    "COMMIT; DROP TABLE x",
    "BEGIN; UPDATE t SET x = 1; COMMIT",
    "SELECT * FROM t; SELECT * FROM t;",
]
