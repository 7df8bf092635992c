"""Deterministic fixture scripts: the chain-store database and the housing table."""

from __future__ import annotations

import random
from datetime import date, timedelta
from pathlib import Path

# role names used by scenarios: administrator, normal (read-only) user and a
# user whose privileges cover unrelated tables only
ROLES = {"admin": "bs_admin", "normal": "bs_normal", "irrelevant": "bs_irrelevant"}

HOUSE_COLUMNS = [
    ("longitude", "DOUBLE PRECISION"),
    ("latitude", "DOUBLE PRECISION"),
    ("housing_median_age", "INTEGER"),
    ("total_rooms", "INTEGER"),
    ("total_bedrooms", "INTEGER"),
    ("population", "INTEGER"),
    ("households", "INTEGER"),
    ("median_income", "DOUBLE PRECISION"),
    ("median_house_value", "DOUBLE PRECISION"),
    ("ocean_proximity", "TEXT"),
]

_CATEGORIES = ["women", "men", "kids", "women's wear", "menswear", "accessories"]
_ITEM_WORDS = ["shirt", "skirt", "coat", "scarf", "jeans", "boots", "hat", "dress"]
_PROXIMITY = ["<1H OCEAN", "INLAND", "NEAR OCEAN", "NEAR BAY", "ISLAND"]
_CHUNK = 500


def _sql_value(v) -> str:
    if v is None:
        return "NULL"
    if isinstance(v, str):
        return "'" + v.replace("'", "''") + "'"
    return repr(v)


def _inserts(table: str, rows: list[tuple]) -> list[str]:
    out = []
    for i in range(0, len(rows), _CHUNK):
        values = ",\n  ".join("(" + ", ".join(_sql_value(v) for v in r) + ")" for r in rows[i : i + _CHUNK])
        out.append(f"INSERT INTO {table} VALUES\n  {values};")
    return out


def _roles_sql() -> list[str]:
    return [f"CREATE ROLE {r} LOGIN;" for r in ROLES.values()]


def chain_store_sql(seed: int = 0, days: int = 14) -> str:
    """Two brands with items, sales and refunds, plus a sensitive salary table."""
    rng = random.Random(seed)
    out = _roles_sql()
    tables = []
    for brand in ("a", "b"):
        items, sales, refunds = f"brand_{brand}_items", f"brand_{brand}_sales", f"brand_{brand}_refunds"
        tables += [items, sales, refunds]
        out.append(
            f"CREATE TABLE {items} (\n  id INTEGER PRIMARY KEY,\n  name TEXT NOT NULL,\n"
            f"  category TEXT NOT NULL,\n  price NUMERIC(10,2) NOT NULL\n);"
        )
        for t in (sales, refunds):
            out.append(
                f"CREATE TABLE {t} (\n  id TEXT PRIMARY KEY,\n  date DATE NOT NULL,\n"
                f"  item_id INTEGER NOT NULL REFERENCES {items}(id),\n  qty INTEGER NOT NULL CHECK (qty > 0),\n"
                f"  amount NUMERIC(10,2) NOT NULL\n);"
            )
        item_rows = []
        for i in range(1, 9):
            cat = _CATEGORIES[(i - 1) % len(_CATEGORIES)]
            item_rows.append((i, f"{brand.upper()} {_ITEM_WORDS[i - 1]}", cat, round(rng.uniform(5, 120), 2)))
        out += _inserts(items, item_rows)
        prices = {r[0]: r[3] for r in item_rows}
        start = date(2025, 3, 1)
        sale_rows, refund_rows = [], []
        for d in range(days):
            for n in range(rng.randint(2, 4)):
                item = rng.randint(1, 8)
                qty = rng.randint(1, 5)
                day = (start + timedelta(days=d)).isoformat()
                sale_rows.append((f"{brand}-s-{d:03d}-{n}", day, item, qty, round(prices[item] * qty, 2)))
                if rng.random() < 0.2:
                    refund_rows.append((f"{brand}-r-{d:03d}-{n}", day, item, 1, prices[item]))
        out += _inserts(sales, sale_rows)
        out += _inserts(refunds, refund_rows)
    out.append("CREATE TABLE employee_salaries (\n  id INTEGER PRIMARY KEY,\n  name TEXT NOT NULL,\n  salary NUMERIC(10,2) NOT NULL\n);")
    out += _inserts(
        "employee_salaries", [(i, f"employee {i}", round(rng.uniform(30000, 90000), 2)) for i in range(1, 6)]
    )
    tables.append("employee_salaries")

    admin, normal, irrelevant = ROLES["admin"], ROLES["normal"], ROLES["irrelevant"]
    out += [f"ALTER TABLE {t} OWNER TO {admin};" for t in tables]
    out.append(f"GRANT CREATE ON SCHEMA public TO {admin};")
    out.append(f"GRANT SELECT ON brand_a_items, brand_a_sales, brand_a_refunds TO {normal};")
    out.append(f"GRANT SELECT, INSERT, UPDATE, DELETE ON brand_b_items, brand_b_sales, brand_b_refunds TO {irrelevant};")
    return "\n".join(out) + "\n"


def house_rows(rows: int, seed: int = 0) -> list[tuple]:
    rng = random.Random(seed)
    data = []
    for _ in range(rows):
        income = round(rng.uniform(0.5, 15.0), 4)
        age = rng.randint(1, 52)
        rooms = rng.randint(200, 8000)
        bedrooms = max(1, int(rooms * rng.uniform(0.15, 0.25)))
        population = rng.randint(100, 6000)
        households = max(1, int(population / rng.uniform(2.0, 4.0)))
        prox = rng.choice(_PROXIMITY)
        premium = {"ISLAND": 120000.0, "NEAR BAY": 60000.0, "NEAR OCEAN": 50000.0, "<1H OCEAN": 30000.0}.get(prox, 0.0)
        value = 35000.0 + 40000.0 * income + 800.0 * age + premium + rng.gauss(0, 20000)
        data.append(
            (
                round(rng.uniform(-124.3, -114.3), 4),
                round(rng.uniform(32.5, 42.0), 4),
                age,
                rooms,
                bedrooms,
                population,
                households,
                income,
                round(min(max(value, 15000.0), 500001.0), 2),
                prox,
            )
        )
    return data


def house_sql(rows: int, seed: int = 0) -> str:
    """A 10-column housing table with ``rows`` seeded rows, readable by every role."""
    cols = ",\n  ".join(f"{n} {t} NOT NULL" for n, t in HOUSE_COLUMNS)
    out = _roles_sql()
    out.append(f"CREATE TABLE house (\n  {cols}\n);")
    out += _inserts("house", house_rows(rows, seed))
    out.append(f"ALTER TABLE house OWNER TO {ROLES['admin']};")
    out.append(f"GRANT SELECT ON house TO {ROLES['normal']}, {ROLES['irrelevant']};")
    return "\n".join(out) + "\n"


FIXTURES = {"chain_store": lambda scale, seed: chain_store_sql(seed), "house": lambda scale, seed: house_sql(scale, seed)}


def fixture_sql(name: str, scale: int, seed: int) -> str:
    return FIXTURES[name](scale, seed)


def gen_fixtures(scale: int, seed: int = 0, out_dir: str | Path | None = None) -> dict[str, str]:
    """Generate every fixture script; write ``<name>.sql`` files when ``out_dir`` is given."""
    scripts = {name: fixture_sql(name, scale, seed) for name in FIXTURES}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, text in scripts.items():
            (out / f"{name}.sql").write_text(text)
    return scripts
