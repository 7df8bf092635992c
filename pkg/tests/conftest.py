from __future__ import annotations

import os
import uuid

import pytest

from bridgescope.backends import MemoryBackend
from bridgescope.server import ToolServer
from dbfixtures import SHOP_SQL

PG_ENV = "BRIDGESCOPE_PG_URL"


@pytest.fixture
def shop():
    backend = MemoryBackend(SHOP_SQL)
    yield backend
    backend.close()


@pytest.fixture
def shop_server(shop):
    return ToolServer(shop)


@pytest.fixture
def open_session(shop_server):
    opened = []

    def _open(user=None, **kw):
        s = shop_server.open_session(user, **kw)
        opened.append(s)
        return s

    yield _open
    for s in opened:
        s.close()


def pg_admin_url() -> str | None:
    return os.environ.get(PG_ENV)


@pytest.fixture
def pg_scratch_url():
    """URL of a fresh scratch database on the server named by BRIDGESCOPE_PG_URL."""
    url = pg_admin_url()
    if not url:
        pytest.skip(f"set {PG_ENV} to run the PostgreSQL leg")
    psycopg = pytest.importorskip("psycopg")
    from psycopg.conninfo import conninfo_to_dict, make_conninfo

    name = "bs_" + uuid.uuid4().hex[:12]
    with psycopg.connect(url, autocommit=True) as admin:
        admin.execute(f"CREATE DATABASE {name}")
    params = conninfo_to_dict(url)
    params["dbname"] = name
    yield make_conninfo(**params)
    with psycopg.connect(url, autocommit=True) as admin:
        admin.execute(f"DROP DATABASE IF EXISTS {name} WITH (FORCE)")


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(LINES):
            terminalreporter.write_line(LINES[n])
