from __future__ import annotations

import pytest

from bridgescope.analyzer import Action
from bridgescope.backends import open_backend
from bridgescope.config import ServerConfig, Settings, load_config
from bridgescope.errors import ConfigError
from bridgescope.server import ToolServer
from dbfixtures import SHOP_SQL


def write(path, text):
    path.write_text(text)
    return path


def test_defaults():
    cfg = load_config(env={})
    assert cfg == ServerConfig()
    assert cfg.settings.schema_threshold == 100 and cfg.settings.proxy_depth_limit == 8


def test_file_sections_are_read(tmp_path):
    cfg_path = write(
        tmp_path / "bs.toml",
        '[server]\nbackend_url = "memory://"\nuser = "analyst"\npolicy_file = "policy.toml"\ntoolset = "coarse"\n'
        "[limits]\nschema_threshold = 7\nstatement_timeout = 2.5\nproxy_depth_limit = 3\n",
    )
    cfg = load_config(cfg_path, env={})
    assert cfg.user == "analyst" and cfg.toolset == "coarse"
    assert cfg.policy_file == str(tmp_path / "policy.toml")  # relative to the config file
    assert cfg.settings == Settings(schema_threshold=7, statement_timeout=2.5, proxy_depth_limit=3)


def test_environment_overrides_the_file(tmp_path):
    cfg_path = write(tmp_path / "bs.toml", '[server]\nbackend_url = "postgresql://a@x/db"\nuser = "a"\n')
    env = {"BRIDGESCOPE_BACKEND_URL": "memory://", "BRIDGESCOPE_USER": "b", "BRIDGESCOPE_POLICY": "/etc/p.toml"}
    cfg = load_config(cfg_path, env=env)
    assert (cfg.backend_url, cfg.user, cfg.policy_file) == ("memory://", "b", "/etc/p.toml")


def test_explicit_overrides_win(tmp_path):
    cfg_path = write(tmp_path / "bs.toml", "[limits]\nvalue_cap = 50\n")
    cfg = load_config(cfg_path, env={"BRIDGESCOPE_USER": "b"}, user="c", value_cap=9, toolset=None)
    assert cfg.user == "c" and cfg.settings.value_cap == 9 and cfg.toolset == "fine"


@pytest.mark.parametrize(
    "text",
    [
        "[serverr]\n",
        '[server]\nhost = "x"\n',
        "[limits]\nspeed = 1\n",
        "[limits]\nschema_threshold = 0\n",
        "[limits]\nstatement_timeout = -1\n",
        '[limits]\nproxy_workers = "many"\n',
        '[server]\ntoolset = "medium"\n',
        "not = [valid\n",
    ],
)
def test_invalid_files(tmp_path, text):
    with pytest.raises(ConfigError):
        load_config(write(tmp_path / "bs.toml", text), env={})


def test_missing_file_and_bad_override(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.toml", env={})
    with pytest.raises(ConfigError):
        load_config(env={}, colour="red")


def test_open_backend_urls(tmp_path):
    script = write(tmp_path / "shop.sql", SHOP_SQL)
    backend = open_backend(f"memory://{script}")
    try:
        with backend.connect(None) as conn:
            assert conn.execute("SELECT COUNT(*) AS n FROM items").rows == [{"n": 5}]
    finally:
        backend.close()
    with pytest.raises(ConfigError):
        open_backend("mysql://x")
    with pytest.raises(ConfigError):
        open_backend(f"memory://{tmp_path}/missing.sql")


def test_server_from_config(tmp_path):
    script = write(tmp_path / "shop.sql", SHOP_SQL)
    write(tmp_path / "policy.toml", '[actions]\nblacklist = ["DELETE"]\n')
    cfg_path = write(
        tmp_path / "bs.toml",
        f'[server]\nbackend_url = "memory://{script}"\nuser = "manager"\npolicy_file = "policy.toml"\n',
    )
    server = ToolServer.from_config(load_config(cfg_path, env={}))
    try:
        with server.open_session() as s:
            assert s.user == "manager"
            assert Action.DELETE not in s.exposed and Action.INSERT in s.exposed
    finally:
        server.backend.close()
