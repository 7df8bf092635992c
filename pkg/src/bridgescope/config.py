"""Server configuration: limits, backend location, identity and policy.

Configuration is a TOML document::

    [server]
    backend_url = "postgresql://agent@db/shop"
    user = "agent"                # optional; defaults to the URL's identity
    policy_file = "policy.toml"   # optional
    toolset = "fine"              # or "coarse" for the single execute_sql baseline

    [limits]
    schema_threshold = 100
    value_cap = 10000
    default_k = 5
    statement_timeout = 30.0
    proxy_depth_limit = 8
    proxy_workers = 4

Connection secrets should not live in the file: ``BRIDGESCOPE_BACKEND_URL``,
``BRIDGESCOPE_USER`` and ``BRIDGESCOPE_POLICY`` override the matching keys.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from bridgescope.errors import ConfigError

ENV_BACKEND_URL = "BRIDGESCOPE_BACKEND_URL"
ENV_USER = "BRIDGESCOPE_USER"
ENV_POLICY = "BRIDGESCOPE_POLICY"

TOOLSETS = ("fine", "coarse")


@dataclass(frozen=True)
class Settings:
    schema_threshold: int = 100
    value_cap: int = 10_000
    default_k: int = 5
    statement_timeout: float | None = 30.0
    proxy_depth_limit: int = 8
    proxy_workers: int = 4

    def __post_init__(self):
        for name in ("schema_threshold", "value_cap", "default_k", "proxy_depth_limit", "proxy_workers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if self.statement_timeout is not None and self.statement_timeout <= 0:
            raise ConfigError("statement_timeout must be positive")


@dataclass(frozen=True)
class ServerConfig:
    backend_url: str = "memory://"
    user: str | None = None
    policy_file: str | None = None
    toolset: str = "fine"
    settings: Settings = field(default_factory=Settings)

    def __post_init__(self):
        if self.toolset not in TOOLSETS:
            raise ConfigError(f"toolset must be one of {TOOLSETS}, got {self.toolset!r}")


def _load_toml(path: str | Path) -> dict:
    try:
        import tomllib
    except ModuleNotFoundError:  # Python < 3.11
        import tomli as tomllib
    try:
        with open(path, "rb") as f:
            return tomllib.load(f)
    except (OSError, tomllib.TOMLDecodeError) as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from None


def load_config(path: str | Path | None = None, env: dict | None = None, **overrides) -> ServerConfig:
    """Merge file, environment and explicit overrides (in increasing priority)."""
    env = os.environ if env is None else env
    doc = _load_toml(path) if path else {}
    unknown = set(doc) - {"server", "limits"}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")

    server = dict(doc.get("server", {}))
    allowed = {"backend_url", "user", "policy_file", "toolset"}
    if set(server) - allowed:
        raise ConfigError(f"unknown [server] keys: {sorted(set(server) - allowed)}")
    limits = dict(doc.get("limits", {}))
    known_limits = {f.name for f in fields(Settings)}
    if set(limits) - known_limits:
        raise ConfigError(f"unknown [limits] keys: {sorted(set(limits) - known_limits)}")

    if path and server.get("policy_file"):
        # relative policy paths are resolved next to the config file
        server["policy_file"] = str(Path(path).parent / server["policy_file"])
    for key, var in (("backend_url", ENV_BACKEND_URL), ("user", ENV_USER), ("policy_file", ENV_POLICY)):
        if env.get(var):
            server[key] = env[var]

    for k in [k for k in overrides if k in known_limits]:
        v = overrides.pop(k)
        if v is not None:
            limits[k] = v
    for k, v in overrides.items():
        if k not in allowed:
            raise ConfigError(f"unknown config override {k!r}")
        if v is not None:
            server[k] = v
    try:
        settings = replace(Settings(), **limits)
    except TypeError as e:
        raise ConfigError(str(e)) from None
    return ServerConfig(settings=settings, **server)
