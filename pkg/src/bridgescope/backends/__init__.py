"""Backend adapters behind one interface."""

from __future__ import annotations

from pathlib import Path

from bridgescope.backends.base import (
    Backend,
    BackendCapabilities,
    ColumnInfo,
    Connection,
    ExecResult,
    ForeignKeyInfo,
    IndexInfo,
    ObjectDetail,
    canonical_type,
    dump_database,
    split_statements,
)
from bridgescope.backends.memory import MemoryBackend
from bridgescope.errors import ConfigError

__all__ = [
    "Backend",
    "BackendCapabilities",
    "ColumnInfo",
    "Connection",
    "ExecResult",
    "ForeignKeyInfo",
    "IndexInfo",
    "MemoryBackend",
    "ObjectDetail",
    "canonical_type",
    "dump_database",
    "open_backend",
    "split_statements",
]


def open_backend(url: str) -> Backend:
    """Open a backend from a URL.

    ``memory://`` starts an empty reference database; ``memory:///path.sql``
    loads a fixture script into it. ``postgresql://...`` connects to a server.
    """
    if url.startswith("memory:"):
        path = url[len("memory:"):].lstrip("/")
        script = None
        if path:
            try:
                script = Path("/" + path if url.startswith("memory:///") else path).read_text()
            except OSError as e:
                raise ConfigError(f"cannot read fixture script: {e}") from None
        return MemoryBackend(script)
    if url.startswith(("postgres://", "postgresql://")):
        from bridgescope.backends.postgres import PostgresBackend

        return PostgresBackend(url)
    raise ConfigError(f"unsupported backend URL: {url!r}")
