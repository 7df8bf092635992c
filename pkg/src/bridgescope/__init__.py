"""Privilege-aware database tool server for LLM agents."""

from __future__ import annotations

__version__ = "0.1.0"

from bridgescope.analyzer import AccessRequirement, Action, ObjectRef, ParsedStatement, classify_only, parse
from bridgescope.backends import MemoryBackend, open_backend
from bridgescope.config import ServerConfig, Settings, load_config
from bridgescope.privileges import PrivilegeSet, SecurityPolicy
from bridgescope.server import ToolDescriptor, ToolServer
from bridgescope.session import Session

__all__ = [
    "AccessRequirement",
    "Action",
    "MemoryBackend",
    "ObjectRef",
    "ParsedStatement",
    "PrivilegeSet",
    "SecurityPolicy",
    "ServerConfig",
    "Session",
    "Settings",
    "ToolDescriptor",
    "ToolServer",
    "classify_only",
    "load_config",
    "open_backend",
    "parse",
]
