"""Scripted-agent harness comparing the fine-grained toolset with a coarse baseline."""

from __future__ import annotations

from bridgescope.harness.agent import RunMetrics, ScriptedAgent, run_scenario
from bridgescope.harness.fixtures import chain_store_sql, gen_fixtures, house_sql
from bridgescope.harness.report import SuiteReport, run_suite
from bridgescope.harness.scenario import Scenario, load_suite

__all__ = [
    "RunMetrics",
    "Scenario",
    "ScriptedAgent",
    "SuiteReport",
    "chain_store_sql",
    "gen_fixtures",
    "house_sql",
    "load_suite",
    "run_scenario",
    "run_suite",
]
