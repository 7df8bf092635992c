"""Suite runs and their report (JSON document plus a text table)."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from bridgescope.harness.agent import RunMetrics, run_scenario
from bridgescope.harness.scenario import MODES, Scenario, load_suite


def _ratio(a: int, b: int) -> float | None:
    return round(a / b, 4) if b else None


@dataclass
class SuiteReport:
    scenarios: list[Scenario]
    runs: dict[tuple[str, str], RunMetrics]
    scale: int
    seed: int

    def deltas(self) -> dict[str, dict]:
        """fine_grained / coarse_baseline ratios per scenario."""
        out = {}
        for s in self.scenarios:
            fine, coarse = self.runs.get((s.name, "fine_grained")), self.runs.get((s.name, "coarse_baseline"))
            if fine and coarse:
                out[s.name] = {
                    "tool_calls_ratio": _ratio(fine.tool_calls, coarse.tool_calls),
                    "bytes_ratio": _ratio(fine.agent_visible_bytes, coarse.agent_visible_bytes),
                }
        return out

    def to_dict(self) -> dict:
        return {
            "scale": self.scale,
            "seed": self.seed,
            "runs": [
                {"role": s.role, "task_kind": s.task_kind, **self.runs[(s.name, m)].to_dict()}
                for s in self.scenarios
                for m in MODES
                if (s.name, m) in self.runs
            ],
            "deltas": self.deltas(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        header = ["scenario", "role", "kind", "mode", "calls", "bytes", "sql", "pre-sql abort", "outcome"]
        rows = [header]
        for s in self.scenarios:
            for m in MODES:
                r = self.runs.get((s.name, m))
                if r is None:
                    continue
                rows.append(
                    [s.name, s.role, s.task_kind, m, str(r.tool_calls), str(r.agent_visible_bytes),
                     str(r.sql_calls), "yes" if r.aborted_before_sql else "no", r.outcome]
                )  # fmt: skip
        widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
        lines = ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in rows]
        lines.insert(1, "  ".join("-" * w for w in widths))
        deltas = self.deltas()
        if deltas:
            lines += ["", "fine/coarse ratios", "scenario".ljust(widths[0]) + "  calls   bytes"]
            for name, d in deltas.items():
                calls = "-" if d["tool_calls_ratio"] is None else f"{d['tool_calls_ratio']:.3f}"
                nbytes = "-" if d["bytes_ratio"] is None else f"{d['bytes_ratio']:.4f}"
                lines.append(f"{name.ljust(widths[0])}  {calls:>5}  {nbytes:>6}")
        return "\n".join(lines) + "\n"


def run_suite(
    directory: str | Path | None = None,
    *,
    scale: int = 20_000,
    seed: int = 0,
    transport: str = "inproc",
    modes=MODES,
    parallel: bool = False,
) -> SuiteReport:
    scenarios = load_suite(directory)
    jobs = [(s, m) for s in scenarios for m in modes]

    def one(job):
        s, m = job
        return (s.name, m), run_scenario(s, m, scale=scale, seed=seed, transport=transport)

    if parallel:
        with ThreadPoolExecutor(max_workers=4) as pool:
            results = list(pool.map(one, jobs))
    else:
        results = [one(j) for j in jobs]
    return SuiteReport(scenarios, dict(results), scale, seed)
