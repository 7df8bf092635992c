"""Command line: ``bridgescope serve | run | suite | gen-fixtures``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import threading

from bridgescope.config import load_config
from bridgescope.errors import BridgeScopeError
from bridgescope.harness.scenario import MODES


def _serve(args) -> int:
    from bridgescope.server import ToolServer

    config = load_config(
        args.config,
        backend_url=args.backend_url,
        user=args.user,
        policy_file=args.policy,
        toolset=args.toolset,
    )
    server = ToolServer.from_config(config)
    if args.analytics:
        from bridgescope.harness.tools import register_analytics

        register_analytics(server, None if args.analytics == "all" else args.analytics.split(","))
    if args.tcp:
        host, _, port = args.tcp.rpartition(":")
        listener = server.tcp_server(host or "127.0.0.1", int(port))
        print(f"listening on {listener.server_address[0]}:{listener.server_address[1]}", file=sys.stderr, flush=True)
        thread = threading.Thread(target=listener.serve_forever, daemon=True)
        thread.start()
        try:
            thread.join()
        except KeyboardInterrupt:
            listener.shutdown()
        return 0
    server.serve_stdio()
    return 0


def _run(args) -> int:
    from bridgescope.harness.agent import run_scenario
    from bridgescope.harness.scenario import find_scenario

    scenario = find_scenario(args.scenario)
    modes = MODES if args.mode == "both" else (args.mode,)
    results = [run_scenario(scenario, m, scale=args.scale, seed=args.seed, transport=args.transport) for m in modes]
    print(json.dumps([r.to_dict() for r in results], indent=2, sort_keys=True))
    return 0


def _suite(args) -> int:
    from bridgescope.harness.report import run_suite

    modes = MODES if args.mode == "both" else (args.mode,)
    report = run_suite(
        args.directory, scale=args.scale, seed=args.seed, transport=args.transport, modes=modes, parallel=args.parallel
    )
    if args.json_out:
        with open(args.json_out, "w") as f:
            f.write(report.to_json())
    sys.stdout.write(report.to_json() if args.format == "json" else report.to_text())
    return 0


def _gen_fixtures(args) -> int:
    from bridgescope.harness.fixtures import gen_fixtures

    scripts = gen_fixtures(args.scale, args.seed, args.out)
    for name in scripts:
        print(f"{args.out}/{name}.sql")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bridgescope", description="Privilege-aware database tool server.")
    p.add_argument("-v", "--verbose", action="store_true", help="log to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("serve", help="serve tools over JSON-RPC (stdio by default)")
    s.add_argument("--config", help="TOML config file")
    s.add_argument("--backend-url", help="memory://, memory:///fixture.sql or postgresql://...")
    s.add_argument("--user", help="database identity for the session")
    s.add_argument("--policy", help="TOML security policy file")
    s.add_argument("--toolset", choices=("fine", "coarse"))
    s.add_argument("--tcp", metavar="HOST:PORT", help="listen on TCP instead of stdio (one session per connection)")
    s.add_argument("--analytics", metavar="NAMES", help="register harness analytical tools: comma list or 'all'")
    s.set_defaults(func=_serve)

    def harness_flags(q):
        q.add_argument("--mode", choices=(*MODES, "both"), default="both")
        q.add_argument("--scale", type=int, default=20_000, help="rows in the housing fixture")
        q.add_argument("--seed", type=int, default=0)
        q.add_argument("--transport", choices=("inproc", "stdio"), default="inproc")

    r = sub.add_parser("run", help="run one scenario (name or .json path)")
    r.add_argument("scenario")
    harness_flags(r)
    r.set_defaults(func=_run)

    u = sub.add_parser("suite", help="run every scenario in a directory")
    u.add_argument("directory", nargs="?", help="scenario directory (default: built-in suite)")
    harness_flags(u)
    u.add_argument("--format", choices=("text", "json"), default="text")
    u.add_argument("--json-out", help="also write the JSON report here")
    u.add_argument("--parallel", action="store_true", help="run scenarios concurrently")
    u.set_defaults(func=_suite)

    g = sub.add_parser("gen-fixtures", help="write fixture SQL scripts")
    g.add_argument("--scale", type=int, default=20_000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default="fixtures")
    g.set_defaults(func=_gen_fixtures)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr)
    try:
        return args.func(args)
    except BridgeScopeError as e:
        print(f"error [{e.code}]: {e.message}", file=sys.stderr)
        return 2
