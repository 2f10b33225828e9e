#!/usr/bin/env python3
"""
Visual Route Agents CLI

This module provides the `vra` command: generate instances, solve reference
solutions, run strategies, build reports and serve a run directory over MCP.
"""

import argparse
import logging
import sys
from typing import Dict, List, Optional

from dotenv import load_dotenv

from .core.batch_runner import BatchRunner
from .core.config import HarnessSettings
from .core.errors import HarnessError
from .core.factory import create_gateway, create_server
from .core.orchestrator import RETURN_POLICIES, STRATEGIES
from .core.run_directory import RunDirectory


def _int_list(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{text}'") from None


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """Parse command line arguments."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value settings file (flags override it)")
    common.add_argument("--jobs", type=int, help="Instances processed in parallel")
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", "-v", action="store_true", help="Debug logging")
    verbosity.add_argument("--quiet", "-q", action="store_true", help="Warnings only, no progress lines")

    parser = argparse.ArgumentParser(
        prog="vra",
        description="Image-based multi-agent TSP/mTSP experiment harness",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s generate runs/demo --sizes 10,15 --count 30 --seed 1
  %(prog)s oracle runs/demo --m 1,2,3 --budget-mode iterations --iterations 500
  %(prog)s run runs/demo --strategy multi_agent_2 --m 1 --backend mock
  %(prog)s report runs/demo
  %(prog)s serve runs/demo --info
        """
    )
    commands = parser.add_subparsers(dest="command", required=True)

    generate = commands.add_parser("generate", parents=[common], help="Write uniform random instances")
    generate.add_argument("run_dir", help="Run directory")
    generate.add_argument("--sizes", type=_int_list, help="Node counts, e.g. 10,15,20 (default: 10..35 step 5)")
    generate.add_argument("--count", type=int, dest="batch_size", help="Instances per size (default: 30)")
    generate.add_argument("--seed", type=int, help="Base seed (default: 0)")
    generate.add_argument("--force", action="store_true", help="Overwrite a non-empty run directory")

    oracle = commands.add_parser("oracle", parents=[common], help="Solve reference solutions")
    oracle.add_argument("run_dir", help="Run directory")
    oracle.add_argument("--m", type=_int_list, dest="m_values", help="Salesman counts (default: 1,2,3)")
    oracle.add_argument("--time-limit", type=float, help="Seconds per instance (default: 120)")
    oracle.add_argument("--budget-mode", choices=["time", "iterations"], help="Stop on wall clock or step count")
    oracle.add_argument("--iterations", type=int, dest="iteration_limit", help="Step budget in iterations mode")
    oracle.add_argument("--gls-lambda", type=float, help="Penalty factor (default: 0.1)")
    oracle.add_argument("--solver-seed", type=int, help="Tie-breaking seed")
    oracle.add_argument("--force", action="store_true", help="Re-solve existing references")

    run = commands.add_parser("run", parents=[common], help="Run a strategy on every instance")
    run.add_argument("run_dir", help="Run directory")
    run.add_argument("--strategy", required=True, choices=STRATEGIES)
    run.add_argument("--m", type=_int_list, dest="m_values", help="Salesman counts (default: 1,2,3)")
    run.add_argument("--backend", choices=["mock", "live"])
    run.add_argument("--model-id", help="Live model identifier")
    run.add_argument("--base-url", help="Live endpoint base URL")
    run.add_argument("--max-iterations", type=int)
    run.add_argument("--ensemble-size", type=int)
    run.add_argument("--critic-temperature", type=float)
    run.add_argument("--initializer-temperature", type=float)
    run.add_argument("--return-policy", choices=RETURN_POLICIES)
    run.add_argument("--hallucination-rate", type=float, help="Mock agent: chance of dropping a node")
    run.add_argument("--improvement-mode", choices=["best", "random"], help="Mock agent critic move")
    run.add_argument("--mock-seed", type=int)
    run.add_argument("--render-size", type=int, help="Image side in pixels (default: 1024)")
    run.add_argument("--no-cache", action="store_false", dest="cache_enabled", default=None,
                     help="Do not read or write the reply cache")
    run.add_argument("--force", action="store_true", help="Re-run instances with complete records")

    report = commands.add_parser("report", parents=[common], help="Write gap tables, Wilcoxon tables and plots")
    report.add_argument("run_dir", help="Run directory")

    serve = commands.add_parser("serve", parents=[common], help="Serve a run directory over MCP")
    serve.add_argument("run_dir", help="Run directory")
    serve.add_argument("--transport", choices=["stdio", "streamable-http"], default="stdio")
    serve.add_argument("--host", default="127.0.0.1", help="Host for streamable-http (default: 127.0.0.1)")
    serve.add_argument("--port", type=int, default=8000, help="Port for streamable-http (default: 8000)")
    serve.add_argument("--path", default="/mcp", help="Path for the MCP endpoint (default: /mcp)")
    serve.add_argument("--info", action="store_true", help="Show server capabilities and exit")

    return parser.parse_args(argv)


SETTING_FLAGS = (
    "jobs", "sizes", "batch_size", "seed", "m_values", "time_limit", "budget_mode", "iteration_limit",
    "gls_lambda", "solver_seed", "backend", "model_id", "base_url", "max_iterations", "ensemble_size",
    "critic_temperature", "initializer_temperature", "return_policy", "hallucination_rate",
    "improvement_mode", "mock_seed", "render_size", "cache_enabled",
)


def resolve_settings(args: argparse.Namespace) -> HarnessSettings:
    """Defaults, then the config file, then flags."""
    overrides: Dict = {name: getattr(args, name) for name in SETTING_FLAGS if getattr(args, name, None) is not None}
    return HarnessSettings.resolve(args.config, overrides)


def configure_logging(args: argparse.Namespace):
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def show_server_info(server):
    """Show server capabilities and configuration."""
    capabilities = server.get_capabilities()

    print("Visual Route Agents Server Information")
    print("=" * 40)
    print(f"Run Directory: {capabilities['run_dir']}")
    print(f"Instances: {capabilities['instances']}")
    print(f"Backend: {capabilities['backend']} ({capabilities['model_id']})")
    print(f"Transport: {capabilities['transport']}")
    print(f"Available Tools: {', '.join(capabilities['tools'])}")
    print()


def execute(args: argparse.Namespace) -> int:
    settings = resolve_settings(args)
    run_dir = RunDirectory(args.run_dir)
    progress_callback = None if args.quiet else print

    if args.command == "generate":
        progress = BatchRunner(run_dir, settings).generate(force=args.force, progress_callback=progress_callback)
        print(progress.get_summary())
        return 0

    if args.command == "oracle":
        progress = BatchRunner(run_dir, settings).oracle(force=args.force, progress_callback=progress_callback)
        print(progress.get_summary())
        return 0

    if args.command == "run":
        # Built first so a bad backend configuration aborts before any call.
        gateway = create_gateway(settings, run_dir.reply_cache())
        progress = BatchRunner(run_dir, settings, gateway).run(args.strategy, force=args.force,
                                                               progress_callback=progress_callback)
        print(progress.get_summary())
        return 0

    if args.command == "report":
        result = BatchRunner(run_dir, settings).report()
        if "notice" in result:
            print(f"notice: {result['notice']}")
        for name, path in result["files"].items():
            print(f"{name}: {path}")
        return 0

    server = create_server(args.run_dir, settings, host=args.host, port=args.port, path=args.path,
                           transport=args.transport)
    if args.info:
        show_server_info(server)
        return 0
    try:
        server.run()
    except KeyboardInterrupt:
        print("\nServer stopped by user", file=sys.stderr)
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point for the CLI."""
    load_dotenv()
    args = parse_args(argv)
    configure_logging(args)
    try:
        return execute(args)
    except HarnessError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
