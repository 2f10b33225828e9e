#!/usr/bin/env python3
"""
Test runner for Visual Route Agents.

Runs each test module in its own pytest subprocess and prints a summary.
"""

import os
import sys
import argparse
import subprocess
from pathlib import Path

TEST_MODULES = [
    "instance_model",
    "solution_model",
    "renderer",
    "prompt_factory",
    "reply_parser",
    "agent_gateway",
    "reference_solver",
    "orchestrator",
    "evaluation",
    "config",
    "run_directory",
    "batch_runner",
    "server",
    "cli",
]


def parse_args():
    """Parse command line arguments."""
    parser = argparse.ArgumentParser(
        description="Test runner for Visual Route Agents"
    )
    parser.add_argument(
        "--test",
        choices=["all"] + TEST_MODULES,
        default="all",
        help="Which test module to run (default: all)"
    )
    parser.add_argument(
        "--slow",
        action="store_true",
        help="Include the full-scale end-to-end tests"
    )
    parser.add_argument(
        "--live",
        action="store_true",
        help="Include the live backend smoke test (needs VRA_LIVE_SMOKE=1 and VRA_API_KEY)"
    )
    return parser.parse_args()


def marker_expression(slow: bool, live: bool) -> str:
    excluded = [name for name, enabled in (("slow", slow), ("live", live)) if not enabled]
    return " and ".join(f"not {name}" for name in excluded)


def run_test(test_name, markers):
    """Run a specific test module."""
    print(f"Running test: {test_name}")

    script_dir = Path(__file__).parent.absolute()
    test_path = script_dir / "tests" / f"test_{test_name}.py"

    env = {**os.environ, "PYTHONPATH": str(script_dir / "src")}
    try:
        subprocess.run(
            [sys.executable, "-m", "pytest", str(test_path), "-q", "-m", markers or "slow or not slow"],
            check=True,
            env=env,
        )
        print(f"Test {test_name} completed successfully")
        return True
    except subprocess.CalledProcessError:
        print(f"Test {test_name} failed")
        return False


def main():
    """Main entry point for the script."""
    args = parse_args()
    tests = TEST_MODULES if args.test == "all" else [args.test]
    markers = marker_expression(args.slow, args.live)

    results = {test: run_test(test, markers) for test in tests}

    print("\nTest Summary:")
    for test, result in results.items():
        print(f"  {test}: {'PASSED' if result else 'FAILED'}")
    return all(results.values())


if __name__ == "__main__":
    success = main()
    sys.exit(0 if success else 1)
