#!/usr/bin/env python3
"""
Version bumping script for visual-route-agents.

Rewrites the version string in pyproject.toml, setup.py and the package
__init__.py in one go.

Usage:
    python bump_version.py [major|minor|patch] [--dry-run]
"""

import argparse
import re
import sys
from pathlib import Path

ROOT = Path(__file__).parent
VERSION_SITES = (
    ("pyproject.toml", r'^(version\s*=\s*")([^"]+)(")'),
    ("setup.py", r'(version=")([^"]+)(")'),
    ("src/visual_route_agents/__init__.py", r'^(__version__\s*=\s*")([^"]+)(")'),
)


def read_version() -> str:
    content = (ROOT / "pyproject.toml").read_text()
    match = re.search(VERSION_SITES[0][1], content, re.MULTILINE)
    if not match:
        raise ValueError("Could not find version in pyproject.toml")
    return match.group(2)


def next_version(current: str, part: str) -> str:
    major, minor, patch = (int(x) for x in current.split("."))
    if part == "major":
        return f"{major + 1}.0.0"
    if part == "minor":
        return f"{major}.{minor + 1}.0"
    return f"{major}.{minor}.{patch + 1}"


def main() -> int:
    parser = argparse.ArgumentParser(description="Bump the package version")
    parser.add_argument("part", nargs="?", choices=["major", "minor", "patch"], default="patch")
    parser.add_argument("--dry-run", action="store_true", help="Print the new version without writing")
    args = parser.parse_args()

    current = read_version()
    new = next_version(current, args.part)
    print(f"Bumping version: {current} -> {new} ({args.part})")
    if args.dry_run:
        return 0

    for relative, pattern in VERSION_SITES:
        path = ROOT / relative
        content = path.read_text()
        updated, count = re.subn(pattern, lambda m: m.group(1) + new + m.group(3), content, count=1,
                                 flags=re.MULTILINE)
        if count != 1:
            print(f"No version string found in {relative}", file=sys.stderr)
            return 1
        path.write_text(updated)
    print(f"Version updated to {new} in {len(VERSION_SITES)} files.")
    return 0


if __name__ == "__main__":
    sys.exit(main())
