#!/usr/bin/env python3
"""
Visual Route Agents - MCP Server Entry Point

Starts the MCP server over a run directory, configured from the command line
or, with USE_ENV_CONFIG=true, from VRA_* / MCP_* environment variables.
"""

import os
import sys
import argparse

from dotenv import load_dotenv

from .core.config import HarnessSettings
from .core.factory import create_server, create_server_from_env


def parse_args():
    """Parse command-line arguments."""
    default_run_dir = os.environ.get("VRA_RUN_DIR", "runs/default")
    default_host = os.environ.get("MCP_HOST", "127.0.0.1")
    default_port = int(os.environ.get("MCP_PORT", "8000"))
    default_path = os.environ.get("MCP_PATH", "/mcp")

    parser = argparse.ArgumentParser(description="Visual Route Agents MCP Server")
    parser.add_argument(
        "run_dir",
        nargs="?",
        default=default_run_dir,
        help=f"Run directory to serve (default: {default_run_dir})"
    )
    parser.add_argument("--config", help="key=value settings file")
    parser.add_argument(
        "--transport",
        choices=["stdio", "streamable-http"],
        default=os.environ.get("MCP_TRANSPORT", "stdio"),
        help="MCP transport (default: stdio)"
    )
    parser.add_argument("--host", default=default_host, help=f"Host to run the server on (default: {default_host})")
    parser.add_argument("--port", type=int, default=default_port, help=f"Port to run the server on (default: {default_port})")
    parser.add_argument("--path", default=default_path, help=f"Path for the MCP endpoint (default: {default_path})")
    return parser.parse_args()


def main():
    """Main entry point for the MCP server."""
    load_dotenv()
    if os.environ.get("USE_ENV_CONFIG", "").lower() in ("true", "1", "yes"):
        server = create_server_from_env()
    else:
        args = parse_args()
        settings = HarnessSettings.resolve(args.config)
        server = create_server(args.run_dir, settings, host=args.host, port=args.port,
                               path=args.path, transport=args.transport)

    try:
        server.run()
    except KeyboardInterrupt:
        print("\nServer stopped by user", file=sys.stderr)
        sys.exit(0)
    except Exception as e:
        print(f"Error running server: {e}", file=sys.stderr)
        sys.exit(1)


if __name__ == "__main__":
    main()
