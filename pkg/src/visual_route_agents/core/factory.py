"""
Factory functions for creating gateways and MCP server instances.

This module builds agent gateways from harness settings (mock or live
backend, with or without the reply cache) and wires them into the MCP
server, from explicit arguments or from VRA_* environment variables.
"""

import os
from pathlib import Path
from typing import Optional, Union

from .agent_gateway import AgentGateway, LiveVisionBackend, MockBackend, MockBehavior, ReplyCache
from .config import HarnessSettings
from .run_directory import RunDirectory
from .server import HarnessMCPServer


def create_gateway(settings: HarnessSettings, cache: Optional[ReplyCache] = None) -> AgentGateway:
    """
    Create the agent gateway described by the settings.

    The live backend checks VRA_API_KEY here, so a misconfigured run fails
    before any instance is touched.

    Args:
        settings: Resolved harness settings
        cache: Reply cache (ignored when settings.cache_enabled is false)

    Returns:
        Configured AgentGateway
    """
    if settings.backend == "live":
        backend = LiveVisionBackend(
            model_id=settings.model_id,
            base_url=settings.base_url or None,
            max_output_tokens=settings.max_output_tokens,
            timeout=settings.request_timeout,
            max_retries=settings.max_retries,
        )
    else:
        backend = MockBackend(settings.mock_behavior())
    return AgentGateway(
        backend,
        cache=cache if settings.cache_enabled else None,
        max_in_flight=settings.max_in_flight,
        requests_per_minute=settings.requests_per_minute,
    )


def create_mock_gateway(behavior: Optional[MockBehavior] = None, cache: Optional[ReplyCache] = None,
                        max_in_flight: int = 4) -> AgentGateway:
    """Gateway over the deterministic mock agent."""
    return AgentGateway(MockBackend(behavior), cache=cache, max_in_flight=max_in_flight)


def create_gateway_from_env(cache: Optional[ReplyCache] = None) -> AgentGateway:
    """
    Create a gateway using environment variables for configuration.

    Environment variables:
    - VRA_BACKEND: mock or live
    - VRA_MODEL_ID, VRA_BASE_URL: live endpoint
    - VRA_API_KEY: credential of the live endpoint
    - any other VRA_<SETTING> understood by HarnessSettings
    """
    return create_gateway(HarnessSettings.from_env(), cache)


def create_server(
    run_dir: Union[str, Path],
    settings: Optional[HarnessSettings] = None,
    host: str = "127.0.0.1",
    port: int = 8000,
    path: str = "/mcp",
    transport: str = "stdio",
) -> HarnessMCPServer:
    """
    Create an MCP server exposing one run directory.

    Args:
        run_dir: Run directory served by the tools
        settings: Harness settings (defaults to HarnessSettings())
        host: Host for the streamable-http transport
        port: Port for the streamable-http transport
        path: Path of the MCP endpoint
        transport: stdio or streamable-http

    Returns:
        Configured HarnessMCPServer instance
    """
    settings = settings or HarnessSettings()
    directory = RunDirectory(run_dir)
    return HarnessMCPServer(
        run_dir=directory,
        settings=settings,
        gateway_factory=lambda: create_gateway(settings, directory.reply_cache()),
        host=host,
        port=port,
        path=path,
        transport=transport,
        server_name="Visual Route Agents",
        instructions="Runs and inspects image-based multi-agent TSP/mTSP experiments in a run directory",
    )


def create_server_from_env() -> HarnessMCPServer:
    """
    Create a server instance using environment variables for configuration.

    Environment variables:
    - VRA_RUN_DIR: Run directory to serve (default: runs/default)
    - MCP_HOST, MCP_PORT, MCP_PATH: streamable-http endpoint
    - MCP_TRANSPORT: stdio or streamable-http
    - VRA_<SETTING>: harness settings
    """
    return create_server(
        run_dir=os.environ.get("VRA_RUN_DIR", "runs/default"),
        settings=HarnessSettings.from_env(),
        host=os.environ.get("MCP_HOST", "127.0.0.1"),
        port=int(os.environ.get("MCP_PORT", "8000")),
        path=os.environ.get("MCP_PATH", "/mcp"),
        transport=os.environ.get("MCP_TRANSPORT", "stdio"),
    )
