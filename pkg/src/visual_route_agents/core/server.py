#!/usr/bin/env python3
"""
Visual Route Agents MCP Server

This module exposes a run directory through MCP tools: browse instances and
reference solutions, run a strategy, read transcripts and build the report.
"""

import asyncio
import sys
from typing import Any, Callable, Dict, List, Optional

from mcp.server.fastmcp import Context, FastMCP

from .agent_gateway import AgentGateway
from .batch_runner import BatchRunner
from .config import HarnessSettings
from .errors import HarnessError
from .reply_parser import format_routes
from .run_directory import RunDirectory

TOOLS = ["list_instances", "get_reference", "run_strategy", "get_transcript", "build_report"]
TRANSPORTS = ("stdio", "streamable-http")


class HarnessMCPServer:
    """
    MCP server over one run directory.

    Tools never raise to the client; failures come back as {"error": ...}.
    """

    def __init__(
        self,
        run_dir: RunDirectory,
        settings: HarnessSettings,
        gateway_factory: Optional[Callable[[], AgentGateway]] = None,
        host: str = "127.0.0.1",
        port: int = 8000,
        path: str = "/mcp",
        transport: str = "stdio",
        server_name: str = "Visual Route Agents",
        instructions: str = "Runs and inspects image-based multi-agent TSP/mTSP experiments",
    ):
        """
        Initialize the server.

        Args:
            run_dir: Run directory served by the tools
            settings: Harness settings used for strategy runs
            gateway_factory: Builds the agent gateway on first use
            host: Host for the streamable-http transport
            port: Port for the streamable-http transport
            path: Path for the MCP endpoint
            transport: stdio or streamable-http
            server_name: Name of the MCP server
            instructions: Instructions for the MCP server
        """
        if transport not in TRANSPORTS:
            raise HarnessError(f"Unknown transport '{transport}', expected one of {TRANSPORTS}")
        self.run_dir = run_dir
        self.settings = settings
        self.gateway_factory = gateway_factory
        self._gateway: Optional[AgentGateway] = None
        self.host = host
        self.port = port
        self.path = path
        self.transport = transport

        self.mcp = FastMCP(name=server_name, instructions=instructions, host=host, port=port,
                           streamable_http_path=path)
        self._register_tools()

    def _register_tools(self):
        """Register tools with the MCP server."""

        @self.mcp.tool()
        def list_instances(size: Optional[int] = None) -> List[Dict[str, Any]]:
            """
            Lists the instances of the run directory.

            Args:
                size: Optional node count to filter on (depot included).

            Returns:
                One entry per instance with its id, node count and coordinates.
            """
            return self.list_instances(size)

        @self.mcp.tool()
        def get_reference(instance_id: str, m: int = 1) -> Dict[str, Any]:
            """
            Fetches the reference solution of an instance for m salesmen.

            Args:
                instance_id: Instance identifier (e.g. 'n10-000').
                m: Salesman count.

            Returns:
                The reference routes in route grammar and their total distance.
            """
            return self.get_reference(instance_id, m)

        @self.mcp.tool()
        async def run_strategy(strategy: str, m: int, ctx: Context) -> Dict[str, Any]:
            """
            Runs a strategy on every instance of the run directory.

            Instances that already have a complete transcript are skipped.

            Args:
                strategy: zero_shot, multi_agent_1 or multi_agent_2.
                m: Salesman count.

            Returns:
                Counts of processed, skipped and failed instances.
            """
            messages: List[str] = []
            result = await asyncio.to_thread(self.run_strategy, strategy, m, messages.append)
            for message in messages:
                await ctx.info(message)
            return result

        @self.mcp.tool()
        def get_transcript(strategy: str, m: int, instance_id: str) -> Dict[str, Any]:
            """
            Fetches the experiment record of one strategy run on one instance.

            Args:
                strategy: zero_shot, multi_agent_1 or multi_agent_2.
                m: Salesman count.
                instance_id: Instance identifier.

            Returns:
                The full transcript: every exchange, candidate and the final selection.
            """
            return self.get_transcript(strategy, m, instance_id)

        @self.mcp.tool()
        def build_report() -> Dict[str, Any]:
            """
            Builds gap tables, Wilcoxon tables and plots from every transcript of the run.

            Returns:
                Paths of the written report files.
            """
            return self.build_report()

    def gateway(self) -> AgentGateway:
        if self._gateway is None:
            if self.gateway_factory is None:
                raise HarnessError("No gateway configured for this server")
            self._gateway = self.gateway_factory()
        return self._gateway

    def list_instances(self, size: Optional[int] = None) -> List[Dict[str, Any]]:
        instances = self.run_dir.load_instances([size] if size is not None else None)
        return [{"instance_id": inst.id, "n": inst.n, "nodes": [p.to_dict() for p in inst.nodes]}
                for inst in instances]

    def get_reference(self, instance_id: str, m: int = 1) -> Dict[str, Any]:
        inst = self.run_dir.get_instance(instance_id)
        if inst is None:
            return {"error": f"Instance not found: {instance_id}"}
        error_path = self.run_dir.reference_error_path(instance_id, m)
        if error_path.is_file():
            return {"error": error_path.read_text(encoding="utf-8").strip()}
        try:
            reference = self.run_dir.load_reference(inst, m)
        except HarnessError as e:
            return {"error": str(e)}
        if reference is None:
            return {"error": f"No reference for {instance_id} with m={m}; run the oracle first"}
        routes, distance = reference
        return {"instance_id": instance_id, "m": m, "routes": format_routes(routes), "distance": distance}

    def run_strategy(self, strategy: str, m: int,
                     progress_callback: Optional[Callable[[str], None]] = None) -> Dict[str, Any]:
        try:
            runner = BatchRunner(self.run_dir, self.settings, self.gateway())
            progress = runner.run(strategy, [m], progress_callback=progress_callback)
        except HarnessError as e:
            return {"error": f"{type(e).__name__}: {e}"}
        return {**progress.to_dict(), "summary": progress.get_summary()}

    def get_transcript(self, strategy: str, m: int, instance_id: str) -> Dict[str, Any]:
        record = self.run_dir.load_record(strategy, m, instance_id)
        if record is None:
            return {"error": f"No transcript for {strategy} m={m} on {instance_id}"}
        return record.to_dict()

    def build_report(self) -> Dict[str, Any]:
        try:
            return BatchRunner(self.run_dir, self.settings).report()
        except HarnessError as e:
            return {"error": f"{type(e).__name__}: {e}"}

    def get_capabilities(self) -> Dict[str, Any]:
        """
        Get information about server capabilities.

        Returns:
            Dictionary containing server capabilities and configuration.
        """
        return {
            "tools": list(TOOLS),
            "transport": self.transport,
            "backend": self.settings.backend,
            "model_id": self.settings.model_id if self.settings.backend == "live" else self.settings.mock_behavior().model_id(),
            **self.run_dir.get_run_info(),
        }

    def run(self):
        """Run the MCP server."""
        self._print_startup_info()
        if self.transport == "stdio":
            self.mcp.run(transport="stdio")
        else:
            self.mcp.run(transport="streamable-http")

    def _print_startup_info(self):
        # stdout carries the protocol on stdio, so this goes to stderr
        info = self.run_dir.get_run_info()
        print(f"Starting {self.mcp.name}...", file=sys.stderr)
        print(f"Serving run directory: {info['run_dir']} ({info['instances']} instances)", file=sys.stderr)
        print(f"Backend: {self.settings.backend}", file=sys.stderr)
        print(f"Available tools: {', '.join(TOOLS)}", file=sys.stderr)
