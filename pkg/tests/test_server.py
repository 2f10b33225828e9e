"""
Tests for the MCP server over a run directory.
"""

import asyncio

import pytest

from visual_route_agents.core.errors import HarnessError
from visual_route_agents.core.factory import create_server
from visual_route_agents.core.server import TOOLS


@pytest.fixture
def server(solved_run, fast_settings):
    return create_server(solved_run.root, fast_settings)


def test_registered_tools(server):
    tools = asyncio.run(server.mcp.list_tools())
    assert sorted(tool.name for tool in tools) == sorted(TOOLS)


def test_capabilities_describe_the_run(server):
    capabilities = server.get_capabilities()
    assert capabilities["tools"] == TOOLS
    assert capabilities["backend"] == "mock"
    assert capabilities["model_id"] == "mock-best-h0-s0"
    assert capabilities["instances"] == 3
    assert capabilities["transport"] == "stdio"


def test_list_instances(server):
    listed = server.list_instances()
    assert [entry["instance_id"] for entry in listed] == ["n6-000", "n6-001", "n6-002"]
    assert len(listed[0]["nodes"]) == 6
    assert server.list_instances(size=9) == []


def test_get_reference(server):
    reference = server.get_reference("n6-001", m=2)
    assert reference["routes"].startswith("<<start>>\nSalesman1: ")
    assert reference["distance"] > 0
    assert "error" in server.get_reference("n6-404")
    assert "error" in server.get_reference("n6-001", m=3)


def test_strategy_transcript_and_report(server):
    messages = []
    result = server.run_strategy("zero_shot", 1, messages.append)
    assert result["processed"] == 3
    assert len(messages) == 3

    transcript = server.get_transcript("zero_shot", 1, "n6-000")
    assert transcript["instance_id"] == "n6-000"
    assert transcript["config"]["strategy"] == "zero_shot"
    assert "error" in server.get_transcript("multi_agent_1", 1, "n6-000")

    report = server.build_report()
    assert "gap_summary" in report["files"]


def test_tool_failures_come_back_as_errors(server):
    assert server.run_strategy("multi_agent_3", 1)["error"].startswith("InputError")
    assert server.build_report()["error"].startswith("InputError")


def test_unknown_transport(solved_run, fast_settings):
    with pytest.raises(HarnessError):
        create_server(solved_run.root, fast_settings, transport="carrier-pigeon")
