"""
Core functionality for Visual Route Agents.

This package holds the experiment harness: instances and route sets,
rendering, prompts and reply parsing, the agent gateway, the strategy
orchestrator, the reference solver, evaluation and run-directory handling.
"""

from .agent_gateway import AgentGateway, LiveVisionBackend, MockBackend, MockBehavior, ReplyCache
from .batch_runner import BatchProgress, BatchRunner
from .config import HarnessSettings
from .errors import HarnessError
from .evaluation import build_report, pair_filter, summarize_gaps, wilcoxon_signed_rank
from .factory import create_gateway, create_gateway_from_env, create_mock_gateway, create_server, create_server_from_env
from .instance_model import Instance, generate_instance
from .orchestrator import StrategyConfig, run_multi_agent_1, run_multi_agent_2, run_strategy, run_zero_shot
from .reference_solver import SolverConfig, improve_gls, solve_exact, solve_reference, solve_savings
from .run_directory import RunDirectory
from .server import HarnessMCPServer
from .solution_model import RouteSet, validate

__all__ = [
    "AgentGateway",
    "LiveVisionBackend",
    "MockBackend",
    "MockBehavior",
    "ReplyCache",
    "BatchProgress",
    "BatchRunner",
    "HarnessSettings",
    "HarnessError",
    "build_report",
    "pair_filter",
    "summarize_gaps",
    "wilcoxon_signed_rank",
    "create_gateway",
    "create_gateway_from_env",
    "create_mock_gateway",
    "create_server",
    "create_server_from_env",
    "Instance",
    "generate_instance",
    "StrategyConfig",
    "run_multi_agent_1",
    "run_multi_agent_2",
    "run_strategy",
    "run_zero_shot",
    "SolverConfig",
    "improve_gls",
    "solve_exact",
    "solve_reference",
    "solve_savings",
    "RunDirectory",
    "HarnessMCPServer",
    "RouteSet",
    "validate",
]
