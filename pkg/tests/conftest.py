"""
Shared fixtures for the Visual Route Agents test suite.
"""

import sys
from pathlib import Path

import pytest

# Add the src directory to the path so the package imports without installation
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from visual_route_agents.core.batch_runner import BatchRunner
from visual_route_agents.core.config import HarnessSettings
from visual_route_agents.core.factory import create_mock_gateway
from visual_route_agents.core.instance_model import instance_from_coordinates
from visual_route_agents.core.renderer import RenderStyle
from visual_route_agents.core.run_directory import RunDirectory


@pytest.fixture
def unit_square():
    """Depot at the origin plus the other three corners of the unit square."""
    return instance_from_coordinates([(0, 0), (0, 1), (1, 1), (1, 0)], instance_id="unit-square")


@pytest.fixture
def small_style():
    return RenderStyle(width=256, height=256, margin=13, depot_size=6, node_size=5, label_size=7, line_width=1.0)


@pytest.fixture
def mock_gateway():
    return create_mock_gateway()


@pytest.fixture
def fast_settings():
    """Settings small enough for a full generate / oracle / run / report cycle in seconds."""
    return HarnessSettings(
        sizes=(6,),
        batch_size=3,
        m_values=(1, 2),
        budget_mode="iterations",
        iteration_limit=30,
        max_iterations=2,
        ensemble_size=3,
        render_size=128,
    )


@pytest.fixture
def run_dir(tmp_path):
    return RunDirectory(tmp_path / "run")


@pytest.fixture
def solved_run(run_dir, fast_settings):
    """Run directory with generated instances and reference solutions."""
    runner = BatchRunner(run_dir, fast_settings)
    runner.generate(seed=7)
    runner.oracle()
    return run_dir
