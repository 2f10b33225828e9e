"""
Tests for settings resolution: defaults, config files, environment and flags.
"""

import pytest

from visual_route_agents.core.config import HarnessSettings
from visual_route_agents.core.errors import ConfigurationError


def test_defaults_describe_the_full_experiment():
    settings = HarnessSettings()
    assert settings.backend == "mock"
    assert settings.sizes == (10, 15, 20, 25, 30, 35)
    assert settings.batch_size == 30
    assert settings.m_values == (1, 2, 3)
    assert settings.ensemble_size == 7
    assert settings.max_iterations == 10
    assert settings.render_size == 1024


def test_string_values_are_coerced():
    settings = HarnessSettings.from_mapping({
        "VRA_SIZES": "10, 15",
        "max_iterations": "4",
        "critic_temperature": "0.5",
        "cache_enabled": "false",
        "backend": "live",
    })
    assert settings.sizes == (10, 15)
    assert settings.max_iterations == 4
    assert settings.critic_temperature == 0.5
    assert settings.cache_enabled is False
    assert settings.backend == "live"


def test_typed_values_pass_through():
    settings = HarnessSettings.from_mapping({"m_values": [2, 3], "jobs": 2, "model_id": None})
    assert settings.m_values == (2, 3)
    assert settings.jobs == 2
    assert settings.model_id == "gpt-4o"


@pytest.mark.parametrize("values", [
    {"colour": "blue"},
    {"max_iterations": "many"},
    {"cache_enabled": "perhaps"},
])
def test_unreadable_settings_are_rejected(values):
    with pytest.raises(ConfigurationError):
        HarnessSettings.from_mapping(values)


@pytest.mark.parametrize("field, value", [
    ("backend", "remote"),
    ("hallucination_rate", 1.5),
    ("ensemble_size", 1),
    ("budget_mode", "forever"),
    ("render_size", 32),
    ("m_values", ()),
    ("m_values", (1, 9)),
    ("critic_temperature", 3.0),
])
def test_invalid_values_are_rejected(field, value):
    with pytest.raises(ConfigurationError):
        HarnessSettings(**{field: value})


def test_config_file_then_flags(tmp_path):
    path = tmp_path / "harness.env"
    path.write_text("# experiment settings\nVRA_MAX_ITERATIONS=3\nensemble_size=5\nsizes=10,20\n", encoding="utf-8")
    from_file = HarnessSettings.from_file(path)
    assert from_file.max_iterations == 3
    assert from_file.ensemble_size == 5
    assert from_file.sizes == (10, 20)

    resolved = HarnessSettings.resolve(path, {"max_iterations": 8})
    assert resolved.max_iterations == 8
    assert resolved.ensemble_size == 5


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigurationError):
        HarnessSettings.from_file(tmp_path / "absent.env")


def test_environment_ignores_foreign_variables():
    settings = HarnessSettings.from_env({
        "VRA_BACKEND": "live",
        "VRA_API_KEY": "secret",
        "VRA_RUN_DIR": "runs/x",
        "HOME": "/root",
    })
    assert settings.backend == "live"
    assert "secret" not in str(settings.to_dict())


def test_render_style_scales_with_the_image_side():
    style = HarnessSettings(render_size=256).render_style()
    assert (style.width, style.height) == (256, 256)
    assert style.margin == 13
    full = HarnessSettings().render_style()
    assert full.margin == 51
    assert full.depot_size == 18


def test_derived_configs_carry_the_settings():
    settings = HarnessSettings(max_iterations=4, ensemble_size=3, budget_mode="iterations", iteration_limit=50,
                               hallucination_rate=0.2, mock_seed=9)
    cfg = settings.strategy_config("multi_agent_1", 2)
    assert (cfg.strategy, cfg.m, cfg.max_iterations, cfg.ensemble_size) == ("multi_agent_1", 2, 4, 3)
    solver = settings.solver_config(3)
    assert (solver.m, solver.budget_mode, solver.iteration_limit) == (3, "iterations", 50)
    behavior = settings.mock_behavior()
    assert (behavior.hallucination_rate, behavior.seed) == (0.2, 9)


def test_settings_serialise_to_plain_lists():
    data = HarnessSettings().to_dict()
    assert data["sizes"] == [10, 15, 20, 25, 30, 35]
    assert data["m_values"] == [1, 2, 3]
