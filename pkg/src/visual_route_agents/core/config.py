"""
Harness configuration.

Settings resolve as command-line flags > config file > defaults. The config
file is a plain key=value file read with python-dotenv; keys are the field
names below, optionally written as VRA_<FIELD> in upper case.
"""

import dataclasses
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

from dotenv import dotenv_values

from .agent_gateway import MockBehavior
from .errors import ConfigurationError
from .orchestrator import RETURN_POLICIES, StrategyConfig
from .reference_solver import SolverConfig
from .renderer import DEFAULT_PALETTE, RenderStyle

ENV_PREFIX = "VRA_"
TRUE_VALUES = ("true", "1", "yes", "on")
FALSE_VALUES = ("false", "0", "no", "off")


@dataclass(frozen=True)
class HarnessSettings:
    """Every tunable of the harness; all resolved values go into the run manifest."""

    # gateway
    backend: str = "mock"
    base_url: str = ""
    model_id: str = "gpt-4o"
    max_output_tokens: int = 2048
    request_timeout: float = 120.0
    max_retries: int = 5
    max_in_flight: int = 4
    requests_per_minute: float = 0.0
    cache_enabled: bool = True

    # mock agent
    hallucination_rate: float = 0.0
    improvement_mode: str = "best"
    mock_seed: int = 0

    # strategies
    max_iterations: int = 10
    ensemble_size: int = 7
    critic_temperature: float = 0.7
    initializer_temperature: float = 0.0
    scorer_temperature: float = 0.0
    return_policy: str = "best_valid"

    # reference solver
    time_limit: float = 120.0
    budget_mode: str = "time"
    iteration_limit: int = 2000
    gls_lambda: float = 0.1
    solver_seed: int = 0

    # instances and rendering
    sizes: Tuple[int, ...] = (10, 15, 20, 25, 30, 35)
    batch_size: int = 30
    seed: int = 0
    m_values: Tuple[int, ...] = (1, 2, 3)
    render_size: int = 1024

    jobs: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self):
        problems = []
        if self.backend not in ("mock", "live"):
            problems.append(f"backend must be 'mock' or 'live', got '{self.backend}'")
        if self.improvement_mode not in ("best", "random"):
            problems.append(f"improvement_mode must be 'best' or 'random', got '{self.improvement_mode}'")
        if self.return_policy not in RETURN_POLICIES:
            problems.append(f"return_policy must be one of {RETURN_POLICIES}, got '{self.return_policy}'")
        if self.budget_mode not in ("time", "iterations"):
            problems.append(f"budget_mode must be 'time' or 'iterations', got '{self.budget_mode}'")
        if not 0.0 <= self.hallucination_rate <= 1.0:
            problems.append("hallucination_rate must lie in [0, 1]")
        for name in ("critic_temperature", "initializer_temperature", "scorer_temperature"):
            if not 0.0 <= getattr(self, name) <= 2.0:
                problems.append(f"{name} must lie in [0, 2]")
        for name in ("max_iterations", "max_in_flight", "max_retries", "batch_size", "jobs", "max_output_tokens"):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be at least 1")
        if self.ensemble_size < 2:
            problems.append("ensemble_size must be at least 2")
        if self.time_limit <= 0 or self.gls_lambda <= 0 or self.request_timeout <= 0:
            problems.append("time_limit, gls_lambda and request_timeout must be positive")
        if self.requests_per_minute < 0 or self.iteration_limit < 0:
            problems.append("requests_per_minute and iteration_limit must be non-negative")
        if not self.sizes or any(n < 2 for n in self.sizes):
            problems.append("sizes must be non-empty and at least 2")
        if not self.m_values or any(m < 1 for m in self.m_values):
            problems.append("m_values must be non-empty and at least 1")
        elif max(self.m_values) > len(DEFAULT_PALETTE):
            problems.append(f"m_values go up to {max(self.m_values)} but the route palette has {len(DEFAULT_PALETTE)} colours")
        if self.render_size < 64:
            problems.append("render_size must be at least 64")
        if problems:
            raise ConfigurationError("; ".join(problems))

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any], base: Optional["HarnessSettings"] = None) -> "HarnessSettings":
        """
        Apply string or typed values on top of base (or the defaults).

        Raises:
            ConfigurationError: on unknown keys or unparseable values
        """
        base = base or cls()
        known = {f.name: f for f in dataclasses.fields(cls)}
        updates = {}
        for raw_key, value in values.items():
            if value is None:
                continue
            key = raw_key.strip().lower()
            if key.startswith(ENV_PREFIX.lower()):
                key = key[len(ENV_PREFIX):]
            if key not in known:
                raise ConfigurationError(f"Unknown setting '{raw_key}'")
            updates[key] = _coerce(key, value, getattr(base, key))
        return dataclasses.replace(base, **updates)

    @classmethod
    def from_file(cls, path: Union[str, Path], base: Optional["HarnessSettings"] = None) -> "HarnessSettings":
        """Read a key=value config file."""
        path = Path(path)
        if not path.is_file():
            raise ConfigurationError(f"Config file not found: {path}")
        return cls.from_mapping(dotenv_values(path), base)

    @classmethod
    def from_env(cls, environ: Optional[Mapping[str, str]] = None,
                 base: Optional["HarnessSettings"] = None) -> "HarnessSettings":
        """Pick up VRA_<FIELD> variables; the API key is never part of the settings."""
        environ = os.environ if environ is None else environ
        names = {f.name for f in dataclasses.fields(cls)}
        values = {key: value for key, value in environ.items()
                  if key.startswith(ENV_PREFIX) and key[len(ENV_PREFIX):].lower() in names}
        return cls.from_mapping(values, base)

    @classmethod
    def resolve(cls, config_path: Optional[Union[str, Path]] = None,
                overrides: Optional[Mapping[str, Any]] = None) -> "HarnessSettings":
        settings = cls()
        if config_path:
            settings = cls.from_file(config_path, settings)
        if overrides:
            settings = cls.from_mapping(overrides, settings)
        return settings

    def to_dict(self) -> Dict:
        data = dataclasses.asdict(self)
        data["sizes"] = list(self.sizes)
        data["m_values"] = list(self.m_values)
        return data

    def mock_behavior(self) -> MockBehavior:
        return MockBehavior(hallucination_rate=self.hallucination_rate,
                            improvement_mode=self.improvement_mode, seed=self.mock_seed)

    def strategy_config(self, strategy: str, m: int) -> StrategyConfig:
        return StrategyConfig(
            strategy=strategy,
            m=m,
            max_iterations=self.max_iterations,
            ensemble_size=self.ensemble_size,
            critic_temperature=self.critic_temperature,
            initializer_temperature=self.initializer_temperature,
            scorer_temperature=self.scorer_temperature,
            return_policy=self.return_policy,
        )

    def solver_config(self, m: int) -> SolverConfig:
        return SolverConfig(
            m=m,
            time_limit=self.time_limit,
            gls_lambda=self.gls_lambda,
            seed=self.solver_seed,
            budget_mode=self.budget_mode,
            iteration_limit=self.iteration_limit,
        )

    def render_style(self) -> RenderStyle:
        """Default style scaled to render_size."""
        scale = self.render_size / 1024
        return RenderStyle(
            width=self.render_size,
            height=self.render_size,
            margin=round(51 * scale),
            depot_size=max(4, round(18 * scale)),
            node_size=max(3, round(14 * scale)),
            label_size=max(6, round(14 * scale)),
            line_width=max(1.0, 2.5 * scale),
        )


def _coerce(key: str, value: Any, current: Any) -> Any:
    if not isinstance(value, str):
        if isinstance(current, tuple):
            return tuple(int(v) for v in value)
        return value
    text = value.strip()
    try:
        if isinstance(current, bool):
            lowered = text.lower()
            if lowered in TRUE_VALUES:
                return True
            if lowered in FALSE_VALUES:
                return False
            raise ValueError(text)
        if isinstance(current, int):
            return int(text)
        if isinstance(current, float):
            return float(text)
        if isinstance(current, tuple):
            return tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise ConfigurationError(f"Cannot read setting {key}={value!r}") from None
    return text
