"""
Orchestrator Module

This module runs the three strategies over one instance and records a full
transcript of every agent exchange:

- zero_shot: one Initializer call on the bare instance image
- multi_agent_1: Initializer, then per iteration an ensemble of Critic samples
  ranked by a Scorer call over the candidate images
- multi_agent_2: Initializer, then one Critic call per iteration
"""

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Literal, Optional, Tuple

from .agent_gateway import AgentGateway, AgentRequest, MockContext
from .errors import ConfigurationError, GatewayError
from .instance_model import Instance
from .prompt_factory import PromptText, critic_prompt, initializer_prompt, scorer_prompt
from .renderer import RenderedImage, RenderStyle, render_instance, render_solution
from .reply_parser import Defect, ParseOutcome, parse_routes, parse_scores
from .solution_model import RouteSet, ValidationReport, gap_percent, total_distance, validate

logger = logging.getLogger(__name__)

STRATEGIES = ("zero_shot", "multi_agent_1", "multi_agent_2")
RETURN_POLICIES = ("best_valid", "last_valid")

Strategy = Literal["zero_shot", "multi_agent_1", "multi_agent_2"]
ImageSink = Callable[[str, RenderedImage], None]


@dataclass(frozen=True)
class StrategyConfig:
    """
    Settings of one strategy run.

    Attributes:
        strategy: zero_shot, multi_agent_1 or multi_agent_2
        m: Salesman count
        max_iterations: Critic iterations after the Initializer
        ensemble_size: Critic samples per iteration (multi_agent_1)
        critic_temperature: Sampling temperature of Critic calls
        initializer_temperature: Sampling temperature of the Initializer call
        scorer_temperature: Sampling temperature of Scorer calls
        return_policy: best_valid (shortest valid candidate) or last_valid (latest valid incumbent)
    """

    strategy: Strategy = "multi_agent_2"
    m: int = 1
    max_iterations: int = 10
    ensemble_size: int = 7
    critic_temperature: float = 0.7
    initializer_temperature: float = 0.0
    scorer_temperature: float = 0.0
    return_policy: str = "best_valid"

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigurationError(f"Unknown strategy: {self.strategy}")
        if self.return_policy not in RETURN_POLICIES:
            raise ConfigurationError(f"Unknown return policy: {self.return_policy}")
        if self.m < 1:
            raise ConfigurationError(f"Salesman count must be at least 1, got {self.m}")
        if self.max_iterations < 1:
            raise ConfigurationError(f"max_iterations must be at least 1, got {self.max_iterations}")
        if self.strategy == "multi_agent_1" and self.ensemble_size < 2:
            raise ConfigurationError(f"multi_agent_1 needs ensemble_size >= 2, got {self.ensemble_size}")

    def to_dict(self) -> Dict:
        return {
            "strategy": self.strategy,
            "m": self.m,
            "max_iterations": self.max_iterations,
            "ensemble_size": self.ensemble_size,
            "critic_temperature": self.critic_temperature,
            "initializer_temperature": self.initializer_temperature,
            "scorer_temperature": self.scorer_temperature,
            "return_policy": self.return_policy,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "StrategyConfig":
        return cls(**data)


@dataclass
class AgentExchange:
    """One gateway call as it appears in a transcript."""

    role: str
    prompt: PromptText
    image_hashes: List[str]
    temperature: float
    sample_index: int
    reply: str
    parse: Dict = field(default_factory=dict)
    latency: float = 0.0
    from_cache: bool = False

    def to_dict(self) -> Dict:
        return {
            "role": self.role,
            "prompt": self.prompt.to_dict(),
            "image_hashes": list(self.image_hashes),
            "temperature": self.temperature,
            "sample_index": self.sample_index,
            "reply": self.reply,
            "parse": self.parse,
            "timing": {"latency_ms": self.latency, "from_cache": self.from_cache},
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "AgentExchange":
        timing = data.get("timing", {})
        return cls(
            role=data["role"],
            prompt=PromptText.from_dict(data["prompt"]),
            image_hashes=list(data["image_hashes"]),
            temperature=data["temperature"],
            sample_index=data["sample_index"],
            reply=data["reply"],
            parse=data.get("parse", {}),
            latency=timing.get("latency_ms", 0.0),
            from_cache=timing.get("from_cache", False),
        )


@dataclass
class Candidate:
    """A proposed route set, or a parse failure, with its validity and distance."""

    routes: Optional[RouteSet]
    validation: Optional[ValidationReport] = None
    distance: Optional[float] = None
    image_hash: Optional[str] = None
    defects: List[Defect] = field(default_factory=list)

    @property
    def parsed(self) -> bool:
        return self.routes is not None

    @property
    def valid(self) -> bool:
        return self.validation is not None and self.validation.valid

    def to_dict(self) -> Dict:
        return {
            "routes": self.routes.to_dict() if self.routes else None,
            "validation": self.validation.to_dict() if self.validation else None,
            "distance": self.distance,
            "image_hash": self.image_hash,
            "defects": [d.to_dict() for d in self.defects],
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "Candidate":
        return cls(
            routes=RouteSet.from_dict(data["routes"]) if data.get("routes") else None,
            validation=ValidationReport.from_dict(data["validation"]) if data.get("validation") else None,
            distance=data.get("distance"),
            image_hash=data.get("image_hash"),
            defects=[Defect.from_dict(d) for d in data.get("defects", [])],
        )


@dataclass
class IterationRecord:
    """
    One step of a strategy. Iteration 0 is the Initializer call.

    Attributes:
        index: Iteration number
        exchanges: Gateway calls made in this iteration
        candidates: Proposed route sets in sample order
        selected: Index into candidates of the new incumbent
        selected_image: Image hash of the selected candidate
        degraded: True when a multi_agent_1 iteration had fewer than 2 renderable candidates
        notes: Non-fatal observations (scorer fallback, missing candidates)
    """

    index: int
    exchanges: List[AgentExchange] = field(default_factory=list)
    candidates: List[Candidate] = field(default_factory=list)
    selected: int = 0
    selected_image: Optional[str] = None
    degraded: bool = False
    notes: List[Defect] = field(default_factory=list)

    @property
    def selected_candidate(self) -> Candidate:
        return self.candidates[self.selected]

    def to_dict(self) -> Dict:
        return {
            "index": self.index,
            "exchanges": [e.to_dict() for e in self.exchanges],
            "candidates": [c.to_dict() for c in self.candidates],
            "selected": self.selected,
            "selected_image": self.selected_image,
            "degraded": self.degraded,
            "notes": [n.to_dict() for n in self.notes],
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "IterationRecord":
        return cls(
            index=data["index"],
            exchanges=[AgentExchange.from_dict(e) for e in data["exchanges"]],
            candidates=[Candidate.from_dict(c) for c in data["candidates"]],
            selected=data["selected"],
            selected_image=data.get("selected_image"),
            degraded=data.get("degraded", False),
            notes=[Defect.from_dict(n) for n in data.get("notes", [])],
        )


@dataclass
class ExperimentRecord:
    """Full transcript of one strategy on one instance."""

    instance_id: str
    problem_size: int
    config: StrategyConfig
    iterations: List[IterationRecord] = field(default_factory=list)
    final: Optional[RouteSet] = None
    final_distance: Optional[float] = None
    final_origin: Optional[Tuple[int, int]] = None
    reference_distance: Optional[float] = None
    gap: Optional[float] = None
    status: str = "complete"
    error: Optional[str] = None
    model_id: str = ""
    backend: str = ""
    style_fingerprint: str = ""
    wall_time: float = 0.0

    @property
    def strategy(self) -> str:
        return self.config.strategy

    @property
    def m(self) -> int:
        return self.config.m

    @property
    def exchange_count(self) -> int:
        return sum(len(it.exchanges) for it in self.iterations)

    def candidates(self) -> List[Tuple[int, int, Candidate]]:
        """All candidates as (iteration, position, candidate) in transcript order."""
        return [(it.index, j, c) for it in self.iterations for j, c in enumerate(it.candidates)]

    def to_dict(self) -> Dict:
        return {
            "instance_id": self.instance_id,
            "problem_size": self.problem_size,
            "config": self.config.to_dict(),
            "iterations": [it.to_dict() for it in self.iterations],
            "final": self.final.to_dict() if self.final else None,
            "final_distance": self.final_distance,
            "final_origin": list(self.final_origin) if self.final_origin else None,
            "reference_distance": self.reference_distance,
            "gap": self.gap,
            "status": self.status,
            "error": self.error,
            "model_id": self.model_id,
            "backend": self.backend,
            "style_fingerprint": self.style_fingerprint,
            "timing": {"wall_time": self.wall_time},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, data: Dict) -> "ExperimentRecord":
        origin = data.get("final_origin")
        return cls(
            instance_id=data["instance_id"],
            problem_size=data["problem_size"],
            config=StrategyConfig.from_dict(data["config"]),
            iterations=[IterationRecord.from_dict(it) for it in data["iterations"]],
            final=RouteSet.from_dict(data["final"]) if data.get("final") else None,
            final_distance=data.get("final_distance"),
            final_origin=tuple(origin) if origin else None,
            reference_distance=data.get("reference_distance"),
            gap=data.get("gap"),
            status=data.get("status", "complete"),
            error=data.get("error"),
            model_id=data.get("model_id", ""),
            backend=data.get("backend", ""),
            style_fingerprint=data.get("style_fingerprint", ""),
            wall_time=data.get("timing", {}).get("wall_time", 0.0),
        )


class _Session:
    """Shared plumbing of one strategy run: gateway calls, rendering, candidate bookkeeping."""

    def __init__(self, inst: Instance, cfg: StrategyConfig, gw: AgentGateway,
                 style: RenderStyle, image_sink: Optional[ImageSink]):
        self.inst = inst
        self.cfg = cfg
        self.gw = gw
        self.style = style
        self.image_sink = image_sink

    def emit(self, stage: str, image: RenderedImage) -> RenderedImage:
        if self.image_sink is not None:
            self.image_sink(stage, image)
        return image

    def call(self, role: str, prompt: PromptText, images: List[RenderedImage], temperature: float,
             sample_index: int, ctx: MockContext) -> AgentExchange:
        req = AgentRequest(role=role, prompt=prompt, images=tuple(images), temperature=temperature,
                           sample_index=sample_index, model_id=self.gw.model_id)
        reply = self.gw.invoke(req, ctx)
        return AgentExchange(
            role=role,
            prompt=prompt,
            image_hashes=[image.content_hash for image in images],
            temperature=temperature,
            sample_index=sample_index,
            reply=reply.text,
            latency=reply.latency,
            from_cache=reply.from_cache,
        )

    def candidate(self, exchange: AgentExchange, stage: str) -> Tuple[Candidate, Optional[RenderedImage]]:
        outcome: ParseOutcome = parse_routes(exchange.reply, self.cfg.m, self.inst.n)
        exchange.parse = outcome.to_dict()
        if not outcome.ok:
            return Candidate(routes=None, defects=list(outcome.defects)), None
        routes = outcome.result.with_source(stage)
        image = self.emit(stage, render_solution(self.inst, routes, self.style))
        return Candidate(
            routes=routes,
            validation=validate(routes, self.inst, self.cfg.m),
            distance=total_distance(routes, self.inst, self.cfg.m),
            image_hash=image.content_hash,
        ), image

    def incumbent_image(self, incumbent: Optional[RouteSet], image: Optional[RenderedImage],
                        bare: RenderedImage) -> RenderedImage:
        return image if incumbent is not None and image is not None else bare


def _select_final(record: ExperimentRecord, policy: str):
    if policy == "last_valid":
        for it in reversed(record.iterations):
            chosen = it.selected_candidate if it.candidates else None
            if chosen is not None and chosen.valid:
                return chosen, (it.index, it.selected)
        return None, None
    best = None
    for index, position, candidate in record.candidates():
        if candidate.valid and (best is None or candidate.distance < best[0].distance):
            best = (candidate, (index, position))
    return best if best else (None, None)


def _finish(record: ExperimentRecord, started: float) -> ExperimentRecord:
    if record.status == "complete":
        chosen, origin = _select_final(record, record.config.return_policy)
        if chosen is not None:
            record.final = chosen.routes.with_source("final")
            record.final_distance = chosen.distance
            record.final_origin = origin
    if record.final_distance is not None and record.reference_distance is not None:
        record.gap = gap_percent(record.final_distance, record.reference_distance)
    record.wall_time = time.perf_counter() - started
    return record


def _initialize(session: _Session, record: ExperimentRecord) -> Tuple[Optional[RouteSet], Optional[RenderedImage], RenderedImage]:
    bare = session.emit("instance", render_instance(session.inst, session.style))
    ctx = MockContext(instance=session.inst, m=session.cfg.m)
    exchange = session.call("initializer", initializer_prompt(session.cfg.m), [bare],
                            session.cfg.initializer_temperature, 0, ctx)
    candidate, image = session.candidate(exchange, "initializer")
    iteration = IterationRecord(index=0, exchanges=[exchange], candidates=[candidate],
                                selected=0, selected_image=candidate.image_hash)
    record.iterations.append(iteration)
    return candidate.routes, image, bare


def _new_record(inst: Instance, cfg: StrategyConfig, gw: AgentGateway, style: RenderStyle,
                reference_distance: Optional[float]) -> ExperimentRecord:
    return ExperimentRecord(
        instance_id=inst.id,
        problem_size=inst.n,
        config=cfg,
        reference_distance=reference_distance,
        model_id=gw.model_id,
        backend=gw.backend_name,
        style_fingerprint=style.fingerprint(),
    )


def _run(inst: Instance, cfg: StrategyConfig, gw: AgentGateway, style: Optional[RenderStyle],
         reference_distance: Optional[float], image_sink: Optional[ImageSink], loop) -> ExperimentRecord:
    style = style or RenderStyle()
    started = time.perf_counter()
    record = _new_record(inst, cfg, gw, style, reference_distance)
    session = _Session(inst, cfg, gw, style, image_sink)
    try:
        incumbent, image, bare = _initialize(session, record)
        if loop is not None:
            loop(session, record, incumbent, image, bare)
    except GatewayError as e:
        logger.warning("%s on %s failed: %s", cfg.strategy, inst.id, e)
        record.status = "failed"
        record.error = f"{type(e).__name__}: {e}"
    return _finish(record, started)


def _critic_loop_single(session: _Session, record: ExperimentRecord, incumbent: Optional[RouteSet],
                        image: Optional[RenderedImage], bare: RenderedImage):
    cfg = session.cfg
    for k in range(1, cfg.max_iterations + 1):
        shown = session.incumbent_image(incumbent, image, bare)
        ctx = MockContext(instance=session.inst, m=cfg.m, incumbent=incumbent)
        exchange = session.call("critic", critic_prompt(cfg.m), [shown], cfg.critic_temperature, 0, ctx)
        candidate, candidate_image = session.candidate(exchange, f"it{k:02d}-critic")
        iteration = IterationRecord(index=k, exchanges=[exchange], candidates=[candidate],
                                    selected=0, selected_image=candidate.image_hash)
        if candidate.parsed:
            incumbent, image = candidate.routes, candidate_image
        else:
            iteration.notes.append(Defect("parse_failure", 0, "incumbent carried over"))
        record.iterations.append(iteration)


def _critic_loop_ensemble(session: _Session, record: ExperimentRecord, incumbent: Optional[RouteSet],
                          image: Optional[RenderedImage], bare: RenderedImage):
    cfg = session.cfg
    workers = max(1, min(cfg.ensemble_size, session.gw.max_in_flight))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for k in range(1, cfg.max_iterations + 1):
            shown = session.incumbent_image(incumbent, image, bare)
            ctx = MockContext(instance=session.inst, m=cfg.m, incumbent=incumbent)
            prompt = critic_prompt(cfg.m)
            futures = [
                pool.submit(session.call, "critic", prompt, [shown], cfg.critic_temperature, s, ctx)
                for s in range(cfg.ensemble_size)
            ]
            exchanges = [f.result() for f in futures]

            iteration = IterationRecord(index=k, exchanges=list(exchanges))
            images: List[Optional[RenderedImage]] = []
            for s, exchange in enumerate(exchanges):
                candidate, candidate_image = session.candidate(exchange, f"it{k:02d}-c{s + 1}")
                iteration.candidates.append(candidate)
                images.append(candidate_image)

            renderable = [j for j, c in enumerate(iteration.candidates) if c.parsed]
            if len(renderable) >= 2:
                iteration.selected = _score_candidates(session, iteration, renderable, images, incumbent)
            elif renderable:
                iteration.degraded = True
                iteration.selected = renderable[0]
            else:
                iteration.degraded = True
                iteration.selected = 0
                iteration.notes.append(Defect("no_renderable_candidate", 0, "incumbent carried over"))

            chosen = iteration.selected_candidate
            iteration.selected_image = chosen.image_hash
            if chosen.parsed:
                incumbent, image = chosen.routes, images[iteration.selected]
            record.iterations.append(iteration)


def _score_candidates(session: _Session, iteration: IterationRecord, renderable: List[int],
                      images: List[Optional[RenderedImage]], incumbent: Optional[RouteSet]) -> int:
    cfg = session.cfg
    shown = [images[j] for j in renderable]
    ctx = MockContext(instance=session.inst, m=cfg.m, incumbent=incumbent,
                      candidates=tuple(iteration.candidates[j].routes for j in renderable))
    exchange = session.call("scorer", scorer_prompt(len(shown)), shown, cfg.scorer_temperature, 0, ctx)
    outcome = parse_scores(exchange.reply, len(shown))
    exchange.parse = outcome.to_dict()
    iteration.exchanges.append(exchange)
    if not outcome.ok:
        iteration.notes.append(Defect("scorer_fallback", 0, "scorer reply unreadable, first candidate kept"))
        return renderable[0]
    iteration.notes.extend(outcome.notes)
    return renderable[outcome.result.best_id - 1]


def run_zero_shot(inst: Instance, cfg: StrategyConfig, gw: AgentGateway, style: Optional[RenderStyle] = None,
                  reference_distance: Optional[float] = None,
                  image_sink: Optional[ImageSink] = None) -> ExperimentRecord:
    """
    Single Initializer call on the bare instance image.

    Args:
        inst: Instance to solve
        cfg: Strategy settings (strategy must be zero_shot)
        gw: Agent gateway
        style: Render style
        reference_distance: Reference distance used for the gap
        image_sink: Callback receiving (stage, image) for every rendered image

    Returns:
        ExperimentRecord with exactly one iteration and one exchange
    """
    _expect(cfg, "zero_shot")
    return _run(inst, cfg, gw, style, reference_distance, image_sink, None)


def run_multi_agent_1(inst: Instance, cfg: StrategyConfig, gw: AgentGateway, style: Optional[RenderStyle] = None,
                      reference_distance: Optional[float] = None,
                      image_sink: Optional[ImageSink] = None) -> ExperimentRecord:
    """
    Initializer, then max_iterations rounds of ensemble_size Critic samples and one Scorer call.

    The Scorer sees only the renderable candidates of the round. The selected
    candidate becomes the incumbent even when invalid, so the next Critic
    round can repair it.
    """
    _expect(cfg, "multi_agent_1")
    return _run(inst, cfg, gw, style, reference_distance, image_sink, _critic_loop_ensemble)


def run_multi_agent_2(inst: Instance, cfg: StrategyConfig, gw: AgentGateway, style: Optional[RenderStyle] = None,
                      reference_distance: Optional[float] = None,
                      image_sink: Optional[ImageSink] = None) -> ExperimentRecord:
    """Initializer, then one Critic call per iteration on the previous candidate's image."""
    _expect(cfg, "multi_agent_2")
    return _run(inst, cfg, gw, style, reference_distance, image_sink, _critic_loop_single)


RUNNERS = {
    "zero_shot": run_zero_shot,
    "multi_agent_1": run_multi_agent_1,
    "multi_agent_2": run_multi_agent_2,
}


def run_strategy(inst: Instance, cfg: StrategyConfig, gw: AgentGateway, style: Optional[RenderStyle] = None,
                 reference_distance: Optional[float] = None,
                 image_sink: Optional[ImageSink] = None) -> ExperimentRecord:
    """Dispatch to the runner of cfg.strategy."""
    return RUNNERS[cfg.strategy](inst, cfg, gw, style, reference_distance, image_sink)


def _expect(cfg: StrategyConfig, strategy: str):
    if cfg.strategy != strategy:
        raise ConfigurationError(f"Expected a {strategy} config, got {cfg.strategy}")
