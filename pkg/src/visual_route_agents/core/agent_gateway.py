"""
Agent Gateway Module

This module gives the orchestrator uniform access to multimodal chat backends:
a live vision chat-completion client, a deterministic mock agent for offline
runs, and a persistent content-addressed reply cache in front of both.
"""

import base64
import hashlib
import json
import logging
import math
import os
import tempfile
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Literal, Optional, Protocol, Sequence, Tuple

import numpy as np
import openai
from tenacity import (
    Retrying,
    before_sleep_log,
    retry_if_exception_type,
    stop_after_attempt,
    wait_exponential,
)

from .errors import CredentialError, DomainError, EmptyReplyError, MockMisuseError, TransportError
from .instance_model import Instance, distance_matrix
from .prompt_factory import PromptText
from .renderer import RenderedImage
from .reply_parser import format_routes, format_scores
from .solution_model import RouteSet, crossing_count, validate

logger = logging.getLogger(__name__)

API_KEY_ENV = "VRA_API_KEY"
IMPROVEMENT_EPS = 1e-12

BackendName = Literal["live", "mock"]
ImprovementMode = Literal["best", "random"]


@dataclass(frozen=True)
class AgentRequest:
    """
    One stateless call to an agent.

    Attributes:
        role: initializer, critic or scorer
        prompt: Prompt text
        images: Attached images, in order
        temperature: Sampling temperature in [0, 2]
        sample_index: Distinguishes ensemble draws of otherwise identical calls
        model_id: Backend model identifier
    """

    role: str
    prompt: PromptText
    images: Tuple[RenderedImage, ...]
    temperature: float
    sample_index: int = 0
    model_id: str = ""

    def __post_init__(self):
        if not self.images:
            raise DomainError("An agent request needs at least one image")
        if not 0.0 <= self.temperature <= 2.0:
            raise DomainError(f"Temperature must lie in [0, 2], got {self.temperature}")
        if self.sample_index < 0:
            raise DomainError(f"sample_index must be non-negative, got {self.sample_index}")


@dataclass(frozen=True)
class AgentReply:
    """Backend output for one request."""

    text: str
    latency: float
    from_cache: bool
    backend: str


@dataclass(frozen=True)
class MockBehavior:
    """
    Knobs of the mock agent.

    Attributes:
        hallucination_rate: Probability of dropping one random non-depot node from a route reply
        improvement_mode: 'best' applies the best-improving 2-opt move, 'random' a random one
        seed: Seed mixed into every per-request random stream
    """

    hallucination_rate: float = 0.0
    improvement_mode: ImprovementMode = "best"
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.hallucination_rate <= 1.0:
            raise DomainError(f"hallucination_rate must lie in [0, 1], got {self.hallucination_rate}")
        if self.improvement_mode not in ("best", "random"):
            raise DomainError(f"Unknown improvement mode: {self.improvement_mode}")

    def model_id(self) -> str:
        return f"mock-{self.improvement_mode}-h{self.hallucination_rate:g}-s{self.seed}"


@dataclass(frozen=True)
class MockContext:
    """
    Structured sidecar the orchestrator hands to the mock agent.

    The live backend never sees it; it states what the attached images show.
    """

    instance: Instance
    m: int
    incumbent: Optional[RouteSet] = None
    candidates: Tuple[RouteSet, ...] = field(default=())


def cache_key(req: AgentRequest) -> str:
    """Digest identifying a request; ensemble draws differ by sample_index."""
    payload = {
        "model_id": req.model_id,
        "role": req.role,
        "prompt": req.prompt.text,
        "images": [image.content_hash for image in req.images],
        "temperature": f"{req.temperature:.2f}",
        "sample_index": req.sample_index,
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode("utf-8")).hexdigest()


class ReplyCache:
    """Content-addressed reply store: <directory>/<hh>/<hash>.json."""

    def __init__(self, directory: Path):
        self.directory = Path(directory)

    def path_for(self, key: str) -> Path:
        return self.directory / key[:2] / f"{key}.json"

    def load(self, key: str) -> Optional[str]:
        path = self.path_for(key)
        if not path.is_file():
            return None
        try:
            with open(path, "r", encoding="utf-8") as f:
                return json.load(f)["text"]
        except (OSError, ValueError, KeyError) as e:
            logger.warning("Ignoring unreadable cache entry %s: %s", path, e)
            return None

    def store(self, key: str, text: str, meta: Optional[Dict] = None):
        path = self.path_for(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = {"key": key, "text": text, **(meta or {})}
        # Identical keys carry identical values, so last writer wins.
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as f:
                json.dump(payload, f, sort_keys=True, indent=2)
            os.replace(tmp, path)
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise


class AgentBackend(Protocol):
    name: str
    model_id: str

    def complete(self, req: AgentRequest, ctx: Optional[MockContext] = None) -> str:
        ...


RETRYABLE_ERRORS = (
    openai.APIConnectionError,
    openai.RateLimitError,
    openai.InternalServerError,
)


def _retry_after_seconds(error: BaseException) -> Optional[float]:
    response = getattr(error, "response", None)
    headers = getattr(response, "headers", None)
    if not headers:
        return None
    for header, scale in (("retry-after-ms", 0.001), ("retry-after", 1.0)):
        value = headers.get(header)
        if value is None:
            continue
        try:
            seconds = float(value) * scale
        except ValueError:
            continue
        if math.isfinite(seconds) and seconds >= 0:
            return seconds
    return None


class _RetryAfterWait:
    """Honour the server's Retry-After on rate limits, else back off exponentially."""

    def __init__(self, fallback):
        self.fallback = fallback

    def __call__(self, retry_state) -> float:
        error = retry_state.outcome.exception() if retry_state.outcome else None
        if isinstance(error, openai.RateLimitError):
            delay = _retry_after_seconds(error)
            if delay is not None:
                return delay
        return self.fallback(retry_state)


class LiveVisionBackend:
    """
    Vision chat-completion client for OpenAI-compatible endpoints.

    Each call sends one user message carrying the prompt text and the images
    as base64 PNG data URLs.
    """

    name = "live"

    def __init__(self, model_id: str, base_url: Optional[str] = None, api_key: Optional[str] = None,
                 max_output_tokens: int = 2048, timeout: float = 120.0, max_retries: int = 5,
                 max_backoff: float = 60.0):
        api_key = api_key or os.environ.get(API_KEY_ENV)
        if not api_key:
            raise CredentialError(f"Environment variable {API_KEY_ENV} is not set")
        self.model_id = model_id
        self.max_output_tokens = max_output_tokens
        self.max_retries = max(1, max_retries)
        self.max_backoff = max_backoff
        # Retries are handled here, not inside the SDK.
        self.client = openai.OpenAI(api_key=api_key, base_url=base_url or None, timeout=timeout, max_retries=0)

    def _messages(self, req: AgentRequest) -> List[Dict]:
        content = [{"type": "text", "text": req.prompt.text}]
        for image in req.images:
            encoded = base64.b64encode(image.data).decode("ascii")
            content.append({
                "type": "image_url",
                "image_url": {"url": f"data:image/{image.format};base64,{encoded}"},
            })
        return [{"role": "user", "content": content}]

    def _create(self, req: AgentRequest) -> str:
        response = self.client.chat.completions.create(
            model=self.model_id,
            messages=self._messages(req),
            temperature=req.temperature,
            max_tokens=self.max_output_tokens,
        )
        return response.choices[0].message.content or ""

    def complete(self, req: AgentRequest, ctx: Optional[MockContext] = None) -> str:
        retrying = Retrying(
            retry=retry_if_exception_type(RETRYABLE_ERRORS),
            stop=stop_after_attempt(self.max_retries),
            wait=_RetryAfterWait(wait_exponential(multiplier=1, min=1, max=self.max_backoff)),
            before_sleep=before_sleep_log(logger, logging.WARNING),
            reraise=True,
        )
        try:
            return retrying(self._create, req)
        except (openai.AuthenticationError, openai.PermissionDeniedError) as e:
            raise CredentialError(f"Backend rejected the credentials: {e}") from e
        except RETRYABLE_ERRORS as e:
            raise TransportError(f"Backend unreachable after {self.max_retries} attempts: {e}") from e
        except openai.APIError as e:
            raise TransportError(f"Backend request failed: {e}") from e


# Mock agent

def _request_rng(req: AgentRequest, behavior: MockBehavior) -> np.random.Generator:
    digest = int(cache_key(req)[:15], 16)
    return np.random.default_rng([behavior.seed, req.sample_index, digest])


def _nearest_neighbor_order(nodes: Sequence[int], dist: np.ndarray) -> List[int]:
    remaining = sorted(nodes)
    order = []
    current = 0
    while remaining:
        nxt = min(remaining, key=lambda v: (dist[current, v], v))
        order.append(nxt)
        remaining.remove(nxt)
        current = nxt
    return order


def sweep_routes(inst: Instance, m: int) -> List[List[int]]:
    """
    Angular sweep around the depot, cut into m contiguous sectors.

    The sweep starts after the widest angular gap; sector sizes differ by at
    most one node; each sector is ordered by nearest neighbour from the depot.
    """
    coords = inst.coordinates()
    others = list(range(1, inst.n))
    angles = {v: math.atan2(coords[v, 1] - coords[0, 1], coords[v, 0] - coords[0, 0]) % (2 * math.pi)
              for v in others}
    order = sorted(others, key=lambda v: (angles[v], v))
    if len(order) > 1:
        gaps = [(angles[order[(i + 1) % len(order)]] - angles[order[i]]) % (2 * math.pi)
                for i in range(len(order))]
        start = (int(np.argmax(gaps)) + 1) % len(order)
        order = order[start:] + order[:start]

    dist = distance_matrix(inst)
    base, extra = divmod(len(order), m)
    routes = []
    cursor = 0
    for i in range(m):
        size = base + (1 if i < extra else 0)
        sector = order[cursor:cursor + size]
        cursor += size
        routes.append([0] + _nearest_neighbor_order(sector, dist) + [0])
    return routes


def repair_routes(rs: Optional[RouteSet], inst: Instance, m: int) -> List[List[int]]:
    """
    Turn a possibly defective route set into a valid one.

    Out-of-range entries and repeat visits are dropped, routes are re-anchored
    at the depot, the route count is forced to m, and missing nodes are put at
    their cheapest insertion position.
    """
    if rs is None:
        return sweep_routes(inst, m)
    dist = distance_matrix(inst)
    seen = set()
    interiors: List[List[int]] = []
    for route in rs.routes:
        kept = []
        for v in route:
            if 1 <= v <= inst.n - 1 and v not in seen:
                seen.add(v)
                kept.append(v)
        interiors.append(kept)
    while len(interiors) > m:
        interiors[m - 1].extend(interiors.pop())
    while len(interiors) < m:
        interiors.append([])
    routes = [[0] + r + [0] for r in interiors]

    for v in range(1, inst.n):
        if v in seen:
            continue
        best = None
        for ri, route in enumerate(routes):
            for pos in range(len(route) - 1):
                a, b = route[pos], route[pos + 1]
                cost = dist[a, v] + dist[v, b] - dist[a, b]
                if best is None or cost < best[0] - IMPROVEMENT_EPS:
                    best = (cost, ri, pos + 1)
        routes[best[1]].insert(best[2], v)
    return routes


def _two_opt_moves(routes: List[List[int]]) -> List[Tuple[int, int, int]]:
    moves = []
    for ri, route in enumerate(routes):
        for i in range(len(route) - 3):
            for j in range(i + 2, len(route) - 1):
                moves.append((ri, i, j))
    return moves


def _two_opt_delta(route: List[int], i: int, j: int, dist: np.ndarray) -> float:
    a, b, c, d = route[i], route[i + 1], route[j], route[j + 1]
    return dist[a, c] + dist[b, d] - dist[a, b] - dist[c, d]


def _apply_two_opt(route: List[int], i: int, j: int) -> List[int]:
    return route[:i + 1] + route[i + 1:j + 1][::-1] + route[j + 1:]


def critic_step(routes: List[List[int]], inst: Instance, mode: ImprovementMode,
                rng: np.random.Generator) -> List[List[int]]:
    """Apply one intra-route 2-opt move: the best improving one, or a random one."""
    moves = _two_opt_moves(routes)
    if not moves:
        return routes
    dist = distance_matrix(inst)
    if mode == "random":
        ri, i, j = moves[int(rng.integers(len(moves)))]
    else:
        best = min(moves, key=lambda mv: _two_opt_delta(routes[mv[0]], mv[1], mv[2], dist))
        if _two_opt_delta(routes[best[0]], best[1], best[2], dist) >= -IMPROVEMENT_EPS:
            return routes
        ri, i, j = best
    updated = [list(r) for r in routes]
    updated[ri] = _apply_two_opt(updated[ri], i, j)
    return updated


def _maybe_hallucinate(routes: List[List[int]], behavior: MockBehavior,
                       rng: np.random.Generator) -> List[List[int]]:
    draw = rng.random()
    if draw >= behavior.hallucination_rate:
        return routes
    visited = sorted(v for route in routes for v in route[1:-1])
    if not visited:
        return routes
    dropped = visited[int(rng.integers(len(visited)))]
    return [[v for v in route if v != dropped] for route in routes]


def mock_score(rs: RouteSet, inst: Instance, m: int) -> int:
    """Visual-quality surrogate: 5, minus 3 if incomplete, minus up to 2 for crossings."""
    score = 5
    if not validate(rs, inst, m).valid:
        score -= 3
    score -= min(crossing_count(rs, inst), 2)
    return max(1, min(5, score))


def mock_invoke(req: AgentRequest, ctx: Optional[MockContext], behavior: MockBehavior) -> AgentReply:
    """
    Answer a request deterministically from the structured context.

    initializer: angular sweep into m sectors, nearest-neighbour order inside each.
    critic: repair the incumbent, apply one 2-opt move per improvement_mode.
    Route replies then lose one random node with probability hallucination_rate.
    scorer: rate each candidate with mock_score and name the lowest-index best.
    """
    if ctx is None:
        raise MockMisuseError("The mock backend needs a MockContext describing the attached images")
    started = time.perf_counter()
    rng = _request_rng(req, behavior)

    if req.role == "scorer":
        if len(ctx.candidates) != len(req.images):
            raise MockMisuseError(
                f"Scorer context has {len(ctx.candidates)} candidates for {len(req.images)} images"
            )
        scores = [mock_score(rs, ctx.instance, ctx.m) for rs in ctx.candidates]
        best_id = scores.index(max(scores)) + 1
        text = format_scores(scores, best_id)
    elif req.role in ("initializer", "critic"):
        if req.role == "initializer":
            routes = sweep_routes(ctx.instance, ctx.m)
        else:
            routes = repair_routes(ctx.incumbent, ctx.instance, ctx.m)
            routes = critic_step(routes, ctx.instance, behavior.improvement_mode, rng)
        routes = _maybe_hallucinate(routes, behavior, rng)
        text = format_routes(RouteSet.of(routes))
    else:
        raise MockMisuseError(f"Unknown agent role: {req.role}")

    latency = (time.perf_counter() - started) * 1000.0
    return AgentReply(text=text, latency=latency, from_cache=False, backend="mock")


class MockBackend:
    """Deterministic stand-in for a vision model, driven by MockContext."""

    name = "mock"

    def __init__(self, behavior: Optional[MockBehavior] = None):
        self.behavior = behavior or MockBehavior()
        self.model_id = self.behavior.model_id()

    def complete(self, req: AgentRequest, ctx: Optional[MockContext] = None) -> str:
        return mock_invoke(req, ctx, self.behavior).text


class RateLimiter:
    """Spaces call starts at least 60 / requests_per_minute seconds apart."""

    def __init__(self, requests_per_minute: float = 0):
        self.interval = 60.0 / requests_per_minute if requests_per_minute > 0 else 0.0
        self._lock = threading.Lock()
        self._next_slot = 0.0

    def acquire(self):
        if not self.interval:
            return
        with self._lock:
            now = time.monotonic()
            wait = self._next_slot - now
            self._next_slot = max(now, self._next_slot) + self.interval
        if wait > 0:
            time.sleep(wait)


class AgentGateway:
    """
    Single entry point for agent calls.

    Looks the request up in the reply cache, otherwise forwards it to the
    backend under the in-flight cap and the request-rate limit, then stores
    the reply.
    """

    def __init__(self, backend: AgentBackend, cache: Optional[ReplyCache] = None,
                 max_in_flight: int = 4, requests_per_minute: float = 0):
        self.backend = backend
        self.cache = cache
        self.max_in_flight = max(1, max_in_flight)
        self._slots = threading.BoundedSemaphore(self.max_in_flight)
        self._limiter = RateLimiter(requests_per_minute)

    @property
    def model_id(self) -> str:
        return self.backend.model_id

    @property
    def backend_name(self) -> str:
        return self.backend.name

    def invoke(self, req: AgentRequest, ctx: Optional[MockContext] = None) -> AgentReply:
        """
        Return the reply to a request, from the cache when possible.

        Args:
            req: The request
            ctx: Structured sidecar, used by the mock backend only

        Returns:
            AgentReply
        """
        key = cache_key(req)
        if self.cache is not None:
            cached = self.cache.load(key)
            if cached is not None:
                logger.debug("Cache hit %s (%s, sample %d)", key[:12], req.role, req.sample_index)
                return AgentReply(text=cached, latency=0.0, from_cache=True, backend=self.backend.name)

        with self._slots:
            self._limiter.acquire()
            started = time.perf_counter()
            text = self.backend.complete(req, ctx)
            latency = (time.perf_counter() - started) * 1000.0

        if not text or not text.strip():
            raise EmptyReplyError(f"{self.backend.name} backend returned an empty {req.role} reply")
        if self.cache is not None:
            self.cache.store(key, text, {"role": req.role, "model_id": req.model_id,
                                         "sample_index": req.sample_index})
        logger.debug("%s reply for %s in %.1f ms", self.backend.name, req.role, latency)
        return AgentReply(text=text, latency=latency, from_cache=False, backend=self.backend.name)
