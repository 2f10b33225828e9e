"""
Reply Parser Module

This module parses agent replies against the route grammar

    <<start>>
    Salesman1: Depot-Node3-Node1-Depot
    ...
    <<end>>

and the scorer grammar

    <<image1: 3, image2: 4, ...>> <<the best route: 2>>

Lexing is lenient (prose outside the block, spacing, label casing), the
structure inside the block is strict. Parsing never raises; every failure is
reported as structured defects.
"""

import math
import re
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Union

from .solution_model import RouteSet

START_RE = re.compile(r"<<\s*start\s*>>", re.IGNORECASE)
END_RE = re.compile(r"<<\s*end\s*>>", re.IGNORECASE)
SALESMAN_RE = re.compile(r"^salesman\s*(\d{1,9})\s*:\s*(.*)$", re.IGNORECASE)
TOKEN_SPLIT_RE = re.compile(r"\s*(?:->|→|-)\s*")
DEPOT_TOKEN_RE = re.compile(r"^(?:depot|node\s*0+|0+)$", re.IGNORECASE)
NODE_TOKEN_RE = re.compile(r"^(?:node\s*)?(\d{1,9})$", re.IGNORECASE)

SCORE_BLOCK_RE = re.compile(r"<<\s*(image\s*\d+\s*:[^<>]*)>>", re.IGNORECASE)
SCORE_ITEM_RE = re.compile(r"image\s*(\d{1,9})\s*:\s*([^,\n<>]*)", re.IGNORECASE)
BEST_RE = re.compile(r"<<\s*the\s+best\s+route\s*:\s*(?:image\s*)?([^>]*?)\s*>>", re.IGNORECASE)


@dataclass(frozen=True)
class Defect:
    """A located problem found while parsing a reply."""

    kind: str
    position: int
    detail: str = ""

    def to_dict(self) -> Dict:
        return {"kind": self.kind, "position": self.position, "detail": self.detail}

    @classmethod
    def from_dict(cls, data: Dict) -> "Defect":
        return cls(data["kind"], data["position"], data.get("detail", ""))


@dataclass(frozen=True)
class ScoreBoard:
    """Scorer verdict: one score per image id 1..k and the chosen id."""

    scores: Dict[int, float]
    best_id: int

    def to_dict(self) -> Dict:
        return {"scores": {str(k): v for k, v in sorted(self.scores.items())}, "best_id": self.best_id}


@dataclass(frozen=True)
class ParseOutcome:
    """
    Result of parsing one reply.

    Attributes:
        result: Parsed RouteSet or ScoreBoard, or None on parse failure
        defects: Fatal problems; non-empty iff result is None
        notes: Non-fatal observations (e.g. a fallback was applied)
    """

    result: Optional[Union[RouteSet, ScoreBoard]]
    defects: List[Defect] = field(default_factory=list)
    notes: List[Defect] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.result is not None

    @classmethod
    def failure(cls, defects: List[Defect]) -> "ParseOutcome":
        return cls(result=None, defects=defects)

    def to_dict(self) -> Dict:
        return {
            "ok": self.ok,
            "defects": [d.to_dict() for d in self.defects],
            "notes": [d.to_dict() for d in self.notes],
        }


def _parse_route_line(body: str, offset: int, n: int, defects: List[Defect]) -> Optional[List[int]]:
    tokens = [t for t in TOKEN_SPLIT_RE.split(body.strip())]
    if not tokens or tokens == [""]:
        defects.append(Defect("empty_route", offset, "no tokens after the salesman label"))
        return None

    route = []
    ok = True
    last = len(tokens) - 1
    for position, token in enumerate(tokens):
        token = token.strip()
        if position in (0, last):
            if DEPOT_TOKEN_RE.match(token):
                route.append(0)
                continue
            defects.append(Defect("unanchored_route", offset, f"expected depot, got '{token}'"))
            ok = False
            continue
        match = NODE_TOKEN_RE.match(token)
        if not match:
            defects.append(Defect("bad_token", offset, f"cannot read node token '{token}'"))
            ok = False
            continue
        index = int(match.group(1))
        if not 1 <= index <= n - 1:
            defects.append(Defect("index_out_of_range", offset, f"node {index} outside 1..{n - 1}"))
            ok = False
            continue
        route.append(index)

    if len(tokens) < 2:
        defects.append(Defect("unanchored_route", offset, "a route needs a depot at both ends"))
        ok = False
    return route if ok else None


def parse_routes(text: str, m: int, n: int) -> ParseOutcome:
    """
    Extract a RouteSet from the first <<start>> ... <<end>> block of a reply.

    Missing or duplicated nodes are not parse errors; they are left to
    solution_model.validate.

    Args:
        text: Raw agent reply
        m: Expected salesman count
        n: Node count of the instance (depot included)

    Returns:
        ParseOutcome holding a RouteSet, or defects
    """
    text = text or ""
    start = START_RE.search(text)
    if not start:
        return ParseOutcome.failure([Defect("missing_start", 0, "no <<start>> delimiter")])
    end = END_RE.search(text, start.end())
    if not end:
        return ParseOutcome.failure([Defect("unterminated_block", start.start(), "no <<end>> after <<start>>")])

    defects: List[Defect] = []
    routes = []
    offset = start.end()
    for raw_line in text[start.end():end.start()].splitlines(keepends=True):
        line = raw_line.strip()
        line_offset = offset
        offset += len(raw_line)
        if not line:
            continue
        match = SALESMAN_RE.match(line)
        if not match:
            defects.append(Defect("unexpected_line", line_offset, line[:80]))
            continue
        label = int(match.group(1))
        if label != len(routes) + 1:
            defects.append(Defect("salesman_order", line_offset, f"expected Salesman{len(routes) + 1}, got Salesman{label}"))
        routes.append(_parse_route_line(match.group(2), line_offset, n, defects))

    if len(routes) != m:
        defects.append(Defect("wrong_salesman_count", start.start(), f"expected {m} routes, found {len(routes)}"))
    if defects:
        return ParseOutcome.failure(defects)
    return ParseOutcome(result=RouteSet.of(routes, source="reply"))


def _lowest_index_argmax(scores: Dict[int, float]) -> int:
    best = max(scores.values())
    return min(i for i, s in scores.items() if s == best)


def parse_scores(text: str, k: int) -> ParseOutcome:
    """
    Extract a ScoreBoard from a scorer reply.

    When the explicit best-route line is absent or out of range, the best id
    falls back to the lowest-index maximum score and a note is recorded.

    Args:
        text: Raw scorer reply
        k: Number of images that were scored

    Returns:
        ParseOutcome holding a ScoreBoard, or defects
    """
    text = text or ""
    block = SCORE_BLOCK_RE.search(text)
    region, base = (block.group(1), block.start(1)) if block else (text, 0)

    defects: List[Defect] = []
    scores: Dict[int, float] = {}
    for item in SCORE_ITEM_RE.finditer(region):
        image_id = int(item.group(1))
        raw = item.group(2).strip()
        position = base + item.start()
        try:
            value = float(raw)
            if not math.isfinite(value):
                raise ValueError(raw)
        except ValueError:
            defects.append(Defect("non_numeric_score", position, f"image{image_id}: '{raw}'"))
            continue
        if not 1 <= image_id <= k:
            continue
        if image_id in scores:
            defects.append(Defect("duplicate_image", position, f"image{image_id} scored twice"))
            continue
        scores[image_id] = value

    missing = [i for i in range(1, k + 1) if i not in scores]
    if missing:
        defects.append(Defect("incomplete_scores", base, f"no score for images {missing}"))
    if defects:
        return ParseOutcome.failure(defects)

    notes: List[Defect] = []
    best_id = None
    best = BEST_RE.search(text)
    if best:
        try:
            best_id = int(best.group(1).strip())
        except ValueError:
            best_id = None
        if best_id is not None and not 1 <= best_id <= k:
            best_id = None
    if best_id is None:
        best_id = _lowest_index_argmax(scores)
        notes.append(Defect("best_id_fallback", best.start() if best else len(text),
                            f"best route taken as highest score, image{best_id}"))
    return ParseOutcome(result=ScoreBoard(scores=scores, best_id=best_id), notes=notes)


def _node_label(index: int) -> str:
    return "Depot" if index == 0 else f"Node{index}"


def format_routes(rs: RouteSet) -> str:
    """Canonical text of a route set in the route grammar."""
    lines = ["<<start>>"]
    for i, route in enumerate(rs.routes, start=1):
        lines.append(f"Salesman{i}: " + "-".join(_node_label(v) for v in route))
    lines.append("<<end>>")
    return "\n".join(lines)


def format_scores(scores: Sequence[float], best_id: int) -> str:
    """Scorer grammar text for scores of images 1..k."""
    items = ", ".join(f"image{i}: {_format_score(s)}" for i, s in enumerate(scores, start=1))
    return f"<<{items}>>\n<<the best route: {best_id}>>"


def _format_score(value: float) -> str:
    return str(int(value)) if float(value).is_integer() else repr(float(value))
