"""
Solution Model Module

This module represents route sets, detects hallucinated (defective) route
sets, and computes distances, gaps and crossing counts.
"""

from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

from .errors import DomainError
from .instance_model import Instance, Point, distance

COLLINEAR_EPS = 1e-12
DEPOT = 0


@dataclass(frozen=True)
class RouteSet:
    """
    m depot-anchored node sequences.

    Attributes:
        routes: One node-index sequence per salesman, e.g. (0, 3, 1, 0)
        source: Provenance tag (initializer, critic-iteration-k, reference, exact, ...)
    """

    routes: Tuple[Tuple[int, ...], ...]
    source: str = "unknown"

    @classmethod
    def of(cls, routes: Sequence[Sequence[int]], source: str = "unknown") -> "RouteSet":
        return cls(tuple(tuple(int(v) for v in r) for r in routes), source)

    @property
    def m(self) -> int:
        """Salesman count."""
        return len(self.routes)

    def with_source(self, source: str) -> "RouteSet":
        return RouteSet(self.routes, source)

    def interior(self, index: int) -> Tuple[int, ...]:
        """Nodes visited by one salesman, without the depot ends."""
        return self.routes[index][1:-1]

    def to_dict(self) -> Dict:
        return {"routes": [list(r) for r in self.routes], "source": self.source}

    @classmethod
    def from_dict(cls, data: Dict) -> "RouteSet":
        return cls.of(data["routes"], data.get("source", "unknown"))


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of checking a route set against an instance."""

    valid: bool
    missing: FrozenSet[int] = frozenset()
    duplicated: FrozenSet[int] = frozenset()
    malformed_routes: Tuple[int, ...] = ()
    wrong_route_count: bool = False
    empty_routes: Tuple[int, ...] = field(default=(), compare=False)

    def to_dict(self) -> Dict:
        return {
            "valid": self.valid,
            "missing": sorted(self.missing),
            "duplicated": sorted(self.duplicated),
            "malformed_routes": list(self.malformed_routes),
            "wrong_route_count": self.wrong_route_count,
            "empty_routes": list(self.empty_routes),
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "ValidationReport":
        return cls(
            valid=data["valid"],
            missing=frozenset(data.get("missing", ())),
            duplicated=frozenset(data.get("duplicated", ())),
            malformed_routes=tuple(data.get("malformed_routes", ())),
            wrong_route_count=data.get("wrong_route_count", False),
            empty_routes=tuple(data.get("empty_routes", ())),
        )


def _route_is_malformed(route: Sequence[int], n: int) -> bool:
    if len(route) < 2 or route[0] != DEPOT or route[-1] != DEPOT:
        return True
    return any(not (1 <= v <= n - 1) for v in route[1:-1])


def validate(rs: RouteSet, inst: Instance, m: int) -> ValidationReport:
    """
    Check that every non-depot node is visited exactly once by exactly one salesman.

    Out-of-range indices and unanchored routes mark the route as malformed.
    A salesman serving no node ([0, 0]) is allowed and only listed in
    empty_routes.

    Args:
        rs: Route set to check
        inst: Instance the indices refer to
        m: Expected salesman count

    Returns:
        ValidationReport; valid iff no defect was found
    """
    n = inst.n
    visits = Counter()
    malformed = []
    empty = []
    for index, route in enumerate(rs.routes):
        if _route_is_malformed(route, n):
            malformed.append(index)
        elif len(route) == 2:
            empty.append(index)
        for v in route[1:-1]:
            if 1 <= v <= n - 1:
                visits[v] += 1

    missing = frozenset(v for v in range(1, n) if visits[v] == 0)
    duplicated = frozenset(v for v, count in visits.items() if count > 1)
    wrong_count = rs.m != m
    valid = not (missing or duplicated or malformed or wrong_count)
    return ValidationReport(
        valid=valid,
        missing=missing,
        duplicated=duplicated,
        malformed_routes=tuple(malformed),
        wrong_route_count=wrong_count,
        empty_routes=tuple(empty),
    )


def route_length(route: Sequence[int], nodes: Sequence[Point]) -> float:
    """Sum of consecutive-pair distances along one route."""
    return sum(distance(nodes[a], nodes[b]) for a, b in zip(route, route[1:]))


def total_distance(rs: RouteSet, inst: Instance, m: Optional[int] = None) -> Optional[float]:
    """
    Total length of a route set, or None when the route set is invalid.

    Args:
        rs: Route set
        inst: Instance
        m: Expected salesman count (defaults to rs.m)

    Returns:
        Sum of route lengths, or None for hallucinated route sets
    """
    if not validate(rs, inst, rs.m if m is None else m).valid:
        return None
    return sum(route_length(route, inst.nodes) for route in rs.routes)


def gap_percent(candidate: Optional[float], reference: float) -> Optional[float]:
    """
    Percentage excess of candidate over reference; negative means shorter.

    Returns None when the candidate distance is undefined.
    """
    if reference <= 0:
        raise DomainError(f"Reference distance must be positive, got {reference}")
    if candidate is None:
        return None
    return 100.0 * (candidate - reference) / reference


def _orientation(p: Point, q: Point, r: Point) -> int:
    value = (q.x - p.x) * (r.y - p.y) - (q.y - p.y) * (r.x - p.x)
    if abs(value) <= COLLINEAR_EPS:
        return 0
    return 1 if value > 0 else -1


def segments_cross(p1: Point, p2: Point, q1: Point, q2: Point) -> bool:
    """True iff segments p1p2 and q1q2 properly intersect (touching or collinear does not count)."""
    o1 = _orientation(p1, p2, q1)
    o2 = _orientation(p1, p2, q2)
    o3 = _orientation(q1, q2, p1)
    o4 = _orientation(q1, q2, p2)
    return o1 * o2 < 0 and o3 * o4 < 0


def route_segments(rs: RouteSet, n: int) -> List[Tuple[int, int]]:
    """Edges of all routes with in-range, distinct endpoints."""
    segments = []
    for route in rs.routes:
        for a, b in zip(route, route[1:]):
            if a != b and 0 <= a < n and 0 <= b < n:
                segments.append((a, b))
    return segments


def crossing_count(rs: RouteSet, inst: Instance) -> int:
    """
    Count unordered pairs of route segments that properly intersect.

    Segments sharing an endpoint node are adjacent and never counted.
    """
    segments = route_segments(rs, inst.n)
    nodes = inst.nodes
    count = 0
    for i in range(len(segments)):
        a, b = segments[i]
        for j in range(i + 1, len(segments)):
            c, d = segments[j]
            if a in (c, d) or b in (c, d):
                continue
            if segments_cross(nodes[a], nodes[b], nodes[c], nodes[d]):
                count += 1
    return count
