"""
Reference Solver Module

This module produces the reference solutions every agent run is measured
against: a savings construction adapted to a fixed salesman count, guided
local search on top of it, and an exhaustive oracle for small instances.
"""

import itertools
import logging
import time
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterator, List, Literal, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigurationError, DomainError, InfeasibleError, InstanceSizeError
from .instance_model import Instance, distance_matrix
from .solution_model import RouteSet, validate

logger = logging.getLogger(__name__)

NEIGHBORHOODS = ("two_opt", "or_opt", "relocate", "exchange")
EXACT_MAX_NODES = 10
MOVE_EPS = 1e-10
TIE_EPS = 1e-12
OR_OPT_MAX_SEGMENT = 3

BudgetMode = Literal["time", "iterations"]
Move = Tuple


@dataclass(frozen=True)
class SolverConfig:
    """
    Reference solver settings.

    Attributes:
        m: Salesman count
        time_limit: Wall-clock budget in seconds (budget_mode 'time')
        gls_lambda: Penalty scaling factor, multiplied by the mean edge length
        neighborhoods: Enabled local search moves
        seed: Seed for breaking ties between equally good moves
        budget_mode: 'time' stops on the wall clock, 'iterations' after iteration_limit steps
        iteration_limit: Step budget in 'iterations' mode
    """

    m: int = 1
    time_limit: float = 120.0
    gls_lambda: float = 0.1
    neighborhoods: Tuple[str, ...] = NEIGHBORHOODS
    seed: int = 0
    budget_mode: BudgetMode = "time"
    iteration_limit: int = 2000

    def __post_init__(self):
        if self.m < 1:
            raise ConfigurationError(f"Salesman count must be at least 1, got {self.m}")
        if self.time_limit <= 0:
            raise ConfigurationError(f"time_limit must be positive, got {self.time_limit}")
        if self.gls_lambda <= 0:
            raise ConfigurationError(f"gls_lambda must be positive, got {self.gls_lambda}")
        unknown = set(self.neighborhoods) - set(NEIGHBORHOODS)
        if unknown or not self.neighborhoods:
            raise ConfigurationError(f"Unknown or empty neighborhoods: {sorted(unknown) or '[]'}")
        if self.budget_mode not in ("time", "iterations"):
            raise ConfigurationError(f"Unknown budget mode: {self.budget_mode}")
        if self.iteration_limit < 0:
            raise ConfigurationError(f"iteration_limit must be non-negative, got {self.iteration_limit}")

    def to_dict(self) -> Dict:
        return {
            "m": self.m,
            "time_limit": self.time_limit,
            "gls_lambda": self.gls_lambda,
            "neighborhoods": list(self.neighborhoods),
            "seed": self.seed,
            "budget_mode": self.budget_mode,
            "iteration_limit": self.iteration_limit,
        }


@dataclass
class SolverTrace:
    """What the improvement phase did: steps taken and best distance after each."""

    budget_mode: str
    iterations: int = 0
    local_optima: int = 0
    history: List[float] = field(default_factory=list)

    @property
    def initial_distance(self) -> Optional[float]:
        return self.history[0] if self.history else None

    @property
    def final_distance(self) -> Optional[float]:
        return self.history[-1] if self.history else None

    def to_dict(self) -> Dict:
        return {
            "budget_mode": self.budget_mode,
            "iterations": self.iterations,
            "local_optima": self.local_optima,
            "initial_distance": self.initial_distance,
            "final_distance": self.final_distance,
        }


def _routes_cost(routes: Sequence[Sequence[int]], cost: List[List[float]]) -> float:
    return sum(cost[a][b] for route in routes for a, b in zip(route, route[1:]))


# Savings construction

def _best_join(a: List[int], b: List[int], dist: List[List[float]]) -> Tuple[float, List[int]]:
    """Cheapest way to concatenate two depot-free routes, as (saving, merged)."""
    options = []
    for left in (a, a[::-1]):
        for right in (b, b[::-1]):
            i, j = left[-1], right[0]
            options.append((dist[0][i] + dist[0][j] - dist[i][j], left + right))
    return max(options, key=lambda option: option[0])


def solve_savings(inst: Instance, m: int) -> RouteSet:
    """
    Clarke-Wright savings adapted to exactly m routes.

    Starts from one out-and-back route per node and merges route ends in
    descending order of d(0,i) + d(0,j) - d(i,j), never going below m routes.
    If more than m routes are left afterwards, the pair whose join increases
    the total distance least is merged until m remain.

    Args:
        inst: Instance
        m: Salesman count

    Returns:
        Valid RouteSet with source 'savings'
    """
    if m < 1:
        raise DomainError(f"Salesman count must be at least 1, got {m}")
    if inst.n <= m:
        raise InfeasibleError(f"{inst.n - 1} customers cannot fill {m} routes")

    dist = distance_matrix(inst).tolist()
    routes: Dict[int, List[int]] = {v: [v] for v in range(1, inst.n)}
    route_of = {v: v for v in range(1, inst.n)}

    savings = sorted(
        ((dist[0][i] + dist[0][j] - dist[i][j], i, j)
         for i in range(1, inst.n) for j in range(i + 1, inst.n)),
        key=lambda item: (-item[0], item[1], item[2]),
    )
    for _, i, j in savings:
        if len(routes) <= m:
            break
        ri, rj = route_of[i], route_of[j]
        if ri == rj:
            continue
        a, b = routes[ri], routes[rj]
        if i not in (a[0], a[-1]) or j not in (b[0], b[-1]):
            continue
        if a[-1] != i:
            a = a[::-1]
        if b[0] != j:
            b = b[::-1]
        routes[ri] = a + b
        for v in b:
            route_of[v] = ri
        del routes[rj]

    while len(routes) > m:
        best = None
        ids = sorted(routes)
        for x, y in itertools.combinations(ids, 2):
            saving, merged = _best_join(routes[x], routes[y], dist)
            if best is None or saving > best[0] + TIE_EPS:
                best = (saving, x, y, merged)
        _, x, y, merged = best
        routes[x] = merged
        del routes[y]

    return RouteSet.of([[0] + routes[key] + [0] for key in sorted(routes)], source="savings")


# Guided local search

def _neighborhood_moves(routes: List[List[int]], cost: List[List[float]],
                        enabled: Sequence[str]) -> Iterator[Tuple[float, Move]]:
    """Yield (delta, move) for every move of the enabled neighborhoods."""
    count = len(routes)
    if "two_opt" in enabled:
        for p, r in enumerate(routes):
            for i in range(len(r) - 3):
                a, b = r[i], r[i + 1]
                for j in range(i + 2, len(r) - 1):
                    c, d = r[j], r[j + 1]
                    yield cost[a][c] + cost[b][d] - cost[a][b] - cost[c][d], ("two_opt", p, i, j)
        for p in range(count):
            r1 = routes[p]
            for q in range(p + 1, count):
                r2 = routes[q]
                for i in range(len(r1) - 1):
                    a, b = r1[i], r1[i + 1]
                    for j in range(len(r2) - 1):
                        c, d = r2[j], r2[j + 1]
                        yield cost[a][d] + cost[c][b] - cost[a][b] - cost[c][d], ("two_opt_star", p, q, i, j)

    if "or_opt" in enabled:
        for p, r in enumerate(routes):
            size = len(r)
            for s in range(1, OR_OPT_MAX_SEGMENT + 1):
                for i in range(1, size - s):
                    k = i + s - 1
                    prev, nxt, first, last = r[i - 1], r[k + 1], r[i], r[k]
                    gain = cost[prev][first] + cost[last][nxt] - cost[prev][nxt]
                    for t in itertools.chain(range(0, i - 1), range(k + 1, size - 1)):
                        a, b = r[t], r[t + 1]
                        yield cost[a][first] + cost[last][b] - cost[a][b] - gain, ("or_opt", p, i, s, t, False)
                        if s > 1:
                            yield cost[a][last] + cost[first][b] - cost[a][b] - gain, ("or_opt", p, i, s, t, True)

    if "relocate" in enabled:
        for p, r in enumerate(routes):
            for i in range(1, len(r) - 1):
                prev, u, nxt = r[i - 1], r[i], r[i + 1]
                gain = cost[prev][u] + cost[u][nxt] - cost[prev][nxt]
                for q, target in enumerate(routes):
                    if q == p:
                        continue
                    for t in range(len(target) - 1):
                        a, b = target[t], target[t + 1]
                        yield cost[a][u] + cost[u][b] - cost[a][b] - gain, ("relocate", p, i, q, t)

    if "exchange" in enabled:
        slots = [(p, i) for p, r in enumerate(routes) for i in range(1, len(r) - 1)]
        for x in range(len(slots)):
            p, i = slots[x]
            rp = routes[p]
            pu, u, nu = rp[i - 1], rp[i], rp[i + 1]
            for y in range(x + 1, len(slots)):
                q, j = slots[y]
                if p == q and abs(i - j) < 2:
                    continue
                rq = routes[q]
                pv, v, nv = rq[j - 1], rq[j], rq[j + 1]
                delta = (cost[pu][v] + cost[v][nu] - cost[pu][u] - cost[u][nu]
                         + cost[pv][u] + cost[u][nv] - cost[pv][v] - cost[v][nv])
                yield delta, ("exchange", p, i, q, j)


def _apply_move(routes: List[List[int]], move: Move) -> List[List[int]]:
    kind = move[0]
    updated = [list(r) for r in routes]
    if kind == "two_opt":
        _, p, i, j = move
        r = updated[p]
        updated[p] = r[:i + 1] + r[i + 1:j + 1][::-1] + r[j + 1:]
    elif kind == "two_opt_star":
        _, p, q, i, j = move
        r1, r2 = updated[p], updated[q]
        updated[p] = r1[:i + 1] + r2[j + 1:]
        updated[q] = r2[:j + 1] + r1[i + 1:]
    elif kind == "or_opt":
        _, p, i, s, t, reverse = move
        r = updated[p]
        segment = r[i:i + s]
        if reverse:
            segment = segment[::-1]
        rest = r[:i] + r[i + s:]
        anchor = t if t < i else t - s
        updated[p] = rest[:anchor + 1] + segment + rest[anchor + 1:]
    elif kind == "relocate":
        _, p, i, q, t = move
        u = updated[p].pop(i)
        updated[q].insert(t + 1, u)
    elif kind == "exchange":
        _, p, i, q, j = move
        updated[p][i], updated[q][j] = updated[q][j], updated[p][i]
    else:
        raise DomainError(f"Unknown move: {kind}")
    return updated


class _Budget:
    def __init__(self, cfg: SolverConfig):
        self.cfg = cfg
        self.deadline = time.monotonic() + cfg.time_limit

    def exhausted(self, iterations: int) -> bool:
        if self.cfg.budget_mode == "iterations":
            return iterations >= self.cfg.iteration_limit
        return time.monotonic() >= self.deadline


def _penalize(routes: List[List[int]], dist: List[List[float]], penalties: np.ndarray):
    """Add one penalty to every used edge of maximum utility length / (1 + penalty)."""
    edges = {(min(a, b), max(a, b)) for route in routes for a, b in zip(route, route[1:]) if a != b}
    if not edges:
        return
    utility = {e: dist[e[0]][e[1]] / (1.0 + penalties[e]) for e in edges}
    top = max(utility.values())
    for (a, b), value in utility.items():
        if value >= top - TIE_EPS:
            penalties[a, b] += 1
            penalties[b, a] += 1


def guided_local_search(start: RouteSet, inst: Instance, cfg: SolverConfig) -> Tuple[RouteSet, SolverTrace]:
    """
    Guided local search from a valid start, returning the best route set and a trace.

    Each step either applies the best-improving move on the augmented cost
    distance + lambda * mean_edge * penalty, or, at a local optimum of that
    cost, penalizes the solution's edges of maximum utility.

    Args:
        start: Valid start route set with cfg.m routes
        inst: Instance
        cfg: Solver settings

    Returns:
        Tuple of (best RouteSet by true distance, SolverTrace)
    """
    report = validate(start, inst, cfg.m)
    if not report.valid:
        raise DomainError(f"Guided local search needs a valid start: {report.to_dict()}")

    dist_matrix = distance_matrix(inst)
    dist = dist_matrix.tolist()
    penalties = np.zeros_like(dist_matrix)
    cost = dist
    rng = np.random.default_rng(cfg.seed)
    budget = _Budget(cfg)

    current = [list(r) for r in start.routes]
    best = [list(r) for r in current]
    best_distance = _routes_cost(best, dist)
    trace = SolverTrace(budget_mode=cfg.budget_mode, history=[best_distance])

    while not budget.exhausted(trace.iterations):
        best_delta = None
        ties: List[Move] = []
        for delta, move in _neighborhood_moves(current, cost, cfg.neighborhoods):
            if best_delta is None or delta < best_delta - TIE_EPS:
                best_delta, ties = delta, [move]
            elif delta <= best_delta + TIE_EPS:
                ties.append(move)
        if best_delta is None:
            break

        if best_delta < -MOVE_EPS:
            move = ties[0] if len(ties) == 1 else ties[int(rng.integers(len(ties)))]
            current = _apply_move(current, move)
            distance = _routes_cost(current, dist)
            if distance < best_distance - TIE_EPS:
                best, best_distance = [list(r) for r in current], distance
        else:
            trace.local_optima += 1
            edge_count = sum(1 for route in current for a, b in zip(route, route[1:]) if a != b)
            mean_edge = _routes_cost(current, dist) / max(edge_count, 1)
            _penalize(current, dist, penalties)
            cost = (dist_matrix + cfg.gls_lambda * mean_edge * penalties).tolist()
        trace.iterations += 1
        trace.history.append(best_distance)

    logger.debug("GLS on %s: %d steps, %d local optima, %.6f -> %.6f", inst.id, trace.iterations,
                 trace.local_optima, trace.history[0], best_distance)
    return RouteSet.of(best, source="reference"), trace


def improve_gls(start: RouteSet, inst: Instance, cfg: SolverConfig) -> RouteSet:
    """Guided local search; the result is never longer than start."""
    return guided_local_search(start, inst, cfg)[0]


def solve_reference(inst: Instance, cfg: SolverConfig) -> Tuple[RouteSet, SolverTrace]:
    """Savings construction followed by guided local search."""
    start = solve_savings(inst, cfg.m)
    return guided_local_search(start, inst, cfg)


# Exhaustive oracle

def _set_partitions(items: Sequence[int], max_blocks: int) -> Iterator[List[List[int]]]:
    """Partitions of items into at most max_blocks non-empty blocks."""
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for partition in _set_partitions(rest, max_blocks):
        for index in range(len(partition)):
            yield partition[:index] + [[first] + partition[index]] + partition[index + 1:]
        if len(partition) < max_blocks:
            yield [[first]] + partition


def _best_block_tour(block: FrozenSet[int], dist: List[List[float]]) -> Tuple[float, Tuple[int, ...]]:
    best = None
    for perm in itertools.permutations(sorted(block)):
        if len(perm) > 1 and perm[0] > perm[-1]:
            continue
        route = (0,) + perm + (0,)
        length = _routes_cost([route], dist)
        if best is None or length < best[0] - TIE_EPS or (abs(length - best[0]) <= TIE_EPS and route < best[1]):
            best = (length, route)
    return best


def solve_exact(inst: Instance, m: int) -> RouteSet:
    """
    Globally optimal route set by exhaustive enumeration.

    Customers are split into at most m non-empty blocks, each toured
    optimally; unused salesmen get [0, 0]. Equal totals are broken by the
    lexicographically smallest route representation.

    Raises:
        InstanceSizeError: for more than 10 nodes
    """
    if inst.n > EXACT_MAX_NODES:
        raise InstanceSizeError(f"Exact enumeration is limited to {EXACT_MAX_NODES} nodes, got {inst.n}")
    if m < 1:
        raise DomainError(f"Salesman count must be at least 1, got {m}")

    dist = distance_matrix(inst).tolist()
    tours: Dict[FrozenSet[int], Tuple[float, Tuple[int, ...]]] = {}
    best = None
    for partition in _set_partitions(list(range(1, inst.n)), m):
        total = 0.0
        routes = []
        for block in partition:
            key = frozenset(block)
            if key not in tours:
                tours[key] = _best_block_tour(key, dist)
            length, route = tours[key]
            total += length
            routes.append(route)
        routes.sort(key=lambda r: min(r[1:-1]))
        routes.extend([(0, 0)] * (m - len(routes)))
        candidate = tuple(routes)
        if best is None or total < best[0] - TIE_EPS or (abs(total - best[0]) <= TIE_EPS and candidate < best[1]):
            best = (total, candidate)
    return RouteSet(best[1], source="exact")
