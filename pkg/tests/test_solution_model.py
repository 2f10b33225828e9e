"""
Tests for route validation, distances, gaps and crossing counts.
"""

import numpy as np
import pytest

from visual_route_agents.core.errors import DomainError
from visual_route_agents.core.instance_model import generate_instance
from visual_route_agents.core.solution_model import (
    RouteSet,
    crossing_count,
    gap_percent,
    route_length,
    total_distance,
    validate,
)


def test_unit_square_perimeter_is_exactly_four(unit_square):
    rs = RouteSet.of([[0, 1, 2, 3, 0]])
    assert total_distance(rs, unit_square) == 4.0
    assert crossing_count(rs, unit_square) == 0


def test_bowtie_has_one_crossing(unit_square):
    assert crossing_count(RouteSet.of([[0, 2, 1, 3, 0]]), unit_square) == 1


def test_gap_of_nine_against_ten():
    assert gap_percent(9, 10) == -10.0
    assert gap_percent(11, 10) == pytest.approx(10.0)
    assert gap_percent(None, 10) is None


def test_gap_needs_a_positive_reference():
    with pytest.raises(DomainError):
        gap_percent(1.0, 0.0)


def test_valid_route_set(unit_square):
    report = validate(RouteSet.of([[0, 1, 2, 0], [0, 3, 0]]), unit_square, m=2)
    assert report.valid
    assert not report.missing and not report.duplicated


def test_missing_node_is_a_hallucination(unit_square):
    rs = RouteSet.of([[0, 1, 3, 0]])
    report = validate(rs, unit_square, m=1)
    assert not report.valid
    assert report.missing == frozenset({2})
    assert total_distance(rs, unit_square) is None


def test_duplicated_node_is_a_hallucination(unit_square):
    report = validate(RouteSet.of([[0, 1, 2, 0], [0, 2, 3, 0]]), unit_square, m=2)
    assert not report.valid
    assert report.duplicated == frozenset({2})


def test_out_of_range_and_unanchored_routes_are_malformed(unit_square):
    report = validate(RouteSet.of([[0, 1, 2, 9, 0], [3, 0]]), unit_square, m=2)
    assert not report.valid
    assert report.malformed_routes == (0, 1)


def test_wrong_route_count(unit_square):
    report = validate(RouteSet.of([[0, 1, 2, 3, 0]]), unit_square, m=2)
    assert not report.valid
    assert report.wrong_route_count


def test_empty_salesman_is_valid_but_flagged(unit_square):
    report = validate(RouteSet.of([[0, 1, 2, 3, 0], [0, 0]]), unit_square, m=2)
    assert report.valid
    assert report.empty_routes == (1,)


def test_distance_is_invariant_under_route_reversal():
    inst = generate_instance(10, seed=4)
    forward = RouteSet.of([[0, 1, 2, 3, 4, 0], [0, 5, 6, 7, 8, 9, 0]])
    backward = RouteSet.of([[0, 4, 3, 2, 1, 0], [0, 5, 6, 7, 8, 9, 0]])
    assert total_distance(forward, inst) == pytest.approx(total_distance(backward, inst), abs=1e-12)


def test_route_set_serialisation_keeps_routes_and_source():
    rs = RouteSet.of([[0, 2, 1, 0]], source="critic-iteration-3")
    assert RouteSet.from_dict(rs.to_dict()) == rs
    assert rs.with_source("final").routes == rs.routes


def _brute_force_crossings(coords, route):
    """Independent pairwise check by solving for the intersection parameters."""
    edges = list(zip(route, route[1:]))
    count = 0
    for i in range(len(edges)):
        for j in range(i + 1, len(edges)):
            a, b = edges[i]
            c, d = edges[j]
            if len({a, b, c, d}) < 4:
                continue
            p, r = coords[a], coords[b] - coords[a]
            q, s = coords[c], coords[d] - coords[c]
            denom = r[0] * s[1] - r[1] * s[0]
            if denom == 0:
                continue
            t = ((q - p)[0] * s[1] - (q - p)[1] * s[0]) / denom
            u = ((q - p)[0] * r[1] - (q - p)[1] * r[0]) / denom
            if 0 < t < 1 and 0 < u < 1:
                count += 1
    return count


@pytest.mark.parametrize("seed", range(5))
def test_crossing_count_matches_pairwise_intersection_check(seed):
    inst = generate_instance(10, seed=100 + seed)
    order = list(np.random.default_rng(seed).permutation(np.arange(1, 10)))
    route = [0] + [int(v) for v in order] + [0]
    expected = _brute_force_crossings(inst.coordinates(), route)
    assert crossing_count(RouteSet.of([route]), inst) == expected


@pytest.mark.parametrize("seed", range(5))
def test_single_tour_length_ignores_where_the_cycle_starts(seed):
    inst = generate_instance(11, seed=seed)
    order = [0] + [int(v) for v in np.random.default_rng(seed).permutation(np.arange(1, 11))]
    distance = total_distance(RouteSet.of([order + [0]]), inst)
    for k in range(1, len(order)):
        rotated = order[k:] + order[:k]
        assert route_length(rotated + rotated[:1], inst.nodes) == pytest.approx(distance, abs=1e-12)
    reversed_tour = [0] + order[1:][::-1] + [0]
    assert total_distance(RouteSet.of([reversed_tour]), inst) == pytest.approx(distance, abs=1e-12)
