"""
Tests for the savings construction, guided local search and the exhaustive oracle.
"""

import numpy as np
import pytest

from visual_route_agents.core.errors import ConfigurationError, DomainError, InfeasibleError, InstanceSizeError
from visual_route_agents.core.instance_model import distance_matrix, generate_instance, instance_from_coordinates
from visual_route_agents.core.reference_solver import (
    SolverConfig,
    _apply_move,
    _neighborhood_moves,
    guided_local_search,
    improve_gls,
    solve_exact,
    solve_reference,
    solve_savings,
)
from visual_route_agents.core.solution_model import RouteSet, route_length, total_distance, validate

TOLERANCE = 1e-9


def iterations(m, limit=300, seed=0):
    return SolverConfig(m=m, budget_mode="iterations", iteration_limit=limit, seed=seed)


def test_savings_on_the_unit_square(unit_square):
    rs = solve_savings(unit_square, 1)
    assert rs.source == "savings"
    assert total_distance(rs, unit_square) == 4.0


@pytest.mark.parametrize("m", [1, 2, 3])
def test_savings_returns_exactly_m_valid_routes(m):
    inst = generate_instance(15, seed=m)
    rs = solve_savings(inst, m)
    assert rs.m == m
    assert validate(rs, inst, m).valid
    assert all(len(route) > 2 for route in rs.routes)


def test_savings_needs_a_customer_per_salesman(unit_square):
    with pytest.raises(InfeasibleError):
        solve_savings(unit_square, 4)


def test_solver_config_validation():
    with pytest.raises(ConfigurationError):
        SolverConfig(m=0)
    with pytest.raises(ConfigurationError):
        SolverConfig(neighborhoods=("three_opt",))
    with pytest.raises(ConfigurationError):
        SolverConfig(budget_mode="forever")
    assert SolverConfig(m=2).to_dict()["neighborhoods"] == ["two_opt", "or_opt", "relocate", "exchange"]


def test_gls_needs_a_valid_start(unit_square):
    with pytest.raises(DomainError):
        improve_gls(RouteSet.of([[0, 1, 2, 0]]), unit_square, iterations(1))


def test_gls_trace_counts_iterations():
    inst = generate_instance(9, seed=5)
    rs, trace = guided_local_search(solve_savings(inst, 2), inst, iterations(2, limit=40))
    assert rs.source == "reference"
    assert trace.iterations == 40
    assert len(trace.history) == 41
    assert trace.final_distance == pytest.approx(total_distance(rs, inst))
    assert all(b <= a for a, b in zip(trace.history, trace.history[1:]))
    assert trace.to_dict()["budget_mode"] == "iterations"


def test_time_budget_is_respected():
    inst = generate_instance(12, seed=6)
    rs, trace = solve_reference(inst, SolverConfig(m=1, time_limit=0.2))
    assert validate(rs, inst, 1).valid
    assert trace.budget_mode == "time"
    assert trace.iterations > 0


def test_gls_is_reproducible_with_a_seed():
    inst = generate_instance(10, seed=8)
    first, _ = solve_reference(inst, iterations(2, limit=60, seed=3))
    second, _ = solve_reference(inst, iterations(2, limit=60, seed=3))
    assert first == second


@pytest.mark.parametrize("neighborhood", ["two_opt", "or_opt", "relocate", "exchange"])
def test_move_deltas_match_the_applied_moves(neighborhood):
    inst = generate_instance(9, seed=13)
    dist = distance_matrix(inst).tolist()
    routes = [list(r) for r in solve_savings(inst, 2).routes]
    before = sum(route_length(r, inst.nodes) for r in routes)
    checked = 0
    for delta, move in _neighborhood_moves(routes, dist, (neighborhood,)):
        after = _apply_move(routes, move)
        assert validate(RouteSet.of(after), inst, 2).valid
        assert sum(route_length(r, inst.nodes) for r in after) - before == pytest.approx(delta, abs=1e-9)
        checked += 1
    assert checked > 0


def test_exact_on_the_unit_square(unit_square):
    rs = solve_exact(unit_square, 1)
    assert rs.source == "exact"
    assert total_distance(rs, unit_square) == 4.0


def test_exact_pads_unused_salesmen():
    # Euclidean distances: serving every customer with one salesman is never costlier.
    inst = instance_from_coordinates([(0, 0), (1, 0), (2, 0), (3, 0)])
    rs = solve_exact(inst, 2)
    assert rs.m == 2
    assert validate(rs, inst, 2).valid
    assert total_distance(rs, inst) == pytest.approx(6.0)


def test_exact_refuses_large_instances():
    with pytest.raises(InstanceSizeError):
        solve_exact(generate_instance(11, seed=0), 1)


def test_exact_is_deterministic():
    inst = generate_instance(7, seed=2)
    assert solve_exact(inst, 2) == solve_exact(inst, 2)


def test_reference_matches_the_exact_optimum():
    rng = np.random.default_rng(2025)
    matches = 0
    for case in range(20):
        n = int(rng.integers(5, 9))
        m = 1 + case % 2
        inst = generate_instance(n, seed=int(rng.integers(1 << 31)))
        optimum = total_distance(solve_exact(inst, m), inst)
        found = total_distance(solve_reference(inst, iterations(m, limit=300))[0], inst)
        assert found >= optimum - TOLERANCE
        if found <= optimum + TOLERANCE:
            matches += 1
    assert matches >= 18


def test_exact_gls_savings_ordering():
    rng = np.random.default_rng(77)
    for case in range(50):
        n = int(rng.integers(4, 9))
        m = 1 + case % 2
        inst = generate_instance(n, seed=int(rng.integers(1 << 31)))
        savings = solve_savings(inst, m)
        improved = improve_gls(savings, inst, iterations(m, limit=60))
        exact = total_distance(solve_exact(inst, m), inst)
        assert exact <= total_distance(improved, inst) + TOLERANCE
        assert total_distance(improved, inst) <= total_distance(savings, inst) + TOLERANCE


def test_exhausted_budget_still_returns_a_valid_route_set():
    inst = generate_instance(20, seed=9)
    rs, _ = solve_reference(inst, SolverConfig(m=3, time_limit=0.001))
    assert validate(rs, inst, 3).valid
    assert total_distance(rs, inst) <= total_distance(solve_savings(inst, 3), inst) + TOLERANCE


def test_gls_keeps_an_optimal_start(unit_square):
    start = RouteSet.of([[0, 1, 2, 3, 0]])
    rs = improve_gls(start, unit_square, iterations(1, limit=50))
    assert rs.routes == start.routes
    assert total_distance(rs, unit_square) == 4.0


def test_gls_uncrosses_the_bowtie_within_a_second(unit_square):
    rs = improve_gls(RouteSet.of([[0, 2, 1, 3, 0]]), unit_square, SolverConfig(m=1, time_limit=1.0))
    assert total_distance(rs, unit_square) == pytest.approx(4.0)
    assert validate(rs, unit_square, 1).valid


def test_savings_with_one_customer_per_salesman():
    inst = generate_instance(7, seed=4)
    rs = solve_savings(inst, inst.n - 1)
    assert rs.m == 6
    assert validate(rs, inst, 6).valid
    assert sorted(route[1] for route in rs.routes) == list(range(1, 7))
    assert all(len(route) == 3 for route in rs.routes)


def test_exact_on_collinear_points():
    inst = instance_from_coordinates([(0, 0), (1, 0), (2, 0), (3, 0)])
    rs = solve_exact(inst, 1)
    assert total_distance(rs, inst) == pytest.approx(6.0)
    assert validate(rs, inst, 1).valid
