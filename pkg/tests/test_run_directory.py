"""
Tests for the run directory layout: manifest, instances, references, transcripts and images.
"""

import json

import pytest

from visual_route_agents import __version__
from visual_route_agents.core.errors import InputError
from visual_route_agents.core.instance_model import generate_instance
from visual_route_agents.core.orchestrator import StrategyConfig, run_strategy
from visual_route_agents.core.reference_solver import solve_savings
from visual_route_agents.core.renderer import render_instance
from visual_route_agents.core.run_directory import write_text_atomic
from visual_route_agents.core.solution_model import total_distance


def test_fresh_directory_is_empty(run_dir):
    assert run_dir.is_empty()
    assert run_dir.read_manifest()["timestamps"] == {}
    assert run_dir.run_id == "run"


def test_manifest_sections_are_stamped(run_dir):
    run_dir.update_manifest("generate", {"seed": 1})
    manifest = run_dir.update_manifest("oracle", {"budget_mode": "time"}, key="m2")
    assert manifest["generate"] == {"seed": 1}
    assert manifest["oracle"] == {"m2": {"budget_mode": "time"}}
    assert manifest["tool_version"] == __version__
    assert set(manifest["timestamps"]) == {"generate", "oracle/m2"}
    assert json.loads(run_dir.manifest_path.read_text(encoding="utf-8")) == manifest
    assert not run_dir.is_empty()


def test_instances_round_trip_in_size_order(run_dir):
    for n, index in ((15, 0), (6, 1), (6, 0)):
        run_dir.write_instance(generate_instance(n, seed=n + index, instance_id=f"n{n}-{index:03d}"))
    loaded = run_dir.load_instances()
    assert [inst.id for inst in loaded] == ["n6-000", "n6-001", "n15-000"]
    assert [inst.id for inst in run_dir.load_instances([15])] == ["n15-000"]
    assert run_dir.get_instance("n6-001").n == 6
    assert run_dir.get_instance("n7-000") is None


def test_reference_round_trip_keeps_the_exact_distance(run_dir):
    inst = generate_instance(9, seed=2, instance_id="n9-000")
    rs = solve_savings(inst, 2)
    distance = total_distance(rs, inst)
    assert run_dir.load_reference(inst, 2) is None
    run_dir.write_reference(inst.id, 2, rs, distance)
    loaded, loaded_distance = run_dir.load_reference(inst, 2)
    assert loaded.routes == rs.routes
    assert loaded.source == "reference"
    assert loaded_distance == distance


def test_reference_clears_an_earlier_error(run_dir):
    inst = generate_instance(6, seed=3, instance_id="n6-000")
    run_dir.write_reference_error(inst.id, 1, "InfeasibleError: nope")
    assert run_dir.reference_error_path(inst.id, 1).is_file()
    rs = solve_savings(inst, 1)
    run_dir.write_reference(inst.id, 1, rs, total_distance(rs, inst))
    assert not run_dir.reference_error_path(inst.id, 1).exists()


def test_unreadable_reference_is_an_error(run_dir):
    inst = generate_instance(6, seed=3, instance_id="n6-000")
    path = run_dir.reference_path(inst.id, 1)
    path.parent.mkdir(parents=True)
    path.write_text("Route:\n<<0, 1, 0>>\n", encoding="utf-8")
    with pytest.raises(InputError):
        run_dir.load_reference(inst, 1)


def test_records_round_trip_and_filter(run_dir, mock_gateway, small_style):
    inst = generate_instance(7, seed=4, instance_id="n7-000")
    for strategy, m in (("zero_shot", 1), ("zero_shot", 2), ("multi_agent_2", 1)):
        cfg = StrategyConfig(strategy=strategy, m=m, max_iterations=1)
        run_dir.write_record(run_strategy(inst, cfg, mock_gateway, small_style, reference_distance=10.0))

    record = run_dir.load_record("zero_shot", 2, inst.id)
    assert record.m == 2 and record.strategy == "zero_shot"
    assert run_dir.has_complete_record("multi_agent_2", 1, inst.id)
    assert not run_dir.has_complete_record("multi_agent_1", 1, inst.id)
    assert len(run_dir.load_records()) == 3
    assert len(run_dir.load_records(strategy="zero_shot")) == 2
    assert len(run_dir.load_records(m=1)) == 2


def test_failed_or_broken_records_do_not_count_as_complete(run_dir, mock_gateway, small_style):
    inst = generate_instance(7, seed=4, instance_id="n7-000")
    record = run_strategy(inst, StrategyConfig(strategy="zero_shot"), mock_gateway, small_style)
    record.status = "failed"
    run_dir.write_record(record)
    assert not run_dir.has_complete_record("zero_shot", 1, inst.id)

    broken = run_dir.transcript_path("zero_shot", 2, inst.id)
    broken.parent.mkdir(parents=True)
    broken.write_text("{not json", encoding="utf-8")
    assert run_dir.load_record("zero_shot", 2, inst.id) is None
    assert len(run_dir.load_records()) == 1


def test_image_sink_writes_png_files(run_dir, small_style):
    inst = generate_instance(6, seed=5, instance_id="n6-000")
    sink = run_dir.image_sink(inst.id, "multi_agent_1", 2)
    sink("it01-c3", render_instance(inst, small_style))
    path = run_dir.image_path(inst.id, "multi_agent_1", 2, "it01-c3")
    assert path.name == "multi_agent_1-m2-it01-c3.png"
    assert path.read_bytes().startswith(b"\x89PNG")


def test_run_info_counts_everything(solved_run):
    info = solved_run.get_run_info()
    assert info["instances"] == 3
    assert info["references"] == {"m1": 3, "m2": 3}
    assert info["transcripts"] == {}
    assert info["reports"] == []


def test_failed_write_leaves_no_temp_file(run_dir):
    target = run_dir.root / "reports" / "note.txt"
    with pytest.raises(UnicodeEncodeError):
        write_text_atomic(target, "lone surrogate \ud800")
    assert not target.exists()
    assert list(target.parent.iterdir()) == []
