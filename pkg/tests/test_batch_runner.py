"""
Tests for the generate / oracle / run / report commands over a run directory.
"""

import json
from collections import defaultdict

import pandas as pd
import pytest

from visual_route_agents.core import batch_runner
from visual_route_agents.core.batch_runner import BatchRunner
from visual_route_agents.core.config import HarnessSettings
from visual_route_agents.core.errors import ConfigurationError, DomainError, InputError
from visual_route_agents.core.factory import create_gateway
from visual_route_agents.core.run_directory import RunDirectory


def runner_for(run_dir, settings):
    return BatchRunner(run_dir, settings, create_gateway(settings, run_dir.reply_cache()))


def test_generate_writes_every_instance(run_dir, fast_settings):
    messages = []
    progress = BatchRunner(run_dir, fast_settings).generate(sizes=[6, 8], count=2, seed=3,
                                                            progress_callback=messages.append)
    assert progress.processed == 4
    assert [inst.id for inst in run_dir.load_instances()] == ["n6-000", "n6-001", "n8-000", "n8-001"]
    assert messages[0].startswith("[1/4] generate n6-000: ok")
    assert run_dir.read_manifest()["generate"]["seed"] == 3


def test_generate_is_seed_stable(tmp_path, fast_settings):
    first = RunDirectory(tmp_path / "a")
    second = RunDirectory(tmp_path / "b")
    BatchRunner(first, fast_settings).generate(seed=11)
    BatchRunner(second, fast_settings).generate(seed=11)
    for a, b in zip(first.list_instance_paths(), second.list_instance_paths()):
        assert a.read_bytes() == b.read_bytes()


def test_generate_refuses_a_used_directory(solved_run, fast_settings):
    runner = BatchRunner(solved_run, fast_settings)
    with pytest.raises(InputError):
        runner.generate(seed=8)
    runner.generate(sizes=[7], count=1, seed=8, force=True)
    assert [inst.id for inst in solved_run.load_instances()] == ["n7-000"]
    assert solved_run.get_run_info()["references"] == {}


def test_oracle_skips_solved_references(solved_run, fast_settings):
    progress = BatchRunner(solved_run, fast_settings).oracle()
    assert progress.skipped == 6
    assert progress.processed == 0
    manifest = solved_run.read_manifest()
    assert set(manifest["oracle"]) == {"m1", "m2"}


def test_oracle_records_infeasible_pairs(run_dir, fast_settings):
    runner = BatchRunner(run_dir, fast_settings)
    runner.generate(sizes=[2], count=1, seed=1)
    progress = runner.oracle(m_values=[2])
    assert progress.failed == 1
    error = run_dir.reference_error_path("n2-000", 2).read_text(encoding="utf-8")
    assert error.startswith("InfeasibleError")


def test_oracle_continues_past_a_failing_instance(run_dir, fast_settings, monkeypatch):
    runner = BatchRunner(run_dir, fast_settings)
    runner.generate(seed=4)
    solve = batch_runner._solve_one

    def fail_on_second(inst, cfg):
        if inst.id == "n6-001":
            raise DomainError("solver rejected the start")
        return solve(inst, cfg)

    monkeypatch.setattr(batch_runner, "_solve_one", fail_on_second)
    progress = runner.oracle(m_values=[1])
    assert (progress.processed, progress.failed) == (2, 1)
    error = run_dir.reference_error_path("n6-001", 1).read_text(encoding="utf-8")
    assert error.startswith("DomainError: solver rejected the start")
    assert run_dir.reference_path("n6-002", 1).is_file()


def test_oracle_needs_instances(run_dir, fast_settings):
    with pytest.raises(InputError):
        BatchRunner(run_dir, fast_settings).oracle()


def test_run_needs_references(run_dir, fast_settings):
    runner = runner_for(run_dir, fast_settings)
    runner.generate(seed=2)
    with pytest.raises(InputError):
        runner.run("zero_shot")


def test_run_rejects_unknown_strategies(solved_run, fast_settings):
    with pytest.raises(InputError):
        runner_for(solved_run, fast_settings).run("multi_agent_3")
    with pytest.raises(InputError):
        BatchRunner(solved_run, fast_settings).run("zero_shot")


def test_run_checks_the_palette_before_any_call(solved_run, fast_settings):
    runner = runner_for(solved_run, fast_settings)
    with pytest.raises(ConfigurationError):
        runner.run("zero_shot", m_values=[9])
    assert solved_run.load_records() == []
    assert not any(solved_run.cache_dir.rglob("*.json"))


def test_settings_reject_more_salesmen_than_colours():
    with pytest.raises(ConfigurationError):
        HarnessSettings.resolve(overrides={"m_values": "1,2,12"})


def test_run_writes_records_and_resumes(solved_run, fast_settings):
    runner = runner_for(solved_run, fast_settings)
    progress = runner.run("multi_agent_2")
    assert progress.processed == 6
    records = solved_run.load_records(strategy="multi_agent_2")
    assert len(records) == 6
    assert all(r.status == "complete" and r.reference_distance is not None for r in records)
    assert solved_run.image_path("n6-000", "multi_agent_2", 1, "instance").is_file()
    assert "multi_agent_2/m2" in solved_run.read_manifest()["runs"]

    again = runner.run("multi_agent_2")
    assert again.skipped == 6
    assert again.processed == 0
    solved_run.transcript_path("multi_agent_2", 2, "n6-001").unlink()
    resumed = runner.run("multi_agent_2")
    assert (resumed.processed, resumed.skipped) == (1, 5)
    forced = runner.run("multi_agent_2", m_values=[1], force=True)
    assert forced.processed == 3


def test_report_needs_records(solved_run, fast_settings):
    with pytest.raises(InputError):
        BatchRunner(solved_run, fast_settings).report()


def test_multi_agent_2_never_trails_zero_shot_on_paired_instances(run_dir, fast_settings):
    settings = HarnessSettings.from_mapping({"sizes": [8], "batch_size": 5, "max_iterations": 4}, fast_settings)
    runner = runner_for(run_dir, settings)
    runner.generate(seed=21)
    runner.oracle()
    runner.run("zero_shot")
    runner.run("multi_agent_2")
    result = runner.report()
    assert result["strategies"] == ["multi_agent_2", "zero_shot"]
    assert "notice" not in result

    finals = defaultdict(dict)
    for record in run_dir.load_records():
        finals[(record.instance_id, record.m)][record.strategy] = record.final_distance
    for key, by_strategy in finals.items():
        assert by_strategy["multi_agent_2"] <= by_strategy["zero_shot"] + 1e-9, key

    table = pd.read_csv(result["files"]["wilcoxon_zero_shot_vs_multi_agent_2"], index_col=0)
    assert list(table.columns) == ["m=1 p-value", "m=1 pairs", "m=2 p-value", "m=2 pairs"]
    assert table.loc[8, "m=1 pairs"] <= 5


def test_certain_hallucination_reports_skipped_tests(solved_run, fast_settings):
    settings = HarnessSettings.from_mapping({"hallucination_rate": 1.0}, fast_settings)
    runner = runner_for(solved_run, settings)
    runner.run("zero_shot")
    runner.run("multi_agent_2")
    result = runner.report()
    assert result["notice"].startswith("no valid records")
    summary = json.loads(solved_run.reports_dir.joinpath("summary.json").read_text(encoding="utf-8"))
    assert summary["notice"] == "no valid records"
    assert {t["method"] for t in summary["paired_tests"]} == {"skipped"}
    assert all(t["n_pairs"] == 0 for t in summary["paired_tests"])


def _paired_gaps(records):
    by_key = defaultdict(dict)
    for record in records:
        by_key[(record.problem_size, record.m, record.instance_id)][record.strategy] = record.gap
    return by_key


@pytest.mark.slow
def test_full_mock_experiment(tmp_path):
    settings = HarnessSettings(
        sizes=(10, 15),
        batch_size=30,
        m_values=(1, 2, 3),
        hallucination_rate=0.1,
        budget_mode="iterations",
        iteration_limit=200,
        max_iterations=5,
        ensemble_size=7,
        render_size=256,
    )
    run_dir = RunDirectory(tmp_path / "run")
    runner = runner_for(run_dir, settings)
    runner.generate(seed=1)
    runner.oracle()
    runner.run("zero_shot")
    runner.run("multi_agent_1")
    # the single-critic loop gets the longer budget
    runner.settings = HarnessSettings.from_mapping({"max_iterations": 10}, settings)
    runner.run("multi_agent_2")
    result = runner.report()

    cells = defaultdict(lambda: ([], []))
    for (size, m, _), gaps in _paired_gaps(run_dir.load_records()).items():
        if gaps.get("zero_shot") is not None and gaps.get("multi_agent_2") is not None:
            cells[(size, m)][0].append(gaps["zero_shot"])
            cells[(size, m)][1].append(gaps["multi_agent_2"])
    assert set(cells) == {(size, m) for size in (10, 15) for m in (1, 2, 3)}
    for key, (zero_shot, multi_agent_2) in cells.items():
        assert sum(multi_agent_2) / len(multi_agent_2) <= sum(zero_shot) / len(zero_shot), key

    for name in ("wilcoxon_zero_shot_vs_multi_agent_1", "wilcoxon_zero_shot_vs_multi_agent_2",
                 "wilcoxon_multi_agent_1_vs_multi_agent_2", "gap_summary", "hallucination_rates"):
        assert name in result["files"], name


def _strip_timing(path):
    data = json.loads(path.read_text(encoding="utf-8"))
    data.pop("timing")
    return data


@pytest.mark.slow
def test_replayed_runs_are_byte_identical(tmp_path):
    settings = HarnessSettings(
        sizes=(8,),
        batch_size=4,
        m_values=(1, 2),
        hallucination_rate=0.2,
        budget_mode="iterations",
        iteration_limit=100,
        max_iterations=3,
        ensemble_size=3,
        render_size=256,
    )
    roots = []
    for name in ("first", "second"):
        run_dir = RunDirectory(tmp_path / name)
        runner = runner_for(run_dir, settings)
        runner.generate(seed=5)
        runner.oracle()
        for strategy in ("zero_shot", "multi_agent_1", "multi_agent_2"):
            runner.run(strategy)
        runner.report()
        roots.append(run_dir)

    first, second = roots
    transcripts = sorted(p.relative_to(first.root) for p in first.transcripts_dir.rglob("*.json"))
    assert len(transcripts) == 3 * 2 * 4
    for rel in transcripts:
        assert _strip_timing(first.root / rel) == _strip_timing(second.root / rel), rel
    for directory in ("images", "reference", "reports", "instances"):
        files = sorted(p.relative_to(first.root) for p in (first.root / directory).rglob("*") if p.is_file())
        assert files, directory
        for rel in files:
            assert (first.root / rel).read_bytes() == (second.root / rel).read_bytes(), rel
