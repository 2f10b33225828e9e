"""
Batch Runner Module

This module drives the experiment commands over a run directory: instance
generation, reference solving, strategy runs with resume, and reporting.
"""

import logging
import shutil
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .agent_gateway import AgentGateway
from .config import HarnessSettings
from .errors import ConfigurationError, HarnessError, InputError
from .evaluation import build_report
from .instance_model import Instance, derive_seed, generate_instance
from .orchestrator import STRATEGIES, run_strategy
from .prompt_factory import template_hashes
from .reference_solver import SolverConfig, SolverTrace, solve_reference
from .run_directory import RunDirectory
from .solution_model import RouteSet, total_distance

logger = logging.getLogger(__name__)


class BatchProgress:
    """Tracks batch progress and forwards messages to callbacks."""

    def __init__(self, task: str, total: int = 0):
        self.task = task
        self.total = total
        self.processed = 0
        self.skipped = 0
        self.failed = 0
        self.callbacks: List[Callable[[str], None]] = []

    def add_callback(self, callback: Callable[[str], None]):
        self.callbacks.append(callback)

    def notify(self, message: str):
        for callback in self.callbacks:
            try:
                callback(message)
            except Exception:
                logger.debug("Progress callback failed", exc_info=True)

    def update(self, label: str, success: bool = True, detail: str = ""):
        """Record one finished item."""
        if success:
            self.processed += 1
        else:
            self.failed += 1
        done = self.processed + self.failed + self.skipped
        status = "ok" if success else "failed"
        self.notify(f"[{done}/{self.total}] {self.task} {label}: {status}" + (f" ({detail})" if detail else ""))

    def skip(self, label: str, reason: str):
        self.skipped += 1
        done = self.processed + self.failed + self.skipped
        self.notify(f"[{done}/{self.total}] {self.task} {label}: skipped ({reason})")

    def get_summary(self) -> str:
        summary = f"{self.task}: {self.processed} done"
        if self.skipped:
            summary += f", {self.skipped} skipped"
        if self.failed:
            summary += f", {self.failed} failed"
        return summary

    def to_dict(self) -> Dict:
        return {"task": self.task, "total": self.total, "processed": self.processed,
                "skipped": self.skipped, "failed": self.failed}


def _solve_one(inst: Instance, cfg: SolverConfig) -> Tuple[RouteSet, SolverTrace]:
    return solve_reference(inst, cfg)


class BatchRunner:
    """
    Runs the generate / oracle / run / report commands on one run directory.

    Per-item failures are recorded and the batch continues; only
    preconditions of a whole command raise.
    """

    def __init__(self, run_dir: RunDirectory, settings: HarnessSettings,
                 gateway: Optional[AgentGateway] = None):
        """
        Initialize the batch runner.

        Args:
            run_dir: Run directory to read from and write to
            settings: Resolved harness settings
            gateway: Agent gateway, needed by run() only
        """
        self.run_dir = run_dir
        self.settings = settings
        self.gateway = gateway

    def _progress(self, task: str, total: int, callback: Optional[Callable[[str], None]]) -> BatchProgress:
        progress = BatchProgress(task, total)
        if callback:
            progress.add_callback(callback)
        return progress

    def generate(self, sizes: Optional[Sequence[int]] = None, count: Optional[int] = None,
                 seed: Optional[int] = None, force: bool = False,
                 progress_callback: Optional[Callable[[str], None]] = None) -> BatchProgress:
        """
        Write count uniform instances per size.

        Raises:
            InputError: when the run directory is not empty and force is not set
        """
        sizes = list(sizes or self.settings.sizes)
        count = count if count is not None else self.settings.batch_size
        seed = seed if seed is not None else self.settings.seed
        if count < 1 or not sizes or any(n < 2 for n in sizes):
            raise InputError(f"Need count >= 1 and sizes >= 2, got count={count}, sizes={sizes}")
        if not self.run_dir.is_empty():
            if not force:
                raise InputError(f"{self.run_dir.root} is not empty; pass --force to overwrite")
            # derived artefacts of the old instances go too; the reply cache stays
            for stale in (self.run_dir.instances_dir, self.run_dir.reference_dir,
                          self.run_dir.transcripts_dir, self.run_dir.images_dir, self.run_dir.reports_dir):
                shutil.rmtree(stale, ignore_errors=True)

        progress = self._progress("generate", len(sizes) * count, progress_callback)
        for n in sizes:
            for index in range(count):
                inst = generate_instance(n, derive_seed(seed, n, index), instance_id=f"n{n}-{index:03d}")
                self.run_dir.write_instance(inst)
                progress.update(inst.id)
        self.run_dir.update_manifest("generate", {"sizes": sizes, "count": count, "seed": seed, "extent": 5.0})
        return progress

    def _instances(self) -> List[Instance]:
        instances = self.run_dir.load_instances()
        if not instances:
            raise InputError(f"No instances in {self.run_dir.instances_dir}; run generate first")
        return instances

    def oracle(self, m_values: Optional[Sequence[int]] = None, force: bool = False,
               progress_callback: Optional[Callable[[str], None]] = None) -> BatchProgress:
        """Savings + guided local search reference per (instance, m); infeasible pairs are recorded."""
        instances = self._instances()
        m_values = list(m_values or self.settings.m_values)
        jobs = [(inst, m) for m in m_values for inst in instances]
        progress = self._progress("oracle", len(jobs), progress_callback)

        pending = []
        for inst, m in jobs:
            label = f"{inst.id} m={m}"
            if not force and self.run_dir.reference_path(inst.id, m).is_file():
                progress.skip(label, "already solved")
            elif inst.n <= m:
                self.run_dir.write_reference_error(inst.id, m, f"InfeasibleError: {inst.n - 1} customers for {m} routes")
                progress.update(label, success=False, detail="infeasible")
            else:
                pending.append((inst, m))

        def record(inst: Instance, m: int, result: Tuple[RouteSet, SolverTrace]):
            rs, trace = result
            self.run_dir.write_reference(inst.id, m, rs, total_distance(rs, inst, m))
            progress.update(f"{inst.id} m={m}", detail=f"{trace.iterations} steps")

        if self.settings.jobs > 1 and len(pending) > 1:
            with ProcessPoolExecutor(max_workers=self.settings.jobs) as pool:
                futures = [(inst, m, pool.submit(_solve_one, inst, self.settings.solver_config(m)))
                           for inst, m in pending]
                for inst, m, future in futures:
                    self._collect(inst, m, future.result, record, progress)
        else:
            for inst, m in pending:
                self._collect(inst, m, lambda: _solve_one(inst, self.settings.solver_config(m)), record, progress)

        for m in m_values:
            self.run_dir.update_manifest("oracle", self.settings.solver_config(m).to_dict(), key=f"m{m}")
        return progress

    def _collect(self, inst: Instance, m: int, compute, record, progress: BatchProgress):
        try:
            record(inst, m, compute())
        except HarnessError as e:
            self.run_dir.write_reference_error(inst.id, m, f"{type(e).__name__}: {e}")
            progress.update(f"{inst.id} m={m}", success=False, detail=str(e))

    def run(self, strategy: str, m_values: Optional[Sequence[int]] = None, force: bool = False,
            progress_callback: Optional[Callable[[str], None]] = None) -> BatchProgress:
        """
        One ExperimentRecord per (instance, m), skipping instances with a complete record.

        Raises:
            InputError: for an unknown strategy, missing gateway or missing references
            ConfigurationError: when an m needs more route colours than the palette holds
        """
        if strategy not in STRATEGIES:
            raise InputError(f"Unknown strategy '{strategy}', expected one of {STRATEGIES}")
        if self.gateway is None:
            raise InputError("A gateway is required to run strategies")
        instances = self._instances()
        m_values = list(m_values or self.settings.m_values)
        style = self.settings.render_style()
        if max(m_values) > len(style.palette):
            raise ConfigurationError(f"m={max(m_values)} needs more route colours than the {len(style.palette)} in the palette")

        jobs = []
        missing = []
        progress = self._progress(f"run {strategy}", len(instances) * len(m_values), progress_callback)
        for m in m_values:
            for inst in instances:
                label = f"{inst.id} m={m}"
                if inst.n <= m:
                    progress.skip(label, "infeasible")
                    continue
                if not force and self.run_dir.has_complete_record(strategy, m, inst.id):
                    progress.skip(label, "complete record")
                    continue
                reference = self.run_dir.load_reference(inst, m)
                if reference is None:
                    missing.append(label)
                    continue
                jobs.append((inst, m, reference[1]))
        if missing:
            raise InputError(f"No reference solution for {len(missing)} instance(s), e.g. {missing[0]}; run oracle first")

        def execute(inst: Instance, m: int, reference_distance: float):
            cfg = self.settings.strategy_config(strategy, m)
            record = run_strategy(inst, cfg, self.gateway, style, reference_distance,
                                  self.run_dir.image_sink(inst.id, strategy, m))
            self.run_dir.write_record(record)
            return record

        with ThreadPoolExecutor(max_workers=self.settings.jobs) as pool:
            futures = [(inst, m, pool.submit(execute, inst, m, ref)) for inst, m, ref in jobs]
            for inst, m, future in futures:
                label = f"{inst.id} m={m}"
                try:
                    record = future.result()
                except HarnessError as e:
                    progress.update(label, success=False, detail=f"{type(e).__name__}: {e}")
                    continue
                if record.status == "complete":
                    gap = "n/a" if record.gap is None else f"{record.gap:.2f}%"
                    progress.update(label, detail=f"gap {gap}")
                else:
                    progress.update(label, success=False, detail=record.error or "failed")

        for m in m_values:
            self.run_dir.update_manifest("runs", {
                "strategy": self.settings.strategy_config(strategy, m).to_dict(),
                "backend": self.gateway.backend_name,
                "model_id": self.gateway.model_id,
                "cache_enabled": self.gateway.cache is not None,
                "render_style": style.fingerprint(),
                "prompt_templates": template_hashes(),
                "settings": self.settings.to_dict(),
            }, key=f"{strategy}/m{m}")
        return progress

    def report(self) -> Dict:
        """
        Build the report from every transcript of the run.

        Returns:
            Dictionary with the written files and an optional 'notice'

        Raises:
            InputError: when no records exist
        """
        records = self.run_dir.load_records()
        if not records:
            raise InputError(f"No experiment records in {self.run_dir.transcripts_dir}; run a strategy first")
        written = build_report(records, self.run_dir.reports_dir)
        strategies = sorted({r.strategy for r in records})
        result = {
            "files": {name: str(path) for name, path in sorted(written.items())},
            "strategies": strategies,
            "records": len(records),
        }
        if all(r.final_distance is None for r in records):
            result["notice"] = "no valid records: every final route was hallucinated or failed"
        self.run_dir.update_manifest("report", {"strategies": strategies, "records": len(records)})
        return result
