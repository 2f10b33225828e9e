"""
Run Directory Module

This module owns the on-disk layout of one experiment run:

    manifest.json
    instances/n<size>/<id>.csv
    reference/m<m>/<id>.routes
    transcripts/<strategy>/m<m>/<id>.json
    images/<id>/<strategy>-m<m>-<stage>.png
    cache/<hh>/<hash>.json
    reports/
"""

import json
import logging
import os
import re
import tempfile
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

from .. import __version__
from .agent_gateway import ReplyCache
from .errors import InputError
from .instance_model import Instance, read_instance_csv, write_instance_csv
from .orchestrator import ExperimentRecord
from .renderer import RenderedImage
from .reply_parser import format_routes, parse_routes
from .solution_model import RouteSet

logger = logging.getLogger(__name__)

DISTANCE_RE = re.compile(r"^distance:\s*(\S+)\s*$", re.MULTILINE)


def _replace_from_temp(path: Path, mode: str, content, **open_args):
    """Write content to a sibling temp file and move it over path; the temp file never outlives a failure."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, mode, **open_args) as f:
            f.write(content)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def write_text_atomic(path: Path, text: str):
    """Write a file so readers never see a partial version."""
    _replace_from_temp(path, "w", text, encoding="utf-8", newline="\n")


def write_bytes_atomic(path: Path, data: bytes):
    _replace_from_temp(path, "wb", data)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class RunDirectory:
    """
    File operations for one run directory.

    Every file written here is a pure function of its inputs, except the
    'timestamps' object of the manifest.
    """

    def __init__(self, root: Union[str, Path]):
        """
        Initialize the run directory handle.

        Args:
            root: Directory of the run (created on first write)
        """
        self.root = Path(root)
        self.manifest_path = self.root / "manifest.json"
        self.instances_dir = self.root / "instances"
        self.reference_dir = self.root / "reference"
        self.transcripts_dir = self.root / "transcripts"
        self.images_dir = self.root / "images"
        self.cache_dir = self.root / "cache"
        self.reports_dir = self.root / "reports"

    @property
    def run_id(self) -> str:
        return self.root.name

    def is_empty(self) -> bool:
        return not self.root.exists() or not any(self.root.iterdir())

    # manifest

    def read_manifest(self) -> Dict[str, Any]:
        if not self.manifest_path.is_file():
            return {"run_id": self.run_id, "tool_version": __version__, "timestamps": {}}
        with open(self.manifest_path, "r", encoding="utf-8") as f:
            return json.load(f)

    def update_manifest(self, section: str, data: Any, key: Optional[str] = None) -> Dict[str, Any]:
        """
        Store data under manifest[section] (or manifest[section][key]) and stamp the time.

        Args:
            section: Top-level manifest key
            data: JSON-serialisable value
            key: Optional sub-key, for sections holding several entries

        Returns:
            The updated manifest
        """
        manifest = self.read_manifest()
        manifest["run_id"] = self.run_id
        manifest["tool_version"] = __version__
        if key is None:
            manifest[section] = data
        else:
            manifest.setdefault(section, {})[key] = data
        stamp = f"{section}/{key}" if key else section
        manifest.setdefault("timestamps", {})[stamp] = _now()
        write_text_atomic(self.manifest_path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return manifest

    # instances

    def instance_path(self, instance_id: str, n: int) -> Path:
        return self.instances_dir / f"n{n}" / f"{instance_id}.csv"

    def write_instance(self, inst: Instance) -> Path:
        return write_instance_csv(inst, self.instance_path(inst.id, inst.n))

    def list_instance_paths(self) -> List[Path]:
        return sorted(self.instances_dir.glob("n*/*.csv"), key=lambda p: (int(p.parent.name[1:]), p.name))

    def load_instances(self, sizes: Optional[List[int]] = None) -> List[Instance]:
        """All instances of the run, ordered by size then id."""
        instances = []
        for path in self.list_instance_paths():
            inst = read_instance_csv(path, instance_id=path.stem)
            if sizes is None or inst.n in sizes:
                instances.append(inst)
        return instances

    def get_instance(self, instance_id: str) -> Optional[Instance]:
        for path in self.instances_dir.glob(f"n*/{instance_id}.csv"):
            return read_instance_csv(path, instance_id=instance_id)
        return None

    # reference solutions

    def reference_path(self, instance_id: str, m: int) -> Path:
        return self.reference_dir / f"m{m}" / f"{instance_id}.routes"

    def reference_error_path(self, instance_id: str, m: int) -> Path:
        return self.reference_dir / f"m{m}" / f"{instance_id}.error"

    def write_reference(self, instance_id: str, m: int, rs: RouteSet, distance: float) -> Path:
        path = self.reference_path(instance_id, m)
        write_text_atomic(path, f"{format_routes(rs)}\ndistance: {distance!r}\n")
        error_path = self.reference_error_path(instance_id, m)
        if error_path.exists():
            error_path.unlink()
        return path

    def write_reference_error(self, instance_id: str, m: int, message: str) -> Path:
        path = self.reference_error_path(instance_id, m)
        write_text_atomic(path, message.rstrip() + "\n")
        return path

    def load_reference(self, inst: Instance, m: int) -> Optional[Tuple[RouteSet, float]]:
        """Reference route set and distance, or None when not solved."""
        path = self.reference_path(inst.id, m)
        if not path.is_file():
            return None
        text = path.read_text(encoding="utf-8")
        outcome = parse_routes(text, m, inst.n)
        match = DISTANCE_RE.search(text)
        if not outcome.ok or not match:
            raise InputError(f"Unreadable reference file {path}")
        return outcome.result.with_source("reference"), float(match.group(1))

    # transcripts

    def transcript_path(self, strategy: str, m: int, instance_id: str) -> Path:
        return self.transcripts_dir / strategy / f"m{m}" / f"{instance_id}.json"

    def write_record(self, record: ExperimentRecord) -> Path:
        path = self.transcript_path(record.strategy, record.m, record.instance_id)
        write_text_atomic(path, record.to_json() + "\n")
        return path

    def load_record(self, strategy: str, m: int, instance_id: str) -> Optional[ExperimentRecord]:
        path = self.transcript_path(strategy, m, instance_id)
        if not path.is_file():
            return None
        try:
            with open(path, "r", encoding="utf-8") as f:
                return ExperimentRecord.from_dict(json.load(f))
        except (OSError, ValueError, KeyError, TypeError) as e:
            logger.warning("Ignoring unreadable transcript %s: %s", path, e)
            return None

    def has_complete_record(self, strategy: str, m: int, instance_id: str) -> bool:
        record = self.load_record(strategy, m, instance_id)
        return record is not None and record.status == "complete"

    def load_records(self, strategy: Optional[str] = None, m: Optional[int] = None) -> List[ExperimentRecord]:
        """Every readable transcript, optionally filtered, in path order."""
        pattern = f"{strategy or '*'}/m{m if m is not None else '*'}/*.json"
        records = []
        for path in sorted(self.transcripts_dir.glob(pattern)):
            record = self.load_record(path.parent.parent.name, int(path.parent.name[1:]), path.stem)
            if record is not None:
                records.append(record)
        return records

    # images and cache

    def image_path(self, instance_id: str, strategy: str, m: int, stage: str) -> Path:
        return self.images_dir / instance_id / f"{strategy}-m{m}-{stage}.png"

    def image_sink(self, instance_id: str, strategy: str, m: int) -> Callable[[str, RenderedImage], None]:
        def sink(stage: str, image: RenderedImage):
            write_bytes_atomic(self.image_path(instance_id, strategy, m, stage), image.data)
        return sink

    def reply_cache(self) -> ReplyCache:
        return ReplyCache(self.cache_dir)

    # overview

    def get_run_info(self) -> Dict[str, Any]:
        """Counts of everything stored in the run, for the CLI and the MCP server."""
        references = {p.name: len(list(p.glob("*.routes"))) for p in sorted(self.reference_dir.glob("m*"))}
        transcripts = {
            f"{p.parent.name}/{p.name}": len(list(p.glob("*.json")))
            for p in sorted(self.transcripts_dir.glob("*/m*"))
        }
        return {
            "run_dir": str(self.root),
            "run_id": self.run_id,
            "instances": len(self.list_instance_paths()),
            "references": references,
            "transcripts": transcripts,
            "reports": sorted(p.name for p in self.reports_dir.glob("*")) if self.reports_dir.is_dir() else [],
        }
