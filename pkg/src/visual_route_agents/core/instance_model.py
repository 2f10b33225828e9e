"""
Instance Model Module

This module defines problem instances on the plane and generates the
uniform-random test data. Index 0 of every instance is the depot.
"""

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .errors import InvalidSizeError, DomainError

DEFAULT_EXTENT = 5.0
CSV_HEADER = ("index", "x", "y")


@dataclass(frozen=True)
class Point:
    """A location on the plane, in unitless plane units."""

    x: float
    y: float

    def to_dict(self):
        return {"x": self.x, "y": self.y}


@dataclass(frozen=True)
class Instance:
    """
    A TSP/mTSP instance.

    Attributes:
        id: Stable identifier used in file names and transcripts
        nodes: Node locations; nodes[0] is the depot
        seed: Generator seed, or None for imported instances
        extent: Side length of the square the nodes were drawn from
    """

    id: str
    nodes: Tuple[Point, ...]
    seed: Optional[int] = None
    extent: float = DEFAULT_EXTENT

    def __post_init__(self):
        if len(self.nodes) < 2:
            raise InvalidSizeError(f"Instance '{self.id}' needs at least 2 nodes, got {len(self.nodes)}")
        if len(set(self.nodes)) != len(self.nodes):
            raise DomainError(f"Instance '{self.id}' contains duplicate coordinates")

    @property
    def n(self) -> int:
        """Node count including the depot."""
        return len(self.nodes)

    @property
    def depot(self) -> Point:
        return self.nodes[0]

    def coordinates(self) -> np.ndarray:
        """Return the node coordinates as an (n, 2) float64 array."""
        return np.array([[p.x, p.y] for p in self.nodes], dtype=np.float64)


def generate_instance(n: int, seed: int, extent: float = DEFAULT_EXTENT,
                      instance_id: Optional[str] = None) -> Instance:
    """
    Generate an instance with n points drawn i.i.d. uniform on [0, extent]^2.

    The stream comes from numpy's PCG64 generator seeded with `seed`, so the
    same (n, seed, extent) reproduces the same instance on every platform. The
    first drawn point is the depot. A draw that repeats an earlier coordinate
    pair is discarded and redrawn.

    Args:
        n: Node count including the depot
        seed: Generator seed
        extent: Side length of the sampling square
        instance_id: Optional identifier (defaults to 'n<n>-s<seed>')

    Returns:
        The generated Instance
    """
    if n < 2:
        raise InvalidSizeError(f"Instance size must be at least 2, got {n}")
    if extent <= 0:
        raise DomainError(f"Extent must be positive, got {extent}")

    rng = np.random.Generator(np.random.PCG64(seed))
    points = []
    seen = set()
    while len(points) < n:
        x, y = rng.uniform(0.0, extent, size=2)
        point = Point(float(x), float(y))
        if point in seen:
            continue
        seen.add(point)
        points.append(point)

    return Instance(
        id=instance_id or f"n{n}-s{seed}",
        nodes=tuple(points),
        seed=seed,
        extent=extent,
    )


def derive_seed(base_seed: int, n: int, index: int) -> int:
    """Derive the seed of the index-th instance of size n in a batch."""
    state = np.random.SeedSequence([base_seed, n, index]).generate_state(1, dtype=np.uint64)
    return int(state[0])


def distance(a: Point, b: Point) -> float:
    """Euclidean distance between two points."""
    dx = a.x - b.x
    dy = a.y - b.y
    return math.sqrt(dx * dx + dy * dy)


def distance_matrix(instance: Instance) -> np.ndarray:
    """
    Build the symmetric n x n Euclidean distance matrix of an instance.

    Entries are computed with the same arithmetic as distance(), so
    matrix[i, j] == distance(nodes[i], nodes[j]) holds exactly.
    """
    coords = instance.coordinates()
    dx = coords[:, 0][:, None] - coords[:, 0][None, :]
    dy = coords[:, 1][:, None] - coords[:, 1][None, :]
    return np.sqrt(dx * dx + dy * dy)


def write_instance_csv(instance: Instance, path: Union[str, Path]) -> Path:
    """Write an instance as 'index,x,y' CSV with shortest round-trip floats."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for index, point in enumerate(instance.nodes):
            writer.writerow((index, repr(point.x), repr(point.y)))
    return path


def read_instance_csv(path: Union[str, Path], instance_id: Optional[str] = None,
                      seed: Optional[int] = None, extent: float = DEFAULT_EXTENT) -> Instance:
    """
    Read an instance written by write_instance_csv.

    Args:
        path: CSV file path
        instance_id: Identifier to assign (defaults to the file stem)
        seed: Seed to record, when known from the manifest
        extent: Sampling extent to record

    Returns:
        The loaded Instance
    """
    path = Path(path)
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if tuple(header or ()) != CSV_HEADER:
            raise DomainError(f"{path}: expected header {','.join(CSV_HEADER)}, got {header}")
        rows = [row for row in reader if row]

    points = []
    for expected_index, row in enumerate(rows):
        try:
            index, x, y = row
            index, point = int(index), Point(float(x), float(y))
        except ValueError:
            raise DomainError(f"{path}: malformed row {expected_index}: {','.join(row)}") from None
        if index != expected_index:
            raise DomainError(f"{path}: row {expected_index} carries index {index}")
        points.append(point)

    return Instance(id=instance_id or path.stem, nodes=tuple(points), seed=seed, extent=extent)


def instance_from_coordinates(coords: Sequence[Sequence[float]], instance_id: str = "custom",
                              extent: float = DEFAULT_EXTENT) -> Instance:
    """Build an instance from explicit (x, y) pairs; the first pair is the depot."""
    return Instance(
        id=instance_id,
        nodes=tuple(Point(float(x), float(y)) for x, y in coords),
        extent=extent,
    )
