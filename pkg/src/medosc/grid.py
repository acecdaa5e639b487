"""Dyadic grids, grid-sampled functions, and seeded test-function generators.

Every function handled by this package is piecewise constant on the cells of
a depth-``L`` dyadic grid over a cube in dimension 1 or 2.  That makes every
set measure a cell count times the cell measure, so medians, quantiles and
exceedance sets downstream are computed exactly from order statistics.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

__all__ = [
    "GridError",
    "RootHasNoParent",
    "AncestorOutOfRange",
    "UnknownGenerator",
    "UnsupportedDimension",
    "DyadicCube",
    "AlignedCube",
    "GridFunction",
    "Weight",
    "root_cube",
    "parent",
    "ancestor",
    "ancestor_or_root",
    "cells_of",
    "cell_coords",
    "generate",
    "GENERATOR_KINDS",
    "lift",
    "coarsen",
    "save_function",
    "load_function",
]


class GridError(ValueError):
    """Base class for grid geometry and serialization errors."""


class RootHasNoParent(GridError):
    """Raised when asking for the parent of the level-0 cube."""


class AncestorOutOfRange(GridError):
    """Raised when an ancestor above the root is requested."""


class UnknownGenerator(GridError):
    """Raised for a test-function kind that no generator implements."""


class UnsupportedDimension(GridError):
    """Raised when an operation only defined in dimension 1 gets 2-d input."""


def _check_dimension(dimension: int) -> None:
    if dimension not in (1, 2):
        raise UnsupportedDimension(f"dimension must be 1 or 2, got {dimension}")


@dataclass(frozen=True)
class DyadicCube:
    """A cube of the dyadic tree: level ``k``, per-axis index in ``[0, 2^k)``.

    Level 0 is the root cube; each cube splits into ``2^n`` children.  Cubes
    are grid-independent: the same ``DyadicCube`` addresses the same region
    of any grid deep enough to contain it.
    """

    level: int
    index: tuple[int, ...]

    def __post_init__(self) -> None:
        _check_dimension(len(self.index))
        if self.level < 0:
            raise GridError(f"negative level {self.level}")
        top = 1 << self.level
        for i in self.index:
            if not 0 <= i < top:
                raise GridError(f"index {self.index} out of range at level {self.level}")

    @property
    def dimension(self) -> int:
        return len(self.index)

    def side_cells(self, depth: int) -> int:
        if depth < self.level:
            raise GridError(f"cube at level {self.level} does not fit depth {depth}")
        return 1 << (depth - self.level)

    def cell_count(self, depth: int) -> int:
        return self.side_cells(depth) ** self.dimension

    def children(self) -> tuple["DyadicCube", ...]:
        n = self.dimension
        kids = []
        for bits in range(1 << n):
            idx = tuple(2 * self.index[a] + ((bits >> a) & 1) for a in range(n))
            kids.append(DyadicCube(self.level + 1, idx))
        return tuple(kids)

    def contains(self, other: "DyadicCube") -> bool:
        if other.level < self.level or other.dimension != self.dimension:
            return False
        shift = other.level - self.level
        return all((j >> shift) == i for i, j in zip(self.index, other.index))

    def to_aligned(self, depth: int) -> "AlignedCube":
        m = self.side_cells(depth)
        return AlignedCube(tuple(i * m for i in self.index), m)

    def key(self) -> tuple:
        return (self.level, self.index)


@dataclass(frozen=True)
class AlignedCube:
    """A grid-aligned cube: per-axis cell offset and a side length in cells.

    Aligned cubes at every offset and size stand in for the class of all
    cubes; dyadic cubes are the special case ``offset = index * side``.
    """

    offset: tuple[int, ...]
    side_cells: int

    def __post_init__(self) -> None:
        _check_dimension(len(self.offset))
        if self.side_cells < 1:
            raise GridError(f"aligned cube needs side_cells >= 1, got {self.side_cells}")
        for o in self.offset:
            if o < 0:
                raise GridError(f"negative offset {self.offset}")

    @property
    def dimension(self) -> int:
        return len(self.offset)

    def cell_count(self, depth: int) -> int:
        per = 1 << depth
        for o in self.offset:
            if o + self.side_cells > per:
                raise GridError(f"aligned cube {self} exceeds depth-{depth} grid")
        return self.side_cells ** self.dimension

    def key(self) -> tuple:
        return ("aligned", self.offset, self.side_cells)


def root_cube(dimension: int) -> DyadicCube:
    _check_dimension(dimension)
    return DyadicCube(0, (0,) * dimension)


def parent(cube: DyadicCube) -> DyadicCube:
    if cube.level == 0:
        raise RootHasNoParent("the root cube has no parent")
    return DyadicCube(cube.level - 1, tuple(i // 2 for i in cube.index))


def ancestor(cube: DyadicCube, generations: int) -> DyadicCube:
    """The cube ``generations`` levels up; its measure is ``2^(n*generations)`` times larger."""
    if generations < 0:
        raise GridError(f"generations must be >= 0, got {generations}")
    if generations > cube.level:
        raise AncestorOutOfRange(
            f"cube at level {cube.level} has no ancestor {generations} generations up"
        )
    return DyadicCube(cube.level - generations, tuple(i >> generations for i in cube.index))


def ancestor_or_root(cube: DyadicCube, generations: int) -> DyadicCube:
    """Like :func:`ancestor` but saturating at the root instead of raising."""
    return ancestor(cube, min(generations, cube.level))


def cells_of(cube: DyadicCube | AlignedCube, depth: int) -> np.ndarray:
    """Flat row-major cell indices covered by ``cube`` on a depth-``depth`` grid."""
    if isinstance(cube, DyadicCube):
        cube = cube.to_aligned(depth)
    per = 1 << depth
    m = cube.side_cells
    for o in cube.offset:
        if o + m > per:
            raise GridError(f"aligned cube {cube} exceeds depth-{depth} grid")
    if cube.dimension == 1:
        return np.arange(cube.offset[0], cube.offset[0] + m, dtype=np.int64)
    rows = np.arange(cube.offset[0], cube.offset[0] + m, dtype=np.int64)
    cols = np.arange(cube.offset[1], cube.offset[1] + m, dtype=np.int64)
    return (rows[:, None] * per + cols[None, :]).ravel()


def cell_coords(flat: int, dimension: int, depth: int) -> tuple[int, ...]:
    per = 1 << depth
    if dimension == 1:
        return (flat,)
    return (flat // per, flat % per)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """A real function constant on the cells of a dyadic grid.

    ``values`` is flat row-major with ``2^(dimension*depth)`` finite entries.
    The domain is the half-open cube ``[origin, origin + side)^dimension``.
    """

    dimension: int
    depth: int
    values: np.ndarray
    origin: tuple[float, ...] = ()
    side: float = 1.0

    def __post_init__(self) -> None:
        _check_dimension(self.dimension)
        if self.depth < 0:
            raise GridError(f"negative depth {self.depth}")
        if not self.side > 0:
            raise GridError(f"side must be positive, got {self.side}")
        origin = self.origin if self.origin else (0.0,) * self.dimension
        if len(origin) != self.dimension:
            raise GridError(f"origin {origin} does not match dimension {self.dimension}")
        vals = np.ascontiguousarray(self.values, dtype=np.float64)
        if vals.ndim != 1 or vals.size != self.cell_count:
            raise GridError(
                f"expected {self.cell_count} flat values, got shape {vals.shape}"
            )
        if not np.all(np.isfinite(vals)):
            raise GridError("grid function values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "origin", tuple(float(x) for x in origin))

    @property
    def cells_per_axis(self) -> int:
        return 1 << self.depth

    @property
    def cell_count(self) -> int:
        return (1 << self.depth) ** self.dimension

    @property
    def cell_width(self) -> float:
        return self.side / (1 << self.depth)

    @property
    def cell_measure(self) -> float:
        return self.cell_width ** self.dimension

    def as_grid(self) -> np.ndarray:
        """The values as an array indexed by per-axis cell coordinates."""
        if self.dimension == 1:
            return self.values
        per = self.cells_per_axis
        return self.values.reshape(per, per)

    def midpoints(self) -> np.ndarray:
        """Cell-midpoint coordinates, shape ``(cell_count, dimension)``."""
        per = self.cells_per_axis
        axes = [
            self.origin[a] + self.side * (np.arange(per) + 0.5) / per
            for a in range(self.dimension)
        ]
        if self.dimension == 1:
            return axes[0][:, None]
        xx, yy = np.meshgrid(axes[0], axes[1], indexing="ij")
        return np.column_stack([xx.ravel(), yy.ravel()])

    def region(self, cube: DyadicCube | AlignedCube) -> np.ndarray:
        """Values on ``cube`` as a flat array (1-d) or square block (2-d)."""
        if isinstance(cube, DyadicCube):
            cube = cube.to_aligned(self.depth)
        m = cube.side_cells
        per = self.cells_per_axis
        for o in cube.offset:
            if o + m > per:
                raise GridError(f"cube {cube} exceeds grid of depth {self.depth}")
        if self.dimension == 1:
            return self.values[cube.offset[0] : cube.offset[0] + m]
        g = self.as_grid()
        return g[cube.offset[0] : cube.offset[0] + m, cube.offset[1] : cube.offset[1] + m]

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(f"{self.dimension}|{self.depth}|{self.origin}|{self.side!r}|".encode())
        h.update(self.values.tobytes())
        return h.hexdigest()

    def with_values(self, values: np.ndarray) -> "GridFunction":
        return GridFunction(self.dimension, self.depth, values, self.origin, self.side)


@dataclass(frozen=True, eq=False)
class Weight:
    """A strictly positive grid function used in weighted integral estimates."""

    function: GridFunction

    def __post_init__(self) -> None:
        if not np.all(self.function.values > 0):
            raise GridError("weights must be strictly positive on every cell")

    @property
    def values(self) -> np.ndarray:
        return self.function.values


def lift(f: GridFunction) -> GridFunction:
    """Refine by one level, duplicating every cell value onto its ``2^n`` children."""
    if f.dimension == 1:
        vals = np.repeat(f.values, 2)
    else:
        g = np.repeat(np.repeat(f.as_grid(), 2, axis=0), 2, axis=1)
        vals = g.ravel()
    return GridFunction(f.dimension, f.depth + 1, vals, f.origin, f.side)


def coarsen(f: GridFunction, depth: int) -> GridFunction:
    """Project onto a coarser grid by block means (conditional expectation)."""
    if depth > f.depth or depth < 0:
        raise GridError(f"cannot coarsen depth {f.depth} to {depth}")
    b = 1 << (f.depth - depth)
    if f.dimension == 1:
        vals = f.values.reshape(-1, b).mean(axis=1)
    else:
        per = 1 << depth
        vals = f.as_grid().reshape(per, b, per, b).mean(axis=(1, 3)).ravel()
    return GridFunction(f.dimension, depth, vals, f.origin, f.side)


GENERATOR_KINDS = (
    "constant",
    "step",
    "spike",
    "random-uniform",
    "random-heavy-tail",
    "smooth-sine",
    "singular-power",
)


def generate(kind: str, dimension: int, depth: int, seed: int = 0, **params) -> GridFunction:
    """Build a named test function, deterministic in ``(kind, dimension, depth, seed)``.

    Unset kind-specific parameters are drawn from the seeded stream, so a
    corpus over seeds varies shapes while staying reproducible.
    """
    _check_dimension(dimension)
    if kind not in GENERATOR_KINDS:
        raise UnknownGenerator(f"unknown generator kind {kind!r}; known: {GENERATOR_KINDS}")
    rng = np.random.default_rng(seed)
    count = (1 << depth) ** dimension
    per = 1 << depth

    if kind == "constant":
        value = float(params.get("value", 1.0))
        vals = np.full(count, value)
    elif kind == "step":
        boundary = params.get("boundary")
        if boundary is None:
            boundary = rng.uniform(0.25, 0.75)
        high = float(params.get("high", rng.uniform(0.5, 2.0)))
        low = float(params.get("low", 0.0))
        frac = (np.arange(per) + 0.5) / per
        line = np.where(frac < boundary, high, low)
        vals = line if dimension == 1 else np.repeat(line, per)
    elif kind == "spike":
        cell = params.get("cell")
        if cell is None:
            cell = int(rng.integers(0, count))
        amplitude = float(params.get("amplitude", rng.uniform(1.0, 10.0)))
        vals = np.zeros(count)
        vals[int(cell)] = amplitude
    elif kind == "random-uniform":
        low = float(params.get("low", 0.0))
        high = float(params.get("high", 1.0))
        vals = rng.uniform(low, high, size=count)
    elif kind == "random-heavy-tail":
        alpha = float(params.get("alpha", 1.5))
        signs = rng.choice([-1.0, 1.0], size=count)
        vals = signs * (1.0 + rng.pareto(alpha, size=count))
    elif kind == "smooth-sine":
        freq = params.get("frequency")
        if freq is None:
            freq = int(rng.integers(1, 4))
        phase = float(params.get("phase", rng.uniform(0.0, 2.0 * math.pi)))
        grid = (np.arange(per) + 0.5) / per
        if dimension == 1:
            vals = np.sin(2.0 * math.pi * freq * grid + phase)
        else:
            freq2 = int(params.get("frequency2", rng.integers(1, 4)))
            phase2 = float(params.get("phase2", rng.uniform(0.0, 2.0 * math.pi)))
            a = np.sin(2.0 * math.pi * freq * grid + phase)
            b = np.sin(2.0 * math.pi * freq2 * grid + phase2)
            vals = np.outer(a, b).ravel()
    else:  # singular-power
        exponent = params.get("exponent")
        if exponent is None:
            exponent = dimension * rng.uniform(0.2, 0.9)
        exponent = float(exponent)
        if not exponent < dimension:
            raise GridError(f"singular-power exponent must be < dimension, got {exponent}")
        # anchor the singularity on a grid line so no cell midpoint hits it
        knot = params.get("center")
        if knot is None:
            knot = tuple(int(rng.integers(0, per + 1)) / per for _ in range(dimension))
        origin = (0.0,) * dimension
        side = 1.0
        x0 = np.asarray(knot, dtype=float)
        proto = GridFunction(dimension, depth, np.zeros(count), origin, side)
        dist = np.linalg.norm(proto.midpoints() - x0[None, :], axis=1)
        vals = dist ** (-exponent)
    return GridFunction(dimension, depth, vals)


def _format_value(x: float) -> float:
    return float(x)


def save_function(f: GridFunction, path: str | Path, fmt: str = "json") -> None:
    """Write a function file; JSON round-trips bit exactly, CSV covers 1-d."""
    path = Path(path)
    if fmt == "json":
        doc = {
            "dimension": f.dimension,
            "depth": f.depth,
            "origin": list(f.origin),
            "side": f.side,
            "values": [float(v) for v in f.values],
        }
        path.write_text(json.dumps(doc, sort_keys=True) + "\n")
    elif fmt == "csv":
        if f.dimension != 1:
            raise UnsupportedDimension("CSV function files are 1-d only")
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            for v in f.values:
                writer.writerow([repr(float(v))])
    else:
        raise GridError(f"unknown function file format {fmt!r}")


def load_function(path: str | Path) -> GridFunction:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        with path.open(newline="") as fh:
            vals = [float(row[0]) for row in csv.reader(fh) if row]
        depth = int(round(math.log2(len(vals)))) if vals else 0
        if (1 << depth) != len(vals):
            raise GridError(f"CSV cell count {len(vals)} is not a power of two")
        return GridFunction(1, depth, np.asarray(vals))
    doc = json.loads(path.read_text())
    try:
        return GridFunction(
            int(doc["dimension"]),
            int(doc["depth"]),
            np.asarray(doc["values"], dtype=np.float64),
            tuple(doc.get("origin", ())),
            float(doc.get("side", 1.0)),
        )
    except KeyError as exc:
        raise GridError(f"function file {path} is missing field {exc}") from exc
