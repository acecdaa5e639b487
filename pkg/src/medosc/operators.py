"""Concrete singular operators on 1-d grids.

Three operators feed the inequality harness: Haar shift operators of a
nonnegative index (finite sums of rank-one terms built from Haar
functions), a discrete principal-value Hilbert transform, and a sampled
smoothness check for convolution-type kernels.

A Haar shift of index ``tau`` maps ``f`` to

    sum over dyadic Q, sum over Q', Q'' in D(Q) within tau generations,
        a(Q', Q'') <f, h_Q'> h_Q''

with ``|a| <= C * (|Q'| |Q''| / |Q|^2)^(1/2)``.  On a depth-``L`` grid the
outer sum runs over the dyadic subcubes of the root, and terms needing
children below the leaf level are dropped (the truncation is recorded on
the shift so independent evaluations agree).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .grid import (
    DyadicCube,
    GridError,
    GridFunction,
    UnsupportedDimension,
    cells_of,
    root_cube,
)

__all__ = [
    "LeafCube",
    "IndexTooDeep",
    "ShiftEntry",
    "HaarShift",
    "haar_function",
    "haar_support",
    "haar_coefficients",
    "apply_haar_shift",
    "random_haar_shift",
    "martingale_transform",
    "save_shift",
    "load_shift",
    "hilbert_transform",
    "Kernel",
    "hilbert_kernel",
    "rough_test_kernel",
    "KernelSmoothnessReport",
    "kernel_smoothness_check",
]


class LeafCube(GridError):
    """A Haar function was requested on a cube with no children on the grid."""


class IndexTooDeep(GridError):
    """The shift index exceeds the refinement available below the root."""


def _require_1d(dimension: int) -> None:
    if dimension != 1:
        raise UnsupportedDimension("Haar shifts and the Hilbert transform are 1-d only")


def haar_support(cube: DyadicCube, depth: int, side: float = 1.0):
    """Left-half cells, right-half cells, and the height of ``h_cube``.

    The height is ``|cube|^(-1/2)`` so that the step function with value
    ``+height`` on the left child and ``-height`` on the right child has
    unit squared integral.
    """
    _require_1d(cube.dimension)
    if cube.level >= depth:
        raise LeafCube(f"cube at level {cube.level} has no children at depth {depth}")
    cs = cells_of(cube, depth)
    half = cs.size // 2
    height = 1.0 / np.sqrt(side * 2.0 ** (-cube.level))
    return cs[:half], cs[half:], float(height)


def haar_function(
    cube: DyadicCube, depth: int, origin: float = 0.0, side: float = 1.0
) -> GridFunction:
    """The Haar step on ``cube`` sampled on a depth-``depth`` grid."""
    left, right, height = haar_support(cube, depth, side)
    values = np.zeros(1 << depth)
    values[left] = height
    values[right] = -height
    return GridFunction(1, depth, values, origin=(origin,), side=side)


@dataclass(frozen=True)
class ShiftEntry:
    """One term of a Haar shift: ``a * <f, h_analysis> h_synthesis``.

    ``base`` is the common ancestor whose measure normalizes the size
    bound on ``a``.
    """

    base: DyadicCube
    analysis: DyadicCube
    synthesis: DyadicCube
    a: float


@dataclass(frozen=True)
class HaarShift:
    """A finite Haar shift operator: index, size constant, and its terms.

    ``depth`` records the grid the shift was truncated for; applying the
    shift to a shallower grid raises rather than silently re-truncating.
    """

    tau: int
    c: float
    entries: tuple[ShiftEntry, ...]
    depth: int

    def size_bound_violations(self) -> tuple[ShiftEntry, ...]:
        """Entries whose coefficient exceeds ``C * (|Q'||Q''|/|Q|^2)^(1/2)``."""
        bad = []
        for e in self.entries:
            dp = e.analysis.level - e.base.level
            dpp = e.synthesis.level - e.base.level
            cap = self.c * 2.0 ** (-(dp + dpp) / 2.0)
            if abs(e.a) > cap * (1.0 + 1e-12):
                bad.append(e)
        return tuple(bad)

    def validate(self) -> None:
        for e in self.entries:
            for sub in (e.analysis, e.synthesis):
                off = sub.level - e.base.level
                if not 0 <= off <= self.tau:
                    raise IndexTooDeep(
                        f"entry cube {sub.key()} lies {off} generations below"
                        f" {e.base.key()}, index is {self.tau}"
                    )
                if not e.base.contains(sub):
                    raise GridError(f"{sub.key()} is not a subcube of {e.base.key()}")
        if self.size_bound_violations():
            raise GridError("shift coefficients exceed the size bound")


def haar_coefficients(f: GridFunction) -> list[np.ndarray]:
    """``out[l][i]`` is ``<f, h_Q>`` for the level-``l`` index-``i`` cube.

    Computed by one upward pass of block integrals; levels run from 0 to
    ``depth - 1`` (leaf cells carry no Haar function).
    """
    _require_1d(f.dimension)
    integrals = f.values * f.cell_measure
    per_level: list[np.ndarray] = []
    for level in range(f.depth - 1, -1, -1):
        pairs = integrals.reshape(-1, 2)
        height = 1.0 / np.sqrt(f.side * 2.0 ** (-level))
        per_level.append(height * (pairs[:, 0] - pairs[:, 1]))
        integrals = pairs.sum(axis=1)
    per_level.reverse()
    return per_level


def _synthesize(coeffs: list[np.ndarray], f: GridFunction) -> np.ndarray:
    out = np.zeros(f.cell_count)
    for level, c in enumerate(coeffs):
        if not np.any(c):
            continue
        height = 1.0 / np.sqrt(f.side * 2.0 ** (-level))
        m = 1 << (f.depth - level)
        half = np.concatenate([np.ones(m // 2), -np.ones(m // 2)])
        out += np.repeat(c * height, m) * np.tile(half, 1 << level)
    return out


def apply_haar_shift(shift: HaarShift, f: GridFunction) -> GridFunction:
    """Evaluate the shift: analyze ``f``, scatter through the terms, synthesize."""
    _require_1d(f.dimension)
    analysis = haar_coefficients(f)
    synthesis = [np.zeros(1 << level) for level in range(f.depth)]
    for e in shift.entries:
        if e.analysis.level >= f.depth or e.synthesis.level >= f.depth:
            raise IndexTooDeep(
                f"shift truncated for depth {shift.depth} cannot act on depth {f.depth}"
            )
        amount = e.a * analysis[e.analysis.level][e.analysis.index[0]]
        synthesis[e.synthesis.level][e.synthesis.index[0]] += amount
    return f.with_values(_synthesize(synthesis, f))


def random_haar_shift(tau: int, c: float, seed: int, depth: int) -> HaarShift:
    """Seeded shift with coefficients uniform in ``[-cap, +cap]`` at the size bound.

    One draw happens for every abstract (analysis, synthesis) offset pair,
    in a fixed breadth-first order, before leaf truncation discards the
    terms that need cubes below the grid: shifts generated for different
    depths from one seed therefore agree on every cube they share.
    """
    if tau < 0:
        raise ValueError(f"shift index must be nonnegative, got {tau}")
    if tau > depth - 1:
        raise IndexTooDeep(f"index {tau} needs {tau + 1} levels, grid has {depth}")
    rng = np.random.default_rng(seed)
    entries: list[ShiftEntry] = []
    for level in range(depth):
        for index in range(1 << level):
            base = DyadicCube(level, (index,))
            for dp in range(tau + 1):
                for jp in range(1 << dp):
                    for dpp in range(tau + 1):
                        for jpp in range(1 << dpp):
                            u = rng.uniform(-1.0, 1.0)
                            if level + dp >= depth or level + dpp >= depth:
                                continue
                            a = u * c * 2.0 ** (-(dp + dpp) / 2.0)
                            entries.append(
                                ShiftEntry(
                                    base=base,
                                    analysis=DyadicCube(level + dp, ((index << dp) + jp,)),
                                    synthesis=DyadicCube(level + dpp, ((index << dpp) + jpp,)),
                                    a=a,
                                )
                            )
    return HaarShift(tau=tau, c=c, entries=tuple(entries), depth=depth)


def martingale_transform(depth: int, c: float = 1.0) -> HaarShift:
    """The index-0 shift with every diagonal coefficient equal to ``c``."""
    entries = [
        ShiftEntry(
            base=DyadicCube(level, (index,)),
            analysis=DyadicCube(level, (index,)),
            synthesis=DyadicCube(level, (index,)),
            a=c,
        )
        for level in range(depth)
        for index in range(1 << level)
    ]
    return HaarShift(tau=0, c=c, entries=tuple(entries), depth=depth)


def save_shift(shift: HaarShift, path: str | Path) -> None:
    doc = {
        "tau": shift.tau,
        "C": shift.c,
        "depth": shift.depth,
        "entries": [
            {
                "Q": [e.base.level, e.base.index[0]],
                "Qp": [e.analysis.level, e.analysis.index[0]],
                "Qpp": [e.synthesis.level, e.synthesis.index[0]],
                "a": e.a,
            }
            for e in shift.entries
        ],
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True))


def load_shift(path: str | Path) -> HaarShift:
    doc = json.loads(Path(path).read_text())
    entries = tuple(
        ShiftEntry(
            base=DyadicCube(e["Q"][0], (e["Q"][1],)),
            analysis=DyadicCube(e["Qp"][0], (e["Qp"][1],)),
            synthesis=DyadicCube(e["Qpp"][0], (e["Qpp"][1],)),
            a=e["a"],
        )
        for e in doc["entries"]
    )
    return HaarShift(tau=doc["tau"], c=doc["C"], entries=entries, depth=doc["depth"])


def hilbert_transform(f: GridFunction) -> GridFunction:
    """Principal-value convolution with ``1/(x - y)`` by midpoint quadrature.

    ``f`` is extended by zero outside its domain; the diagonal cell is
    omitted, which cancels symmetrically like the principal value does.
    """
    _require_1d(f.dimension)
    x = np.asarray(f.midpoints(), dtype=np.float64).ravel()
    diff = x[:, None] - x[None, :]
    kernel = np.zeros_like(diff)
    off = ~np.eye(x.size, dtype=bool)
    np.divide(1.0, diff, out=kernel, where=off)
    return f.with_values(kernel @ (f.values * f.cell_measure))


@dataclass(frozen=True)
class Kernel:
    """A convolution kernel with a claimed smoothness exponent and constant."""

    name: str
    delta: float
    evaluate: "callable"
    constant: float | None = None


def _hilbert_k(x: float, y: float) -> float:
    return 1.0 / (x - y)


def _rough_k(x: float, y: float) -> float:
    # Oscillates in x at frequency 64 but never decays in |x - y|, so the
    # smoothness ratio grows like |x - y|^(1 + delta).
    return float(np.sin(64.0 * x))


hilbert_kernel = Kernel(name="hilbert", delta=1.0, evaluate=_hilbert_k, constant=8.0)
rough_test_kernel = Kernel(name="rough", delta=1.0, evaluate=_rough_k, constant=None)


@dataclass(frozen=True)
class KernelSmoothnessReport:
    kernel: str
    delta: float
    samples: int
    max_ratio: float
    worst: tuple  # (x, x', y, cube side) attaining the max
    bounded_by: float | None

    @property
    def ok(self) -> bool:
        return self.bounded_by is None or self.max_ratio <= self.bounded_by


def kernel_smoothness_check(
    kernel: Kernel, samples: int = 10000, seed: int = 0
) -> KernelSmoothnessReport:
    """Sampled Hölder-type smoothness ratio of the kernel in its first slot.

    Draws dyadic subintervals Q of [0, 1), points x, x' in Q, and y in
    [-1, 2) outside the concentric double 2Q, and reports the largest
    ``|k(x,y) - k(x',y)| |x - y|^(1 + delta) / |x - x'|^delta``.
    """
    rng = np.random.default_rng(seed)
    d = kernel.delta
    best = 0.0
    worst = (0.0, 0.0, 0.0, 0.0)
    n = 0
    while n < samples:
        level = int(rng.integers(0, 9))
        h = 2.0 ** (-level)
        a = float(rng.integers(0, 1 << level)) * h
        x, xp = a + h * rng.random(2)
        if x == xp:
            continue
        lo, hi = a + h / 2.0 - h, a + h / 2.0 + h  # the concentric double
        y = -1.0 + 3.0 * float(rng.random())
        if lo <= y < hi:
            continue
        n += 1
        num = abs(kernel.evaluate(x, y) - kernel.evaluate(xp, y))
        ratio = num * abs(x - y) ** (1.0 + d) / abs(x - xp) ** d
        if ratio > best:
            best = ratio
            worst = (float(x), float(xp), float(y), h)
    return KernelSmoothnessReport(
        kernel=kernel.name,
        delta=d,
        samples=samples,
        max_ratio=float(best),
        worst=worst,
        bounded_by=kernel.constant,
    )
