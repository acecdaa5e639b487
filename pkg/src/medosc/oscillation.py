"""Medians, quantile oscillation, and the maximal operators built from them.

All statistics reduce to order statistics of cell values, computed exactly:

* ``median(f, t, Q)`` is the largest ``M`` whose strict sublevel set
  ``{f < M}`` occupies at most a ``t`` fraction of ``Q``.  On ``N`` cells
  this is the ``(floor(t*N) + 1)``-th smallest value.
* ``osc_quantile(f, Q, s, c)`` is the smallest deviation bound ``a`` such
  that strictly fewer than ``s*N`` cells have ``|f - c| > a``: the ``K``-th
  largest deviation with ``K = ceil(s*N)`` (``K = s*N`` when integral).
* ``best_constant_osc`` minimizes that over centers ``c``.  Keeping the
  ``N - K + 1`` values nearest ``c`` is optimal, and those always form a
  window of consecutive sorted values, so the minimum is half the smallest
  width among such windows (the window algorithm).

The per-cell maximal functions ("sup over cubes of the family containing
the cell") are computed as full maps over a base cube and memoized, since
decompositions query them once per active cube.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .grid import AlignedCube, DyadicCube, GridFunction, cells_of

__all__ = [
    "CubeClass",
    "OscParams",
    "median_position",
    "keep_count",
    "median_level_keep_count",
    "median_of_values",
    "median",
    "osc_quantile",
    "min_kth_deviation",
    "best_constant_osc",
    "best_constant_at_median_level",
    "SharpMaxCache",
    "sharp_map",
    "local_sharp_max",
    "median_max_dyadic_map",
    "median_max_dyadic",
    "hl_map",
    "hl_max",
    "mean_sharp_map",
    "mean_sharp_max",
    "sup_inf_map",
]

# Tolerance for deciding whether t*N or s*N is an integer.  Levels arrive as
# binary floats, so products can sit within one ulp of an integer; distinct
# admissible levels on grids this size differ by at least 1/N >> _EPS.
_EPS = 1e-9


class CubeClass(Enum):
    """Which family of subcubes a maximal operator ranges over."""

    DYADIC = "dyadic"
    ALIGNED = "aligned"


@dataclass(frozen=True)
class OscParams:
    """Oscillation fraction ``s``, median level ``t``, weighted exponent ``delta``."""

    s: float
    t: float
    delta: float | None = None

    def __post_init__(self) -> None:
        if not 0.0 < self.s < 1.0:
            raise ValueError(f"s must lie in (0, 1), got {self.s}")
        if not 0.0 < self.t < 1.0:
            raise ValueError(f"t must lie in (0, 1), got {self.t}")
        if self.delta is not None and not 0.0 < self.delta <= 1.0:
            raise ValueError(f"delta must lie in (0, 1], got {self.delta}")

    def require_sharp(self) -> None:
        if not self.s <= 0.5 + _EPS:
            raise ValueError(f"oscillation fraction s must be <= 1/2, got {self.s}")

    def require_decomposition(self) -> None:
        self.require_sharp()
        if not self.s < 0.5 + _EPS:
            raise ValueError(f"decomposition needs s < 1/2, got {self.s}")
        if self.t < 0.5 - _EPS:
            raise ValueError(f"decomposition needs t >= 1/2, got {self.t}")
        if not self.t < 1.0 - self.s - _EPS:
            raise ValueError(f"decomposition needs t < 1 - s, got t={self.t}, s={self.s}")

    def require_delta(self) -> float:
        if self.delta is None:
            raise ValueError("this check needs the delta parameter")
        return self.delta

    def parent_level(self, dimension: int) -> float:
        """The raised median level ``1 - (1 - t) / 2^n`` used on parent cubes."""
        return 1.0 - (1.0 - self.t) / (1 << dimension)


def median_position(t: float, n_cells: int) -> int:
    """0-based sorted position of the level-``t`` maximal median on ``n_cells`` values."""
    if n_cells < 1:
        raise ValueError("median needs at least one cell")
    pos = int(math.floor(t * n_cells + _EPS))
    return min(pos, n_cells - 1)


def keep_count(s: float, n_cells: int) -> int:
    """The K of the oscillation rule: ``ceil(s*N)``, or ``s*N`` itself when integral."""
    return int(math.ceil(s * n_cells - _EPS))


def median_level_keep_count(t: float, n_cells: int) -> int:
    """K such that the level-``t`` median of a deviation is its K-th largest value."""
    return n_cells - median_position(t, n_cells)


def median_of_values(values: np.ndarray, t: float) -> float:
    values = np.asarray(values, dtype=np.float64).ravel()
    pos = median_position(t, values.size)
    return float(np.partition(values, pos)[pos])


def median(f: GridFunction, t: float, cube: DyadicCube | AlignedCube) -> float:
    """Maximal median of f over the cube at level t (exact discrete rule)."""
    return median_of_values(f.region(cube), t)


def osc_quantile(
    f: GridFunction, cube: DyadicCube | AlignedCube, s: float, center: float
) -> float:
    """Smallest ``a >= 0`` with strictly fewer than ``s|Q|`` of ``|f - center| > a``."""
    devs = np.abs(np.asarray(f.region(cube), dtype=np.float64).ravel() - center)
    n = devs.size
    k = keep_count(s, n)
    if k > n:
        return 0.0
    return float(np.partition(devs, n - k)[n - k])


def min_kth_deviation(sorted_values: np.ndarray, k: int) -> tuple[float, float]:
    """Minimize the k-th largest of ``|values - c|`` over centers ``c``.

    Discarding the ``k - 1`` farthest values and covering the rest is optimal,
    and the kept values form ``w = n - k + 1`` consecutive sorted entries, so
    the answer is half the narrowest such window.  Returns ``(center, alpha)``.
    """
    v = np.asarray(sorted_values, dtype=np.float64)
    n = v.size
    w = n - k + 1
    if w <= 0 or n == 0:
        return 0.0 if n == 0 else float(v[0]), 0.0
    if w == 1:
        return float(v[0]), 0.0
    widths = v[w - 1 :] - v[: n - w + 1]
    j = int(np.argmin(widths))
    return float(0.5 * (v[j] + v[j + w - 1])), float(0.5 * widths[j])


def best_constant_osc(
    f: GridFunction, cube: DyadicCube | AlignedCube, s: float
) -> tuple[float, float]:
    """Best center and the minimal quantile oscillation over the cube."""
    vals = np.sort(np.asarray(f.region(cube), dtype=np.float64).ravel())
    return min_kth_deviation(vals, keep_count(s, vals.size))


def best_constant_at_median_level(
    f: GridFunction, cube: DyadicCube | AlignedCube, level: float
) -> tuple[float, float]:
    """Best center for the level-``level`` median of ``|f - c|`` over the cube."""
    vals = np.sort(np.asarray(f.region(cube), dtype=np.float64).ravel())
    return min_kth_deviation(vals, median_level_keep_count(level, vals.size))


# ---------------------------------------------------------------------------
# Per-cell maps over a base cube.
#
# Each map has the same shape as the base region (flat in 1-d, square in
# 2-d).  ALIGNED maps loop over cube side lengths; for each size the
# statistic of every offset is computed in one vectorized pass and folded
# into the per-cell running maximum with a windowed-max filter.  DYADIC maps
# walk the levels of the subtree.
# ---------------------------------------------------------------------------


def _cover_max_1d(per_offset: np.ndarray, m: int, n: int) -> np.ndarray:
    """cell i -> max over aligned windows of length m covering i of per_offset."""
    if m == 1:
        return per_offset
    pad = np.full(m - 1, -np.inf)
    ext = np.concatenate([pad, per_offset, pad])
    return sliding_window_view(ext, m).max(axis=1)


def _cover_max_2d(per_offset: np.ndarray, m: int, n: int) -> np.ndarray:
    if m == 1:
        return per_offset
    rows = np.stack([_cover_max_1d(row, m, n) for row in per_offset])
    cols = np.stack([_cover_max_1d(col, m, n) for col in rows.T])
    return cols.T


def _window_min_1d(per_cell: np.ndarray, m: int) -> np.ndarray:
    """offset o -> min of per_cell over the length-m window starting at o."""
    if m == 1:
        return per_cell
    return sliding_window_view(per_cell, m).min(axis=1)


def _window_min_2d(per_cell: np.ndarray, m: int) -> np.ndarray:
    if m == 1:
        return per_cell
    rows = np.stack([_window_min_1d(row, m) for row in per_cell])
    cols = np.stack([_window_min_1d(col, m) for col in rows.T])
    return cols.T


def _sorted_windows_1d(vals: np.ndarray, m: int) -> np.ndarray:
    return np.sort(sliding_window_view(vals, m), axis=-1)


def _sorted_windows_2d(vals: np.ndarray, m: int) -> np.ndarray:
    sw = sliding_window_view(vals, (m, m))
    return np.sort(sw.reshape(sw.shape[0], sw.shape[1], m * m), axis=-1)


def _window_alpha(sorted_rows: np.ndarray, k: int) -> np.ndarray:
    """Vectorized window algorithm: half the narrowest (n-k+1)-window width per row."""
    n = sorted_rows.shape[-1]
    w = n - k + 1
    if w <= 1:
        return np.zeros(sorted_rows.shape[:-1])
    widths = sorted_rows[..., w - 1 :] - sorted_rows[..., : n - w + 1]
    return 0.5 * widths.min(axis=-1)


def _aligned_sharp_map(region: np.ndarray, s: float) -> np.ndarray:
    """Per-cell sup over aligned subcubes of the best-constant oscillation."""
    if region.ndim == 1:
        n = region.size
        out = np.zeros(n)
        for m in range(2, n + 1):
            k = keep_count(s, m)
            if m - k + 1 <= 1:
                continue
            alpha = _window_alpha(_sorted_windows_1d(region, m), k)
            np.maximum(out, _cover_max_1d(alpha, m, n), out=out)
        return out
    a = region.shape[0]
    out = np.zeros((a, a))
    for m in range(1, a + 1):
        k = keep_count(s, m * m)
        if m * m - k + 1 <= 1:
            continue
        alpha = _window_alpha(_sorted_windows_2d(region, m), k)
        np.maximum(out, _cover_max_2d(alpha, m, a), out=out)
    return out


def _dyadic_blocks(region: np.ndarray, level_offset: int) -> np.ndarray:
    """Cells of each dyadic subcube ``level_offset`` levels down, one row per cube."""
    if region.ndim == 1:
        return region.reshape(1 << level_offset, -1)
    a = region.shape[0]
    c = 1 << level_offset
    b = a // c
    return region.reshape(c, b, c, b).swapaxes(1, 2).reshape(c * c, b * b)


def _spread_to_cells(per_cube: np.ndarray, region_shape: tuple, level_offset: int) -> np.ndarray:
    """Broadcast a per-cube statistic back onto the cells of the region."""
    if len(region_shape) == 1:
        b = region_shape[0] >> level_offset
        return np.repeat(per_cube, b)
    a = region_shape[0]
    c = 1 << level_offset
    b = a // c
    g = per_cube.reshape(c, c)
    return np.repeat(np.repeat(g, b, axis=0), b, axis=1)


def _max_level_offset(region: np.ndarray) -> int:
    side = region.size if region.ndim == 1 else region.shape[0]
    return side.bit_length() - 1


def _dyadic_sharp_map(region: np.ndarray, s: float) -> np.ndarray:
    out = np.zeros(region.shape)
    for d in range(_max_level_offset(region) + 1):
        blocks = _dyadic_blocks(region, d)
        n = blocks.shape[1]
        k = keep_count(s, n)
        if n - k + 1 <= 1:
            continue
        alpha = _window_alpha(np.sort(blocks, axis=1), k)
        np.maximum(out, _spread_to_cells(alpha, region.shape, d), out=out)
    return out


def sharp_map(
    f: GridFunction,
    base: DyadicCube,
    s: float,
    cube_class: CubeClass,
) -> np.ndarray:
    """Per-cell local sharp maximal function relative to ``base``.

    Cell ``y`` gets ``sup { best_constant_osc(f, Q, s) : y in Q, Q subset of
    base, Q in the class }``.  Output is shaped like ``f.region(base)``.
    """
    region = np.asarray(f.region(base), dtype=np.float64)
    if cube_class is CubeClass.ALIGNED:
        return _aligned_sharp_map(region, s)
    return _dyadic_sharp_map(region, s)


def median_max_dyadic_map(f: GridFunction, t: float, base: DyadicCube) -> np.ndarray:
    """Per-cell sup of ``|median(f, t, Q)|`` over the dyadic subcubes of ``base``."""
    region = np.asarray(f.region(base), dtype=np.float64)
    out = np.full(region.shape, -np.inf)
    for d in range(_max_level_offset(region) + 1):
        blocks = _dyadic_blocks(region, d)
        pos = median_position(t, blocks.shape[1])
        med = np.abs(np.partition(blocks, pos, axis=1)[:, pos])
        np.maximum(out, _spread_to_cells(med, region.shape, d), out=out)
    return out


def _aligned_hl_map(absregion: np.ndarray) -> np.ndarray:
    if absregion.ndim == 1:
        n = absregion.size
        p = np.concatenate([[0.0], np.cumsum(absregion)])
        out = np.zeros(n)
        for m in range(1, n + 1):
            avg = (p[m:] - p[:-m]) / m
            np.maximum(out, _cover_max_1d(avg, m, n), out=out)
        return out
    a = absregion.shape[0]
    p = np.zeros((a + 1, a + 1))
    p[1:, 1:] = absregion.cumsum(axis=0).cumsum(axis=1)
    out = np.zeros((a, a))
    for m in range(1, a + 1):
        sums = p[m:, m:] - p[:-m, m:] - p[m:, :-m] + p[:-m, :-m]
        np.maximum(out, _cover_max_2d(sums / (m * m), m, a), out=out)
    return out


def _dyadic_hl_map(absregion: np.ndarray) -> np.ndarray:
    out = np.zeros(absregion.shape)
    for d in range(_max_level_offset(absregion) + 1):
        blocks = _dyadic_blocks(absregion, d)
        np.maximum(out, _spread_to_cells(blocks.mean(axis=1), absregion.shape, d), out=out)
    return out


def hl_map(f: GridFunction, base: DyadicCube, cube_class: CubeClass) -> np.ndarray:
    """Per-cell sup over cubes of the class of the average of ``|f|``."""
    region = np.abs(np.asarray(f.region(base), dtype=np.float64))
    if cube_class is CubeClass.ALIGNED:
        return _aligned_hl_map(region)
    return _dyadic_hl_map(region)


def _aligned_mean_sharp_map(region: np.ndarray) -> np.ndarray:
    if region.ndim == 1:
        n = region.size
        out = np.zeros(n)
        for m in range(2, n + 1):
            sw = sliding_window_view(region, m)
            mu = sw.mean(axis=1)
            mad = np.abs(sw - mu[:, None]).mean(axis=1)
            np.maximum(out, _cover_max_1d(mad, m, n), out=out)
        return out
    a = region.shape[0]
    out = np.zeros((a, a))
    for m in range(2, a + 1):
        sw = sliding_window_view(region, (m, m))
        flat = sw.reshape(sw.shape[0], sw.shape[1], m * m)
        mu = flat.mean(axis=-1)
        mad = np.abs(flat - mu[..., None]).mean(axis=-1)
        np.maximum(out, _cover_max_2d(mad, m, a), out=out)
    return out


def _dyadic_mean_sharp_map(region: np.ndarray) -> np.ndarray:
    out = np.zeros(region.shape)
    for d in range(_max_level_offset(region) + 1):
        blocks = _dyadic_blocks(region, d)
        mad = np.abs(blocks - blocks.mean(axis=1, keepdims=True)).mean(axis=1)
        np.maximum(out, _spread_to_cells(mad, region.shape, d), out=out)
    return out


def mean_sharp_map(f: GridFunction, base: DyadicCube, cube_class: CubeClass) -> np.ndarray:
    """Per-cell sup over cubes of the mean deviation from the cube average."""
    region = np.asarray(f.region(base), dtype=np.float64)
    if cube_class is CubeClass.ALIGNED:
        return _aligned_mean_sharp_map(region)
    return _dyadic_mean_sharp_map(region)


def sup_inf_map(per_cell: np.ndarray, cube_class: CubeClass) -> np.ndarray:
    """Per-cell ``sup`` over covering cubes of the ``inf`` of ``per_cell`` on the cube."""
    region = np.asarray(per_cell, dtype=np.float64)
    if cube_class is CubeClass.ALIGNED:
        out = np.full(region.shape, -np.inf)
        if region.ndim == 1:
            n = region.size
            for m in range(1, n + 1):
                np.maximum(out, _cover_max_1d(_window_min_1d(region, m), m, n), out=out)
        else:
            a = region.shape[0]
            for m in range(1, a + 1):
                np.maximum(out, _cover_max_2d(_window_min_2d(region, m), m, a), out=out)
        return out
    out = np.full(region.shape, -np.inf)
    for d in range(_max_level_offset(region) + 1):
        blocks = _dyadic_blocks(region, d)
        np.maximum(out, _spread_to_cells(blocks.min(axis=1), region.shape, d), out=out)
    return out


def _cell_position_in_base(
    f: GridFunction, cell: int, base: DyadicCube
) -> tuple[int, ...]:
    per = f.cells_per_axis
    side = base.side_cells(f.depth)
    if f.dimension == 1:
        off = cell - base.index[0] * side
        if not 0 <= off < side:
            raise ValueError(f"cell {cell} lies outside base cube {base}")
        return (off,)
    r, c = cell // per, cell % per
    r0, c0 = base.index[0] * side, base.index[1] * side
    if not (r0 <= r < r0 + side and c0 <= c < c0 + side):
        raise ValueError(f"cell {cell} lies outside base cube {base}")
    return (r - r0, c - c0)


class SharpMaxCache:
    """Memoizes per-cell maximal-function maps, keyed by (cube, s, class).

    Decompositions ask for the same map once per active cube and once more
    during verification; entries are immutable arrays so concurrent reads
    and idempotent writes are safe.
    """

    def __init__(self, f: GridFunction):
        self.f = f
        self._maps: dict[tuple, np.ndarray] = {}
        self._lock = threading.Lock()

    def _get(self, key: tuple, compute: Callable[[], np.ndarray]) -> np.ndarray:
        got = self._maps.get(key)
        if got is not None:
            return got
        value = compute()
        value.setflags(write=False)
        with self._lock:
            return self._maps.setdefault(key, value)

    def map(self, base: DyadicCube, s: float, cube_class: CubeClass) -> np.ndarray:
        key = (base.key(), float(s), cube_class.value)
        return self._get(key, lambda: sharp_map(self.f, base, s, cube_class))

    def value_at(self, cell: int, base: DyadicCube, s: float, cube_class: CubeClass) -> float:
        m = self.map(base, s, cube_class)
        return float(m[_cell_position_in_base(self.f, cell, base)])

    def inf_over(
        self, sub: DyadicCube, base: DyadicCube, s: float, cube_class: CubeClass
    ) -> float:
        """min over the cells of ``sub`` of the map computed relative to ``base``."""
        m = self.map(base, s, cube_class)
        side = sub.side_cells(self.f.depth)
        if self.f.dimension == 1:
            off = sub.index[0] * side - base.index[0] * base.side_cells(self.f.depth)
            return float(m[off : off + side].min())
        r0 = sub.index[0] * side - base.index[0] * base.side_cells(self.f.depth)
        c0 = sub.index[1] * side - base.index[1] * base.side_cells(self.f.depth)
        return float(m[r0 : r0 + side, c0 : c0 + side].min())


def local_sharp_max(
    f: GridFunction,
    cell: int,
    base: DyadicCube,
    s: float,
    cube_class: CubeClass,
    cache: SharpMaxCache | None = None,
) -> float:
    """Sup of best-constant oscillations over class cubes inside ``base`` holding ``cell``."""
    if cache is not None:
        return cache.value_at(cell, base, s, cube_class)
    m = sharp_map(f, base, s, cube_class)
    return float(m[_cell_position_in_base(f, cell, base)])


def median_max_dyadic(f: GridFunction, cell: int, t: float, base: DyadicCube) -> float:
    m = median_max_dyadic_map(f, t, base)
    return float(m[_cell_position_in_base(f, cell, base)])


def hl_max(
    f: GridFunction, cell: int, base: DyadicCube, cube_class: CubeClass
) -> float:
    m = hl_map(f, base, cube_class)
    return float(m[_cell_position_in_base(f, cell, base)])


def mean_sharp_max(
    f: GridFunction, cell: int, base: DyadicCube, cube_class: CubeClass
) -> float:
    m = mean_sharp_map(f, base, cube_class)
    return float(m[_cell_position_in_base(f, cell, base)])
