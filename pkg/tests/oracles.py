"""Brute-force reference implementations used to pin expected test values.

Everything here recomputes the library's statistics from their defining
set-measure conditions by exhaustive candidate search, sharing no code with
the fast paths.  Slow on purpose; sized for the test corpora.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def median_oracle(values: np.ndarray, t: float) -> float:
    """sup{M : #{v < M} <= t*N} by scanning candidate levels downward."""
    v = np.asarray(values, dtype=np.float64).ravel()
    n = v.size
    budget = t * n + 1e-9
    for cand in sorted(set(v.tolist()), reverse=True):
        if np.count_nonzero(v < cand) <= budget:
            return float(cand)
    raise AssertionError("no admissible median level found")


def osc_quantile_oracle(values: np.ndarray, center: float, s: float) -> float:
    """smallest a >= 0 with #{|v - c| > a} < s*N, scanning candidate deviations."""
    v = np.asarray(values, dtype=np.float64).ravel()
    n = v.size
    devs = np.abs(v - center)
    cap = s * n - 1e-9
    for cand in sorted(set([0.0] + devs.tolist())):
        if np.count_nonzero(devs > cand) < cap:
            return float(cand)
    raise AssertionError("no admissible oscillation bound found")


def best_constant_oracle(values: np.ndarray, s: float) -> float:
    """min over candidate centers (all values and all pairwise midpoints)."""
    v = np.asarray(values, dtype=np.float64).ravel()
    centers = set(v.tolist())
    for a, b in itertools.combinations(sorted(set(v.tolist())), 2):
        centers.add(0.5 * (a + b))
    return min(osc_quantile_oracle(v, c, s) for c in sorted(centers))


def min_kth_deviation_oracle(values: np.ndarray, k: int) -> float:
    """min over the same candidate centers of the k-th largest |v - c|."""
    v = np.asarray(values, dtype=np.float64).ravel()
    n = v.size
    if k > n:
        return 0.0
    centers = set(v.tolist())
    for a, b in itertools.combinations(sorted(set(v.tolist())), 2):
        centers.add(0.5 * (a + b))
    best = math.inf
    for c in sorted(centers):
        devs = np.sort(np.abs(v - c))[::-1]
        best = min(best, float(devs[k - 1]))
    return best


def aligned_cubes_1d(n_cells: int):
    for m in range(1, n_cells + 1):
        for o in range(n_cells - m + 1):
            yield o, m


def aligned_cubes_2d(per_axis: int):
    for m in range(1, per_axis + 1):
        for r in range(per_axis - m + 1):
            for c in range(per_axis - m + 1):
                yield (r, c), m


def sharp_max_oracle_1d(values: np.ndarray, cell: int, s: float) -> float:
    """Exhaustive sup over aligned intervals containing the cell."""
    v = np.asarray(values, dtype=np.float64).ravel()
    best = 0.0
    for o, m in aligned_cubes_1d(v.size):
        if o <= cell < o + m:
            best = max(best, best_constant_oracle(v[o : o + m], s))
    return best


def sharp_max_oracle_2d(values2d: np.ndarray, cell: tuple[int, int], s: float) -> float:
    g = np.asarray(values2d, dtype=np.float64)
    best = 0.0
    for (r, c), m in aligned_cubes_2d(g.shape[0]):
        if r <= cell[0] < r + m and c <= cell[1] < c + m:
            best = max(best, best_constant_oracle(g[r : r + m, c : c + m], s))
    return best


def hl_max_oracle_1d(values: np.ndarray, cell: int) -> float:
    v = np.abs(np.asarray(values, dtype=np.float64).ravel())
    best = 0.0
    for o, m in aligned_cubes_1d(v.size):
        if o <= cell < o + m:
            best = max(best, float(v[o : o + m].mean()))
    return best


def mean_sharp_oracle_1d(values: np.ndarray, cell: int) -> float:
    v = np.asarray(values, dtype=np.float64).ravel()
    best = 0.0
    for o, m in aligned_cubes_1d(v.size):
        if o <= cell < o + m:
            w = v[o : o + m]
            best = max(best, float(np.abs(w - w.mean()).mean()))
    return best


def hilbert_indicator_reference(x: np.ndarray, a: float, b: float) -> np.ndarray:
    """Closed form of the principal-value integral of 1/(x-y) over y in [a, b)."""
    x = np.asarray(x, dtype=np.float64)
    return np.log(np.abs(x - a)) - np.log(np.abs(x - b))


def haar_shift_apply_oracle(f_values, cell_measure, entries, haar_cells):
    """Double loop over shift entries; haar_cells maps a cube key to
    (cells_left, cells_right, height)."""
    out = np.zeros_like(np.asarray(f_values, dtype=np.float64))
    f = np.asarray(f_values, dtype=np.float64)
    for (qp, qpp, a) in entries:
        left, right, h = haar_cells[qp]
        coeff = h * (f[left].sum() - f[right].sum()) * cell_measure
        lefto, righto, ho = haar_cells[qpp]
        out[lefto] += a * coeff * ho
        out[righto] -= a * coeff * ho
    return out
