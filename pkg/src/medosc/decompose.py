"""Local median oscillation decompositions and their exact verifiers.

Both variants iterate the same stopping-time construction on a root cube
``Q0``: subtract the level-``t`` median on the active cube, pick the maximal
dyadic subcubes whose recentred median strictly exceeds the active cube's
threshold (ties are never selected, and a selected cube's parent never
exceeds), record the median jump ``alpha`` for each selected cube, and
recurse into it.  A cube with no exceeding cells halts, leaving the bounded
remainder covered by its threshold.

The variants differ only in the threshold of an active cube ``A``:

* ``v1``: twice the infimum over ``A`` of the local sharp maximal function
  relative to ``A`` (computed over a chosen cube class);
* ``v2``: the level-``t`` median over ``A`` of ``|f - median(f, t, A)|``,
  which needs no maximal function at all.

``verify_pointwise`` recomputes, from raw cell values, the guaranteed
domination of ``|f - median(f, t, Q0)|`` by the sharp-function term plus the
per-cube jump bounds summed over every selected cube containing the cell.
``verify_sparsity`` checks disjointness, nesting and the geometric packing
of the selected generations in exact cell counts.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .grid import DyadicCube, GridFunction, cells_of, parent
from .oscillation import (
    CubeClass,
    OscParams,
    SharpMaxCache,
    median_of_values,
    median_position,
)

__all__ = [
    "DecompositionError",
    "MaxGenerationsExceeded",
    "TreeFunctionMismatch",
    "StoppedCube",
    "Generation",
    "DecompositionTree",
    "decompose_v1",
    "decompose_v2",
    "verify_pointwise",
    "verify_sparsity",
    "sparse_sets",
    "tree_to_dict",
    "tree_from_dict",
    "save_tree",
    "load_tree",
]

_REL_TOL = 1e-9


class DecompositionError(ValueError):
    """Base class for decomposition construction and verification errors."""


class MaxGenerationsExceeded(DecompositionError):
    """Raised when the stopping recursion outlives its generation budget."""


class TreeFunctionMismatch(DecompositionError):
    """Raised when a tree is verified against a function it was not built from."""


@dataclass(frozen=True)
class StoppedCube:
    """One selected cube: where it sits, who selected it, and its median jump."""

    cube: DyadicCube
    generation: int
    parent_pos: int  # position of the selecting active cube in the previous generation
    alpha: float  # median(f,t,cube) - median(f,t,active): the recentred median
    threshold: float  # threshold of the selecting active cube


@dataclass(frozen=True)
class Generation:
    """Selected cubes of one generation plus the stop/continue split above them.

    ``stopped_parents`` and ``continued_parents`` partition the positions of
    the previous generation's cubes (position 0 of generation 0 is the root):
    a parent continues exactly when it has exceeding cells, i.e. children here.
    """

    cubes: tuple[StoppedCube, ...]
    stopped_parents: tuple[int, ...]
    continued_parents: tuple[int, ...]
    children_by_parent: dict[int, tuple[int, ...]]


@dataclass(frozen=True)
class EnvelopeRecord:
    """Threshold actually charged on an active cube, and whether it halted there."""

    threshold: float
    halted: bool


@dataclass(frozen=True)
class DecompositionTree:
    variant: str  # "v1" or "v2"
    params: OscParams
    cube_class: CubeClass | None  # class used for v1 thresholds; None for v2
    root: DyadicCube
    depth: int
    root_median: float
    generations: tuple[Generation, ...]
    envelopes: dict[tuple, EnvelopeRecord]
    f_digest: str

    def all_cubes(self) -> Iterator[StoppedCube]:
        for gen in self.generations:
            yield from gen.cubes

    def cube_count(self) -> int:
        return sum(len(g.cubes) for g in self.generations)

    def generation_cells(self, f: GridFunction, v: int) -> np.ndarray:
        """Union of the cells of the generation-``v`` cubes (1-based ``v``)."""
        gen = self.generations[v - 1]
        if not gen.cubes:
            return np.empty(0, dtype=np.int64)
        return np.concatenate([cells_of(sc.cube, self.depth) for sc in gen.cubes])


def _median_on(f: GridFunction, t: float, cube: DyadicCube) -> float:
    return median_of_values(np.asarray(f.region(cube), dtype=np.float64).ravel(), t)


def _select_maximal(
    f: GridFunction, t: float, active: DyadicCube, active_median: float, threshold: float
) -> list[tuple[DyadicCube, float]]:
    """Maximal dyadic subcubes whose recentred median strictly exceeds the threshold."""
    found: list[tuple[DyadicCube, float]] = []
    stack = list(active.children()) if active.level < f.depth else []
    while stack:
        cube = stack.pop()
        med = _median_on(f, t, cube)
        if abs(med - active_median) > threshold:
            found.append((cube, med))
        elif cube.level < f.depth:
            stack.extend(cube.children())
    found.sort(key=lambda item: (item[0].level, item[0].index))
    return found


def _v1_threshold(
    cache: SharpMaxCache, active: DyadicCube, params: OscParams, cube_class: CubeClass
) -> float:
    return 2.0 * float(cache.map(active, params.s, cube_class).min())


def _v2_threshold(f: GridFunction, active: DyadicCube, params: OscParams) -> float:
    vals = np.asarray(f.region(active), dtype=np.float64).ravel()
    devs = np.abs(vals - median_of_values(vals, params.t))
    pos = median_position(params.t, devs.size)
    return float(np.partition(devs, pos)[pos])


def _decompose(
    f: GridFunction,
    root: DyadicCube,
    params: OscParams,
    variant: str,
    cube_class: CubeClass | None,
    max_generations: int,
    cache: SharpMaxCache | None,
) -> DecompositionTree:
    params.require_decomposition()
    if not root.contains(root) or root.dimension != f.dimension:
        raise DecompositionError(f"root cube {root} does not match the function")
    if root.level > f.depth:
        raise DecompositionError(f"root cube level {root.level} exceeds depth {f.depth}")
    if variant == "v1" and cache is None:
        cache = SharpMaxCache(f)

    root_median = _median_on(f, params.t, root)
    envelopes: dict[tuple, EnvelopeRecord] = {}
    generations: list[Generation] = []
    active: list[tuple[DyadicCube, float]] = [(root, root_median)]

    for _gen in range(1, max_generations + 2):
        if not active:
            break
        if _gen > max_generations:
            raise MaxGenerationsExceeded(
                f"decomposition exceeded {max_generations} generations"
            )
        stopped: list[StoppedCube] = []
        next_active: list[tuple[DyadicCube, float]] = []
        stop_parents: list[int] = []
        cont_parents: list[int] = []
        children: dict[int, tuple[int, ...]] = {}
        for pos, (cube, cube_median) in enumerate(active):
            if variant == "v1":
                thr = _v1_threshold(cache, cube, params, cube_class)
            else:
                thr = _v2_threshold(f, cube, params)
            vals = np.asarray(f.region(cube), dtype=np.float64).ravel()
            exceed = int(np.count_nonzero(np.abs(vals - cube_median) > thr))
            if exceed == 0:
                envelopes[cube.key()] = EnvelopeRecord(thr, halted=True)
                stop_parents.append(pos)
                continue
            selected = _select_maximal(f, params.t, cube, cube_median, thr)
            if not selected:
                raise DecompositionError(
                    "exceeding cells but no selected cube; selection is unsound"
                )
            envelopes[cube.key()] = EnvelopeRecord(thr, halted=False)
            cont_parents.append(pos)
            first = len(stopped)
            for sub, sub_median in selected:
                stopped.append(
                    StoppedCube(
                        cube=sub,
                        generation=_gen,
                        parent_pos=pos,
                        alpha=sub_median - cube_median,
                        threshold=thr,
                    )
                )
                # Carry the exact median: reconstructing it as alpha plus the
                # parent median is off by an ulp and fakes exceedances at
                # threshold zero.
                next_active.append((sub, sub_median))
            children[pos] = tuple(range(first, len(stopped)))
        if not stopped:
            break
        generations.append(
            Generation(tuple(stopped), tuple(stop_parents), tuple(cont_parents), children)
        )
        active = next_active

    return DecompositionTree(
        variant=variant,
        params=params,
        cube_class=cube_class,
        root=root,
        depth=f.depth,
        root_median=root_median,
        generations=tuple(generations),
        envelopes=envelopes,
        f_digest=f.digest(),
    )


def decompose_v1(
    f: GridFunction,
    root: DyadicCube,
    params: OscParams,
    cube_class: CubeClass = CubeClass.ALIGNED,
    max_generations: int = 64,
    cache: SharpMaxCache | None = None,
) -> DecompositionTree:
    """Decomposition with sharp-maximal-function thresholds (twice the cube infimum)."""
    return _decompose(f, root, params, "v1", cube_class, max_generations, cache)


def decompose_v2(
    f: GridFunction,
    root: DyadicCube,
    params: OscParams,
    max_generations: int = 64,
) -> DecompositionTree:
    """Decomposition with quantile thresholds: the level-t median of the recentred |f|."""
    return _decompose(f, root, params, "v2", None, max_generations, None)


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PointwiseReport:
    lhs: np.ndarray  # |f - root median| per root cell
    rhs: np.ndarray  # sharp term + per-cube jump bounds per root cell
    violations: tuple[int, ...]  # flat cell indices where lhs > rhs beyond tolerance
    max_ratio: float
    chains: dict[int, tuple]  # violating cell -> decomposition cube chain

    @property
    def ok(self) -> bool:
        return not self.violations


def _cells_mask(cube: DyadicCube, depth: int, dimension: int) -> np.ndarray:
    mask = np.zeros((1 << depth) ** dimension, dtype=bool)
    mask[cells_of(cube, depth)] = True
    return mask


def _check_tree_matches(tree: DecompositionTree, f: GridFunction) -> None:
    if tree.f_digest != f.digest():
        raise TreeFunctionMismatch(
            "tree was built from a different function than the one supplied"
        )


def _quantile_of_recentred(f: GridFunction, cube: DyadicCube, inner: float, outer: float) -> float:
    """level-``outer`` median over the cube of ``|f - median(f, inner, cube)|``."""
    vals = np.asarray(f.region(cube), dtype=np.float64).ravel()
    devs = np.abs(vals - median_of_values(vals, inner))
    return median_of_values(devs, outer)


def verify_pointwise(
    tree: DecompositionTree,
    f: GridFunction,
    cube_class: CubeClass | None = None,
    cache: SharpMaxCache | None = None,
) -> PointwiseReport:
    """Check the pointwise domination of ``|f - median(f,t,Q0)|`` cell by cell.

    The bound charges ``4x`` (``v1``) or ``8x`` (``v2``) the local sharp
    maximal function at the cell, plus, for every selected cube containing
    the cell, that cube's jump budget: ``10n * inf`` of the sharp function
    relative to its dyadic parent plus ``2 * inf`` relative to itself for
    ``v1``, and the parent's raised-level recentred quantile plus the cube's
    own level-``t`` recentred quantile for ``v2``.
    """
    _check_tree_matches(tree, f)
    if cube_class is None:
        cube_class = tree.cube_class or CubeClass.ALIGNED
    if cache is None:
        cache = SharpMaxCache(f)
    params = tree.params
    n = f.dimension
    root_cells = cells_of(tree.root, f.depth)
    fvals = f.values[root_cells]
    lhs_local = np.abs(fvals - tree.root_median)

    sharp_root = cache.map(tree.root, params.s, cube_class).ravel()
    lead = 4.0 if tree.variant == "v1" else 8.0
    rhs_local = lead * sharp_root.copy()

    # map from root-flat cell index to position within the root region
    pos_of = {int(c): i for i, c in enumerate(root_cells)}
    chains_per_cell: dict[int, list] = {}

    for sc in tree.all_cubes():
        cube = sc.cube
        up = parent(cube)
        if tree.variant == "v1":
            term = 10.0 * n * cache.inf_over(cube, up, params.s, cube_class)
            term += 2.0 * cache.inf_over(cube, cube, params.s, cube_class)
        else:
            term = _quantile_of_recentred(f, up, params.t, params.parent_level(n))
            term += _quantile_of_recentred(f, cube, params.t, params.t)
        for c in cells_of(cube, f.depth):
            i = pos_of[int(c)]
            rhs_local[i] += term
            chains_per_cell.setdefault(int(c), []).append(
                (cube.key(), sc.generation, sc.alpha, sc.threshold, term)
            )

    tol = _REL_TOL * np.maximum(1.0, np.abs(rhs_local))
    bad = np.nonzero(lhs_local > rhs_local + tol)[0]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(
            rhs_local > 0, lhs_local / np.where(rhs_local > 0, rhs_local, 1.0), np.where(lhs_local > 0, np.inf, 0.0)
        )
    violations = tuple(int(root_cells[i]) for i in bad)
    chains = {c: tuple(chains_per_cell.get(c, ())) for c in violations}
    return PointwiseReport(
        lhs=lhs_local,
        rhs=rhs_local,
        violations=violations,
        max_ratio=float(ratios.max()) if ratios.size else 0.0,
        chains=chains,
    )


@dataclass(frozen=True)
class SparsityReport:
    structural_failures: tuple[str, ...]  # overlap or nesting defects
    packing_failures: tuple[str, ...]  # cell-count bounds exceeded
    generation_cell_counts: tuple[int, ...]
    packing_ratio: float  # s / (1 - t)

    @property
    def structural_ok(self) -> bool:
        return not self.structural_failures

    @property
    def packing_ok(self) -> bool:
        return not self.packing_failures

    @property
    def ok(self) -> bool:
        return self.structural_ok and self.packing_ok

    @property
    def failures(self) -> tuple[str, ...]:
        return self.structural_failures + self.packing_failures


def verify_sparsity(tree: DecompositionTree, f: GridFunction) -> SparsityReport:
    """Exact-count structural and packing checks on the selected generations.

    Structural: per generation the cubes are pairwise disjoint and their
    union nests inside the previous generation's union.  Packing: within
    each continued cube the next generation occupies at most an ``s/(1-t)``
    fraction of its cells, and globally generation ``k`` holds at most
    ``(s/(1-t))^k`` of the root.  The two families of failures are reported
    separately: the packing bound is guaranteed for the sharp-threshold
    variant but can genuinely fail for the recentred-quantile variant, so
    callers decide which family is a hard error.
    """
    _check_tree_matches(tree, f)
    s, t = tree.params.s, tree.params.t
    ratio = s / (1.0 - t)
    structural: list[str] = []
    packing: list[str] = []
    depth = f.depth
    total = tree.root.cell_count(depth)

    prev_mask = _cells_mask(tree.root, depth, f.dimension)
    counts: list[int] = []
    for v, gen in enumerate(tree.generations, start=1):
        mask = np.zeros_like(prev_mask)
        seen = 0
        for sc in gen.cubes:
            cs = cells_of(sc.cube, depth)
            if mask[cs].any():
                structural.append(f"generation {v}: overlapping cubes at {sc.cube.key()}")
            mask[cs] = True
            seen += cs.size
        if int(mask.sum()) != seen:
            structural.append(f"generation {v}: overlap detected in cell counts")
        if not np.all(prev_mask[mask]):
            structural.append(f"generation {v}: not nested inside generation {v - 1}")
        counts.append(int(mask.sum()))
        if mask.sum() > (ratio ** v) * total + _REL_TOL * total:
            packing.append(
                f"generation {v}: {int(mask.sum())} cells exceed"
                f" (s/(1-t))^{v} * {total} = {(ratio ** v) * total:.6g}"
            )
        prev_cubes = [tree.root] if v == 1 else [sc.cube for sc in tree.generations[v - 2].cubes]
        for up in prev_cubes:
            up_cells = cells_of(up, depth)
            inside = int(mask[up_cells].sum())
            cap = ratio * up_cells.size
            if inside > cap + _REL_TOL * up_cells.size:
                packing.append(
                    f"generation {v}: {inside} cells inside {up.key()} exceed"
                    f" s/(1-t) * {up_cells.size} = {cap:.6g}"
                )
        prev_mask = mask
    return SparsityReport(
        structural_failures=tuple(structural),
        packing_failures=tuple(packing),
        generation_cell_counts=tuple(counts),
        packing_ratio=ratio,
    )


@dataclass(frozen=True)
class SparseFamily:
    """The retained portions ``F = Q \\ (next generation)`` of each selected cube."""

    members: tuple[tuple[int, tuple, np.ndarray], ...]  # (generation, cube key, cells)
    overlap_failures: tuple[str, ...]
    fraction_failures: tuple[str, ...]  # retained share below 1 - s/(1-t)

    @property
    def ok(self) -> bool:
        return not self.overlap_failures and not self.fraction_failures

    @property
    def failures(self) -> tuple[str, ...]:
        return self.overlap_failures + self.fraction_failures


def sparse_sets(tree: DecompositionTree, f: GridFunction, include_root: bool = True) -> SparseFamily:
    """Per-cube retained cell sets, checked pairwise disjoint and proportionally large.

    Every selected cube keeps the cells not covered by the next generation;
    exact counts certify ``|F| >= (1 - s/(1-t)) |Q|`` and global disjointness.
    """
    _check_tree_matches(tree, f)
    depth = f.depth
    ratio = tree.params.s / (1.0 - tree.params.t)
    omega_next: list[np.ndarray] = []
    for v in range(len(tree.generations)):
        gen_mask = np.zeros(f.cell_count, dtype=bool)
        for sc in tree.generations[v].cubes:
            gen_mask[cells_of(sc.cube, depth)] = True
        omega_next.append(gen_mask)

    members: list[tuple[int, tuple, np.ndarray]] = []
    overlaps: list[str] = []
    fractions: list[str] = []
    seen = np.zeros(f.cell_count, dtype=bool)

    def add(generation: int, cube: DyadicCube) -> None:
        cs = cells_of(cube, depth)
        nxt = omega_next[generation] if generation < len(omega_next) else None
        keep = cs if nxt is None else cs[~nxt[cs]]
        if seen[keep].any():
            overlaps.append(f"sparse member of {cube.key()} overlaps an earlier member")
        seen[keep] = True
        members.append((generation, cube.key(), keep))
        if keep.size + _REL_TOL * cs.size < (1.0 - ratio) * cs.size:
            fractions.append(
                f"sparse member of {cube.key()} keeps {keep.size}/{cs.size}"
                f" < (1 - s/(1-t)) fraction"
            )

    if include_root:
        add(0, tree.root)
    for gen in tree.generations:
        for sc in gen.cubes:
            add(sc.generation, sc.cube)
    return SparseFamily(tuple(members), tuple(overlaps), tuple(fractions))


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def tree_to_dict(tree: DecompositionTree) -> dict:
    return {
        "variant": tree.variant,
        "params": {"s": tree.params.s, "t": tree.params.t},
        "cube_class": tree.cube_class.value if tree.cube_class else None,
        "root": [tree.root.level, list(tree.root.index)],
        "depth": tree.depth,
        "dimension": tree.root.dimension,
        "root_median": tree.root_median,
        "f_digest": tree.f_digest,
        "generations": [
            {
                "cubes": [
                    {
                        "level": sc.cube.level,
                        "index": list(sc.cube.index),
                        "alpha": sc.alpha,
                        "threshold": sc.threshold,
                        "parent_pos": sc.parent_pos,
                    }
                    for sc in gen.cubes
                ],
                "stopped_parents": list(gen.stopped_parents),
                "continued_parents": list(gen.continued_parents),
                "children_by_parent": {
                    str(k): list(v) for k, v in sorted(gen.children_by_parent.items())
                },
            }
            for gen in tree.generations
        ],
        "envelopes": [
            {"level": key[0], "index": list(key[1]), "threshold": env.threshold, "halted": env.halted}
            for key, env in sorted(tree.envelopes.items(), key=lambda kv: (kv[0][0], kv[0][1]))
        ],
    }


def tree_from_dict(doc: dict) -> DecompositionTree:
    generations = []
    for g, gen in enumerate(doc["generations"]):
        cubes = tuple(
            StoppedCube(
                cube=DyadicCube(c["level"], tuple(c["index"])),
                generation=g + 1,
                parent_pos=c["parent_pos"],
                alpha=c["alpha"],
                threshold=c["threshold"],
            )
            for c in gen["cubes"]
        )
        generations.append(
            Generation(
                cubes=cubes,
                stopped_parents=tuple(gen["stopped_parents"]),
                continued_parents=tuple(gen["continued_parents"]),
                children_by_parent={
                    int(k): tuple(v) for k, v in gen["children_by_parent"].items()
                },
            )
        )
    envelopes = {
        (e["level"], tuple(e["index"])): EnvelopeRecord(e["threshold"], e["halted"])
        for e in doc["envelopes"]
    }
    cls = doc.get("cube_class")
    return DecompositionTree(
        variant=doc["variant"],
        params=OscParams(doc["params"]["s"], doc["params"]["t"]),
        cube_class=CubeClass(cls) if cls else None,
        root=DyadicCube(doc["root"][0], tuple(doc["root"][1])),
        depth=doc["depth"],
        root_median=doc["root_median"],
        generations=tuple(generations),
        envelopes=envelopes,
        f_digest=doc["f_digest"],
    )


def save_tree(tree: DecompositionTree, path: str | Path) -> None:
    Path(path).write_text(json.dumps(tree_to_dict(tree), sort_keys=True) + "\n")


def load_tree(path: str | Path) -> DecompositionTree:
    return tree_from_dict(json.loads(Path(path).read_text()))
