"""Corpus-driven inequality checks with recorded empirical constants.

Each check evaluates one estimate on every instance of a reproducible
generated corpus, computing the two sides by independent code paths and
reporting per-instance ratios, the corpus maximum, and any violations.
Exact cell-count facts are asserted outright; constant-bearing bounds are
asserted only where a discrete proof pins the constant, and otherwise the
observed constant is recorded.  Ratio convention: 0/0 counts as 0, a
positive left side against a zero right side is an infinite-ratio failure.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .grid import (
    DyadicCube,
    GridFunction,
    Weight,
    ancestor,
    ancestor_or_root,
    cells_of,
    generate,
    lift,
    parent,
    root_cube,
)
from .oscillation import (
    CubeClass,
    OscParams,
    SharpMaxCache,
    best_constant_at_median_level,
    hl_map,
    mean_sharp_map,
    median,
    median_max_dyadic_map,
    median_of_values,
    sharp_map,
    sup_inf_map,
)
from .decompose import (
    decompose_v1,
    decompose_v2,
    sparse_sets,
    verify_pointwise,
    verify_sparsity,
)
from .operators import (
    apply_haar_shift,
    hilbert_transform,
    martingale_transform,
    random_haar_shift,
)

_REL_TOL = 1e-9


class UnknownCheck(ValueError):
    """Raised when a check name does not match any registered check."""


def _ratio(lhs: float, rhs: float) -> float:
    if lhs <= 0.0:
        return 0.0
    if rhs <= 0.0:
        return math.inf
    return lhs / rhs


def _thread_count() -> int:
    raw = os.environ.get("OSC_THREADS", "")
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n > 0:
        return n
    return min(4, os.cpu_count() or 1)


def _run_instances(worker, items: list) -> list:
    """Apply ``worker`` to each item, preserving order; threads when allowed."""
    workers = _thread_count()
    if workers <= 1 or len(items) <= 1:
        return [worker(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(worker, items))


# ---------------------------------------------------------------------------
# Corpus construction
# ---------------------------------------------------------------------------

DEFAULT_KINDS = (
    "spike",
    "step",
    "random-uniform",
    "random-heavy-tail",
    "singular-power",
)

WEIGHT_STYLES = ("uniform", "random", "peaked")


@dataclass(frozen=True)
class CorpusSpec:
    """A reproducible family of generated grid functions.

    Instance ``i`` cycles through the (kind, dimension, depth) combinations
    and uses seed ``base_seed + i``, so the corpus is determined entirely by
    this record.
    """

    kinds: tuple[str, ...] = DEFAULT_KINDS
    dimensions: tuple[int, ...] = (1, 2)
    depths_1d: tuple[int, ...] = (5, 6)
    depths_2d: tuple[int, ...] = (3, 4)
    count: int = 40
    base_seed: int = 0

    def combos(self) -> list[tuple[str, int, int]]:
        out = []
        for kind in self.kinds:
            for dim in self.dimensions:
                depths = self.depths_1d if dim == 1 else self.depths_2d
                for depth in depths:
                    out.append((kind, dim, depth))
        return out

    def describe(self) -> str:
        dims = ",".join(str(d) for d in self.dimensions)
        return (
            f"{self.count} instances; kinds={'|'.join(self.kinds)}; "
            f"dims={dims}; depths 1d={list(self.depths_1d)} 2d={list(self.depths_2d)}; "
            f"seeds {self.base_seed}..{self.base_seed + self.count - 1}"
        )


def build_corpus(spec: CorpusSpec) -> list[tuple[str, GridFunction]]:
    combos = spec.combos()
    if not combos:
        return []
    instances = []
    for i in range(spec.count):
        kind, dim, depth = combos[i % len(combos)]
        seed = spec.base_seed + i
        name = f"{kind}-{dim}d-L{depth}-seed{seed}"
        instances.append((name, generate(kind, dim, depth, seed=seed)))
    return instances


def _materialize(corpus) -> list[tuple[str, GridFunction]]:
    if isinstance(corpus, CorpusSpec):
        return build_corpus(corpus)
    return list(corpus)


def _describe(corpus) -> str:
    if isinstance(corpus, CorpusSpec):
        return corpus.describe()
    names = [name for name, _ in corpus]
    if len(names) <= 6:
        return f"{len(names)} instances: {', '.join(names)}"
    return f"{len(names)} instances: {', '.join(names[:5])}, ..."


def generate_weight(style: str, dimension: int, depth: int, seed: int = 0) -> Weight:
    """A strictly positive weight; ``uniform`` is 1, the others are seeded draws."""
    count = (1 << depth) ** dimension
    rng = np.random.default_rng(seed)
    if style == "uniform":
        vals = np.ones(count)
    elif style == "random":
        vals = rng.uniform(0.25, 4.0, size=count)
    elif style == "peaked":
        vals = 0.05 + rng.pareto(1.2, size=count)
    else:
        raise ValueError(f"unknown weight style {style!r}; known: {WEIGHT_STYLES}")
    return Weight(GridFunction(dimension, depth, vals))


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CheckReport:
    """Outcome of one check over one corpus.

    ``instances`` rows always carry ``id``, ``lhs``, ``rhs``, ``ratio`` plus
    check-specific columns.  ``violations`` are hard failures; ``flagged``
    entries are recorded anomalies that do not fail the check on their own.
    """

    check: str
    corpus: str
    params: dict
    instances: tuple[dict, ...]
    max_ratio: float
    violations: tuple[str, ...]
    flagged: tuple[str, ...] = ()
    constants: dict = field(default_factory=dict)
    runtime: float | None = None

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self, deterministic: bool = False) -> dict:
        doc = {
            "check": self.check,
            "corpus": self.corpus,
            "params": _jsonable(self.params),
            "instances": [_jsonable(row) for row in self.instances],
            "max_ratio": _jsonable(self.max_ratio),
            "violations": list(self.violations),
            "flagged": list(self.flagged),
            "constants": _jsonable(self.constants),
        }
        if not deterministic and self.runtime is not None:
            doc["runtime"] = round(self.runtime, 6)
        return doc

    def to_json(self, deterministic: bool = False) -> str:
        return json.dumps(self.to_dict(deterministic), sort_keys=True, indent=2) + "\n"

    def to_csv(self) -> str:
        columns: list[str] = []
        for row in self.instances:
            for key in row:
                if key not in columns:
                    columns.append(key)
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=columns, restval="", lineterminator="\n")
        writer.writeheader()
        for row in self.instances:
            writer.writerow({k: _csv_value(v) for k, v in row.items()})
        return buf.getvalue()


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, CubeClass):
        return value.value
    if isinstance(value, (np.floating, np.integer)):
        value = value.item()
    if isinstance(value, float):
        if math.isinf(value):
            return "inf"
        return value
    return value


def _csv_value(value):
    if isinstance(value, float):
        return "inf" if math.isinf(value) else repr(value)
    return value


def _finish(
    check: str,
    corpus,
    params: dict,
    rows: list[dict],
    violations: list[str],
    flagged: list[str],
    constants: dict,
    started: float,
) -> CheckReport:
    max_ratio = 0.0
    for row in rows:
        r = row.get("ratio", 0.0)
        if r > max_ratio:
            max_ratio = r
    constants = dict(constants)
    constants.setdefault("max_ratio", max_ratio)
    return CheckReport(
        check=check,
        corpus=_describe(corpus),
        params=params,
        instances=tuple(rows),
        max_ratio=max_ratio,
        violations=tuple(violations),
        flagged=tuple(flagged),
        constants=constants,
        runtime=time.perf_counter() - started,
    )


def _pow(values: np.ndarray, exponent: float) -> np.ndarray:
    """Power with the 0^0 = 1 convention used by the weighted estimate."""
    if exponent == 0.0:
        return np.ones_like(values)
    if exponent == 1.0:
        return values
    return values**exponent


# ---------------------------------------------------------------------------
# Weighted oscillation estimate
# ---------------------------------------------------------------------------


def check_weighted(
    corpus,
    s: float,
    t: float,
    delta: float,
    cube_class: CubeClass = CubeClass.ALIGNED,
) -> CheckReport:
    """Weighted comparison of total oscillation against the sharp-function pairing.

    Left side: the w-weighted integral of ``|f - median(f, t, root)|``.  Right
    side: the integral of ``(M# f)^delta * M((M# f)^(1-delta) w)`` with the
    averaging maximal operator over aligned cubes.  Alongside the headline
    ratio, the proof's discrete sub-steps are asserted per stopped cube: the
    retained set keeps at least a ``1 - s/(1-t)`` share, retained sets are
    disjoint, cube averages never exceed the maximal function, and powers
    preserve cube infima.  Instances whose pointwise envelope fails are
    flagged and excluded from the assembled-constant assertion.
    """
    started = time.perf_counter()
    params = OscParams(s=s, t=t, delta=delta)
    params.require_decomposition()
    instances = _materialize(corpus)
    ratio_st = s / (1.0 - t)
    retain_share = 1.0 - ratio_st
    rows: list[dict] = []
    violations: list[str] = []
    flagged: list[str] = []

    def worker(item):
        idx, (name, f) = item
        local_viol: list[str] = []
        local_flag: list[str] = []
        dim = f.dimension
        root = root_cube(dim)
        cache = SharpMaxCache(f)
        style = WEIGHT_STYLES[idx % len(WEIGHT_STYLES)]
        w = generate_weight(style, dim, f.depth, seed=9000 + idx)
        w_vals = w.values
        dx = f.cell_measure
        m0 = median(f, t, root)
        sharp = cache.map(root, s, cube_class).ravel()

        lhs = float(np.sum(np.abs(f.values - m0) * w_vals) * dx)
        g_pow = _pow(sharp, 1.0 - delta) * w_vals
        mg = hl_map(f.with_values(g_pow), root, CubeClass.ALIGNED).ravel()
        rhs = float(np.sum(_pow(sharp, delta) * mg) * dx)
        ratio = _ratio(lhs, rhs)

        # The maximal function sees the one-cell cube, so it dominates its
        # input; prefix-sum rounding in the map needs a conditioning-aware
        # slack proportional to the summed magnitude.
        slack_hl = 64.0 * np.finfo(np.float64).eps * g_pow.size * max(1.0, float(np.max(g_pow)))
        if not np.all(mg >= g_pow - slack_hl):
            local_viol.append(f"{name}: averaging maximal map fails to dominate its input")
        lead = float(np.sum(sharp * w_vals) * dx)
        if lead > rhs * (1.0 + _REL_TOL) + _REL_TOL:
            local_viol.append(f"{name}: lead term exceeds the right side")

        tree = decompose_v1(f, root, params, cube_class, cache=cache)
        fam = sparse_sets(tree, f, include_root=False)
        for msg in fam.failures:
            local_viol.append(f"{name}: {msg}")
        retained = {(gen, key): cells for gen, key, cells in fam.members}

        pw = verify_pointwise(tree, f, cube_class, cache=cache)
        envelope_ok = pw.ok
        if not envelope_ok:
            local_flag.append(
                f"{name}: pointwise envelope fails at {len(pw.violations)} cells; "
                "assembled bound skipped"
            )

        n_factor = 10.0 * dim + 2.0
        charge_total = 0.0
        chain_rhs_total = 0.0
        for sc in tree.all_cubes():
            q = sc.cube
            cells = cells_of(q, f.depth)
            w_q = float(np.sum(w_vals[cells]) * dx)
            t1 = cache.inf_over(q, parent(q), s, cube_class)
            t2 = cache.inf_over(q, q, s, cube_class)
            inf_root = float(np.min(sharp[cells]))
            slack = _REL_TOL * max(1.0, inf_root)
            if t1 > inf_root + slack or t2 > inf_root + slack:
                local_viol.append(
                    f"{name}: relative sharp infimum exceeds the root-relative one on {q.key()}"
                )
            f_cells = retained.get((sc.generation, q.key()))
            if f_cells is None or f_cells.size == 0:
                local_viol.append(f"{name}: empty retained set on {q.key()}")
                continue
            sum_f = float(np.sum(_pow(sharp[f_cells], delta) * mg[f_cells]) * dx)
            floor = retain_share * inf_root * w_q
            if sum_f < floor * (1.0 - _REL_TOL) - _REL_TOL:
                local_viol.append(
                    f"{name}: retained-set chain fails on {q.key()}: "
                    f"{sum_f:.6g} < {floor:.6g}"
                )
            charge_total += (10.0 * dim * t1 + 2.0 * t2) * w_q
            chain_rhs_total += sum_f
        if charge_total > n_factor / retain_share * chain_rhs_total * (1.0 + _REL_TOL) + _REL_TOL:
            local_viol.append(f"{name}: summed cube charges exceed the disjointified chain")

        certified = 4.0 + n_factor / retain_share
        if envelope_ok and ratio > certified * (1.0 + _REL_TOL):
            local_viol.append(
                f"{name}: ratio {ratio:.6g} exceeds the certified bound {certified:.6g}"
            )
        if math.isinf(ratio):
            local_viol.append(f"{name}: positive left side against zero right side")

        row = {
            "id": name,
            "lhs": lhs,
            "rhs": rhs,
            "ratio": ratio,
            "weight": style,
            "delta": delta,
            "cubes": tree.cube_count(),
            "certified_bound": certified,
            "envelope_ok": envelope_ok,
        }
        return row, local_viol, local_flag

    results = _run_instances(worker, list(enumerate(instances)))
    for row, local_viol, local_flag in results:
        rows.append(row)
        violations.extend(local_viol)
        flagged.extend(local_flag)
    certified_max = max((r["certified_bound"] for r in rows), default=0.0)
    return _finish(
        "weighted",
        corpus,
        {"s": s, "t": t, "delta": delta, "cube_class": cube_class},
        rows,
        violations,
        flagged,
        {"certified_bound": certified_max},
        started,
    )


# ---------------------------------------------------------------------------
# Singular-operator sharp-function bounds
# ---------------------------------------------------------------------------


def check_cz_sharp(corpus, s: float) -> CheckReport:
    """Sharp function of the Hilbert transform against the averaging maximal map.

    At every cell the local sharp maximal function of ``Hf`` is compared with
    the sup over covering cubes of the inf of ``Mf`` on the cube, and with
    the plain ``Mf`` value.  A cell with a positive left side and zero right
    side is a hard failure; otherwise the maxima are recorded.  Instances
    that are not one-dimensional are skipped and counted.
    """
    started = time.perf_counter()
    instances = _materialize(corpus)
    rows: list[dict] = []
    violations: list[str] = []
    flagged: list[str] = []
    skipped = 0

    one_d = [(name, f) for name, f in instances if f.dimension == 1]
    skipped = len(instances) - len(one_d)

    def worker(item):
        name, f = item
        local_viol: list[str] = []
        root = root_cube(1)
        tf = hilbert_transform(f)
        lhs_map = sharp_map(tf, root, s, CubeClass.ALIGNED).ravel()
        mf = hl_map(f, root, CubeClass.ALIGNED).ravel()
        supinf = sup_inf_map(mf, CubeClass.ALIGNED).ravel()
        bad = (lhs_map > 0) & (supinf <= 0)
        if np.any(bad):
            local_viol.append(
                f"{name}: {int(np.count_nonzero(bad))} cells with positive sharp value "
                "over a vanishing maximal function"
            )
        with np.errstate(divide="ignore", invalid="ignore"):
            local = np.where(lhs_map > 0, lhs_map / np.maximum(supinf, 1e-300), 0.0)
            plain = np.where(lhs_map > 0, lhs_map / np.maximum(mf, 1e-300), 0.0)
        worst = int(np.argmax(local))
        row = {
            "id": name,
            "lhs": float(lhs_map[worst]),
            "rhs": float(supinf[worst]),
            "ratio": float(np.max(local)) if local.size else 0.0,
            "plain_ratio": float(np.max(plain)) if plain.size else 0.0,
        }
        return row, local_viol

    for row, local_viol in _run_instances(worker, one_d):
        rows.append(row)
        violations.extend(local_viol)
    if skipped:
        flagged.append(f"{skipped} non-1d instances skipped (operator is one-dimensional)")
    plain_max = max((r["plain_ratio"] for r in rows), default=0.0)
    return _finish(
        "cz-sharp",
        corpus,
        {"s": s, "operator": "hilbert"},
        rows,
        violations,
        flagged,
        {"plain_max_ratio": plain_max, "skipped": skipped},
        started,
    )


def _build_shift(kind: str, tau: int, c: float, seed: int, depth: int):
    if kind == "martingale":
        return martingale_transform(depth, c)
    if kind == "random":
        return random_haar_shift(tau, c, seed, depth)
    raise ValueError(f"unknown shift kind {kind!r}; known: martingale, random")


def check_cz_sharp_shift(
    corpus,
    s: float,
    tau: int = 0,
    c: float = 1.0,
    shift_kind: str = "martingale",
    shift_seed: int = 0,
) -> CheckReport:
    """Sharp function of a Haar shift against the mean-oscillation sharp map.

    Haar shifts annihilate constants, which upgrades the right side from the
    averaging maximal function to the mean-oscillation sharp maximal
    function.  Compared cellwise through the sup-inf composition, with the
    plain cellwise ratio recorded as well.
    """
    started = time.perf_counter()
    instances = [(n, f) for n, f in _materialize(corpus) if f.dimension == 1]
    rows: list[dict] = []
    violations: list[str] = []

    def worker(item):
        idx, (name, f) = item
        local_viol: list[str] = []
        root = root_cube(1)
        shift = _build_shift(shift_kind, tau, c, shift_seed + idx, f.depth)
        hf = apply_haar_shift(shift, f)
        lhs_map = sharp_map(hf, root, s, CubeClass.ALIGNED).ravel()
        msf = mean_sharp_map(f, root, CubeClass.ALIGNED).ravel()
        supinf = sup_inf_map(msf, CubeClass.ALIGNED).ravel()
        bad = (lhs_map > 0) & (supinf <= 0)
        if np.any(bad):
            local_viol.append(
                f"{name}: {int(np.count_nonzero(bad))} cells with positive sharp value "
                "over vanishing mean oscillation"
            )
        with np.errstate(divide="ignore", invalid="ignore"):
            local = np.where(lhs_map > 0, lhs_map / np.maximum(supinf, 1e-300), 0.0)
            plain = np.where(lhs_map > 0, lhs_map / np.maximum(msf, 1e-300), 0.0)
        worst = int(np.argmax(local)) if local.size else 0
        row = {
            "id": name,
            "lhs": float(lhs_map[worst]) if local.size else 0.0,
            "rhs": float(supinf[worst]) if local.size else 0.0,
            "ratio": float(np.max(local)) if local.size else 0.0,
            "plain_ratio": float(np.max(plain)) if plain.size else 0.0,
        }
        return row, local_viol

    for row, local_viol in _run_instances(worker, list(enumerate(instances))):
        rows.append(row)
        violations.extend(local_viol)
    plain_max = max((r["plain_ratio"] for r in rows), default=0.0)
    return _finish(
        "cz-sharp-shift",
        corpus,
        {"s": s, "tau": tau, "c": c, "shift_kind": shift_kind, "shift_seed": shift_seed},
        rows,
        violations,
        [],
        {"plain_max_ratio": plain_max},
        started,
    )


# ---------------------------------------------------------------------------
# Haar-shift local bounds
# ---------------------------------------------------------------------------


def check_shift_local(
    corpus,
    s: float,
    taus: tuple[int, ...] = (0, 1, 2),
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4),
    c: float = 2.0,
) -> CheckReport:
    """Local control of a Haar shift by plain averages of the input.

    For every dyadic cube deep enough to have a ``tau``-fold ancestor, the
    best-centered level-``s`` median of ``|Hf - const|`` on the cube is
    compared with the average of ``|f|`` over that ancestor; cubes above the
    ancestor horizon are skipped and counted.  A dyadic-class cellwise
    comparison of the sharp map of ``Hf`` against the dyadic averaging map of
    ``f`` rides along.  One row per (instance, tau, seed).
    """
    started = time.perf_counter()
    instances = [(n, f) for n, f in _materialize(corpus) if f.dimension == 1]
    rows: list[dict] = []
    violations: list[str] = []
    per_tau_51: dict[int, float] = {tau: 0.0 for tau in taus}
    per_tau_52: dict[int, float] = {tau: 0.0 for tau in taus}

    jobs = [
        (name, f, tau, seed)
        for name, f in instances
        for tau in taus
        for seed in seeds
    ]

    def worker(job):
        name, f, tau, seed = job
        local_viol: list[str] = []
        depth = f.depth
        root = root_cube(1)
        shift = random_haar_shift(tau, c, seed, depth)
        hf = apply_haar_shift(shift, f)
        abs_f = np.abs(f.values)
        max51 = 0.0
        worst = (0.0, 0.0)
        skipped = sum(1 << level for level in range(min(tau, depth + 1)))
        for level in range(tau, depth + 1):
            for pos in range(1 << level):
                q = DyadicCube(level, (pos,))
                lhs = best_constant_at_median_level(hf, q, s)[1]
                anc = ancestor(q, tau)
                rhs = float(np.mean(abs_f[cells_of(anc, depth)]))
                r = _ratio(lhs, rhs)
                if math.isinf(r):
                    local_viol.append(
                        f"{name}-tau{tau}-seed{seed}: positive shift oscillation on "
                        f"{q.key()} over a vanishing ancestor average"
                    )
                elif r > max51:
                    max51 = r
                    worst = (lhs, rhs)
        lhs52 = sharp_map(hf, root, s, CubeClass.DYADIC).ravel()
        rhs52 = hl_map(f, root, CubeClass.DYADIC).ravel()
        bad = (lhs52 > 0) & (rhs52 <= 0)
        if np.any(bad):
            local_viol.append(
                f"{name}-tau{tau}-seed{seed}: positive dyadic sharp value over a "
                "vanishing dyadic average"
            )
        with np.errstate(divide="ignore", invalid="ignore"):
            r52 = np.where(lhs52 > 0, lhs52 / np.maximum(rhs52, 1e-300), 0.0)
        max52 = float(np.max(r52)) if r52.size else 0.0
        row = {
            "id": f"{name}-tau{tau}-seed{seed}",
            "lhs": worst[0],
            "rhs": worst[1],
            "ratio": max51,
            "ratio_dyadic_map": max52,
            "tau": tau,
            "seed": seed,
            "skipped_cubes": skipped,
        }
        return row, local_viol, tau, max51, max52

    for row, local_viol, tau, max51, max52 in _run_instances(worker, jobs):
        rows.append(row)
        violations.extend(local_viol)
        per_tau_51[tau] = max(per_tau_51[tau], max51)
        per_tau_52[tau] = max(per_tau_52[tau], max52)
    constants = {}
    for tau in taus:
        constants[f"max_ratio_tau{tau}"] = per_tau_51[tau]
        constants[f"max_map_ratio_tau{tau}"] = per_tau_52[tau]
    return _finish(
        "shift-local",
        corpus,
        {"s": s, "taus": taus, "seeds": seeds, "c": c},
        rows,
        violations,
        [],
        constants,
        started,
    )


def check_shift_domination(
    corpus,
    s: float,
    t: float,
    tau: int = 0,
    c: float = 1.0,
    shift_kind: str = "random",
    shift_seed: int = 0,
) -> CheckReport:
    """Domination of a Haar shift by averages over stopped-cube ancestors.

    Builds the quantile-threshold decomposition of ``Hf``, then checks
    cellwise that ``|Hf - median(Hf, t, root)|`` is controlled by the dyadic
    averaging map of ``f`` plus, on each selected cube, the average of
    ``|f|`` over the ``tau``-fold ancestor of the cube's parent (clamped at
    the root).  The observed constant is recorded, not asserted.
    """
    started = time.perf_counter()
    params = OscParams(s=s, t=t)
    params.require_decomposition()
    instances = [(n, f) for n, f in _materialize(corpus) if f.dimension == 1]
    rows: list[dict] = []
    violations: list[str] = []

    def worker(item):
        idx, (name, f) = item
        local_viol: list[str] = []
        root = root_cube(1)
        shift = _build_shift(shift_kind, tau, c, shift_seed + idx, f.depth)
        hf = apply_haar_shift(shift, f)
        tree = decompose_v2(hf, root, params)
        lhs_cells = np.abs(hf.values - tree.root_median)
        base = hl_map(f, root, CubeClass.DYADIC).ravel()
        extra = np.zeros_like(base)
        abs_f = np.abs(f.values)
        for sc in tree.all_cubes():
            anc = ancestor_or_root(parent(sc.cube), tau)
            avg = float(np.mean(abs_f[cells_of(anc, f.depth)]))
            extra[cells_of(sc.cube, f.depth)] += avg
        denom = base + extra
        bad = (lhs_cells > _REL_TOL) & (denom <= 0)
        if np.any(bad):
            local_viol.append(
                f"{name}: {int(np.count_nonzero(bad))} cells with positive oscillation "
                "over a vanishing dominating sum"
            )
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(lhs_cells > 0, lhs_cells / np.maximum(denom, 1e-300), 0.0)
        worst = int(np.argmax(r)) if r.size else 0
        row = {
            "id": name,
            "lhs": float(lhs_cells[worst]),
            "rhs": float(denom[worst]),
            "ratio": float(np.max(r)) if r.size else 0.0,
            "cubes": tree.cube_count(),
            "tau": tau,
        }
        return row, local_viol

    for row, local_viol in _run_instances(worker, list(enumerate(instances))):
        rows.append(row)
        violations.extend(local_viol)
    return _finish(
        "shift-domination",
        corpus,
        {"s": s, "t": t, "tau": tau, "c": c, "shift_kind": shift_kind, "shift_seed": shift_seed},
        rows,
        violations,
        [],
        {},
        started,
    )


# ---------------------------------------------------------------------------
# Decomposition verification
# ---------------------------------------------------------------------------


def check_decomposition(
    corpus,
    s: float,
    t: float,
    variant: str = "v1",
    cube_class: CubeClass = CubeClass.ALIGNED,
) -> CheckReport:
    """Pointwise envelope plus structural and packing audits of one variant.

    Pointwise and structural failures are hard violations for both variants.
    The packing and retained-share counts are additionally hard for the
    sharp-threshold variant; for the quantile variant they are recorded as
    flags because nothing guarantees packing for that threshold choice.
    """
    started = time.perf_counter()
    if variant not in ("v1", "v2"):
        raise ValueError(f"variant must be v1 or v2, got {variant!r}")
    params = OscParams(s=s, t=t)
    params.require_decomposition()
    instances = _materialize(corpus)
    rows: list[dict] = []
    violations: list[str] = []
    flagged: list[str] = []

    def worker(item):
        name, f = item
        local_viol: list[str] = []
        local_flag: list[str] = []
        root = root_cube(f.dimension)
        cache = SharpMaxCache(f)
        if variant == "v1":
            tree = decompose_v1(f, root, params, cube_class, cache=cache)
        else:
            tree = decompose_v2(f, root, params)
        pw = verify_pointwise(tree, f, cube_class, cache=cache)
        for cell in pw.violations:
            chain = pw.chains.get(cell, ())
            local_viol.append(
                f"{name}: cell {cell} lhs {pw.lhs[cell]:.6g} > rhs {pw.rhs[cell]:.6g}; "
                f"cube chain: {list(chain)}"
            )
        sp = verify_sparsity(tree, f)
        for msg in sp.structural_failures:
            local_viol.append(f"{name}: {msg}")
        fam = sparse_sets(tree, f)
        packing_msgs = list(sp.packing_failures) + list(fam.failures)
        if variant == "v1":
            for msg in packing_msgs:
                local_viol.append(f"{name}: {msg}")
        else:
            for msg in packing_msgs:
                local_flag.append(f"{name}: {msg}")
        row = {
            "id": name,
            "lhs": float(np.max(pw.lhs)) if pw.lhs.size else 0.0,
            "rhs": float(np.max(pw.rhs)) if pw.rhs.size else 0.0,
            "ratio": pw.max_ratio,
            "cubes": tree.cube_count(),
            "generations": len(tree.generations),
            "pointwise_ok": pw.ok,
        }
        return row, local_viol, local_flag

    for row, local_viol, local_flag in _run_instances(worker, instances):
        rows.append(row)
        violations.extend(local_viol)
        flagged.extend(local_flag)
    return _finish(
        "decomposition",
        corpus,
        {"s": s, "t": t, "variant": variant, "cube_class": cube_class},
        rows,
        violations,
        flagged,
        {},
        started,
    )


# ---------------------------------------------------------------------------
# Property suite
# ---------------------------------------------------------------------------


def _all_dyadic_cubes(dimension: int, depth: int) -> list[DyadicCube]:
    out = []
    for level in range(depth + 1):
        per = 1 << level
        if dimension == 1:
            out.extend(DyadicCube(level, (i,)) for i in range(per))
        else:
            out.extend(
                DyadicCube(level, (i, j)) for i in range(per) for j in range(per)
            )
    return out


def _recentred_quantile(f: GridFunction, cube: DyadicCube, inner: float, outer: float) -> float:
    """Level-``outer`` median of ``|f - median(f, inner, cube)|`` on the cube."""
    region = np.asarray(f.region(cube), dtype=np.float64).ravel()
    center = median_of_values(region, inner)
    return median_of_values(np.abs(region - center), outer)


def _doubled_values(f: GridFunction, cube: DyadicCube) -> np.ndarray:
    """Values on the concentric double of the cube, zero outside the grid."""
    depth = f.depth
    per = f.cells_per_axis
    side = cube.side_cells(depth)
    grid = f.as_grid()
    starts = [i * side - side // 2 for i in cube.index]
    if f.dimension == 1:
        out = np.zeros(2 * side)
        lo = max(starts[0], 0)
        hi = min(starts[0] + 2 * side, per)
        if hi > lo:
            out[lo - starts[0] : hi - starts[0]] = grid[lo:hi]
        return out
    out = np.zeros((2 * side, 2 * side))
    lo0, hi0 = max(starts[0], 0), min(starts[0] + 2 * side, per)
    lo1, hi1 = max(starts[1], 0), min(starts[1] + 2 * side, per)
    if hi0 > lo0 and hi1 > lo1:
        out[lo0 - starts[0] : hi0 - starts[0], lo1 - starts[1] : hi1 - starts[1]] = grid[
            lo0:hi0, lo1:hi1
        ]
    return out.ravel()


def property_suite(corpus, s: float, t: float) -> CheckReport:
    """Exhaustive per-cube checks of the small inequalities the estimates lean on.

    Exact items (violations when breached): the exceedance count at twice the
    sharp-map infimum stays within an ``s`` fraction; the absolute value of a
    median is dominated by the median of the absolute value; child medians
    never exceed the parent's raised-level median; the recentred quantile is
    at most four sharp-map infima; recentring loses at most a factor two
    against the best center; exceedance cells are covered by the first
    generation; dyadic-class maps never exceed aligned-class maps; medians
    transform exactly under increasing affine maps.  Recorded items (flagged
    when infinite): the parent-median jump against the relative sharp
    infimum, the mean oscillation against the mean-sharp infimum, and the
    jump to the zero-extended concentric double.
    """
    started = time.perf_counter()
    params = OscParams(s=s, t=t)
    params.require_decomposition()
    instances = _materialize(corpus)
    rows: list[dict] = []
    violations: list[str] = []
    flagged: list[str] = []
    jump_max = 0.0
    jump_flagged = 0
    mean_osc_max = 0.0
    double_jump_max = 0.0

    def worker(item):
        name, f = item
        local_viol: list[str] = []
        local_flag: list[str] = []
        local_rows: list[dict] = []
        dim = f.dimension
        depth = f.depth
        root = root_cube(dim)
        cache = SharpMaxCache(f)
        sharp_al = cache.map(root, s, CubeClass.ALIGNED)
        sharp_dy = cache.map(root, s, CubeClass.DYADIC)
        mean_map = mean_sharp_map(f, root, CubeClass.ALIGNED).ravel()
        cubes = _all_dyadic_cubes(dim, depth)
        m_root = median(f, t, root)
        raised = params.parent_level(dim)

        def add_row(prop: str, lhs: float, rhs: float, ratio: float) -> None:
            local_rows.append(
                {"id": f"{name}:{prop}", "lhs": lhs, "rhs": rhs, "ratio": ratio}
            )

        # Exceedance count at twice the sharp infimum.
        thr = 2.0 * float(np.min(sharp_al))
        count = int(np.count_nonzero(np.abs(f.values - m_root) > thr * (1.0 + _REL_TOL)))
        allowed = s * f.cell_count
        add_row("exceedance-fraction", float(count), allowed, _ratio(count, allowed) if count else 0.0)
        if count > allowed + _REL_TOL:
            local_viol.append(f"{name}: exceedance-fraction: {count} cells > {allowed:.6g}")

        # Absolute-value and parent-median order statistics are exact.
        abs_f = f.with_values(np.abs(f.values))
        worst_abs = 0.0
        worst_parent = 0.0
        for q in cubes:
            m_q = median(f, t, q)
            m_abs = median(abs_f, t, q)
            if abs(m_q) > m_abs:
                local_viol.append(f"{name}: abs-median: cube {q.key()}")
            worst_abs = max(worst_abs, _ratio(abs(m_q), m_abs))
            if q.level > 0:
                m_par = median(f, raised, parent(q))
                if m_q > m_par:
                    local_viol.append(f"{name}: parent-median: cube {q.key()}")
                worst_parent = max(worst_parent, _ratio(m_q, m_par) if m_q > 0 else 0.0)
        add_row("abs-median", worst_abs, 1.0, worst_abs)
        add_row("parent-median", worst_parent, 1.0, worst_parent)

        # Recentred quantile against the sharp infimum, factor four; the
        # best-center comparison, factor two.
        worst_q = 0.0
        worst_two = 0.0
        for q in cubes:
            quant = _recentred_quantile(f, q, t, t)
            inf_rel = cache.inf_over(q, q, s, CubeClass.ALIGNED)
            if quant > 4.0 * inf_rel * (1.0 + _REL_TOL) + _REL_TOL:
                local_viol.append(
                    f"{name}: quantile-vs-sharp: cube {q.key()}: {quant:.6g} > 4*{inf_rel:.6g}"
                )
            if quant > _REL_TOL:
                worst_q = max(worst_q, _ratio(quant, inf_rel))
            recentred = _recentred_quantile(f, q, t, raised)
            best = best_constant_at_median_level(f, q, raised)[1]
            if recentred > 2.0 * best * (1.0 + _REL_TOL) + _REL_TOL:
                local_viol.append(f"{name}: recentre-two-approx: cube {q.key()}")
            if recentred > _REL_TOL:
                worst_two = max(worst_two, _ratio(recentred, best))
        add_row("quantile-vs-sharp", worst_q, 4.0, _ratio(worst_q, 4.0))
        add_row("recentre-two-approx", worst_two, 2.0, _ratio(worst_two, 2.0))

        # Exceedance cells are covered by the first selected generation.
        for builder, label in ((decompose_v1, "v1"), (decompose_v2, "v2")):
            if builder is decompose_v1:
                tree = decompose_v1(f, root, params, CubeClass.ALIGNED, cache=cache)
            else:
                tree = decompose_v2(f, root, params)
            if tree.generations:
                thr0 = tree.generations[0].cubes[0].threshold
                exceed = np.abs(f.values - tree.root_median) > thr0
                covered = np.zeros(f.cell_count, dtype=bool)
                for sc in tree.generations[0].cubes:
                    covered[cells_of(sc.cube, depth)] = True
                if np.any(exceed & ~covered):
                    local_viol.append(f"{name}: exceed-containment ({label})")
        add_row("exceed-containment", 0.0, 0.0, 0.0)

        # Dyadic cubes are a subfamily, so the dyadic map cannot exceed the
        # aligned map anywhere.
        if np.any(sharp_dy > sharp_al):
            local_viol.append(f"{name}: class-monotone")
        add_row("class-monotone", float(np.max(sharp_dy)), float(np.max(sharp_al)), 0.0)

        # Increasing affine maps move medians exactly.
        a, b = 3.5, -1.25
        g = f.with_values(a * f.values + b)
        for q in (root, cubes[len(cubes) // 2], cubes[-1]):
            if median(g, t, q) != a * median(f, t, q) + b:
                local_viol.append(f"{name}: median-affine: cube {q.key()}")
        add_row("median-affine", 0.0, 0.0, 0.0)

        # Parent-median jump against the relative sharp infimum: recorded,
        # flagged when the denominator vanishes under a positive jump.
        tree = decompose_v1(f, root, params, CubeClass.ALIGNED, cache=cache)
        jmax = 0.0
        jflag = 0
        for sc in tree.all_cubes():
            q = sc.cube
            jump = abs(median(f, t, q) - median(f, t, parent(q)))
            denom = cache.inf_over(q, parent(q), s, CubeClass.ALIGNED)
            r = _ratio(jump, denom)
            if math.isinf(r):
                jflag += 1
            else:
                jmax = max(jmax, r)
        if jflag:
            local_flag.append(
                f"{name}: parent-jump: {jflag} stopped cubes with a positive jump over "
                "a vanishing relative sharp infimum"
            )
        if jmax > 10.0 * dim * (1.0 + _REL_TOL):
            local_flag.append(
                f"{name}: parent-jump: observed constant {jmax:.6g} above the reference "
                f"{10.0 * dim:g}; flagged for investigation"
            )
        add_row("parent-jump", jmax, 10.0 * dim, _ratio(jmax, 10.0 * dim))

        # Mean oscillation against the mean-sharp infimum: recorded.
        momax = 0.0
        for q in cubes:
            cells = cells_of(q, depth)
            region = f.values[cells]
            lhs = float(np.mean(np.abs(region - median_of_values(region, t))))
            denom = float(np.min(mean_map[cells]))
            r = _ratio(lhs, denom)
            if math.isinf(r):
                local_flag.append(f"{name}: mean-osc: cube {q.key()} positive over zero")
            else:
                momax = max(momax, r)
        add_row("mean-osc", momax, 1.0 + 1.0 / s, _ratio(momax, 1.0 + 1.0 / s))

        # Jump to the zero-extended concentric double: asserted at the
        # discrete constant 2^n/(1-t), observed value recorded.
        djmax = 0.0
        bound = (1 << dim) / (1.0 - t)
        for q in cubes:
            doubled = _doubled_values(f, q)
            c2 = median_of_values(doubled, t)
            jump = abs(median(f, t, q) - c2)
            avg = float(np.mean(np.abs(doubled - c2)))
            r = _ratio(jump, avg)
            if jump > bound * avg * (1.0 + _REL_TOL) + _REL_TOL:
                local_viol.append(f"{name}: double-jump: cube {q.key()}")
            if math.isfinite(r):
                djmax = max(djmax, r)
        add_row("double-jump", djmax, bound, _ratio(djmax, bound))

        return local_rows, local_viol, local_flag, jmax, jflag, momax, djmax

    for local_rows, local_viol, local_flag, jmax, jflag, momax, djmax in _run_instances(
        worker, instances
    ):
        rows.extend(local_rows)
        violations.extend(local_viol)
        flagged.extend(local_flag)
        jump_max = max(jump_max, jmax)
        jump_flagged += jflag
        mean_osc_max = max(mean_osc_max, momax)
        double_jump_max = max(double_jump_max, djmax)
    constants = {
        "jump_max": jump_max,
        "jump_reference": 10.0,
        "jump_flagged": jump_flagged,
        "mean_osc_max": mean_osc_max,
        "mean_osc_reference": 1.0 + 1.0 / s,
        "double_jump_max": double_jump_max,
    }
    return _finish(
        "props",
        corpus,
        {"s": s, "t": t},
        rows,
        violations,
        flagged,
        constants,
        started,
    )


# ---------------------------------------------------------------------------
# Refinement coherence
# ---------------------------------------------------------------------------


def _tree_signature(tree) -> tuple:
    gens = tuple(
        tuple(
            (sc.cube.level, sc.cube.index, sc.parent_pos, sc.alpha, sc.threshold)
            for sc in gen.cubes
        )
        for gen in tree.generations
    )
    return (tree.variant, tree.root_median, gens)


def check_refinement(corpus, s: float, t: float) -> CheckReport:
    """Cell duplication to the next depth must not move any dyadic quantity.

    Splitting every cell in half (in 2-d into four) leaves each dyadic cube's
    value multiset scaled but ordered identically, so medians, dyadic-class
    sharp maps, dyadic median maps, and both decomposition trees must come
    out exactly equal.  Any drift is a hard failure.
    """
    started = time.perf_counter()
    params = OscParams(s=s, t=t)
    params.require_decomposition()
    instances = _materialize(corpus)
    rows: list[dict] = []
    violations: list[str] = []

    def worker(item):
        name, f = item
        local_viol: list[str] = []
        root = root_cube(f.dimension)
        fl = lift(f)
        mismatches = 0

        for q in _all_dyadic_cubes(f.dimension, f.depth):
            if median(f, t, q) != median(fl, t, q):
                mismatches += 1
        if mismatches:
            local_viol.append(f"{name}: {mismatches} cube medians moved under refinement")

        coarse = sharp_map(f, root, s, CubeClass.DYADIC)
        fine = sharp_map(fl, root, s, CubeClass.DYADIC)
        if f.dimension == 1:
            expanded = np.repeat(coarse, 2)
        else:
            expanded = np.repeat(np.repeat(coarse, 2, axis=0), 2, axis=1)
        if not np.array_equal(expanded, fine):
            local_viol.append(f"{name}: dyadic sharp map moved under refinement")

        coarse_m = median_max_dyadic_map(f, t, root)
        fine_m = median_max_dyadic_map(fl, t, root)
        if f.dimension == 1:
            expanded_m = np.repeat(coarse_m, 2)
        else:
            expanded_m = np.repeat(np.repeat(coarse_m, 2, axis=0), 2, axis=1)
        if not np.array_equal(expanded_m, fine_m):
            local_viol.append(f"{name}: dyadic median map moved under refinement")

        t1 = decompose_v1(f, root, params, CubeClass.DYADIC)
        t1l = decompose_v1(fl, root, params, CubeClass.DYADIC)
        if _tree_signature(t1) != _tree_signature(t1l):
            local_viol.append(f"{name}: sharp-threshold tree moved under refinement")
        t2 = decompose_v2(f, root, params)
        t2l = decompose_v2(fl, root, params)
        if _tree_signature(t2) != _tree_signature(t2l):
            local_viol.append(f"{name}: quantile tree moved under refinement")

        row = {
            "id": name,
            "lhs": float(mismatches),
            "rhs": 0.0,
            "ratio": 0.0 if not local_viol else math.inf,
            "identical": not local_viol,
        }
        return row, local_viol

    for row, local_viol in _run_instances(worker, instances):
        rows.append(row)
        violations.extend(local_viol)
    return _finish(
        "refinement",
        corpus,
        {"s": s, "t": t},
        rows,
        violations,
        [],
        {},
        started,
    )


# ---------------------------------------------------------------------------
# Registry and sweeps
# ---------------------------------------------------------------------------

CHECKS = {
    "weighted": check_weighted,
    "cz-sharp": check_cz_sharp,
    "cz-sharp-shift": check_cz_sharp_shift,
    "shift-local": check_shift_local,
    "shift-domination": check_shift_domination,
    "decomposition": check_decomposition,
    "props": property_suite,
    "refinement": check_refinement,
}


def run_check(name: str, corpus, **kwargs) -> CheckReport:
    try:
        fn = CHECKS[name]
    except KeyError:
        raise UnknownCheck(
            f"unknown check {name!r}; known: {', '.join(sorted(CHECKS))}"
        ) from None
    return fn(corpus, **kwargs)


def constant_sweep(check: str, grid: dict, corpus) -> CheckReport:
    """Run one check across a parameter grid, one summary row per grid point.

    ``grid`` maps parameter names to value sequences; the cartesian product
    is traversed in order.  Violations and flags from the sub-reports are
    carried through with their grid point prepended.
    """
    started = time.perf_counter()
    if check not in CHECKS:
        raise UnknownCheck(f"unknown check {check!r}; known: {', '.join(sorted(CHECKS))}")
    keys = sorted(grid)
    rows: list[dict] = []
    violations: list[str] = []
    flagged: list[str] = []
    instances = _materialize(corpus)
    if not instances:
        return _finish(
            f"sweep-{check}",
            corpus,
            {"check": check, "grid": {k: list(v) for k, v in grid.items()}},
            rows,
            violations,
            flagged,
            {},
            started,
        )
    for values in itertools.product(*(grid[k] for k in keys)):
        point = dict(zip(keys, values))
        label = ",".join(f"{k}={v}" for k, v in point.items())
        sub = run_check(check, instances, **point)
        row = {"id": label or "(no-grid)"}
        row.update(point)
        row.update(
            {
                "max_ratio": sub.max_ratio,
                "ratio": sub.max_ratio,
                "violations": len(sub.violations),
                "flagged": len(sub.flagged),
            }
        )
        rows.append(row)
        violations.extend(f"[{label}] {msg}" for msg in sub.violations)
        flagged.extend(f"[{label}] {msg}" for msg in sub.flagged)
    return _finish(
        f"sweep-{check}",
        corpus,
        {"check": check, "grid": {k: list(v) for k, v in grid.items()}},
        rows,
        violations,
        flagged,
        {},
        started,
    )
