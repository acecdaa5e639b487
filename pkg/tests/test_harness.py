"""Corpus construction, inequality checks, sweeps, and report serialization."""

from __future__ import annotations

import csv
import io
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from medosc.grid import generate
from medosc.harness import (
    CorpusSpec,
    UnknownCheck,
    build_corpus,
    check_cz_sharp,
    check_cz_sharp_shift,
    check_decomposition,
    check_refinement,
    check_shift_domination,
    check_shift_local,
    check_weighted,
    constant_sweep,
    generate_weight,
    property_suite,
    run_check,
)

SMALL = CorpusSpec(dimensions=(1,), depths_1d=(5,), count=6, base_seed=0)
MIXED = CorpusSpec(dimensions=(1, 2), depths_1d=(5,), depths_2d=(3,), count=10, base_seed=0)


# ---------------------------------------------------------------------------
# corpus
# ---------------------------------------------------------------------------


def test_build_corpus_deterministic_and_named():
    a = build_corpus(MIXED)
    b = build_corpus(MIXED)
    assert [name for name, _ in a] == [name for name, _ in b]
    for (_, fa), (_, fb) in zip(a, b):
        np.testing.assert_array_equal(fa.values, fb.values)
    names = [name for name, _ in a]
    assert len(names) == len(set(names)) == 10
    for name, f in a:
        kind, dim_part, depth_part, seed_part = name.rsplit("-", 3)
        assert dim_part == f"{f.dimension}d"
        assert depth_part == f"L{f.depth}"
        assert seed_part.startswith("seed")


def test_corpus_spec_cycles_kinds_and_seeds():
    spec = CorpusSpec(kinds=("spike", "step"), dimensions=(1,), depths_1d=(4,), count=4)
    names = [name for name, _ in build_corpus(spec)]
    assert names == [
        "spike-1d-L4-seed0",
        "step-1d-L4-seed1",
        "spike-1d-L4-seed2",
        "step-1d-L4-seed3",
    ]


def test_generate_weight_styles():
    for style in ("uniform", "random", "peaked"):
        w = generate_weight(style, 1, 4, seed=3)
        assert np.all(w.values > 0)
        assert w.values.shape == (16,)
    assert np.all(generate_weight("uniform", 2, 3, seed=0).values == 1.0)
    with pytest.raises(ValueError):
        generate_weight("negative", 1, 4, seed=0)


# ---------------------------------------------------------------------------
# checks
# ---------------------------------------------------------------------------


def test_weighted_check_green_on_provable_slice():
    for delta in (0.5, 1.0):
        rep = check_weighted(MIXED, s=0.25, t=0.5, delta=delta)
        assert rep.ok
        assert rep.flagged == ()
        assert np.isfinite(rep.max_ratio)
        for row in rep.instances:
            assert row["ratio"] <= row["certified_bound"] + 1e-9
            assert row["envelope_ok"]


def test_weighted_check_flags_envelope_breach():
    corpus = [("spike-2d-L3-seed1", generate("spike", 2, 3, seed=1))]
    rep = check_weighted(corpus, s=0.3, t=0.65, delta=1.0)
    assert not rep.ok
    assert any("envelope" in msg for msg in rep.flagged)
    assert any("zero right side" in msg for msg in rep.violations)
    assert rep.instances[0]["ratio"] == float("inf")
    assert not rep.instances[0]["envelope_ok"]


def test_cz_sharp_green_and_skips_2d():
    rep = check_cz_sharp(MIXED, s=0.5)
    assert rep.ok
    assert rep.constants["skipped"] == 5
    assert len(rep.instances) == 5
    assert 0 < rep.max_ratio < 20
    assert rep.constants["plain_max_ratio"] >= rep.max_ratio


def test_cz_sharp_shift_martingale_stable():
    rep = check_cz_sharp_shift(SMALL, s=0.5, tau=0, c=1.0, shift_kind="martingale")
    assert rep.ok
    assert 0 < rep.max_ratio <= 1.0 + 1e-9


def test_shift_local_constants_per_tau():
    rep = check_shift_local(SMALL, s=0.5, taus=(0, 1), seeds=(0, 1), c=2.0)
    assert rep.ok
    for tau in (0, 1):
        assert f"max_ratio_tau{tau}" in rep.constants
        assert np.isfinite(rep.constants[f"max_ratio_tau{tau}"])
        assert f"max_map_ratio_tau{tau}" in rep.constants
    # cubes shallower than tau have no ancestor and are skipped per row
    tau1_rows = [r for r in rep.instances if r["tau"] == 1]
    assert tau1_rows and all(r["skipped_cubes"] == 1 for r in tau1_rows)
    tau0_rows = [r for r in rep.instances if r["tau"] == 0]
    assert all(r["skipped_cubes"] == 0 for r in tau0_rows)


def test_shift_domination_finite():
    rep = check_shift_domination(SMALL, s=0.25, t=0.5, tau=1, c=1.0,
                                 shift_kind="random", shift_seed=3)
    assert rep.ok
    assert np.isfinite(rep.max_ratio)
    assert rep.max_ratio > 0


def test_decomposition_check_v1_green_at_quarter_half():
    rep = check_decomposition(MIXED, s=0.25, t=0.5, variant="v1")
    assert rep.ok
    assert rep.max_ratio <= 1.0 + 1e-9


def test_decomposition_check_v1_dumps_chains_on_2d_failure():
    corpus = [("spike-2d-L3-seed1", generate("spike", 2, 3, seed=1))]
    rep = check_decomposition(corpus, s=0.3, t=0.65, variant="v1")
    assert not rep.ok
    assert any("chain" in v or "cells" in v for v in rep.violations)


def test_decomposition_check_v2_flags_packing_never_pointwise():
    rep = check_decomposition(MIXED, s=0.25, t=0.5, variant="v2")
    assert rep.ok  # pointwise and structural hold
    assert any("exceed" in msg for msg in rep.flagged)


def test_property_suite_green_and_constants():
    rep = property_suite(SMALL, s=0.25, t=0.5)
    assert rep.ok
    for key in ("jump_max", "mean_osc_max", "double_jump_max"):
        assert key in rep.constants
    assert rep.constants["double_jump_max"] <= 2 ** 1 / (1 - 0.5) + 1e-9


def test_property_suite_flags_infinite_jump_in_2d():
    corpus = [("spike-2d-L3-seed1", generate("spike", 2, 3, seed=1))]
    rep = property_suite(corpus, s=0.3, t=0.65)
    assert rep.ok  # recorded-only items never fail the check
    assert any("parent-jump" in msg for msg in rep.flagged)


def test_refinement_check_exact():
    rep = check_refinement(SMALL, s=0.25, t=0.5)
    assert rep.ok
    assert all(row["identical"] for row in rep.instances)
    assert rep.max_ratio == 0.0


# ---------------------------------------------------------------------------
# registry and sweeps
# ---------------------------------------------------------------------------


def test_run_check_dispatch_and_unknown():
    rep = run_check("props", SMALL, s=0.25, t=0.5)
    assert rep.check == "props"
    with pytest.raises(UnknownCheck):
        run_check("nonesuch", SMALL, s=0.25, t=0.5)


def test_sweep_matches_direct_single_point():
    direct = check_decomposition(SMALL, s=0.25, t=0.5, variant="v1")
    sweep = constant_sweep("decomposition", {"s": [0.25], "t": [0.5], "variant": ["v1"]}, SMALL)
    assert sweep.check == "sweep-decomposition"
    assert len(sweep.instances) == 1
    row = sweep.instances[0]
    assert row["max_ratio"] == direct.max_ratio
    assert row["violations"] == len(direct.violations)


def test_sweep_cartesian_product_and_labels():
    sweep = constant_sweep(
        "decomposition",
        {"s": [0.2, 0.25], "t": [0.5, 0.6], "variant": ["v1"]},
        SMALL,
    )
    assert len(sweep.instances) == 4
    labels = [row["id"] for row in sweep.instances]
    assert "s=0.2,t=0.5,variant=v1" in labels
    assert len(set(labels)) == 4


def test_sweep_empty_corpus_is_empty():
    empty = CorpusSpec(count=0)
    sweep = constant_sweep("props", {"s": [0.25], "t": [0.5]}, empty)
    assert sweep.instances == ()
    assert sweep.ok


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def test_report_json_shape_and_determinism():
    rep = property_suite(SMALL, s=0.25, t=0.5)
    doc = json.loads(rep.to_json(deterministic=True))
    assert set(doc) >= {"check", "corpus", "params", "instances", "max_ratio",
                        "violations", "flagged", "constants"}
    assert "runtime" not in doc
    again = property_suite(SMALL, s=0.25, t=0.5)
    assert rep.to_json(deterministic=True) == again.to_json(deterministic=True)
    timed = json.loads(rep.to_json(deterministic=False))
    assert "runtime" in timed


def test_report_csv_round_trips_rows():
    rep = check_decomposition(SMALL, s=0.25, t=0.5, variant="v1")
    text = rep.to_csv()
    rows = list(csv.DictReader(io.StringIO(text)))
    assert len(rows) == len(rep.instances)
    for parsed, row in zip(rows, rep.instances):
        assert parsed["id"] == row["id"]
        assert float(parsed["ratio"]) == row["ratio"]


def test_infinite_ratio_serializes_as_inf():
    corpus = [("spike-2d-L3-seed1", generate("spike", 2, 3, seed=1))]
    rep = check_weighted(corpus, s=0.3, t=0.65, delta=1.0)
    doc = json.loads(rep.to_json(deterministic=True))
    assert doc["max_ratio"] == "inf"
    text = rep.to_csv()
    assert "inf" in text


def test_thread_count_does_not_change_results():
    env = dict(os.environ)
    script = (
        "from medosc.harness import CorpusSpec, property_suite;"
        "spec = CorpusSpec(dimensions=(1,), depths_1d=(5,), count=6, base_seed=0);"
        "print(property_suite(spec, s=0.25, t=0.5).to_json(deterministic=True))"
    )
    outputs = []
    for threads in ("1", "4"):
        env["OSC_THREADS"] = threads
        got = subprocess.run(
            [sys.executable, "-c", script], capture_output=True, text=True, env=env
        )
        assert got.returncode == 0, got.stderr
        outputs.append(got.stdout)
    assert outputs[0] == outputs[1]
