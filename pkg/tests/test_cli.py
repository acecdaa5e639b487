"""End-to-end command-line behavior through subprocesses."""

from __future__ import annotations

import json
import subprocess
import sys

import numpy as np
import pytest

from medosc.grid import load_function
from medosc.decompose import load_tree


def run_cli(*args, cwd=None):
    return subprocess.run(
        [sys.executable, "-m", "medosc.cli", *args],
        capture_output=True,
        text=True,
        cwd=cwd,
    )


def test_gen_writes_function(tmp_path):
    out = tmp_path / "f.json"
    got = run_cli("gen", "--kind", "constant", "--dim", "1", "--depth", "3",
                  "--value", "5.0", "--out", str(out))
    assert got.returncode == 0, got.stderr
    f = load_function(out)
    np.testing.assert_array_equal(f.values, np.full(8, 5.0))


def test_gen_decompose_verify_round_trip(tmp_path):
    f_path = tmp_path / "spike.json"
    t_path = tmp_path / "tree.json"
    assert run_cli("gen", "--kind", "spike", "--dim", "1", "--depth", "4",
                   "--seed", "2", "--out", str(f_path)).returncode == 0

    got = run_cli("decompose", "--in", str(f_path), "--variant", "v1",
                  "--s", "0.25", "--t", "0.5", "--out", str(t_path))
    assert got.returncode == 0, got.stderr
    assert "generations" in got.stdout
    tree = load_tree(t_path)
    assert tree.variant == "v1"

    got = run_cli("verify", "--check", "decomposition", "--in", str(f_path),
                  "--tree", str(t_path), "--s", "0.25", "--t", "0.5")
    assert got.returncode == 0, got.stderr
    assert "ok" in got.stdout


def test_verify_tree_digest_mismatch_is_config_error(tmp_path):
    f_path = tmp_path / "a.json"
    g_path = tmp_path / "b.json"
    t_path = tmp_path / "tree.json"
    run_cli("gen", "--kind", "spike", "--dim", "1", "--depth", "4", "--seed", "1",
            "--out", str(f_path))
    run_cli("gen", "--kind", "spike", "--dim", "1", "--depth", "4", "--seed", "9",
            "--out", str(g_path))
    run_cli("decompose", "--in", str(f_path), "--s", "0.25", "--t", "0.5",
            "--out", str(t_path))
    got = run_cli("verify", "--check", "decomposition", "--in", str(g_path),
                  "--tree", str(t_path), "--s", "0.25", "--t", "0.5")
    assert got.returncode == 2


def test_verify_corpus_violation_exits_one(tmp_path):
    # 2-d spikes above oscillation fraction 1/4 violate the first-variant
    # pointwise envelope
    got = run_cli("verify", "--check", "decomposition", "--variant", "v1",
                  "--s", "0.3", "--t", "0.65", "--kinds", "spike",
                  "--dims", "2", "--depths-2d", "3", "--count", "4")
    assert got.returncode == 1
    assert "violation" in got.stdout.lower()


def test_verify_unknown_check_exits_two():
    got = run_cli("verify", "--check", "nonesuch", "--s", "0.25", "--t", "0.5")
    assert got.returncode == 2


def test_bad_parameters_exit_two():
    got = run_cli("verify", "--check", "decomposition", "--s", "0.6", "--t", "0.5",
                  "--count", "2")
    assert got.returncode == 2
    got = run_cli("verify", "--check", "weighted", "--s", "0.25", "--t", "0.5",
                  "--count", "2")  # missing --delta
    assert got.returncode == 2


def test_verify_writes_json_report(tmp_path):
    out = tmp_path / "report.json"
    got = run_cli("verify", "--check", "props", "--s", "0.25", "--t", "0.5",
                  "--count", "4", "--dims", "1", "--depths-1d", "4",
                  "--out", str(out))
    assert got.returncode == 0, got.stderr
    doc = json.loads(out.read_text())
    assert doc["check"] == "props"
    # one row per instance and property item
    prefixes = {row["id"].split(":")[0] for row in doc["instances"]}
    assert len(prefixes) == 4


def test_verify_csv_format(tmp_path):
    out = tmp_path / "report.csv"
    got = run_cli("verify", "--check", "decomposition", "--s", "0.25", "--t", "0.5",
                  "--count", "3", "--dims", "1", "--depths-1d", "4",
                  "--out", str(out))
    assert got.returncode == 0, got.stderr
    header = out.read_text().splitlines()[0]
    assert header.startswith("id,")


def test_sweep_writes_csv_and_figure(tmp_path):
    out = tmp_path / "sweep.csv"
    got = run_cli("sweep", "--check", "decomposition", "--grid", "s=0.2,0.25",
                  "t=0.5", "variant=v1", "--count", "3", "--dims", "1",
                  "--depths-1d", "4", "--out", str(out))
    assert got.returncode == 0, got.stderr
    lines = out.read_text().splitlines()
    assert len(lines) == 3  # header + two grid points
    assert "figure:" in got.stdout
    figs = list(tmp_path.glob("*.png"))
    assert figs, "sweep should render a figure next to the output"


def test_sweep_no_plot_skips_figures(tmp_path):
    out = tmp_path / "sweep.csv"
    got = run_cli("sweep", "--check", "decomposition", "--grid", "s=0.2,0.25",
                  "t=0.5", "variant=v1", "--count", "3", "--dims", "1",
                  "--depths-1d", "4", "--no-plot", "--out", str(out))
    assert got.returncode == 0, got.stderr
    assert not list(tmp_path.glob("*.png"))


def test_props_plot_opt_in(tmp_path):
    out = tmp_path / "props.json"
    got = run_cli("props", "--s", "0.25", "--t", "0.5", "--count", "3",
                  "--dims", "1", "--depths-1d", "4", "--plot", "--out", str(out))
    assert got.returncode == 0, got.stderr
    assert list(tmp_path.glob("*.png"))


def test_deterministic_runs_are_byte_identical(tmp_path):
    texts = []
    for name in ("one.json", "two.json"):
        out = tmp_path / name
        got = run_cli("props", "--s", "0.25", "--t", "0.5", "--count", "3",
                      "--dims", "1", "--depths-1d", "4", "--deterministic",
                      "--out", str(out))
        assert got.returncode == 0, got.stderr
        texts.append(out.read_bytes())
    assert texts[0] == texts[1]
    # deterministic mode never renders figures
    assert not list(tmp_path.glob("*.png"))
