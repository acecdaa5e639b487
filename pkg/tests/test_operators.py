"""Haar analysis, dyadic shifts, and the discrete Hilbert transform."""

from __future__ import annotations

import numpy as np
import pytest

from medosc.grid import DyadicCube, GridFunction, generate, root_cube
from medosc.operators import (
    IndexTooDeep,
    Kernel,
    apply_haar_shift,
    haar_coefficients,
    haar_function,
    haar_support,
    hilbert_kernel,
    hilbert_transform,
    kernel_smoothness_check,
    load_shift,
    martingale_transform,
    random_haar_shift,
    rough_test_kernel,
    save_shift,
)

from oracles import haar_shift_apply_oracle, hilbert_indicator_reference


# ---------------------------------------------------------------------------
# Haar system
# ---------------------------------------------------------------------------


def test_haar_functions_are_orthonormal():
    depth = 4
    cubes = [
        DyadicCube(level, (i,))
        for level in range(depth)
        for i in range(1 << level)
    ]
    measure = 1.0 / (1 << depth)
    fns = {c: haar_function(c, depth).values for c in cubes}
    for a in cubes:
        for b in cubes:
            inner = float(np.dot(fns[a], fns[b])) * measure
            want = 1.0 if a == b else 0.0
            assert inner == pytest.approx(want, abs=1e-12)


def test_haar_support_halves():
    left, right, height = haar_support(DyadicCube(1, (0,)), 3)
    assert left.tolist() == [0, 1]
    assert right.tolist() == [2, 3]
    assert height == pytest.approx(np.sqrt(2.0))
    f = haar_function(DyadicCube(1, (0,)), 3)
    assert np.all(f.values[left] == height)
    assert np.all(f.values[right] == -height)
    assert np.all(f.values[4:] == 0.0)


def test_haar_coefficients_reconstruct():
    f = generate("random-uniform", 1, 5, seed=3)
    coeffs = haar_coefficients(f)
    assert [c.shape for c in coeffs] == [(1 << level,) for level in range(5)]
    depth = f.depth
    recon = np.full(f.cell_count, float(np.mean(f.values)))
    for level, level_coeffs in enumerate(coeffs):
        for i, coef in enumerate(level_coeffs):
            recon += coef * haar_function(DyadicCube(level, (i,)), depth).values
    np.testing.assert_allclose(recon, f.values, rtol=0, atol=1e-12)


def test_haar_coefficient_of_atom_is_one():
    cube = DyadicCube(2, (1,))
    f = haar_function(cube, 5)
    coeffs = haar_coefficients(f)
    assert coeffs[2][1] == pytest.approx(1.0, abs=1e-12)
    total = sum(float(np.sum(c**2)) for c in coeffs)
    assert total == pytest.approx(1.0, abs=1e-12)


# ---------------------------------------------------------------------------
# shifts
# ---------------------------------------------------------------------------


def test_martingale_transform_is_recentring():
    f = generate("random-heavy-tail", 1, 5, seed=1)
    shift = martingale_transform(f.depth, c=1.0)
    out = apply_haar_shift(shift, f)
    np.testing.assert_allclose(
        out.values, f.values - float(np.mean(f.values)), rtol=0, atol=1e-10
    )
    doubled = apply_haar_shift(martingale_transform(f.depth, c=-2.0), f)
    np.testing.assert_allclose(doubled.values, -2.0 * out.values, rtol=0, atol=1e-10)


@pytest.mark.parametrize("tau", [0, 1, 2])
def test_random_shift_matches_oracle(tau):
    f = generate("random-uniform", 1, 6, seed=9)
    shift = random_haar_shift(tau, 2.0, seed=5, depth=f.depth)
    shift.validate()
    got = apply_haar_shift(shift, f)

    entries = [(e.analysis.key(), e.synthesis.key(), e.a) for e in shift.entries]
    haar_cells = {}
    for e in shift.entries:
        for cube in (e.analysis, e.synthesis):
            if cube.key() not in haar_cells:
                haar_cells[cube.key()] = haar_support(cube, f.depth)
    want = haar_shift_apply_oracle(f.values, f.cell_measure, entries, haar_cells)
    np.testing.assert_allclose(got.values, want, rtol=0, atol=1e-10)


def test_random_shift_deterministic_and_coherent_across_depth():
    a = random_haar_shift(1, 2.0, seed=4, depth=5)
    b = random_haar_shift(1, 2.0, seed=4, depth=5)
    assert [(e.analysis, e.synthesis, e.a) for e in a.entries] == [
        (e.analysis, e.synthesis, e.a) for e in b.entries
    ]
    # the same seed at a greater depth extends the entry list without
    # changing shared coefficients
    deep = random_haar_shift(1, 2.0, seed=4, depth=7)
    shallow = {(e.analysis, e.synthesis): e.a for e in a.entries}
    deep_map = {(e.analysis, e.synthesis): e.a for e in deep.entries}
    assert set(shallow) <= set(deep_map)
    for key, coef in shallow.items():
        assert deep_map[key] == coef


def test_random_shift_respects_size_bound():
    for tau in (0, 1, 2):
        shift = random_haar_shift(tau, 1.5, seed=2, depth=6)
        assert list(shift.size_bound_violations()) == []
        for e in shift.entries:
            assert e.base.contains(e.analysis)
            assert e.base.contains(e.synthesis)
            assert e.analysis.level - e.base.level <= tau
            assert e.synthesis.level - e.base.level <= tau


def test_shift_tau_too_deep():
    with pytest.raises(IndexTooDeep):
        random_haar_shift(4, 1.0, seed=0, depth=3)


def test_shift_rejects_shallow_function():
    shift = random_haar_shift(0, 1.0, seed=0, depth=6)
    f = generate("random-uniform", 1, 3, seed=0)
    with pytest.raises(IndexTooDeep):
        apply_haar_shift(shift, f)


def test_shift_round_trip(tmp_path):
    shift = random_haar_shift(2, 2.0, seed=7, depth=5)
    path = tmp_path / "shift.json"
    save_shift(shift, path)
    back = load_shift(path)
    assert back.tau == shift.tau
    assert back.c == shift.c
    assert back.depth == shift.depth
    assert [(e.base, e.analysis, e.synthesis, e.a) for e in back.entries] == [
        (e.base, e.analysis, e.synthesis, e.a) for e in shift.entries
    ]
    f = generate("random-uniform", 1, 5, seed=1)
    np.testing.assert_array_equal(
        apply_haar_shift(back, f).values, apply_haar_shift(shift, f).values
    )


def test_shift_annihilates_constants():
    f = generate("constant", 1, 5, seed=0, value=4.0)
    for tau in (0, 1, 2):
        shift = random_haar_shift(tau, 2.0, seed=3, depth=5)
        out = apply_haar_shift(shift, f)
        np.testing.assert_allclose(out.values, 0.0, atol=1e-12)


# ---------------------------------------------------------------------------
# Hilbert transform
# ---------------------------------------------------------------------------


def test_hilbert_of_constant_matches_log_form():
    # on the unit interval the transform of a constant is c*log(x/(1-x));
    # it vanishes only at the midpoint
    depth = 8
    f = generate("constant", 1, depth, seed=0, value=3.0)
    out = hilbert_transform(f)
    x = f.midpoints()[:, 0]
    ref = 3.0 * (np.log(x) - np.log(1.0 - x))
    per = 1 << depth
    mask = (x > 8.0 / per) & (x < 1.0 - 8.0 / per) & (np.abs(ref) > 1e-3)
    rel = np.abs(out.values[mask] - ref[mask]) / np.abs(ref[mask])
    assert float(np.max(rel)) < 1e-3


def test_hilbert_indicator_matches_closed_form():
    # P.V. integral of 1/(x-y) against an indicator has an explicit log form;
    # midpoint quadrature with the diagonal omitted converges to it
    depth = 8
    per = 1 << depth
    a_cell, b_cell = per // 4, per // 2
    vals = np.zeros(per)
    vals[a_cell:b_cell] = 1.0
    f = GridFunction(1, depth, vals)
    out = hilbert_transform(f)
    x = f.midpoints()[:, 0]
    a, b = a_cell / per, b_cell / per
    ref = hilbert_indicator_reference(x, a, b)
    inside = np.abs(x - a) > 4.0 / per
    inside &= np.abs(x - b) > 4.0 / per
    rel = np.abs(out.values[inside] - ref[inside]) / np.maximum(
        np.abs(ref[inside]), 1e-12
    )
    assert float(np.max(rel)) < 1e-3


def test_hilbert_antisymmetry():
    f = generate("random-uniform", 1, 6, seed=11)
    rev = f.with_values(f.values[::-1].copy())
    lhs = hilbert_transform(rev).values
    rhs = -hilbert_transform(f).values[::-1]
    np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-10)


def test_hilbert_is_linear():
    a = generate("random-uniform", 1, 5, seed=1)
    b = generate("random-heavy-tail", 1, 5, seed=2)
    combo = a.with_values(2.0 * a.values - 0.5 * b.values)
    got = hilbert_transform(combo).values
    want = 2.0 * hilbert_transform(a).values - 0.5 * hilbert_transform(b).values
    np.testing.assert_allclose(got, want, rtol=1e-10, atol=1e-10)


# ---------------------------------------------------------------------------
# kernel smoothness
# ---------------------------------------------------------------------------


def test_hilbert_kernel_is_smooth_away_from_diagonal():
    rep = kernel_smoothness_check(hilbert_kernel, samples=4000, seed=1)
    assert rep.ok
    assert rep.max_ratio <= 8.0


def test_rough_kernel_fails_smoothness():
    rep = kernel_smoothness_check(rough_test_kernel, samples=4000, seed=1)
    assert rep.max_ratio > 8.0
    # the same oscillatory kernel with a claimed constant fails its own claim
    claimed = Kernel(
        name="rough-claimed",
        delta=rough_test_kernel.delta,
        evaluate=rough_test_kernel.evaluate,
        constant=8.0,
    )
    assert not kernel_smoothness_check(claimed, samples=4000, seed=1).ok


def test_kernel_check_deterministic():
    a = kernel_smoothness_check(hilbert_kernel, samples=2000, seed=3)
    b = kernel_smoothness_check(hilbert_kernel, samples=2000, seed=3)
    assert a.max_ratio == b.max_ratio
