"""Whitney partitions, tents, molecules and the level-set decomposition."""

import math

import numpy as np
import pytest

from hardy_lab import (
    Cube,
    ScalarField,
    TimeGrid,
    calderon_constant,
    h1_norm_estimate,
    lp_norm,
    make_molecule,
    molecular_decompose,
    molecular_norm,
    validate_molecule,
    whitney_decompose,
)
from hardy_lab.decomposition import (
    WHITNEY_C2,
    DegenerateFieldError,
    SupportError,
    build_truncated_tents,
    dist_to_complement,
)


def bump_field(grid, center=0.5, width=0.2):
    x = grid.coords()[:, 0]
    d = np.abs(x - center)
    d = np.minimum(d, grid.side_lengths[0] - d)
    v = np.where(d < width, np.cos(np.pi * d / (2 * width)) ** 2, 0.0) + 0j
    v -= v.mean()
    return ScalarField(v / lp_norm(v, grid, 2), grid)


def decomposition_times(grid, count=64):
    return TimeGrid(grid.spacing / 16.0, 4.0 * max(grid.side_lengths), count)


def test_calderon_constant_value():
    assert calderon_constant(1) == pytest.approx(27.0, abs=1e-12)
    # C_M = 2 (M+2)^{M+2} / Gamma(M+2)
    assert calderon_constant(2) == pytest.approx(2 * 4.0**4 / math.gamma(4.0))


def test_whitney_is_a_partition(grid1d):
    open_set = np.arange(10, 40)
    ws = whitney_decompose(open_set, grid1d)
    covered = np.concatenate([c.node_set(0) for c in ws.cubes])
    assert sorted(covered) == sorted(open_set)
    assert len(covered) == len(set(covered))
    assert ws.overlap_bound == 1


def test_whitney_distance_comparability(grid1d):
    open_set = np.arange(10, 40)
    ws = whitney_decompose(open_set, grid1d)
    dist = dist_to_complement(grid1d, open_set)
    for cube in ws.cubes:
        if cube.nnodes == 1:
            continue
        d = dist[cube.node_set(0)].min()
        assert cube.sidelength <= WHITNEY_C2 * d + 1e-12


def test_whitney_full_grid_special_case(grid1d):
    ws = whitney_decompose(np.arange(64), grid1d)
    assert ws.covers_whole_grid
    assert len(ws.cubes) == 1


def test_whitney_empty_set(grid1d):
    ws = whitney_decompose(np.array([], dtype=int), grid1d)
    assert ws.cubes == []


def test_truncated_tent_masks_are_disjoint_and_telescope(grid1d):
    lower = np.arange(8, 56)
    upper = np.arange(20, 44)
    cube = Cube(grid1d, (24,), 8)
    times = TimeGrid(1e-3, 2.0, 32)
    tent = build_truncated_tents(lower, upper, cube)
    inner = build_truncated_tents(upper, np.array([], dtype=int), cube)
    both = tent.mask(times) & inner.mask(times)
    assert not both.any()
    merged = build_truncated_tents(lower, np.array([], dtype=int), cube)
    assert np.array_equal(tent.mask(times) | inner.mask(times), merged.mask(times))


def test_decompose_reconstructs(op1d, grid1d):
    f = bump_field(grid1d)
    dec = molecular_decompose(f, op1d, M=1, times=decomposition_times(grid1d))
    rel = lp_norm(dec.residual.values, grid1d, 2) / lp_norm(f.values, grid1d, 2)
    assert rel <= 1e-3
    assert dec.weight_sum > 0


def test_decompose_weight_formula_exact(op1d, grid1d):
    f = bump_field(grid1d)
    dec = molecular_decompose(
        f, op1d, M=1, times=decomposition_times(grid1d), validate=False
    )
    c1 = calderon_constant(1)
    for term in dec.terms:
        expected = c1 * 2.0**term.level * term.molecule.cube.volume
        assert term.weight == pytest.approx(expected, rel=1e-12)


def test_decompose_residual_shrinks_with_quadrature(op1d, grid1d):
    f = bump_field(grid1d)
    residuals = []
    for count in (16, 32, 64):
        dec = molecular_decompose(
            f, op1d, M=1, times=decomposition_times(grid1d, count), validate=False
        )
        residuals.append(lp_norm(dec.residual.values, grid1d, 2))
    assert residuals[0] > residuals[1] > residuals[2]


def test_decompose_scaling_quantized(op1d, grid1d):
    f = bump_field(grid1d)
    c = 3.0
    cf = ScalarField(c * f.values, grid1d)
    times = decomposition_times(grid1d)
    base = molecular_decompose(f, op1d, M=1, times=times, validate=False)
    scaled = molecular_decompose(cf, op1d, M=1, times=times, validate=False)
    ratio = scaled.weight_sum / base.weight_sum
    # weights move by whole powers of two, so scaling is tracked only up to
    # a factor-2 quantization either way
    assert c / 2.0 <= ratio <= 2.0 * c


def test_decompose_rejects_nonzero_mean(op1d, grid1d):
    with pytest.raises(DegenerateFieldError):
        molecular_decompose(
            ScalarField(np.ones(64, dtype=complex), grid1d), op1d, M=1
        )


def test_decompose_validates_molecules(op1d, grid1d):
    f = bump_field(grid1d)
    dec = molecular_decompose(f, op1d, M=1, times=decomposition_times(grid1d))
    assert dec.terms
    assert all(t.molecule.report is not None for t in dec.terms)
    assert dec.global_molecule_constant > 0


@pytest.mark.parametrize("kind", ["heat", "resolvent"])
def test_make_molecule_validates(op1d, grid1d, kind):
    cube = Cube(grid1d, (12,), 8)
    seed = np.zeros(64, dtype=complex)
    seed[cube.node_set(0)] = 1.0
    seed *= cube.volume ** (-0.5) / (lp_norm(seed, grid1d, 2) * (1 + 1e-9))
    mol = make_molecule(ScalarField(seed, grid1d), cube, op1d, M=1, kind=kind)
    rep = validate_molecule(mol, op1d)
    assert rep.passes
    assert rep.max_ratio <= 1.0 + 1e-9


def test_make_molecule_rejects_outside_support(op1d, grid1d):
    cube = Cube(grid1d, (12,), 8)
    seed = np.ones(64, dtype=complex) * 1e-3
    with pytest.raises(SupportError):
        make_molecule(ScalarField(seed, grid1d), cube, op1d, M=1)


def test_make_molecule_rejects_oversized_seed(op1d, grid1d):
    cube = Cube(grid1d, (12,), 8)
    seed = np.zeros(64, dtype=complex)
    seed[cube.node_set(0)] = 100.0
    with pytest.raises(ValueError):
        make_molecule(ScalarField(seed, grid1d), cube, op1d, M=1)


def test_molecular_norm_finite(op1d, grid1d):
    cube = Cube(grid1d, (12,), 8)
    seed = np.zeros(64, dtype=complex)
    seed[cube.node_set(0)] = 1.0
    seed *= cube.volume ** (-0.5) / (lp_norm(seed, grid1d, 2) * (1 + 1e-9))
    mol = make_molecule(ScalarField(seed, grid1d), cube, op1d, M=1)
    val = molecular_norm(mol.field, 2.0, 1.0, 1, cube, op1d)
    assert np.isfinite(val)
    assert val > 0


def test_h1_estimate_dominates_l1(op1d, grid1d):
    f = bump_field(grid1d)
    est = h1_norm_estimate(f, op1d, times=decomposition_times(grid1d))
    assert est.estimate >= est.l1_norm
    assert est.s_h_l1 > 0
    assert est.estimate == pytest.approx(est.weight_sum + est.l1_norm)
