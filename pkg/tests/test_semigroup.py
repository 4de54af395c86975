"""Functional calculus: heat, resolvent, Poisson, fractional powers."""

import numpy as np
import pytest

from hardy_lab import (
    ScalarField,
    TimeGrid,
    gaffney_profile,
    heat_apply,
    heat_profile,
    lp_norm,
    neg_power_apply,
    poisson_apply,
    resolvent_apply,
    sqrt_apply,
)
from hardy_lab import semigroup
from hardy_lab.semigroup import KernelComponentError


def test_time_grid_validation():
    with pytest.raises(ValueError):
        TimeGrid(1.0, 0.5, 8)
    with pytest.raises(ValueError):
        TimeGrid(0.0, 1.0, 8)


def test_time_grid_log_weights_integrate_dt_over_t():
    tg = TimeGrid(1e-3, 1.0, 200)
    # int dt/t over the window is log(t_max/t_min)
    assert tg.log_weights.sum() == pytest.approx(np.log(1e3), rel=1e-4)


@pytest.mark.parametrize("t", [1e-4, 1e-2, 0.3])
def test_heat_conserves_constants(op1d_random, grid1d, t):
    ones = ScalarField(np.ones(64, dtype=complex), grid1d)
    out = heat_apply(op1d_random, t, ones)
    assert np.abs(out.values - 1.0).max() < 1e-8


def test_resolvent_conserves_constants(op1d_random, grid1d):
    ones = ScalarField(np.ones(64, dtype=complex), grid1d)
    out = resolvent_apply(op1d_random, 0.1, ones)
    assert np.abs(out.values - 1.0).max() < 1e-8


def test_poisson_conserves_constants(op1d, grid1d):
    ones = ScalarField(np.ones(64, dtype=complex), grid1d)
    out = poisson_apply(op1d, 0.3, ones)
    assert np.abs(out.values - 1.0).max() < 1e-8


def test_heat_semigroup_property(op1d_random, field1d):
    one_step = heat_apply(op1d_random, 0.03, field1d)
    two_step = heat_apply(op1d_random, 0.02, heat_apply(op1d_random, 0.01, field1d))
    assert np.abs(one_step.values - two_step.values).max() < 1e-10


def test_heat_krylov_matches_dense(op1d_random, field1d):
    dense = heat_apply(op1d_random, 0.05, field1d, method=semigroup.DENSE_ORACLE)
    krylov = heat_apply(op1d_random, 0.05, field1d, method=semigroup.KRYLOV)
    assert np.abs(dense.values - krylov.values).max() < 1e-8


def test_resolvent_inverts_operator(op1d_random, grid1d, field1d):
    s = 0.07
    out = resolvent_apply(op1d_random, s, field1d)
    back = out.values + s * s * (op1d_random.matrix @ out.values)
    assert np.abs(back - field1d.values).max() < 1e-10


def test_neg_power_roundtrip(op1d_random, grid1d, field1d):
    inv = neg_power_apply(op1d_random, 2, field1d)
    fwd = op1d_random.matrix @ (op1d_random.matrix @ inv.values)
    assert np.abs(fwd - field1d.values).max() < 1e-8


def test_neg_power_rejects_kernel_component(op1d, grid1d):
    with pytest.raises(KernelComponentError):
        neg_power_apply(op1d, 1, ScalarField(np.ones(64, dtype=complex), grid1d))


def test_poisson_squares_to_heat_of_sqrt(op1d, field1d):
    # e^{-t sqrt(L)} applied twice equals e^{-2t sqrt(L)}
    once = poisson_apply(op1d, 0.1, field1d)
    twice = poisson_apply(op1d, 0.1, once)
    direct = poisson_apply(op1d, 0.2, field1d)
    assert np.abs(twice.values - direct.values).max() < 1e-7


def test_sqrt_squares_to_operator(op1d_random, field1d):
    half = sqrt_apply(op1d_random, field1d)
    again = sqrt_apply(op1d_random, half)
    direct = op1d_random.matrix @ field1d.values
    assert np.abs(again.values - direct).max() < 1e-8


def test_heat_profile_shape_and_decay(op1d, field1d):
    tg = TimeGrid(1e-2, 2.0, 16)
    prof = heat_profile(op1d, field1d, tg, K=1)
    assert prof.shape == (64, 16)
    # (t^2 L) e^{-t^2 L} f vanishes as t -> infinity for mean-zero f
    assert np.abs(prof[:, -1]).max() < 1e-8


def test_gaffney_profile_monotone_small_times(op1d):
    E = np.arange(0, 6)
    F = np.arange(28, 36)
    prof = gaffney_profile(op1d, "heat", E, F, TimeGrid(1.2e-3, 6e-2, 16))
    norms = prof.measured_norms
    assert all(
        norms[i] <= norms[i + 1] * (1 + 1e-12) for i in range(len(norms) - 1)
    )


def test_gaffney_beta_near_one(op1d):
    E = np.arange(0, 6)
    F = np.arange(28, 36)
    prof = gaffney_profile(op1d, "heat", E, F, TimeGrid(8e-3, 1e-1, 16))
    assert 0.8 <= prof.fitted_beta <= 1.2


def test_gaffney_rejects_overlapping_sets(op1d):
    with pytest.raises(ValueError):
        gaffney_profile(
            op1d, "heat", np.arange(0, 6), np.arange(5, 10), TimeGrid(1e-3, 1e-1, 8)
        )


def test_subordination_rule_matches_scalar_exponential():
    nodes, coeffs = semigroup._subordination_rule(128)
    for t in (0.05, 0.5, 2.0):
        for lam in (0.0, 1.0, 500.0, 16384.0):
            approx = float((coeffs * np.exp(-(t * t * lam) / (4.0 * nodes))).sum())
            assert approx == pytest.approx(np.exp(-t * np.sqrt(lam)), abs=1e-8)
