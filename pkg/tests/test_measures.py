from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.integrate import quad

from fusiontiles.fusion import RuleError
from fusiontiles.measures import (AtomicMeasure, ConvergenceError, TransferOperator, closed_form,
                                  eigen_constraint, ks_to_uniform, patch_frequency, power_iteration,
                                  single_tile_frequency, solve_invariant_finite, solve_transfer_fixed_point,
                                  spectral_residual, supertile_generated_measure, transfer_apply,
                                  transfer_constant, transfer_spectrum_roots, tv_distance,
                                  unique_ergodicity_diagnostic)
from fusiontiles.rules import get_rule
from fusiontiles.rules.shear import LABELS, MATRIX
from fusiontiles.transition import pushforward

LAMBDA = (1 + math.sqrt(13)) / 2


def test_power_iteration_matches_numpy_eig():
    pf = power_iteration(np.array(MATRIX))
    vals, vecs = np.linalg.eig(np.array(MATRIX, dtype=float))
    k = int(np.argmax(vals.real))
    oracle = np.abs(vecs[:, k].real)
    oracle /= np.linalg.norm(oracle)
    assert np.allclose(pf.vector, oracle, atol=1e-12)
    assert pf.eigenvalue == pytest.approx(vals[k].real, rel=1e-12)
    assert pf.eigenvalue == pytest.approx(LAMBDA**2, rel=1e-12)
    assert pf.eigenvalue == pytest.approx(LAMBDA + 3, rel=1e-12)


def test_shear_pf_vector_shape():
    pf = power_iteration(np.array(MATRIX))
    scaled = pf.vector / pf.vector[0] * LAMBDA
    assert scaled == pytest.approx([2.302776, 3.0, 3.0, 3.908327], abs=1e-5)


def test_power_iteration_raises_when_budget_too_small():
    with pytest.raises(ConvergenceError):
        power_iteration(np.array(MATRIX), iters=2)


@pytest.mark.parametrize("alpha", ["1/2", "sqrt2"])
def test_shear_rho_is_volume_normalized_and_transition_consistent(alpha):
    rule = get_rule("shear", alpha=alpha)
    rho = solve_invariant_finite(rule, [0, 1, 2, 3])
    for m in rho:
        assert m.total_volume(rule) == pytest.approx(1.0, abs=1e-13)
    for n in range(3):
        assert tv_distance(rule, pushforward(rule, n, n + 1, rho[n + 1]), rho[n]) < 1e-8


def test_shear_single_tile_frequency_reads_rho0():
    rule = get_rule("shear", alpha="sqrt2")
    rho0 = solve_invariant_finite(rule, [0])[0]
    assert single_tile_frequency(rho0, "d") == rho0.weight("d")
    pf = power_iteration(np.array(MATRIX)).vector
    vols = np.array([rule.volume(0, x) for x in LABELS])
    assert single_tile_frequency(rho0, "d") == pytest.approx(pf[3] / float(pf @ vols), rel=1e-12)


def test_shear_supertile_measure_approaches_rho0():
    rule = get_rule("shear", alpha="sqrt2")
    rho0 = solve_invariant_finite(rule, [0])[0]
    dists = [tv_distance(rule, supertile_generated_measure(rule, "a", 0, big), rho0) for big in range(2, 13)]
    assert dists[-1] < 1e-3
    assert all(b <= a + 1e-15 for a, b in zip(dists, dists[1:]))


def test_solenoid_rho0_is_two_to_minus_k_plus_one():
    rule = get_rule("solenoid")
    rho0 = solve_invariant_finite(rule, [0])[0]
    for k in range(30):
        assert rho0.weight(k) == pytest.approx(2.0 ** -(k + 1), rel=1e-12)
    assert rho0.weight("inf") < 1e-12
    assert rho0.total_volume(rule) == pytest.approx(1.0, abs=1e-12)


def test_solenoid_rho_is_transition_consistent():
    rule = get_rule("solenoid")
    rho = solve_invariant_finite(rule, [0, 1, 2])
    for n in range(2):
        assert tv_distance(rule, pushforward(rule, n, n + 1, rho[n + 1]), rho[n]) < 1e-8


def test_antipinwheel_rho0_has_four_equal_atoms():
    rule = get_rule("antipinwheel")
    rho = solve_invariant_finite(rule, [0, 1], component=("R", 0.3))
    atoms = rho[0].items()
    assert len(atoms) == 4
    assert {lab.hand for lab, _ in atoms} == {"R"}
    assert sorted(lab.theta for lab, _ in atoms) == pytest.approx([0.3 + m * math.pi / 2 for m in range(4)])
    assert all(w == pytest.approx(0.25) for _, w in atoms)
    assert tv_distance(rule, pushforward(rule, 0, 1, rho[1]), rho[0]) < 1e-8


@pytest.mark.parametrize("hand", ["R", "L"])
def test_antipinwheel_rho_is_transition_consistent_over_levels(hand):
    rule = get_rule("antipinwheel")
    rho = solve_invariant_finite(rule, range(4), component=(hand, 1.1))
    for n in range(3):
        assert tv_distance(rule, pushforward(rule, n, n + 1, rho[n + 1]), rho[n]) < 1e-8


def test_antipinwheel_solver_needs_a_component():
    with pytest.raises(RuleError):
        solve_invariant_finite(get_rule("antipinwheel"), [0])


def test_unique_ergodicity_diameters_shrink_for_shear():
    diam = unique_ergodicity_diagnostic(get_rule("shear", alpha="sqrt2"), 0, [2, 4, 6, 8, 10])
    assert all(b <= a for a, b in zip(diam, diam[1:]))
    assert diam[-1] < 0.01


def test_atomic_measure_helpers():
    rule = get_rule("shear", alpha="1/2")
    m = AtomicMeasure(0, [("a", "a", 1.0), ("d", "d", 2.0)])
    m.add("a", "a", 1.0)
    assert m.weight("a") == 2.0 and m.weight("b") == 0.0
    assert m.scaled(0.5).weight("d") == 1.0
    assert m.total_volume(rule) == pytest.approx(2.0 * rule.volume(0, "a") + 2.0)
    assert m.normalized(rule).total_volume(rule) == pytest.approx(1.0)


def test_ks_to_uniform():
    assert ks_to_uniform(np.zeros(10)) == pytest.approx(1.0)
    grid = (np.arange(1000) + 0.5) / 1000 * (math.pi / 2)
    assert ks_to_uniform(grid) == pytest.approx(0.0005, abs=1e-9)


# ------------------------------------------------------------ transfer operator


def _constant_density(op: TransferOperator):
    return op.density(np.ones_like(op.xl), np.ones_like(op.xr))


def test_transfer_of_constant_density():
    op = TransferOperator(64)
    left, right = op.split(transfer_apply(op, _constant_density(op)))
    assert np.allclose(left[op.xl <= 1.5], 4 / 3, rtol=1e-14)
    assert np.allclose(left[op.xl > 1.5], 4 / 9, rtol=1e-14)
    assert np.allclose(right, 10 / 9, rtol=1e-14)


def test_transfer_is_linear(rng):
    op = TransferOperator(128)
    a = op.density(rng.random(len(op.xl)), rng.random(len(op.xr)))
    b = op.density(rng.random(len(op.xl)), rng.random(len(op.xr)))
    mix = op.density(2 * a.values[: len(op.xl)] - b.values[: len(op.xl)],
                     2 * a.values[len(op.xl):] - b.values[len(op.xl):])
    lhs = transfer_apply(op, mix).values
    rhs = 2 * transfer_apply(op, a).values - transfer_apply(op, b).values
    assert np.allclose(lhs, rhs, rtol=1e-13, atol=1e-13)


def test_closed_form_is_a_near_fixed_point():
    op = TransferOperator(4096)
    f = op.density(closed_form(op.xl, False), closed_form(op.xr, True))
    g = transfer_apply(op, f)
    gap = np.abs(g.values - f.values) / f.values
    assert gap.max() < 1e-5


def test_transfer_grid_must_be_multiple_of_four():
    with pytest.raises(RuleError):
        TransferOperator(30)


def test_transfer_constant_from_normalization_integral():
    moment = quad(lambda x: x / x**2, 1, 2)[0] + quad(lambda x: 3 * x / x**2, 2, 3)[0]
    assert transfer_constant() == pytest.approx(1 / moment, rel=1e-12)


def test_transfer_fixed_point_matches_closed_form():
    density, report = solve_transfer_fixed_point(4096)
    assert report.max_rel_error < 1e-4
    assert report.moment == pytest.approx(1.0, abs=1e-12)
    assert report.c_fitted == pytest.approx(transfer_constant(), rel=1e-4)
    assert report.residual < 1e-8


def test_spectral_roots():
    roots, failures = transfer_spectrum_roots()
    assert roots[0].gamma == pytest.approx(1.0) and roots[0].lam == pytest.approx(1.0)
    for r in roots:
        assert abs(spectral_residual(r.gamma)) < 1e-10
        assert abs(r.lam - 1.5 ** (r.gamma - 1)) < 1e-12
        assert abs(eigen_constraint(r.lam)) < 1e-10
    assert len(roots) >= 5
    assert failures >= 0


# ------------------------------------------------------------ patch frequency


def test_solenoid_patch_frequency_of_a1_a0():
    rule = get_rule("solenoid")
    rho = solve_invariant_finite(rule, range(9))
    freq = patch_frequency(rule, rho, [1, 0], n_max=8)
    assert freq.value == pytest.approx(0.25, abs=1e-3)
    assert all(b >= a - 1e-15 for a, b in zip(freq.trace, freq.trace[1:]))


def test_solenoid_limit_patch_has_zero_frequency():
    rule = get_rule("solenoid")
    rho = solve_invariant_finite(rule, range(6))
    # the true value is 0; what remains is the solver's truncated tail mass
    assert patch_frequency(rule, rho, ["inf"], n_max=5).value < 1e-8


def test_patch_frequency_level_mismatch_raises():
    rule = get_rule("solenoid")
    rho = solve_invariant_finite(rule, [1])
    with pytest.raises(RuleError):
        patch_frequency(rule, rho, [0], n_max=0)
