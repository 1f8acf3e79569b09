from __future__ import annotations

import math

import numpy as np
import pytest

from fusiontiles.complexity import (ComplexityRow, TilingWindow, WindowSampler, complexity_table,
                                    dL_distance, dL_grid, epsilon_entropy, equicontinuity_delta,
                                    estimate_complexity, fit_exponent, size_ratio, tiling_distance)
from fusiontiles.fusion import RuleError
from fusiontiles.rules import get_rule


def _line_window(values, box: float = 0.0, start: int = -30, radius: float = 28.0) -> TilingWindow:
    """Unit tiles ``[start + i, start + i + 1]`` carrying solenoid heights ``values``."""
    lo = start + np.arange(len(values), dtype=float)
    verts = np.stack([lo, lo + 1.0], axis=1)
    return TilingWindow(1, verts, np.zeros(len(values), dtype=np.int64), np.asarray(values, dtype=float),
                        "nat", box, radius)


def _v2(i: int) -> int:
    return (i & -i).bit_length() - 1


def _dyadic_heights(start: int, count: int) -> list:
    # tile at position p carries A_k with k the 2-adic valuation of p + 2^20
    return [2.0 ** -_v2(start + i + 2 ** 20) for i in range(count)]


def test_identical_windows_are_at_distance_zero():
    w = _line_window(_dyadic_heights(-30, 60))
    assert tiling_distance(w, w) <= 1e-12
    assert dL_distance(_line_window(_dyadic_heights(-30, 60), box=8.0, radius=20.0),
                       _line_window(_dyadic_heights(-30, 60), box=8.0, radius=20.0)) <= 1e-12


def test_gross_difference_beyond_radius_ten_gives_one_tenth():
    base = [1.0] * 60
    far = [1.0 if -10 <= -30 + i < 10 else 0.0 for i in range(60)]
    d = tiling_distance(_line_window(base), _line_window(far))
    assert d == pytest.approx(0.1, abs=1e-12)


def test_single_a5_a6_swap_inside_box_is_detected():
    heights = _dyadic_heights(-30, 110)
    other = list(heights)
    pos = next(i for i in range(110) if heights[i] == 2.0 ** -5 and 0 <= -30 + i < 40)
    other[pos] = 2.0 ** -6
    w1 = _line_window(heights, box=40.0, radius=20.0)
    w2 = _line_window(other, box=40.0, radius=20.0)
    d = dL_distance(w1, w2)
    assert d >= 2.0 ** -6 - 1e-12
    assert d == pytest.approx(2.0 ** -6, abs=1e-12)


def test_insufficient_validity_radius_raises():
    w = _line_window([1.0] * 4, radius=0.5)
    with pytest.raises(RuleError):
        tiling_distance(w, w)


@pytest.mark.parametrize("name", ["solenoid", "pinwheel", "shear", "varlen"])
def test_translation_moves_by_at_most_its_length(name):
    sampler = WindowSampler(get_rule(name), 0.3, 2.0, 3, 4)
    w = sampler.window(0)
    for v in (0.01, 0.05, 0.1):
        shift = v if w.dim == 1 else (v * 0.6, v * 0.8)
        assert tiling_distance(w, w.translated(shift)) <= v + 1e-9


@pytest.mark.parametrize("name", ["solenoid", "pinwheel", "shear"])
def test_windowed_distance_dominates_origin_distance_and_grid(name):
    sampler = WindowSampler(get_rule(name), 0.3, 2.0, 11, 6)
    for i in range(3):
        a, b = sampler.window(2 * i), sampler.window(2 * i + 1)
        exact = dL_distance(a, b)
        assert exact >= tiling_distance(a, b) - 1e-12
        assert dL_grid(a, b, 0.3 / 4) <= exact + 1e-12
        assert tiling_distance(a, b) == pytest.approx(tiling_distance(b, a), abs=1e-12)


def test_sampler_is_prefix_stable():
    small = WindowSampler(get_rule("pinwheel"), 0.3, 4.0, 7, 5)
    big = WindowSampler(get_rule("pinwheel"), 0.3, 4.0, 7, 3000)
    for i in range(5):
        assert np.array_equal(small.window(i).verts, big.window(i).verts)


# ------------------------------------------------------------ fits


def _rows(sizes, ls=(4, 8, 16, 32), eps=0.2):
    return [ComplexityRow(eps, float(L), float(c), 0, 0, "synthetic") for L, c in zip(ls, sizes)]


def test_fit_exponent_recovers_exact_power_law():
    fit = fit_exponent(_rows([7.0 * L**3 for L in (4, 8, 16, 32)]))
    assert fit.gamma == pytest.approx(3.0, abs=1e-6)
    assert fit.band < 1e-6 and not fit.bounded


def test_fit_exponent_with_offset():
    fit = fit_exponent(_rows([7.0 * (L + 10) ** 2 for L in (4, 8, 16, 32)]), offset=10.0)
    assert fit.gamma == pytest.approx(2.0, abs=1e-9)
    assert fit.offset == 10.0


def test_constant_data_are_flagged_bounded():
    fit = fit_exponent(_rows([12.0] * 4, ls=(8, 16, 32, 64)))
    assert fit.bounded and fit.gamma == 0.0


def test_fit_exponent_needs_three_lengths():
    with pytest.raises(RuleError):
        fit_exponent(_rows([1.0, 2.0], ls=(4, 8)))


def test_size_ratio():
    rows = _rows([10.0, 20.0, 40.0, 80.0], ls=(8, 16, 32, 64))
    assert size_ratio(rows, 64, 8) == pytest.approx(8.0)


# ------------------------------------------------------------ estimators


def test_greedy_solenoid_sizes_bounded_within_ten_percent():
    rule = get_rule("solenoid")
    means = [np.mean([estimate_complexity(rule, 0.3, L, 400, 100, s).size for s in range(3)])
             for L in (8, 16, 32, 64)]
    assert max(means) / min(means) <= 1.1


def test_greedy_size_nondecreasing_in_budget():
    rule = get_rule("solenoid")
    sizes = [estimate_complexity(rule, 0.3, 16, budget, 10**6, 4).size for budget in (50, 100, 200, 400)]
    assert sizes == sorted(sizes)


def test_estimates_are_deterministic_for_any_worker_count():
    a = complexity_table("solenoid", {}, 0.3, [8, 16, 32], [0, 1], samples=200, workers=1)
    b = complexity_table("solenoid", {}, 0.3, [8, 16, 32], [0, 1], samples=200, workers=2)
    assert a.to_csv() == b.to_csv()
    rule = get_rule("solenoid")
    assert estimate_complexity(rule, 0.3, 16, 300, 100, 9) == estimate_complexity(rule, 0.3, 16, 300, 100, 9)


def test_epsilon_entropy_of_dyadic_solenoid_vanishes():
    rule = get_rule("solenoid")
    rows = [estimate_complexity(rule, 0.3, L, 400, 100, 0) for L in (8, 16, 32, 64)]
    ent = epsilon_entropy(rows)[0.3]
    assert ent["ratio"] < 0.05
    assert abs(ent["increment"]) < 0.01


def test_epsilon_entropy_of_full_shift_is_log_n_prime():
    shift = get_rule("full-shift")
    assert shift.n_prime(0.4) > shift.n_prime(0.6) >= 2
    rows = [estimate_complexity(shift, 0.6, L, 2500, 500, 1) for L in (1, 2, 3)]
    mean_increment = (math.log(rows[-1].size) - math.log(rows[0].size)) / 2
    assert 0.75 * shift.entropy(0.6) <= mean_increment <= 1.25 * shift.entropy(0.6)
    assert epsilon_entropy(rows)[0.6]["ratio"] > 0


def test_epsilon_entropy_of_pinwheel_decays_like_log_polynomial():
    table = complexity_table("pinwheel", {}, 0.5, [2, 4, 8], [0], samples=300, min_hits=20, workers=3)
    trend = epsilon_entropy(table.rows, p=2)[0.5]["trend"]
    assert all(b < a for a, b in zip(trend, trend[1:]))
    assert trend[-1] < 0.25


def test_equicontinuity_on_the_dyadic_solenoid():
    delta, checked, worst = equicontinuity_delta(get_rule("solenoid"), 0.3, 64, 1000, 0)
    assert delta is not None and delta > 0
    assert checked == 1000
    assert worst < 0.3
