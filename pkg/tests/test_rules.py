from __future__ import annotations

import math
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest

from fusiontiles.fusion import RuleError, expand, label_counts, root_instance
from fusiontiles.labels import CircleLabel, SlitLabel
from fusiontiles.rules import RULE_NAMES, get_rule
from fusiontiles.rules.pinwheel import ALPHA, HALF_PI, tiles_of
from fusiontiles.rules.shear import MATRIX, parse_alpha
from fusiontiles.rules.solenoid import (INF, INF2, admitted_window, check_admitted, greedy_picks,
                                        parse_bits, pd_to_toeplitz, stretch_lengths, toeplitz_to_pd)

V2 = lambda i: (i & -i).bit_length() - 1


def test_registry_builds_every_rule():
    for name in RULE_NAMES:
        assert get_rule(name) is not None
    with pytest.raises(RuleError):
        get_rule("nope")
    with pytest.raises(RuleError):
        get_rule("pinwheel", alpha="1/2")


# ------------------------------------------------------------ solenoid family


def test_solenoid_count_of_a_k_in_level_n_supertile():
    rule = get_rule("solenoid")
    for big in range(1, 9):
        for n in range(big):
            counts = dict((lab, c) for lab, c in label_counts(rule, big, INF, big - n))
            for k in range(n, big):
                assert counts.get(k, 0) == 2 ** (big - k - 1)


def test_toeplitz2_limit_classes_by_parity():
    space = get_rule("toeplitz2").label_space(0)
    assert all(space.limit_class(k) == (INF if k % 2 == 0 else INF2) for k in range(40))
    assert space.distance(40, INF) == 2.0 ** -40
    assert space.distance(41, INF) == 1.0


def test_alpha_bits_from_exact_tokens():
    bits = parse_bits("sqrt2-1")
    # sqrt2 - 1 = 0.0110101000001001111...b
    assert [bits(n) for n in range(1, 20)] == [0, 1, 1, 0, 1, 0, 1, 0, 0, 0, 0, 0, 1, 0, 0, 1, 1, 1, 1]
    assert [parse_bits("1/3")(n) for n in range(1, 7)] == [0, 1, 0, 1, 0, 1]
    assert [parse_bits("bits:011")(n) for n in range(1, 7)] == [0, 1, 1, 0, 1, 1]
    for bad in ("0.41", "3/2", "bits:000", "bits:01x"):
        with pytest.raises(RuleError):
            parse_bits(bad)


def test_admitted_window_maps_to_period_doubling_letters():
    assert toeplitz_to_pd([1, 0, 2, 0]) == ["Y", "X", "X", "X"]
    assert toeplitz_to_pd([0, INF, 0, 1]) == ["X", "X", "X", "Y"]
    assert toeplitz_to_pd([0, INF2, 0]) == ["X", "Y", "X"]


def test_non_admitted_windows_raise():
    for w in ([0, 0], [1, 0, 1], [0, INF, 0, INF]):
        with pytest.raises(RuleError):
            check_admitted(w)


def test_admitted_four_letter_word_from_spec_is_in_fact_admitted():
    # A0 A1 A0 A2 is offsets 1..4 of the tiling with labels v2(i)
    assert [V2(i) for i in range(1, 5)] == [0, 1, 0, 2]
    check_admitted([0, 1, 0, 2])


def test_period_doubling_image_obeys_substitution():
    # X -> YX, Y -> XX applied to the image of a long window yields another image
    rule = get_rule("toeplitz2")
    w = admitted_window(rule, 4096, np.random.default_rng(3))
    word = "".join(toeplitz_to_pd(w))
    assert "YY" not in word
    assert "XXXX" not in word


def test_conjugacy_round_trip_many_seeds():
    rule = get_rule("toeplitz2")
    for s in range(40):
        w = admitted_window(rule, 1024, np.random.default_rng(s))
        assert pd_to_toeplitz(toeplitz_to_pd(w), greedy_picks(w)) == w


def test_pd_to_toeplitz_rejects_wrong_pick_letters():
    with pytest.raises(RuleError):
        pd_to_toeplitz(["X", "X", "Y", "X"], [0])


def _tiling(c0, n):
    return [INF if i == 0 else V2(abs(i)) for i in range(c0, c0 + n)]


def _scan_oracle(context, t, n_max=64):
    total = 0.0
    for n in range(11, n_max + 1):
        lo, hi = max(0, t - n * n), min(len(context), t + n * n + 1)
        if any(context[i] == n for i in range(lo, hi)):
            total += 1.0 / n
    return 1.0 + total


def test_stretch_lengths_examples_and_oracle():
    c0 = -6000
    ctx = _tiling(c0, 20_000)
    origin = -c0
    start, stop = origin - 200, origin + 2400
    out = stretch_lengths(ctx, start, stop)
    assert out[200] == 1.0
    assert out[200 + 2148] == pytest.approx(1 + 1 / 11, abs=0)
    for j in range(0, stop - start, 97):
        assert out[j] == pytest.approx(_scan_oracle(ctx, start + j), abs=1e-15)
    assert all(1.0 <= x < 2.0 for x in out)


def test_stretch_lengths_context_stable_and_needs_radius():
    big = _tiling(-20_000, 40_000)
    small = big[20_000 - 5000: 20_000 + 5000]
    a = stretch_lengths(big, 20_000 - 100, 20_000 + 100)
    b = stretch_lengths(small, 5000 - 100, 5000 + 100)
    assert a == b
    with pytest.raises(RuleError, match="4096"):
        stretch_lengths(big[:8000], 4000, 4100)


# ------------------------------------------------------------ triangles


def test_pinwheel_two_children_of_type_l_theta_plus_alpha():
    rule = get_rule("pinwheel")
    for theta in (0.0, 0.77, 4.0):
        counts = Counter()
        for lab, c in rule.child_label_counts(1, CircleLabel("R", theta)):
            counts[(lab.hand, round((lab.theta - theta - ALPHA) % (2 * math.pi), 9))] += c
        assert counts[("L", 0.0)] == 2
        assert counts[("L", round(HALF_PI, 9))] == 1
        assert counts[("R", 0.0)] == 1
        assert counts[("R", round(math.pi, 9))] == 1


def test_pinwheel_children_have_a_fifth_of_parent_area():
    from fusiontiles import geometry as geo

    rule = get_rule("pinwheel")
    parent = CircleLabel("L", 1.1)
    for child, pl in rule.decompose(2, parent):
        assert geo.volume(geo.apply_placement(rule.support(1, child), pl)) == pytest.approx(
            rule.volume(2, parent) / 5, rel=1e-12)


def test_pinwheel_angles_lie_in_bounded_alpha_lattice():
    rule = get_rule("pinwheel")
    for big in range(1, 7):
        _, theta, _ = tiles_of(rule, big, CircleLabel("R", 0.0))
        allowed = np.array([k * ALPHA + m * HALF_PI for k in range(-big, big + 1) for m in range(4)])
        d = np.abs(np.mod(theta[:, None] - allowed[None, :] + math.pi, 2 * math.pi) - math.pi)
        assert d.min(axis=1).max() < 1e-9


def test_pinwheel_batch_kernel_agrees_with_expand():
    rule = get_rule("pinwheel")
    q = CircleLabel("R", 0.3)
    hand, theta, pos = tiles_of(rule, 3, q)
    patch = expand(rule, root_instance(rule, 3, q), 3)
    a = sorted((int(h), round(t, 9), round(p[0], 9), round(p[1], 9)) for h, t, p in zip(hand, theta, pos))
    b = sorted((int(t.label.hand == "R"), round(t.label.theta, 9), round(t.placement.translation[0], 9),
                round(t.placement.translation[1], 9)) for t in patch.tiles)
    assert a == b


def test_antipinwheel_children_multiplicities():
    rule = get_rule("antipinwheel")
    counts = sorted(c for _, c in rule.child_label_counts(1, CircleLabel("R", 0.0)))
    hands = {lab.hand for lab, _ in rule.child_label_counts(1, CircleLabel("R", 0.0))}
    assert counts == [1, 1, 3]
    assert hands == {"L"}


def test_antipinwheel_supertile_has_four_directions():
    rule = get_rule("antipinwheel")
    for big in (2, 4, 6):
        labs = label_counts(rule, big, CircleLabel("R", 0.4), big)
        assert len({round(lab.theta % (2 * math.pi), 8) for lab, _ in labs}) == 4


def test_hybrid_child_counts_and_handedness():
    rule = get_rule("hybrid")
    for n in range(1, 5):
        counts = rule.child_label_counts(n, CircleLabel("R", 0.2))
        assert sum(c for _, c in counts) == 5 ** (2 * n - 1)
        assert sum(c for lab, c in counts if lab.hand == "R") == 2
        offsets = {round((lab.theta - 0.2 - ALPHA) % HALF_PI, 9) % round(HALF_PI, 9) for lab, _ in counts}
        assert offsets == {0.0}


def test_hybrid_geometric_decomposition_matches_label_counts():
    rule = get_rule("hybrid")
    q = CircleLabel("R", 0.0)
    patch = expand(rule, root_instance(rule, 2, q), 1)
    assert len(patch) == 125
    assert sum(t.label.hand == "R" for t in patch.tiles) == 2
    geo_counts = Counter(rule.canonical(1, t.label) for t in patch.tiles)
    lab_counts = Counter()
    for lab, c in rule.child_label_counts(2, q):
        lab_counts[rule.canonical(1, lab)] += c
    assert geo_counts == lab_counts


# ------------------------------------------------------------ shear


def test_shear_column_sums():
    assert [sum(MATRIX[i][j] for i in range(4)) for j in range(4)] == [16, 4, 4, 1]


def test_shear_alpha_tokens():
    assert parse_alpha("1/2") == (Fraction(1, 2), 0.5)
    assert parse_alpha("sqrt2-1")[0] is None
    for bad in (0.5, "-1/2", "x"):
        with pytest.raises(RuleError):
            parse_alpha(bad)


def test_shear_rational_offsets_are_multiples_of_one_over_q():
    rule = get_rule("shear", alpha="2/3")
    for n in range(1, 7):
        for q in "abcd":
            for _, x, y in rule.offsets(n, q):
                assert (Fraction(x) * 3).denominator == 1 and (Fraction(y) * 3).denominator == 1
    patch = expand(rule, root_instance(rule, 4, "a"), 4)
    xs = np.array([t.placement.translation for t in patch.tiles]) * 3
    assert np.allclose(xs, np.round(xs), atol=1e-9)


def test_shear_sides_follow_recursion():
    for alpha in ("1/2", "sqrt2"):
        rule = get_rule("shear", alpha=alpha)
        assert rule.side(-1) == 1.0
        for n in range(1, 40):
            assert rule.side(n) == pytest.approx(rule.side(n - 1) + 3 * rule.side(n - 2), rel=1e-14)
    assert get_rule("shear", alpha="1/2").side_exact(3) == (Fraction(1, 2) + 3 + 3 * Fraction(1, 2)) + 3 * (Fraction(1, 2) + 3)


def test_shear_side_ratio_within_1e6_of_lambda_by_level_20():
    lam = (1 + math.sqrt(13)) / 2
    for alpha in ("1/2", "sqrt2"):
        rule = get_rule("shear", alpha=alpha)
        assert rule.side(20) / rule.side(19) == pytest.approx(lam, abs=1e-6)


def test_shear_side_ratio_error_decays_at_second_eigenvalue_rate():
    lam = (1 + math.sqrt(13)) / 2
    rate = abs((1 - math.sqrt(13)) / 2) / lam
    rule = get_rule("shear", alpha="1/2")
    errs = [abs(rule.side(n) / rule.side(n - 1) - lam) for n in range(20, 31)]
    ratios = [b / a for a, b in zip(errs, errs[1:])]
    assert all(r == pytest.approx(rate, rel=1e-2) for r in ratios)
    assert abs(rule.side(27) / rule.side(26) - lam) < 1e-6


# ------------------------------------------------------------ varlen


def test_varlen_upper_and_lower_decompositions():
    rule = get_rule("varlen")
    n = 4
    u = Fraction(3, 2) ** n
    kids = rule.children(n, rule.label_space(n).make(Fraction(5, 2) * u))
    assert [k.x for k in kids] == [Fraction(5, 6) * u, Fraction(5, 3) * u]
    kids = rule.children(n, rule.label_space(n).make(Fraction(19, 10) * u))
    assert [k.x for k in kids] == [Fraction(19, 10) * u]


def test_varlen_slit_sides_decompose_differently():
    rule = get_rule("varlen")
    plus = rule.children(1, SlitLabel(Fraction(3), 1))
    minus = rule.children(1, SlitLabel(Fraction(3), -1))
    assert [k.x for k in plus] == [1, 2]
    assert [k.x for k in minus] == [3]
    assert rule.label_space(1).distance(SlitLabel(Fraction(3), 1), SlitLabel(Fraction(3), -1)) > 0


def test_varlen_continuity_at_slits():
    rule = get_rule("varlen")
    for n in range(1, 6):
        space = rule.label_space(n)
        for s in space.slits:
            for side, sign in ((-1, -1), (1, 1)):
                ref = [float(k.x) for k in rule.children(n, SlitLabel(s, side))]
                for e in range(3, 9):
                    near = float(s) + sign * 10.0 ** -e
                    kids = rule.children(n, space.make(near))
                    assert len(kids) == len(ref)
                    assert np.allclose([float(k.x) for k in kids], ref, atol=2 * 10.0 ** -e)


def test_varlen_slit_sets_contain_powers_pattern():
    rule = get_rule("varlen")
    for n in range(1, 7):
        for s in rule.slits(n):
            # special lengths are 3^k (3/2)^m
            r = s
            while r.numerator % 3 == 0:
                r /= 3
            while r.denominator > 1 or r.numerator % 3 == 0:
                r = r * 2 / 3
                if r.numerator % 3 == 0 and r.denominator == 1:
                    continue
                if r.denominator > 1 and r.denominator % 2:
                    break
            assert s.denominator in {2 ** j for j in range(n + 1)}


# ------------------------------------------------------------ full shift


def test_full_shift_net_size_and_entropy():
    fs = get_rule("full-shift")
    for eps in (0.3, 0.1, 0.02):
        net = fs.separated_set(eps)
        space = fs.space
        assert all(space.distance(a, b) >= eps for i, a in enumerate(net) for b in net[i + 1:])
        assert fs.entropy(eps) == pytest.approx(math.log(len(net)))
    assert fs.n_prime(0.02) > fs.n_prime(0.1) > fs.n_prime(0.3)


def test_full_shift_sampler_is_seed_deterministic():
    fs = get_rule("full-shift")
    a = fs.sample_window(50, 0.1, np.random.default_rng(9))
    b = fs.sample_window(50, 0.1, np.random.default_rng(9))
    assert a == b


def test_separation_accepts_exact_tokens_and_rejects_nonsense():
    assert get_rule("toeplitz2", separation="1/100").separation == pytest.approx(0.01)
    assert get_rule("toeplitz2", separation=0.05).separation == pytest.approx(0.05)
    for bad in ("x", "0", "-1/2"):
        with pytest.raises(RuleError):
            get_rule("toeplitz2", separation=bad)
