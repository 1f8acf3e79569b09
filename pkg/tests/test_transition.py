from __future__ import annotations

import math

import numpy as np
import pytest

from fusiontiles.fusion import RuleError, expand, root_instance
from fusiontiles.labels import ArcClass, CircleLabel, FiniteClass, LimitTailClass
from fusiontiles.measures import AtomicMeasure
from fusiontiles.rules import get_rule
from fusiontiles.rules.pinwheel import ALPHA
from fusiontiles.rules.shear import LABELS, transition_matrix as shear_matrix
from fusiontiles.transition import (column_measure, matrix_power_check, partition_classes, pushforward,
                                    sample_labels, transition_count, transition_matrix,
                                    volume_identity_error)


def test_shear_m02_d_a_is_nine_by_count_and_matrix_power():
    rule = get_rule("shear", alpha="1/2")
    assert transition_count(rule, 0, 2, FiniteClass(frozenset("d")), "a") == 9
    m2 = np.linalg.matrix_power(shear_matrix(), 2)
    assert list(m2[3]) == [9, 9, 9, 9]
    brute = sum(t.label == "d" for t in expand(rule, root_instance(rule, 2, "a"), 2).tiles)
    assert brute == 9


def test_shear_transition_matrices_are_matrix_powers():
    rule = get_rule("shear", alpha="sqrt2")
    for n in range(0, 3):
        for big in range(n + 1, 5):
            m = transition_matrix(rule, n, big)
            assert m.labels_n == LABELS
            oracle = np.linalg.matrix_power(shear_matrix(), big - n)
            assert np.array_equal(m.entries.astype(np.int64), oracle)


def test_solenoid_counts_two_to_big_minus_k_minus_one():
    rule = get_rule("solenoid")
    for big in range(1, 7):
        for n in range(big):
            for q in (big, big + 2, "inf"):
                for k in range(n, big):
                    assert transition_count(rule, n, big, FiniteClass(frozenset([k])), q) == 2 ** (big - k - 1)


def test_pinwheel_m_n_n_plus_one_is_two_for_l_theta_plus_alpha():
    rule = get_rule("pinwheel")
    theta = 0.5
    target = ArcClass("L", theta + ALPHA - 1e-7, 2e-7)
    assert transition_count(rule, 3, 4, target, CircleLabel("R", theta)) == 2


def test_matrix_power_check_examples():
    assert matrix_power_check(get_rule("shear"), 0, 1, 3)
    assert matrix_power_check(get_rule("solenoid"), 0, 2, 4)
    assert matrix_power_check(get_rule("pinwheel"), 0, 1, 2)
    with pytest.raises(RuleError):
        matrix_power_check(get_rule("shear"), 2, 1, 3)


def test_solenoid_composition_on_explicit_classes():
    rule = get_rule("solenoid")
    classes = [FiniteClass(frozenset([k])) for k in range(4)]
    classes.append(LimitTailClass(4, "inf", rule.limit_of))
    for q in (4, 7, "inf"):
        direct = [column_measure(rule, 0, 4, q).mass(c) for c in classes]
        composed = [0] * len(classes)
        for r, cnt in column_measure(rule, 2, 4, q).items:
            col = column_measure(rule, 0, 2, r)
            composed = [a + cnt * col.mass(c) for a, c in zip(composed, classes)]
        assert direct == composed


def test_column_measure_total_matches_expand():
    rule = get_rule("varlen")
    q = sample_labels(rule, 4)[5]
    col = column_measure(rule, 1, 4, q)
    assert col.total == len(expand(rule, root_instance(rule, 4, q), 3))
    with pytest.raises(RuleError):
        column_measure(rule, 4, 4, q)


@pytest.mark.parametrize("name", ["solenoid", "toeplitz-alpha", "pinwheel", "antipinwheel", "shear", "varlen"])
def test_volume_identity_on_sampled_labels(name, rng):
    rule = get_rule(name)
    big = 4
    qs = sample_labels(rule, big, eps=0.05)
    picks = [qs[i] for i in rng.integers(0, len(qs), size=100)]
    for q in picks:
        assert volume_identity_error(rule, 0, big, q) < 1e-9


def test_finite_additivity_over_partition():
    rule = get_rule("pinwheel")
    q = CircleLabel("R", 0.3)
    classes = partition_classes(rule, 0)
    total = column_measure(rule, 0, 3, q).total
    assert sum(transition_count(rule, 0, 3, c, q) for c in classes) == total


def test_pushforward_of_point_mass_counts_per_volume():
    rule = get_rule("shear", alpha="1/2")
    vol = rule.volume(2, "a")
    nu = AtomicMeasure(2, [("a", "a", 1.0 / vol)])
    out = pushforward(rule, 0, 2, nu)
    m2 = np.linalg.matrix_power(shear_matrix(), 2)
    for i, lab in enumerate(LABELS):
        assert out.weight(lab) == pytest.approx(m2[i, 0] / vol, rel=1e-14)


def test_pushforward_preserves_volume_normalization(rng):
    rule = get_rule("shear", alpha="sqrt2")
    for _ in range(20):
        w = rng.random(4)
        nu = AtomicMeasure(3, [(lab, lab, float(x)) for lab, x in zip(LABELS, w)]).normalized(rule)
        assert pushforward(rule, 1, 3, nu).total_volume(rule) == pytest.approx(1.0, abs=1e-12)


def test_pushforward_is_linear(rng):
    rule = get_rule("shear")
    a = AtomicMeasure(2, [(lab, lab, float(x)) for lab, x in zip(LABELS, rng.random(4))])
    b = AtomicMeasure(2, [(lab, lab, float(x)) for lab, x in zip(LABELS, rng.random(4))])
    mix = AtomicMeasure(2)
    for m, s in ((a, 2.0), (b, 3.0)):
        for k in m.keys():
            mix.add(k, k, s * m.weight(k))
    lhs = pushforward(rule, 0, 2, mix)
    pa, pb = pushforward(rule, 0, 2, a), pushforward(rule, 0, 2, b)
    for k in LABELS:
        assert lhs.weight(k) == pytest.approx(2.0 * pa.weight(k) + 3.0 * pb.weight(k), rel=1e-13)


def test_pushforward_level_mismatch_raises():
    rule = get_rule("shear")
    with pytest.raises(RuleError):
        pushforward(rule, 0, 2, AtomicMeasure(3, [("a", "a", 1.0)]))


def test_transition_matrix_json_export():
    import json

    data = json.loads(transition_matrix(get_rule("shear"), 0, 1).to_json())
    assert data["labels"] == list(LABELS)
    assert data["entries"][3] == [9, 0, 0, 0]
