"""The transition map M_{n,N}: counts, column measures and pushforwards.

``M_{n,N}(P, Q)`` is the number of level-``n`` supertiles of class ``P`` inside
the level-``N`` supertile ``Q``.  For finite label sets it is an integer
matrix; for parametric label spaces columns are computed lazily and memoized.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .fusion import FusionRule, RuleError, label_counts
from .labels import (ArcClass, CirclePair, CompactifiedNaturals, FiniteClass, FiniteSpace,
                     LimitTailClass, SlitClass, SlitInterval)


def _column(rule: FusionRule, n: int, big: int, q) -> list:
    cache = rule.__dict__.setdefault("_column_cache", {})
    key = (n, big, rule.canonical(big, q))
    hit = cache.get(key)
    if hit is None:
        hit = label_counts(rule, big, q, big - n)
        cache[key] = hit
    return hit


@dataclass
class ColumnMeasure:
    """Level-``n`` labels of the level-``N`` supertile ``Q`` with integer weights."""

    n: int
    N: int
    q: object
    items: list

    @property
    def total(self) -> int:
        return sum(c for _, c in self.items)

    def mass(self, label_class) -> int:
        return sum(c for lab, c in self.items if label_class.contains(lab))


def column_measure(rule: FusionRule, n: int, big: int, q) -> ColumnMeasure:
    if n >= big:
        raise RuleError(f"need n < N, got n={n}, N={big}")
    return ColumnMeasure(n, big, q, _column(rule, n, big, q))


def transition_count(rule: FusionRule, n: int, big: int, p_class, q) -> int:
    return column_measure(rule, n, big, q).mass(p_class)


@dataclass
class TransitionMatrix:
    n: int
    N: int
    labels_n: tuple
    labels_N: tuple
    entries: np.ndarray

    def to_json(self) -> str:
        return json.dumps({"n": self.n, "N": self.N, "labels": list(self.labels_n),
                           "entries": self.entries.tolist()})


def transition_matrix(rule: FusionRule, n: int, big: int) -> TransitionMatrix:
    space_n, space_big = rule.label_space(n), rule.label_space(big)
    if not isinstance(space_n, FiniteSpace) or not isinstance(space_big, FiniteSpace):
        raise RuleError("dense transition matrices need finite label sets")
    rows, cols = space_n.names, space_big.names
    m = np.zeros((len(rows), len(cols)), dtype=object)
    for j, q in enumerate(cols):
        for lab, c in _column(rule, n, big, q):
            m[rows.index(lab), j] += c
    return TransitionMatrix(n, big, rows, cols, m)


def partition_classes(rule: FusionRule, n: int) -> list:
    """A finite partition of the level-``n`` labels used for parametric checks."""
    space = rule.label_space(n)
    if isinstance(space, FiniteSpace):
        return [FiniteClass(frozenset([x])) for x in space.names]
    if isinstance(space, CirclePair):
        # offset so that exact multiples of alpha and pi/2 never sit on a cut
        phase = 0.1234567
        width = math.pi / 8
        return [ArcClass(h, phase + j * width, width) for h in ("L", "R") for j in range(16)]
    if isinstance(space, CompactifiedNaturals):
        lo = space.min_index
        singles = [FiniteClass(frozenset([k])) for k in range(lo, lo + 4)]
        return singles + [LimitTailClass(lo + 4, lim, space.limit_of) for lim in space.limit_ids]
    if isinstance(space, SlitInterval):
        cuts = [space.lo + (space.hi - space.lo) * i / 8 for i in range(9)]
        classes = [SlitClass(cuts[0] - 1, cuts[1])]
        return classes + [SlitClass(a, b) for a, b in zip(cuts[1:-1], cuts[2:])]
    raise RuleError(f"no default partition for {type(space).__name__}")


def sample_labels(rule: FusionRule, level: int, eps: float = 0.5) -> list:
    """Deterministic sample of level labels: an eps-net, shifted off special angles."""
    space = rule.label_space(level)
    net = space.epsilon_net(eps)
    if isinstance(space, CirclePair):
        from .labels import CircleLabel

        net = [CircleLabel(x.hand, x.theta + 0.0371) for x in net]
    if isinstance(space, CompactifiedNaturals):
        net = [x for x in net if isinstance(x, str) or x <= level + 6]
    return net


def _class_vector(items, classes) -> list:
    out = [0] * len(classes)
    for lab, c in items:
        hits = [i for i, cl in enumerate(classes) if cl.contains(lab)]
        if len(hits) != 1:
            raise RuleError(f"label {lab} falls in {len(hits)} classes of the partition")
        out[hits[0]] += c
    return out


def matrix_power_check(rule: FusionRule, n: int, m: int, big: int, qs=None) -> bool:
    """``M_{n,N} = M_{n,m} M_{m,N}``, exactly, on a partition of level-``n`` labels."""
    if not n < m < big:
        raise RuleError("need n < m < N")
    classes = partition_classes(rule, n)
    qs = sample_labels(rule, big) if qs is None else qs
    for q in qs:
        direct = _class_vector(_column(rule, n, big, q), classes)
        composed = [0] * len(classes)
        for r, c in _column(rule, m, big, q):
            vec = _class_vector(_column(rule, n, m, r), classes)
            composed = [a + c * b for a, b in zip(composed, vec)]
        if direct != composed:
            return False
    return True


def volume_identity_error(rule: FusionRule, n: int, big: int, q) -> float:
    """Relative error of sum_P Vol(P) M(P, Q) = Vol(Q)."""
    total = sum(c * rule.volume(n, lab) for lab, c in _column(rule, n, big, q))
    vq = rule.volume(big, q)
    return abs(total - vq) / vq


def pushforward(rule: FusionRule, n: int, big: int, nu):
    """``(M nu)(I) = sum_Q nu(Q) #(I in Q)`` for an atomic level-``N`` measure."""
    from .measures import AtomicMeasure

    if not isinstance(nu, AtomicMeasure):
        raise RuleError("pushforward takes atomic measures; grid densities use the transfer operator")
    if nu.level != big:
        raise RuleError(f"measure lives on level {nu.level}, expected {big}")
    out = AtomicMeasure(n)
    for q, w in nu.items():
        if w == 0:
            continue
        for lab, c in _column(rule, n, big, q):
            out.add(rule.canonical(n, lab), lab, w * c)
    return out
