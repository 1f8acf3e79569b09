"""One-dimensional rule with a continuum of supertile lengths.

A level-``n`` supertile has a length ``x`` in ``[(3/2)^n, 3 (3/2)^n]``.  Above
the threshold ``T_n = 2 (3/2)^n`` it splits into a piece of length ``x/3``
(placed on the left) and one of length ``2x/3``; at or below it, the single
child is a level-``n-1`` supertile of the same length.

The decomposition jumps at ``T_n`` and at every length whose children hit a
jump one level down.  Those lengths are slits: each carries two labels,
``x-`` decomposing like lengths just below and ``x+`` like lengths just above.
Children inherit the parent's side whenever their own length is a slit.
"""

from __future__ import annotations

from fractions import Fraction

from .. import geometry as geo
from ..fusion import FusionRule, RuleError
from ..labels import SlitInterval, SlitLabel

THREE_HALVES = Fraction(3, 2)


def lower(n: int) -> Fraction:
    return THREE_HALVES ** n


def upper(n: int) -> Fraction:
    return 3 * THREE_HALVES ** n


def threshold(n: int) -> Fraction:
    return 2 * THREE_HALVES ** n


class VarlenRule(FusionRule):
    name = "varlen"
    dimension = 1

    def __init__(self):
        super().__init__()
        self._slits = {0: frozenset()}
        self._spaces = {}

    def slits(self, n: int) -> frozenset:
        if n < 0:
            raise RuleError("negative level")
        if n not in self._slits:
            prev = self.slits(n - 1)
            lo, hi, t = lower(n), upper(n), threshold(n)
            found = {t}
            for y in prev:
                for x in (3 * y, 3 * y / 2):
                    if t < x < hi:
                        found.add(x)
                if lo < y < t:
                    found.add(y)
            self._slits[n] = frozenset(found)
        return self._slits[n]

    def label_space(self, n: int) -> SlitInterval:
        if n not in self._spaces:
            self._spaces[n] = SlitInterval(lower(n), upper(n), self.slits(n))
        return self._spaces[n]

    def support(self, n: int, label) -> geo.Interval:
        return geo.Interval(0.0, float(label.x))

    def volume(self, n: int, label) -> float:
        return float(label.x)

    def is_upper(self, n: int, label) -> bool:
        t = threshold(n)
        return label.x > t or (label.x == t and label.side == 1)

    def children(self, n: int, label) -> list:
        """Child labels, left to right."""
        x = label.x
        space = self.label_space(n - 1)
        if self.is_upper(n, label):
            parts = [x / 3, 2 * x / 3]
        else:
            parts = [x]
        return [space.make(p, label.side) for p in parts]

    def _decompose(self, n: int, label) -> list:
        out, offset = [], 0
        for child in self.children(n, label):
            out.append((child, geo.Placement((float(offset),))))
            offset = offset + child.x
        return out

    def child_label_counts(self, n: int, label) -> list:
        self.check_label(n, label)
        counts = {}
        for child in self.children(n, label):
            key = (child.x, child.side)
            counts[key] = (child, counts.get(key, (child, 0))[1] + 1)
        return list(counts.values())

    def scaled(self, n: int, r, side: int = 0) -> SlitLabel:
        """Label of length ``r (3/2)^n``; ``r`` should be a Fraction for exact slits."""
        return self.label_space(n).make(r * THREE_HALVES ** n if isinstance(r, Fraction)
                                        else float(r) * float(THREE_HALVES) ** n, side)

    def worst_label(self, n: int) -> SlitLabel:
        """Shortest (worst boundary-to-volume) supertile of level ``n``."""
        return SlitLabel(lower(n), 0)


def make_varlen() -> VarlenRule:
    return VarlenRule()
