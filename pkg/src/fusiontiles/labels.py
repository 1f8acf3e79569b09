"""Compact label spaces with metrics, measurable classes and epsilon-nets.

Four families are provided:

* ``FiniteSpace``: a finite set of names with the discrete metric.
* ``CirclePair``: two circles of angles, one per handedness ``L``/``R``.
* ``CompactifiedNaturals``: labels ``0, 1, 2, ...`` plus finitely many limit
  points; each integer converges to the limit named by ``limit_of(k)``.
* ``SlitInterval``: an interval cut at finitely many slit points, each slit
  split into a left copy ``x-`` and a right copy ``x+``.

All metrics are capped at 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

TWO_PI = 2.0 * math.pi


class LabelError(ValueError):
    pass


# ---------------------------------------------------------------- label values


@dataclass(frozen=True)
class CircleLabel:
    hand: str
    theta: float

    def __post_init__(self):
        if self.hand not in ("L", "R"):
            raise LabelError(f"hand must be 'L' or 'R', got {self.hand!r}")
        object.__setattr__(self, "theta", normalize_angle(self.theta))

    def __str__(self):
        return f"{self.hand},{self.theta:.6f}"


@dataclass(frozen=True)
class SlitLabel:
    """A point of a slit interval; ``side`` is -1/+1 at slits and 0 elsewhere."""

    x: object
    side: int = 0

    def __str__(self):
        mark = {-1: "-", 0: "", 1: "+"}[self.side]
        return f"{self.x}{mark}"


def normalize_angle(theta: float) -> float:
    t = math.fmod(float(theta), TWO_PI)
    if t < 0:
        t += TWO_PI
    if t >= TWO_PI:
        t -= TWO_PI
    return t


def arc_distance(a: float, b: float) -> float:
    d = abs(normalize_angle(a) - normalize_angle(b))
    return min(d, TWO_PI - d)


# ---------------------------------------------------------------- label classes


@dataclass(frozen=True)
class FiniteClass:
    names: frozenset

    def contains(self, label) -> bool:
        return label in self.names


@dataclass(frozen=True)
class ArcClass:
    """Angles in the half-open arc [start, start + width) with a given hand."""

    hand: str
    start: float
    width: float

    def contains(self, label) -> bool:
        if not isinstance(label, CircleLabel) or label.hand != self.hand:
            return False
        offset = normalize_angle(label.theta - self.start)
        return offset < self.width


@dataclass(frozen=True)
class NaturalsClass:
    """Integers in [lo, hi) together with a set of limit ids."""

    lo: int
    hi: float
    limits: frozenset = frozenset()

    def contains(self, label) -> bool:
        if isinstance(label, str):
            return label in self.limits
        return self.lo <= label < self.hi


@dataclass(frozen=True)
class LimitTailClass:
    """Integers ``>= lo`` converging to ``limit``, together with the limit itself."""

    lo: int
    limit: str
    limit_of: Callable[[int], str]

    def contains(self, label) -> bool:
        if isinstance(label, str):
            return label == self.limit
        return label >= self.lo and self.limit_of(int(label)) == self.limit


@dataclass(frozen=True)
class SlitClass:
    """Labels strictly right of ``lo`` and left of ``hi`` in the slit order."""

    lo: object
    hi: object

    def contains(self, label) -> bool:
        return _slit_key(label) > (self.lo, 0) and _slit_key(label) <= (self.hi, 0)


def _slit_key(label: SlitLabel):
    return (label.x, label.side)


# ---------------------------------------------------------------- spaces


class FiniteSpace:
    kind = "finite"

    def __init__(self, names):
        self.names = tuple(names)

    def contains(self, label) -> bool:
        return label in self.names

    def check(self, label):
        if not self.contains(label):
            raise LabelError(f"{label!r} is not in finite space {self.names}")

    def distance(self, a, b) -> float:
        self.check(a)
        self.check(b)
        return 0.0 if a == b else 1.0

    def epsilon_net(self, eps: float) -> list:
        return list(self.names)

    def random_label(self, rng):
        return self.names[int(rng.integers(len(self.names)))]

    def canonical(self, label):
        return label

    def to_json(self, label) -> dict:
        return {"kind": "finite", "name": label}

    def from_json(self, data):
        return data["name"]


class CirclePair:
    kind = "circle"

    def contains(self, label) -> bool:
        return isinstance(label, CircleLabel)

    def check(self, label):
        if not self.contains(label):
            raise LabelError(f"{label!r} is not a circle-pair label")

    def distance(self, a, b) -> float:
        self.check(a)
        self.check(b)
        if a.hand != b.hand:
            return 1.0
        return min(1.0, arc_distance(a.theta, b.theta))

    def epsilon_net(self, eps: float) -> list:
        count = max(1, int(math.ceil(TWO_PI / eps - 1e-12)))
        step = TWO_PI / count
        return [CircleLabel(h, i * step) for h in ("L", "R") for i in range(count)]

    def random_label(self, rng):
        hand = "LR"[int(rng.integers(2))]
        return CircleLabel(hand, float(rng.uniform(0.0, TWO_PI)))

    def canonical(self, label):
        t = round(label.theta, 9)
        return (label.hand, 0.0 if t >= round(TWO_PI, 9) else t)

    def to_json(self, label) -> dict:
        return {"kind": "circle", "hand": label.hand, "theta": label.theta}

    def from_json(self, data):
        return CircleLabel(data["hand"], float(data["theta"]))

    @staticmethod
    def code_distance(hand_a, theta_a, hand_b, theta_b):
        """Vectorized metric on (hand, angle) arrays."""
        d = np.abs(np.mod(theta_a - theta_b + math.pi, TWO_PI) - math.pi)
        return np.where(hand_a == hand_b, np.minimum(d, 1.0), 1.0)


class CompactifiedNaturals:
    """One-point (or finitely-many-point) compactification of the naturals.

    ``limit_of(k)`` names the limit point that ``A_k`` converges to.  Within a
    limit class ``d(A_j, A_k) = |2^-j - 2^-k|`` and ``d(A_k, limit) = 2^-k``.
    Across classes the distance is ``min(1, 2^-j + separation + 2^-k)``; with
    the default separation of 1 every cross-class pair sits at distance 1.
    """

    kind = "nat"

    def __init__(self, limit_of: Callable[[int], str], limit_ids, min_index: int = 0,
                 separation: float = 1.0):
        self.limit_of = limit_of
        self.limit_ids = tuple(limit_ids)
        self.min_index = int(min_index)
        self.separation = float(separation)

    def restricted(self, min_index: int) -> "CompactifiedNaturals":
        return CompactifiedNaturals(self.limit_of, self.limit_ids, min_index, self.separation)

    def contains(self, label) -> bool:
        if isinstance(label, str):
            return label in self.limit_ids
        return isinstance(label, (int, np.integer)) and label >= self.min_index

    def check(self, label):
        if not self.contains(label):
            raise LabelError(f"{label!r} is not in naturals space (min index {self.min_index})")

    def limit_class(self, label) -> str:
        return label if isinstance(label, str) else self.limit_of(int(label))

    @staticmethod
    def _height(label) -> float:
        return 0.0 if isinstance(label, str) else 2.0 ** (-int(label))

    def distance(self, a, b) -> float:
        self.check(a)
        self.check(b)
        if a == b:
            return 0.0
        ha, hb = self._height(a), self._height(b)
        if self.limit_class(a) == self.limit_class(b):
            return min(1.0, abs(ha - hb))
        return min(1.0, ha + self.separation + hb)

    def epsilon_net(self, eps: float) -> list:
        net = []
        k = self.min_index
        while 2.0 ** (-k) >= eps:
            net.append(k)
            k += 1
        # every remaining index is within eps of its own limit point
        return net + list(self.limit_ids)

    def random_label(self, rng, max_index: int = 60):
        if rng.random() < 0.1:
            return self.limit_ids[int(rng.integers(len(self.limit_ids)))]
        # geometric so that deep indices are exercised
        return self.min_index + min(int(rng.geometric(0.3)) - 1, max_index)

    def canonical(self, label):
        return label

    def to_json(self, label) -> dict:
        if isinstance(label, str):
            return {"kind": "nat", "limit": label}
        return {"kind": "nat", "index": int(label)}

    def from_json(self, data):
        return data["limit"] if "limit" in data else int(data["index"])


class SlitInterval:
    """Interval [lo, hi] cut open at each slit; slits carry left/right copies.

    Labels on the same side of every slit are at distance ``|x - y|``.  When
    a slit separates them the largest gap penalty of the separating slits is
    added, where a slit's penalty is ``min(1, distance to its nearest other
    special point)``.  The penalty keeps ``z-`` and ``z+`` apart.
    """

    kind = "slit"

    def __init__(self, lo, hi, slits=()):
        self.lo = lo
        self.hi = hi
        self.slits = tuple(sorted(s for s in set(slits) if lo < s < hi))
        marks = (lo,) + self.slits + (hi,)
        self._penalty = {}
        for i, s in enumerate(self.slits, start=1):
            gap = min(s - marks[i - 1], marks[i + 1] - s)
            self._penalty[s] = min(1.0, float(gap))

    def is_slit(self, x) -> bool:
        return x in self._penalty

    def effective_side(self, label: SlitLabel) -> int:
        if label.side:
            return label.side
        if label.x == self.lo:
            return 1
        if label.x == self.hi:
            return -1
        return 0

    def contains(self, label) -> bool:
        if not isinstance(label, SlitLabel):
            return False
        if not (self.lo <= label.x <= self.hi):
            return False
        if self.is_slit(label.x):
            return label.side in (-1, 1)
        return label.side == 0 or label.x in (self.lo, self.hi)

    def check(self, label):
        if not self.contains(label):
            raise LabelError(f"{label} is not in slit interval [{self.lo}, {self.hi}] with slits {self.slits}")

    def make(self, x, side: int = 0) -> SlitLabel:
        """Build a label, keeping ``side`` only where ``x`` is a slit."""
        return SlitLabel(x, side if self.is_slit(x) else 0)

    def _separating_penalty(self, a: SlitLabel, b: SlitLabel) -> float:
        if (a.x, self.effective_side(a)) > (b.x, self.effective_side(b)):
            a, b = b, a
        pen = 0.0
        for s, p in self._penalty.items():
            left_of_cut = a.x < s or (a.x == s and a.side == -1)
            right_of_cut = b.x > s or (b.x == s and b.side == 1)
            if left_of_cut and right_of_cut:
                pen = max(pen, p)
        return pen

    def distance(self, a, b) -> float:
        self.check(a)
        self.check(b)
        return min(1.0, abs(float(a.x) - float(b.x)) + self._separating_penalty(a, b))

    def components(self) -> list:
        marks = (self.lo,) + self.slits + (self.hi,)
        return list(zip(marks[:-1], marks[1:]))

    def epsilon_net(self, eps: float) -> list:
        net = []
        for a, b in self.components():
            count = max(1, int(math.ceil(float(b - a) / eps)))
            for i in range(count + 1):
                if i == 0:
                    x = a
                elif i == count:
                    x = b
                else:
                    x = float(a) + (float(b) - float(a)) * i / count
                side = 0
                if i == 0 and self.is_slit(a):
                    side = 1
                if i == count and self.is_slit(b):
                    side = -1
                net.append(SlitLabel(x, side))
        return net

    def random_label(self, rng):
        return SlitLabel(float(rng.uniform(float(self.lo), float(self.hi))), 0)

    def canonical(self, label):
        return (float(label.x), label.side)

    def to_json(self, label) -> dict:
        x = label.x
        xs = f"{x.numerator}/{x.denominator}" if isinstance(x, Fraction) else float(x)
        return {"kind": "slit", "x": xs, "side": {-1: "-", 0: "", 1: "+"}[label.side]}

    def from_json(self, data):
        x = data["x"]
        x = Fraction(x) if isinstance(x, str) else float(x)
        return SlitLabel(x, {"-": -1, "": 0, "+": 1}[data.get("side", "")])


def label_distance(space, a, b) -> float:
    return space.distance(a, b)


def epsilon_net(space, eps: float) -> list:
    if eps <= 0:
        raise LabelError("epsilon must be positive")
    return space.epsilon_net(eps)


def label_to_json(label) -> dict:
    """Tagged-union JSON for any label value, without needing its space."""
    if isinstance(label, CircleLabel):
        return {"kind": "circle", "hand": label.hand, "theta": label.theta}
    if isinstance(label, SlitLabel):
        return SlitInterval(0, 1).to_json(label)
    if isinstance(label, (int, np.integer)):
        return {"kind": "nat", "index": int(label)}
    if isinstance(label, str) and label.startswith("inf"):
        return {"kind": "nat", "limit": label}
    return {"kind": "finite", "name": label}


def label_from_json(data):
    kind = data["kind"]
    if kind == "circle":
        return CircleLabel(data["hand"], float(data["theta"]))
    if kind == "slit":
        return SlitInterval(0, 1).from_json(data)
    if kind == "nat":
        return data["limit"] if "limit" in data else int(data["index"])
    return data["name"]
