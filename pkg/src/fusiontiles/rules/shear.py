"""Four-type rectangle rule whose supertiles shear along fault lines.

Side lengths follow ``s_{-1} = 1``, ``s_0 = alpha`` and
``s_n = s_{n-1} + 3 s_{n-2}``.  Level-``n`` supports (width x height):
``a`` is ``s_n x s_n``, ``b`` is ``s_n x s_{n-1}``, ``c`` is ``s_{n-1} x s_n``
and ``d`` is ``s_{n-1} x s_{n-1}``; every support has its lower-left corner
at the control point.

Layout of a level-``n`` supertile from level-``n-1`` pieces:

* ``a``: ``a`` in the corner, three ``c`` to its right, three ``b`` above it
  and a 3x3 block of ``d`` in the remaining square;
* ``b``: ``a`` followed by three ``c`` in a row;
* ``c``: ``a`` with three ``b`` stacked on top;
* ``d``: a single ``a``.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

from .. import geometry as geo
from ..fusion import FusionRule, RuleError
from ..labels import FiniteSpace

LABELS = ("a", "b", "c", "d")

# M[i][j]: number of level-(n-1) pieces of type i inside a level-n piece of type j
MATRIX = ((1, 1, 1, 1), (3, 0, 3, 0), (3, 3, 0, 0), (9, 0, 0, 0))


def parse_alpha(token) -> tuple:
    """(exact value or None, float value) from ``p/q``, an integer or ``sqrt2-1``/``sqrt2``."""
    if isinstance(token, Fraction):
        return token, float(token)
    if isinstance(token, (int, float)) and not isinstance(token, bool):
        raise RuleError("alpha must be given as an exact token such as '1/2' or 'sqrt2-1'")
    token = str(token).strip()
    named = {"sqrt2-1": math.sqrt(2.0) - 1.0, "sqrt2": math.sqrt(2.0)}
    if token in named:
        return None, named[token]
    if any(ch in token for ch in ".eE"):
        raise RuleError(f"alpha must be an exact token, not a decimal: {token!r}")
    try:
        value = Fraction(token)
    except ValueError as exc:
        raise RuleError(f"unrecognized alpha token {token!r}") from exc
    if value <= 0:
        raise RuleError("alpha must be positive")
    return value, float(value)


class ShearRule(FusionRule):
    name = "shear"
    dimension = 2

    def __init__(self, alpha="1/2", max_level: int = 64):
        exact, value = parse_alpha(alpha)
        if value <= 0:
            raise RuleError("alpha must be positive")
        super().__init__(alpha=alpha)
        self.alpha_exact = exact
        self.alpha = value
        self._space = FiniteSpace(LABELS)
        # s[n + 1] holds s_n; integer pairs (u, v) with s_n = u + v*alpha
        pairs = [(1, 0), (0, 1)]
        while len(pairs) < max_level + 2:
            (u2, v2), (u1, v1) = pairs[-2], pairs[-1]
            pairs.append((u1 + 3 * u2, v1 + 3 * v2))
        self._pairs = pairs
        if exact is not None:
            self._exact = [u + v * exact for u, v in pairs]
        else:
            self._exact = None
        self._sides = [u + v * value for u, v in pairs]

    def side(self, n: int) -> float:
        if n < -1 or n + 1 >= len(self._sides):
            raise RuleError(f"shear side s_{n} out of range")
        return self._sides[n + 1]

    def side_exact(self, n: int):
        return None if self._exact is None else self._exact[n + 1]

    def label_space(self, n: int) -> FiniteSpace:
        return self._space

    def dims(self, n: int, label) -> tuple:
        big, small = self.side(n), self.side(n - 1)
        return {"a": (big, big), "b": (big, small), "c": (small, big), "d": (small, small)}[label]

    def support(self, n: int, label) -> geo.Polygon:
        w, h = self.dims(n, label)
        return geo.Polygon(((0.0, 0.0), (w, 0.0), (w, h), (0.0, h)))

    def volume(self, n: int, label) -> float:
        w, h = self.dims(n, label)
        return w * h

    def offsets(self, n: int, label) -> list:
        """Child (label, x, y) triples in exact units where available."""
        ex = self._exact
        s1 = ex[n] if ex else self._sides[n]          # s_{n-1}
        s2 = ex[n - 1] if ex and n >= 1 else self._sides[n - 1]  # s_{n-2}
        out = [("a", 0, 0)]
        if label == "a":
            out += [("c", s1 + j * s2, 0) for j in range(3)]
            out += [("b", 0, s1 + j * s2) for j in range(3)]
            out += [("d", s1 + i * s2, s1 + j * s2) for i in range(3) for j in range(3)]
        elif label == "b":
            out += [("c", s1 + j * s2, 0) for j in range(3)]
        elif label == "c":
            out += [("b", 0, s1 + j * s2) for j in range(3)]
        return out

    def _decompose(self, n: int, label) -> list:
        if n - 2 < -1:
            raise RuleError("shear levels start at 0")
        return [(lab, geo.Placement((float(x), float(y)))) for lab, x, y in self.offsets(n, label)]

    def child_label_counts(self, n: int, label) -> list:
        j = LABELS.index(label)
        return [(LABELS[i], MATRIX[i][j]) for i in range(4) if MATRIX[i][j]]


def make_shear(alpha="1/2") -> ShearRule:
    return ShearRule(alpha)


def transition_matrix() -> np.ndarray:
    return np.array(MATRIX, dtype=np.int64)
