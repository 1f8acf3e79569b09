"""Dyadic solenoid and Toeplitz flows; conjugacy to period doubling; stretched lengths.

Level-``n`` supertiles are words of length ``2**n`` labelled by an index
``k >= n`` or a limit id; ``P_n(k) = P_{n-1}(k) P_{n-1}(n-1)``.  Unwinding the
recursion, the tile at offset ``i > 0`` of any level-``N`` supertile carries
label ``v2(i)`` (the 2-adic valuation) and offset 0 carries the supertile's
own label.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

from .. import geometry as geo
from ..fusion import FusionRule, RuleError
from ..labels import CompactifiedNaturals

INF = "inf"
INF2 = "inf'"


class SolenoidRule(FusionRule):
    dimension = 1

    def __init__(self, name: str, limit_of, limit_ids, separation: float = 1.0, **params):
        super().__init__(separation=separation, **params)
        self.name = name
        self.limit_of = limit_of
        self.limit_ids = tuple(limit_ids)
        self.separation = separation
        self._base = CompactifiedNaturals(limit_of, limit_ids, 0, separation)

    def label_space(self, n: int) -> CompactifiedNaturals:
        return self._base.restricted(n)

    def support(self, n: int, label) -> geo.Interval:
        return geo.Interval(0.0, float(2 ** n))

    def _decompose(self, n: int, label) -> list:
        half = float(2 ** (n - 1))
        return [(label, geo.Placement((0.0,))), (n - 1, geo.Placement((half,)))]

    def child_label_counts(self, n: int, label) -> list:
        return [(label, 1), (n - 1, 1)]

    def word(self, level: int, label) -> list:
        """Level-0 labels of a level-``level`` supertile, left to right."""
        self.check_label(level, label)
        return [label] + [_v2(i) for i in range(1, 2 ** level)]


def _v2(i: int) -> int:
    return (i & -i).bit_length() - 1


# ------------------------------------------------------------ limit assignments


def parse_bits(token: str):
    """Exact bit predicate ``n -> bit n of alpha`` from a token.

    Tokens: ``sqrt2-1``, a rational ``p/q`` in (0,1), or ``bits:0110`` for a
    repeating binary pattern indexed from bit 1.
    """
    token = token.strip()
    if token == "sqrt2-1":
        # bit n of sqrt(2) - 1 is floor(sqrt(2) * 2^n) mod 2 for n >= 1
        return lambda n: 0 if n < 1 else math.isqrt(2 * 4 ** n) % 2
    if token.startswith("bits:"):
        pattern = token[5:]
        if not pattern or set(pattern) - {"0", "1"}:
            raise RuleError(f"bad bit pattern {token!r}")
        if "0" not in pattern or "1" not in pattern:
            raise RuleError("bit pattern must contain both 0 and 1 so both limits are reached")
        return lambda n: 0 if n < 1 else int(pattern[(n - 1) % len(pattern)])
    if any(ch in token for ch in ".eE"):
        raise RuleError(f"alpha must be an exact token, not a decimal: {token!r}")
    try:
        frac = Fraction(token)
    except ValueError as exc:
        raise RuleError(f"unrecognized alpha token {token!r}") from exc
    if not 0 < frac < 1:
        raise RuleError("alpha must lie in (0, 1)")
    return lambda n: 0 if n < 1 else (frac.numerator * 2 ** n // frac.denominator) % 2


def make_solenoid(limit_assignment=None, limit_ids=(INF,), name: str = "solenoid",
                  separation: float = 1.0, **params) -> SolenoidRule:
    if limit_assignment is None:
        return SolenoidRule(name, lambda k: INF, (INF,), separation, **params)
    return SolenoidRule(name, limit_assignment, limit_ids, separation, **params)


def make_toeplitz2(separation: float = 1.0) -> SolenoidRule:
    """Even indices converge to ``inf``, odd ones to ``inf'``; the limits sit ``separation`` apart."""
    return make_solenoid(lambda k: INF if k % 2 == 0 else INF2, (INF, INF2), "toeplitz2", separation)


def make_toeplitz_alpha(alpha: str = "sqrt2-1", separation: float = 1.0) -> SolenoidRule:
    bit = parse_bits(alpha)
    return make_solenoid(lambda k: INF if bit(k) else INF2, (INF, INF2), "toeplitz-alpha",
                         separation, alpha=alpha)


# ------------------------------------------------------------ period doubling


def letter(label) -> str:
    """X for even indices and ``inf``, Y for odd indices and ``inf'``."""
    if isinstance(label, str):
        return "X" if label == INF else "Y"
    return "X" if label % 2 == 0 else "Y"


def check_admitted(window) -> None:
    """Raise unless ``window`` is a patch of some Toeplitz tiling.

    Finite label ``k`` must occupy exactly one residue class mod ``2**(k+1)``
    among the positions not yet claimed by smaller labels.
    """
    remaining = list(range(len(window)))
    k = 0
    while len(remaining) > 1:
        here = [i for i in remaining if window[i] == k]
        modulus = 2 ** (k + 1)
        if here:
            cls = here[0] % modulus
            expected = [i for i in remaining if i % modulus == cls]
            if expected != here:
                raise RuleError(f"window not admitted: label {k} breaks its residue class mod {modulus}")
        else:
            if len({i % modulus for i in remaining}) > 1:
                raise RuleError(f"window not admitted: label {k} missing where it must occur")
        remaining = [i for i in remaining if window[i] != k]
        k += 1
    limits = [x for x in window if isinstance(x, str)]
    if len(limits) > 1:
        raise RuleError("window not admitted: more than one limit tile")


def toeplitz_to_pd(window) -> list:
    check_admitted(window)
    return [letter(x) for x in window]


def greedy_picks(window) -> list:
    """Anchor positions ``t_0, t_1, ...`` for rebuilding labels from letters.

    Step ``k`` needs an unlabelled tile that is not ``A_k``, a Y for even
    ``k`` and an X for odd ``k``.  The leftmost such tile in the window is
    used; when none exists an equivalent position left of the window stands in.
    """
    check_admitted(window)
    finite = [x for x in window if not isinstance(x, str)]
    top = max(finite) if finite else -1
    remaining = list(range(len(window)))
    picks = []
    for k in range(top + 1):
        modulus = 2 ** (k + 1)
        here = [i for i in remaining if window[i] == k]
        survivors = [i for i in remaining if window[i] != k]
        want = "Y" if k % 2 == 0 else "X"
        chosen = next((i for i in survivors if letter(window[i]) == want), None)
        if chosen is None:
            if here:
                base = here[0] + modulus // 2
            else:
                base = survivors[0]
            chosen = base - modulus * (base // modulus + 1)
        picks.append(chosen)
        remaining = survivors
    return picks


def pd_to_toeplitz(word, picks) -> list:
    n = len(word)
    labels = [None] * n
    for k, p in enumerate(picks):
        if 0 <= p < n:
            want = "Y" if k % 2 == 0 else "X"
            if word[p] != want:
                raise RuleError(f"pick {k} at {p} must be a {want} tile")
            if labels[p] is not None:
                raise RuleError(f"pick {k} at {p} is already labelled")
        modulus = 2 ** (k + 1)
        for i in range(n):
            if labels[i] is None and (i - p) % modulus == modulus // 2:
                labels[i] = k
    return [lab if lab is not None else (INF if word[i] == "X" else INF2)
            for i, lab in enumerate(labels)]


def admitted_window(rule: SolenoidRule, length: int, rng) -> list:
    """Window ``[c, c + length)`` of the tiling with labels ``v2(i)`` and a limit at 0.

    Every admitted finite window occurs in such a tiling; half of the draws
    straddle the limit tile.
    """
    if rng.random() < 0.5:
        c = -int(rng.integers(0, length))
    else:
        c = int(rng.integers(-2 ** 40, 2 ** 40))
    limit = rule.limit_ids[int(rng.integers(len(rule.limit_ids)))]
    return [limit if i == 0 else _v2(abs(i)) for i in range(c, c + length)]


# ------------------------------------------------------------ stretched lengths


def stretch_lengths(context, start: int, stop: int, n_max: int = 64, n_min: int = 11) -> list:
    """Lengths ``1 + sum 1/n`` over ``n_min <= n <= n_max`` with an ``A_n``
    within ``n**2`` tiles; needs ``n_max**2`` tiles of context on each side."""
    radius = n_max * n_max
    if start < radius or len(context) - stop < radius:
        raise RuleError(f"stretch_lengths needs {radius} tiles of context on each side of the window")
    positions = {}
    for i, lab in enumerate(context):
        if not isinstance(lab, str) and n_min <= lab <= n_max:
            positions.setdefault(int(lab), []).append(i)
    arrays = {n: np.asarray(p) for n, p in sorted(positions.items())}
    out = []
    for t in range(start, stop):
        total = 0.0
        for n, pos in arrays.items():
            j = np.searchsorted(pos, t)
            near = min((abs(int(pos[m]) - t) for m in (j - 1, j) if 0 <= m < len(pos)))
            if near <= n * n:
                total += 1.0 / n
        out.append(1.0 + total)
    return out
