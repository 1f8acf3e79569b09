"""All bi-infinite sequences of solenoid tiles: an i.i.d. window sampler.

This is not a fusion rule.  Windows are sequences of unit tiles with
independent labels drawn uniformly from a maximal eps-separated set of the
compactified naturals, which is enough to realise ``N'(eps)**L`` patterns.
"""

from __future__ import annotations

import math

import numpy as np

from ..labels import CompactifiedNaturals
from .solenoid import INF


class FullShiftSampler:
    name = "full-shift"
    dimension = 1

    def __init__(self):
        self.space = CompactifiedNaturals(lambda k: INF, (INF,))

    def separated_set(self, eps: float) -> list:
        """Maximal eps-separated subset, greedy from ``A_0`` down to the limit."""
        chosen, last = [], None
        k = 0
        while 2.0 ** (-k) >= eps / 2 or last is None:
            h = 2.0 ** (-k)
            if last is None or last - h >= eps:
                chosen.append(k)
                last = h
            k += 1
        if last >= eps:
            chosen.append(INF)
        return chosen

    def n_prime(self, eps: float) -> int:
        return len(self.separated_set(eps))

    def entropy(self, eps: float) -> float:
        return math.log(self.n_prime(eps))

    def sample_window(self, length: int, eps: float, rng: np.random.Generator) -> list:
        pool = self.separated_set(eps)
        return [pool[i] for i in rng.integers(0, len(pool), size=length)]


def make_full_solenoid_shift() -> FullShiftSampler:
    return FullShiftSampler()
