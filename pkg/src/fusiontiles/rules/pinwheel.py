"""Pinwheel, anti-pinwheel and hybrid rules on 1-2-sqrt5 right triangles.

A label ``(H, theta)`` means the prototile of hand ``H`` rotated by
``theta`` about the origin; level-``n`` supertiles are scaled by
``5**(n/2)`` (``5**(n*n/2)`` for the hybrid).  Children are placed by
translation only since their rotation lives in the label.

The dissection of the sqrt5-scaled triangle: drop the altitude from the
right angle, leaving a small copy and a copy of twice the linear size; the
big copy is cut at the midpoint of its long leg into a corner triangle, a top
triangle and a 2x1 rectangle.  The pinwheel splits the rectangle along one
diagonal, the anti-pinwheel along the other.
"""

from __future__ import annotations

import math
from collections import Counter

import numpy as np

from .. import geometry as geo
from ..fusion import FusionRule, RuleError
from ..labels import CircleLabel, CirclePair, normalize_angle

ALPHA = math.atan2(1.0, 2.0)
HALF_PI = math.pi / 2
SQRT5 = math.sqrt(5.0)

# prototile vertices: long-leg end, right angle, short-leg end
PROTO = {
    "R": np.array([(-1.5, -0.5), (0.5, -0.5), (0.5, 0.5)]),
    "L": np.array([(-1.5, 0.5), (0.5, 0.5), (0.5, -0.5)]),
}


def proto_polygon(hand: str) -> geo.Polygon:
    v = PROTO[hand]
    if geo.signed_area(v) < 0:
        v = v[::-1]
    return geo.Polygon(tuple(map(tuple, v)))


def _rot(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def _identify(tri: np.ndarray):
    """(hand, angle, translation) placing a unit prototile onto triangle ``tri``."""
    d = np.linalg.norm(tri[:, None] - tri[None], axis=-1)
    # the right-angle vertex is opposite the hypotenuse (longest side)
    i_long = np.unravel_index(np.argmax(d), d.shape)
    r = tri[3 - i_long[0] - i_long[1]]
    ends = [tri[i] for i in i_long]
    a, b = sorted(ends, key=lambda p: -np.linalg.norm(p - r))
    cross = (a - r)[0] * (b - r)[1] - (a - r)[1] * (b - r)[0]
    hand = "R" if cross < 0 else "L"
    theta = math.atan2((a - r)[1], (a - r)[0]) - math.pi
    t = r - _rot(theta) @ PROTO[hand][1]
    return hand, theta, t


def _snap(phi: float) -> tuple:
    """Write ``phi`` as ``k*ALPHA + m*pi/2`` with small integers."""
    for k in (-1, 0, 1, -2, 2):
        for m in range(4):
            if abs(math.remainder(phi - k * ALPHA - m * HALF_PI, 2 * math.pi)) < 1e-9:
                return k, m
    raise RuleError(f"child angle {phi} is not of the form k*alpha + m*pi/2")


def _dissection(anti: bool) -> list:
    """Children of the level-1 (R, 0) supertile as (hand, k, m, translation)."""
    big = SQRT5 * PROTO["R"]
    a, r, b = big
    # foot of the altitude from the right angle onto the hypotenuse
    u = (b - a) / np.linalg.norm(b - a)
    f = a + np.dot(r - a, u) * u
    small = np.array([r, f, b])
    # big triangle: right angle f, long leg to a, short leg to r
    def pt(t, s):
        return f + t * (a - f) + s * (r - f)

    pieces = [pt(.5, 0), pt(1, 0), pt(.5, .5)], [pt(0, .5), pt(.5, .5), pt(0, 1)]
    if anti:
        halves = [pt(0, 0), pt(.5, 0), pt(0, .5)], [pt(.5, 0), pt(.5, .5), pt(0, .5)]
    else:
        halves = [pt(0, 0), pt(.5, 0), pt(.5, .5)], [pt(0, 0), pt(.5, .5), pt(0, .5)]
    out = []
    for tri in (small, *pieces, *halves):
        hand, theta, t = _identify(np.asarray(tri))
        k, m = _snap(theta)
        out.append((hand, k, m, t))
    return out


def _mirror(table: list) -> list:
    flip = {"L": "R", "R": "L"}
    return [(flip[h], -k, (-m) % 4, np.array([t[0], -t[1]])) for h, k, m, t in table]


class TriangleRule(FusionRule):
    """Shared machinery for rules built from the 1-2-sqrt5 dissection."""

    dimension = 2

    def __init__(self, anti: bool, **params):
        super().__init__(**params)
        table_r = _dissection(anti)
        self.tables = {"R": table_r, "L": _mirror(table_r)}
        self._space = CirclePair()

    def label_space(self, n: int) -> CirclePair:
        return self._space

    def scale(self, n: int) -> float:
        return SQRT5 ** n

    def support(self, n: int, label) -> geo.Polygon:
        v = self.scale(n) * (PROTO[label.hand] @ _rot(label.theta).T)
        if geo.signed_area(v) < 0:
            v = v[::-1]
        return geo.Polygon(tuple(map(tuple, v)))

    def volume(self, n: int, label) -> float:
        return self.scale(n) ** 2

    def _step(self, n: int, label) -> list:
        """One dissection step at scale ``5**((n-1)/2)`` relative to a level-n parent."""
        rot = _rot(label.theta)
        s = self.scale(n) / SQRT5
        out = []
        for hand, k, m, t in self.tables[label.hand]:
            child = CircleLabel(hand, label.theta + (k * ALPHA + m * HALF_PI))
            out.append((child, geo.Placement(tuple(s * (rot @ t)))))
        return out

    def child_offsets(self, hand: str) -> list:
        return [(h, k * ALPHA + m * HALF_PI) for h, k, m, _ in self.tables[hand]]


class PinwheelRule(TriangleRule):
    name = "pinwheel"

    def __init__(self):
        super().__init__(anti=False)

    def _decompose(self, n: int, label) -> list:
        return self._step(n, label)

    def child_label_counts(self, n: int, label) -> list:
        counts = Counter()
        for hand, phi in self.child_offsets(label.hand):
            counts[(hand, phi)] += 1
        return [(CircleLabel(h, label.theta + phi), c) for (h, phi), c in counts.items()]


class AntiPinwheelRule(PinwheelRule):
    name = "antipinwheel"

    def __init__(self):
        TriangleRule.__init__(self, anti=True)


def make_pinwheel() -> PinwheelRule:
    return PinwheelRule()


def make_antipinwheel() -> AntiPinwheelRule:
    return AntiPinwheelRule()


# ------------------------------------------------------------ batched kernels


def batch_children(rule: TriangleRule, hand: np.ndarray, theta: np.ndarray, pos: np.ndarray,
                   child_scale: float):
    """Vectorized dissection of many triangles; hands are 0 for L and 1 for R.

    ``pos`` holds placement translations, ``child_scale`` the linear size of
    the children relative to the prototile.
    """
    outs_h, outs_t, outs_p = [], [], []
    for code, name in ((0, "L"), (1, "R")):
        sel = hand == code
        if not sel.any():
            continue
        th, p = theta[sel], pos[sel]
        c, s = np.cos(th), np.sin(th)
        for h, k, m, t in rule.tables[name]:
            tx = child_scale * (c * t[0] - s * t[1])
            ty = child_scale * (s * t[0] + c * t[1])
            outs_h.append(np.full(len(th), 1 if h == "R" else 0, dtype=np.int8))
            outs_t.append(np.mod(th + (k * ALPHA + m * HALF_PI), 2 * math.pi))
            outs_p.append(p + np.stack([tx, ty], axis=1))
    if not outs_h:
        return np.zeros(0, dtype=np.int8), np.zeros(0), np.zeros((0, 2))
    return np.concatenate(outs_h), np.concatenate(outs_t), np.vstack(outs_p)


def batch_vertices(hand: np.ndarray, theta: np.ndarray, pos: np.ndarray, scale: float) -> np.ndarray:
    """(m, 3, 2) vertex arrays of placed triangles."""
    base = np.where(hand[:, None, None] == 1, PROTO["R"][None], PROTO["L"][None]) * scale
    c, s = np.cos(theta)[:, None], np.sin(theta)[:, None]
    x = c * base[..., 0] - s * base[..., 1] + pos[:, None, 0]
    y = s * base[..., 0] + c * base[..., 1] + pos[:, None, 1]
    return np.stack([x, y], axis=-1)


def tiles_of(rule: TriangleRule, n: int, label, depth: int | None = None):
    """All level-(n-depth) tiles of an (n, label) supertile as arrays."""
    depth = n if depth is None else depth
    hand = np.array([1 if label.hand == "R" else 0], dtype=np.int8)
    theta = np.array([label.theta])
    pos = np.zeros((1, 2))
    for level in range(n, n - depth, -1):
        hand, theta, pos = rule.batch_step(level, hand, theta, pos)
    return hand, theta, pos


def _pin_batch_step(rule, level, hand, theta, pos):
    return batch_children(rule, hand, theta, pos, rule.scale(level) / SQRT5)


TriangleRule.batch_step = _pin_batch_step


# ------------------------------------------------------------ hybrid


class HybridRule(TriangleRule):
    """Level-``n`` supertile: ``2n-2`` anti-pinwheel steps, then one more step
    that is a pinwheel step on the cell holding the parent's centre of mass and
    anti-pinwheel everywhere else; ``5**(2n-1)`` children in all."""

    name = "hybrid"

    def __init__(self):
        TriangleRule.__init__(self, anti=True)
        self.pin_tables = PinwheelRule().tables
        self._path_cache = {}

    def scale(self, n: int) -> float:
        return SQRT5 ** (n * n)

    def _centre_cell(self, n: int, label):
        """Hand, angle offset and position (in units of the parent scale) of the
        cell containing the parent's centre of mass after ``2n-2`` anti steps."""
        key = (n, label.hand)
        hit = self._path_cache.get(key)
        if hit is None:
            target = PROTO[label.hand].mean(axis=0)
            hand, phi, pos = label.hand, 0.0, np.zeros(2)
            size = 1.0
            for _ in range(2 * n - 2):
                size /= SQRT5
                found = []
                for h, k, m, t in self.tables[hand]:
                    ch_phi = phi + (k * ALPHA + m * HALF_PI)
                    ch_pos = pos + size * (_rot(phi) @ t)
                    verts = size * (PROTO[h] @ _rot(ch_phi).T) + ch_pos
                    if _inside(target, verts, 1e-9 * size * size):
                        found.append((h, ch_phi, ch_pos))
                if not found:
                    raise RuleError("centre of mass escaped the subdivision")
                # on a shared edge the cell first in canonical order wins
                found.sort(key=lambda c: (round(c[2][0], 9), round(c[2][1], 9)))
                hand, phi, pos = found[0]
            hit = (hand, phi, pos)
            self._path_cache[key] = hit
        return hit

    def _decompose(self, n: int, label) -> list:
        if n > 3:
            raise RuleError("geometric hybrid decomposition is limited to levels <= 3; "
                            "use child_label_counts for label statistics")
        root_h = np.array([1 if label.hand == "R" else 0], dtype=np.int8)
        hand, theta, pos = root_h, np.array([label.theta]), np.zeros((1, 2))
        big = self.scale(n)
        size = big
        for _ in range(2 * n - 2):
            size /= SQRT5
            hand, theta, pos = batch_children(self, hand, theta, pos, size)
        cell_hand, cell_phi, cell_pos = self._centre_cell(n, label)
        target = big * (_rot(label.theta) @ cell_pos)
        pick = int(np.argmin(np.linalg.norm(pos - target, axis=1)))
        if np.linalg.norm(pos[pick] - target) > 1e-6 * big:
            raise RuleError("centre-of-mass cell not found among the subdivided cells")
        rest = np.ones(len(hand), dtype=bool)
        rest[pick] = False
        child_size = size / SQRT5
        h1, t1, p1 = batch_children(self, hand[rest], theta[rest], pos[rest], child_size)
        h2, t2, p2 = batch_children(_PinTables(self.pin_tables), hand[~rest], theta[~rest],
                                    pos[~rest], child_size)
        hand = np.concatenate([h1, h2])
        theta = np.concatenate([t1, t2])
        pos = np.vstack([p1, p2])
        return [(CircleLabel("R" if h else "L", float(t)), geo.Placement((float(p[0]), float(p[1]))))
                for h, t, p in zip(hand, theta, pos)]

    def child_label_counts(self, n: int, label) -> list:
        counts = Counter({(label.hand, 0.0): 1})
        offsets = {h: [(ch, k * ALPHA + m * HALF_PI) for ch, k, m, _ in self.tables[h]] for h in "LR"}
        for _ in range(2 * n - 2):
            nxt = Counter()
            for (h, phi), c in counts.items():
                for ch, d in offsets[h]:
                    nxt[(ch, _wrap(phi + d))] += c
            counts = nxt
        cell_hand, cell_phi, _ = self._centre_cell(n, label)
        key = (cell_hand, _wrap(cell_phi))
        if counts[key] < 1:
            raise RuleError("centre-of-mass cell missing from the label counts")
        counts[key] -= 1
        final = Counter()
        for (h, phi), c in counts.items():
            if c:
                for ch, d in offsets[h]:
                    final[(ch, _wrap(phi + d))] += c
        for ch, k, m, _ in self.pin_tables[cell_hand]:
            final[(ch, _wrap(key[1] + k * ALPHA + m * HALF_PI))] += 1
        return [(CircleLabel(h, label.theta + phi), c) for (h, phi), c in final.items() if c]

    def batch_step(self, level, hand, theta, pos):
        raise RuleError("hybrid supertiles are expanded through decompose")


class _PinTables:
    def __init__(self, tables):
        self.tables = tables


def _wrap(phi: float) -> float:
    # keep offsets canonical so equal angles share a dictionary key
    return round(normalize_angle(phi), 12) % round(2 * math.pi, 12)


def _inside(p: np.ndarray, verts: np.ndarray, tol: float) -> bool:
    """Point in the closed triangle, either orientation."""
    signs = []
    for a, b in zip(verts, np.roll(verts, -1, axis=0)):
        signs.append((b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]))
    signs = np.array(signs)
    return bool((signs >= -tol).all() or (signs <= tol).all())


def make_hybrid() -> HybridRule:
    return HybridRule()
