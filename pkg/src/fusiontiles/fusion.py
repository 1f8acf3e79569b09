"""Fusion rules, supertile instances, patches and the structural diagnostics.

A fusion rule says how each level-``n`` supertile (``n >= 1``) splits into
level-``n-1`` supertiles.  Labels carry all per-tile data except position;
children come with a :class:`~fusiontiles.geometry.Placement` relative to the
parent's control point.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from .labels import label_from_json, label_to_json


class RuleError(ValueError):
    """Invalid label, level or parameter for a fusion rule."""


class FusionRule:
    """Base class; subclasses implement the three level-indexed maps."""

    name = "abstract"
    dimension = 2

    def __init__(self, **params):
        self.params = params
        self._decompose_cache = {}

    # -- maps every rule provides
    def label_space(self, n: int):
        raise NotImplementedError

    def support(self, n: int, label):
        raise NotImplementedError

    def _decompose(self, n: int, label) -> list:
        raise NotImplementedError

    # -- shared behaviour
    @property
    def metadata(self) -> dict:
        return {"name": self.name, "params": {k: str(v) for k, v in sorted(self.params.items())}}

    def check_level(self, n: int):
        if n < 0:
            raise RuleError(f"{self.name}: negative level {n}")

    def check_label(self, n: int, label):
        self.check_level(n)
        try:
            self.label_space(n).check(label)
        except ValueError as exc:
            raise RuleError(f"{self.name}: invalid level-{n} label: {exc}") from exc

    def canonical(self, n: int, label):
        return self.label_space(n).canonical(label)

    def decompose(self, n: int, label) -> list:
        """Ordered list of (child label, placement) pairs at level ``n - 1``."""
        if n < 1:
            raise RuleError(f"{self.name}: level-0 tiles do not decompose")
        key = (n, label)
        hit = self._decompose_cache.get(key)
        if hit is None:
            self.check_label(n, label)
            hit = self._decompose(n, label)
            hit.sort(key=lambda cp: tuple(round(t, 9) for t in cp[1].translation))
            if len(self._decompose_cache) < 200_000:
                self._decompose_cache[key] = hit
        return hit

    def child_label_counts(self, n: int, label) -> list:
        """Child labels with multiplicities; rules may skip the geometry."""
        counts = {}
        for child, _ in self.decompose(n, label):
            key = self.canonical(n - 1, child)
            if key in counts:
                counts[key][1] += 1
            else:
                counts[key] = [child, 1]
        return [(lab, c) for lab, c in counts.values()]

    def volume(self, n: int, label) -> float:
        return geo.volume(self.support(n, label))


@dataclass(frozen=True)
class SupertileInstance:
    level: int
    label: object
    placement: geo.Placement

    def support(self, rule: FusionRule):
        return geo.apply_placement(rule.support(self.level, self.label), self.placement)


@dataclass
class Patch:
    level: int
    tiles: list
    bbox: tuple = field(default=None)

    def __len__(self):
        return len(self.tiles)

    def labels(self) -> list:
        return [t.label for t in self.tiles]

    def supports(self, rule: FusionRule) -> list:
        return [t.support(rule) for t in self.tiles]

    def compute_bbox(self, rule: FusionRule) -> tuple:
        boxes = np.array([geo.bounding_box(s) for s in self.supports(rule)])
        if boxes.shape[1] == 2:
            self.bbox = (float(boxes[:, 0].min()), float(boxes[:, 1].max()))
        else:
            self.bbox = (float(boxes[:, 0].min()), float(boxes[:, 1].min()),
                         float(boxes[:, 2].max()), float(boxes[:, 3].max()))
        return self.bbox

    def to_json(self) -> str:
        tiles = []
        for t in self.tiles:
            tiles.append({
                "label": label_to_json(t.label),
                "translation": list(t.placement.translation),
                "rotation": t.placement.rotation,
            })
        return json.dumps({"level": self.level, "tiles": tiles}, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "Patch":
        data = json.loads(text)
        tiles = [SupertileInstance(data["level"], label_from_json(t["label"]),
                                   geo.Placement(tuple(t["translation"]), t["rotation"]))
                 for t in data["tiles"]]
        return cls(data["level"], tiles)

    def is_connected(self, rule: FusionRule, gap: float = 1e-9) -> bool:
        """Union of supports is connected (adjacency within ``gap``)."""
        supports = self.supports(rule)
        if len(supports) <= 1:
            return True
        if isinstance(supports[0], geo.Interval):
            order = sorted(supports, key=lambda s: s.lo)
            reach = order[0].hi
            for s in order[1:]:
                if s.lo > reach + gap:
                    return False
                reach = max(reach, s.hi)
            return True
        from scipy.spatial import cKDTree

        verts = [s.array() for s in supports]
        owner = np.concatenate([np.full(len(v), i) for i, v in enumerate(verts)])
        tree = cKDTree(np.vstack(verts))
        parent = list(range(len(supports)))

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        # tiles sharing a vertex or with a vertex on another's edge are adjacent
        for i, j in tree.query_pairs(gap + 1e-12):
            a, b = find(owner[i]), find(owner[j])
            if a != b:
                parent[a] = b
        boxes = np.array([geo.bounding_box(s) for s in supports])
        for i, vi in enumerate(verts):
            for j in range(len(supports)):
                if find(i) == find(j):
                    continue
                bj = boxes[j]
                near = ((vi[:, 0] >= bj[0] - gap) & (vi[:, 0] <= bj[2] + gap)
                        & (vi[:, 1] >= bj[1] - gap) & (vi[:, 1] <= bj[3] + gap))
                if near.any():
                    d = geo._points_to_polygon_distance(vi[near], supports[j])
                    if (d <= gap).any():
                        parent[find(i)] = find(j)
        return len({find(i) for i in range(len(supports))}) == 1


def root_instance(rule: FusionRule, level: int, label) -> SupertileInstance:
    rule.check_label(level, label)
    return SupertileInstance(level, label, geo.Placement.identity(rule.dimension))


def expand(rule: FusionRule, root: SupertileInstance, depth: int) -> Patch:
    """Break ``root`` down ``depth`` levels into a patch of placed supertiles."""
    if depth < 0:
        raise RuleError("depth must be non-negative")
    if depth > root.level:
        raise RuleError(f"cannot expand a level-{root.level} supertile by depth {depth}")
    rule.check_label(root.level, root.label)
    current = [root]
    for _ in range(depth):
        nxt = []
        for inst in current:
            for child, pl in rule.decompose(inst.level, inst.label):
                nxt.append(SupertileInstance(inst.level - 1, child, inst.placement.compose(pl)))
        current = nxt
    return Patch(root.level - depth, current)


def subdivide(patch: Patch, rule: FusionRule) -> Patch:
    if patch.level < 1:
        raise RuleError("cannot subdivide a level-0 patch")
    tiles = []
    for inst in patch.tiles:
        tiles.extend(expand(rule, inst, 1).tiles)
    return Patch(patch.level - 1, tiles)


def label_counts(rule: FusionRule, level: int, label, depth: int) -> list:
    """Distinct level-(level-depth) labels inside a supertile, with counts."""
    rule.check_label(level, label)
    current = {rule.canonical(level, label): [label, 1]}
    for n in range(level, level - depth, -1):
        nxt = {}
        for lab, mult in current.values():
            for child, c in rule.child_label_counts(n, lab):
                key = rule.canonical(n - 1, child)
                if key in nxt:
                    nxt[key][1] += mult * c
                else:
                    nxt[key] = [child, mult * c]
        current = nxt
    return [(lab, c) for lab, c in current.values()]


def tile_count(rule: FusionRule, level: int, label, depth: int) -> int:
    return sum(c for _, c in label_counts(rule, level, label, depth))


# ------------------------------------------------------------ partition check


@dataclass
class PartitionReport:
    ok: bool
    volume_error: float
    max_overlap: float
    message: str = ""


def check_partition(rule: FusionRule, n: int, label, rel_tol: float = 1e-9) -> PartitionReport:
    """Children tile the parent: volumes add up and interiors are disjoint."""
    parent = rule.support(n, label)
    pvol = geo.volume(parent)
    children = [geo.apply_placement(rule.support(n - 1, c), pl) for c, pl in rule.decompose(n, label)]
    if not children:
        return PartitionReport(False, 1.0, 0.0, "partition invariant violated: no children")
    vol_err = abs(sum(geo.volume(c) for c in children) - pvol) / pvol
    overlap = _max_pairwise_overlap(children) / pvol
    outside = _max_outside(parent, children) / pvol
    ok = vol_err <= rel_tol and overlap < rel_tol and outside < rel_tol
    msg = "" if ok else (f"partition invariant violated for {rule.name} level {n} label {label}: "
                         f"volume error {vol_err:.3g}, overlap {overlap:.3g}, outside {outside:.3g}")
    return PartitionReport(ok, vol_err, max(overlap, outside), msg)


def _max_pairwise_overlap(children) -> float:
    if isinstance(children[0], geo.Interval):
        order = sorted(children, key=lambda s: s.lo)
        worst = 0.0
        for a, b in zip(order, order[1:]):
            worst = max(worst, a.hi - b.lo)
        return max(worst, 0.0)
    boxes = np.array([geo.bounding_box(c) for c in children])
    order = np.argsort(boxes[:, 0], kind="stable")
    worst = 0.0
    for pos, i in enumerate(order):
        for j in order[pos + 1:]:
            if boxes[j, 0] >= boxes[i, 2]:
                break
            if boxes[j, 1] >= boxes[i, 3] or boxes[i, 1] >= boxes[j, 3]:
                continue
            worst = max(worst, geo.polygon_intersection_area(children[i], children[j]))
    return worst


def _max_outside(parent, children) -> float:
    if isinstance(parent, geo.Interval):
        lo = min(c.lo for c in children)
        hi = max(c.hi for c in children)
        return max(parent.lo - lo, hi - parent.hi, 0.0)
    worst = 0.0
    for c in children:
        worst = max(worst, geo.volume(c) - geo.polygon_intersection_area(c, parent))
    return worst


# ------------------------------------------------------------ diagnostics


def boundary_neighborhood_volume(support, r: float) -> float:
    """Volume of the set of points within ``r`` of the boundary of a convex support."""
    if isinstance(support, geo.Interval):
        # two endpoint neighborhoods of length 2r, merging once they overlap
        return min(4 * r, support.hi - support.lo + 2 * r)
    v = support.array()
    area = geo.volume(support)
    edges = np.roll(v, -1, axis=0) - v
    lengths = np.linalg.norm(edges, axis=1)
    perimeter = float(lengths.sum())
    # interior angles of the convex polygon
    prev = -np.roll(edges, 1, axis=0)
    cosang = (edges * prev).sum(1) / (lengths * np.roll(lengths, 1))
    angles = np.arccos(np.clip(cosang, -1.0, 1.0))
    scale = math.sqrt(area)
    outer = r * perimeter + math.pi * r * r
    if r < 1e-3 * scale:
        # inner parallel body keeps its combinatorics for small r (Steiner expansion)
        inner_removed = r * perimeter - r * r * float(np.sum(1.0 / np.tan(angles / 2)))
    else:
        inner_removed = area - _inner_parallel_area(v, r)
    return outer + inner_removed


def _inner_parallel_area(v: np.ndarray, r: float) -> float:
    poly = [tuple(p) for p in v]
    for a, b in zip(v, np.roll(v, -1, axis=0)):
        e = b - a
        normal = np.array([-e[1], e[0]]) / np.linalg.norm(e)
        a2 = a + r * normal
        b2 = b + r * normal
        out = []
        for i, cur in enumerate(poly):
            prev = poly[i - 1]
            sc = (b2[0] - a2[0]) * (cur[1] - a2[1]) - (b2[1] - a2[1]) * (cur[0] - a2[0])
            sp = (b2[0] - a2[0]) * (prev[1] - a2[1]) - (b2[1] - a2[1]) * (prev[0] - a2[0])
            if sc >= 0:
                if sp < 0:
                    out.append(geo._cut(prev, cur, sp, sc))
                out.append(cur)
            elif sp >= 0:
                out.append(geo._cut(prev, cur, sp, sc))
        poly = out
        if len(poly) < 3:
            return 0.0
    return max(0.0, geo.signed_area(poly))


def van_hove_ratio(rule: FusionRule, n: int, label, r: float = 1.0) -> float:
    support = rule.support(n, label)
    return boundary_neighborhood_volume(support, r) / geo.volume(support)


def primitivity_probe(rule: FusionRule, n: int, eps: float, n_max: int):
    """Smallest level N <= n_max at which every supertile in an eps-net of
    level-N labels contains an eps-approximation of every level-n net label."""
    targets = rule.label_space(n).epsilon_net(eps)
    space_n = rule.label_space(n)
    for big in range(n + 1, n_max + 1):
        ok = True
        for q in rule.label_space(big).epsilon_net(eps):
            present = [lab for lab, _ in label_counts(rule, big, q, big - n)]
            for p in targets:
                if not any(space_n.distance(p, s) <= eps for s in present):
                    ok = False
                    break
            if not ok:
                break
        if ok:
            return big
    return None


def minimal_by_primitivity(rule: FusionRule, n_max: int = 12) -> bool:
    return all(primitivity_probe(rule, n, eps, n + n_max) is not None
               for n in (0, 1) for eps in (0.3, 0.1))


def angle_multiset(counts) -> Counter:
    out = Counter()
    for lab, c in counts:
        out[lab] += c
    return out
