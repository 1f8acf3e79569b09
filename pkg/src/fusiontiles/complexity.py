"""Tiling metric, the windowed metric d_L and estimates of the complexity C(eps, L).

Two tilings are close when the patches around the origin agree after small
moves.  Per tile ``t`` let ``delta_t`` be the distance (Hausdorff of supports,
then label distance, whichever is larger) to the best matching tile of the
other tiling and ``r_t`` its distance from the origin.  Then
``d = max_t min(delta_t, 1/r_t)`` capped at 1, and ``d_L`` replaces ``r_t`` by
the distance from ``t`` to the box ``[0, L]^p``; this is the supremum of
``d`` over all shifts in the box, computed without a translation grid.

Windows are finite patches of level-0 tiles around a box, cut out of a
randomly posed ambient supertile by pruned descent.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.spatial import cKDTree

from . import geometry as geo
from .fusion import RuleError
from .labels import CirclePair

# ------------------------------------------------------------ windows


@dataclass
class TilingWindow:
    """Level-0 tiles with validity radius ``radius`` around the box ``[0, box]^p``.

    ``verts`` is (m, k, 2) in the plane or (m, 2) ``[lo, hi]`` on the line.
    Labels are encoded as arrays: ``code`` (hand, type or limit class) and
    ``value`` (angle, height or length); ``metric`` names how to compare them.
    """

    dim: int
    verts: np.ndarray
    code: np.ndarray
    value: np.ndarray
    metric: str
    box: float
    radius: float
    separation: float = 1.0
    pose: dict | None = None

    def __post_init__(self):
        if self.dim == 1:
            self.centroids = self.verts.mean(axis=1)[:, None]
            self.diam = float(np.max(self.verts[:, 1] - self.verts[:, 0])) if len(self.verts) else 0.0
        else:
            self.centroids = self.verts.mean(axis=1)
            if len(self.verts):
                d = self.verts[:, :, None, :] - self.verts[:, None, :, :]
                self.diam = float(np.sqrt((d ** 2).sum(-1)).max())
            else:
                self.diam = 0.0
        self.rdist = box_distance(self.verts, self.box, self.dim)

    def __len__(self):
        return len(self.code)

    def translated(self, v) -> "TilingWindow":
        """Same tiles moved by ``v`` (the box stays put, so validity shrinks by |v|)."""
        v = np.atleast_1d(np.asarray(v, dtype=float))
        shift = v[0] if self.dim == 1 else v
        return TilingWindow(self.dim, self.verts + shift, self.code, self.value, self.metric,
                            self.box, self.radius - float(np.linalg.norm(v)), self.separation)


def box_distance(verts: np.ndarray, box: float, dim: int) -> np.ndarray:
    """Distance from each convex tile to the box ``[0, box]^dim``."""
    if len(verts) == 0:
        return np.zeros(0)
    if dim == 1:
        return np.maximum(0.0, np.maximum(verts[:, 0] - box, -verts[:, 1]))
    # vertex-to-box distances
    clamped = np.clip(verts, 0.0, box)
    vd = np.sqrt(((verts - clamped) ** 2).sum(-1)).min(axis=1)
    corners = np.array([(0.0, 0.0), (box, 0.0), (box, box), (0.0, box)])
    a = verts
    b = np.roll(verts, -1, axis=1)
    e = b - a
    rel = corners[None, :, None, :] - a[:, None, :, :]
    t = np.clip((rel * e[:, None]).sum(-1) / (e * e).sum(-1)[:, None, :], 0.0, 1.0)
    near = a[:, None] + t[..., None] * e[:, None]
    cd = np.sqrt(((corners[None, :, None, :] - near) ** 2).sum(-1)).min(axis=(1, 2))
    dist = np.minimum(vd, cd)
    # separating-axis test: overlap along x, y and every edge normal means intersection
    lo, hi = verts.min(axis=1), verts.max(axis=1)
    overlap = (lo[:, 0] <= box) & (hi[:, 0] >= 0) & (lo[:, 1] <= box) & (hi[:, 1] >= 0)
    normals = np.stack([-e[..., 1], e[..., 0]], axis=-1)
    proj_poly = np.einsum("mkd,mjd->mkj", normals, verts)
    proj_box = np.einsum("mkd,cd->mkc", normals, corners)
    sep = (proj_poly.max(-1) < proj_box.min(-1)) | (proj_poly.min(-1) > proj_box.max(-1))
    overlap &= ~sep.any(axis=1)
    dist[overlap] = 0.0
    return dist


def _label_distance(w1: TilingWindow, i: np.ndarray, w2: TilingWindow, j: np.ndarray) -> np.ndarray:
    c1, c2 = w1.code[i], w2.code[j]
    v1, v2 = w1.value[i], w2.value[j]
    if w1.metric == "circle":
        return CirclePair.code_distance(c1, v1, c2, v2)
    if w1.metric == "finite":
        return np.where(c1 == c2, 0.0, 1.0)
    if w1.metric == "nat":
        return np.where(c1 == c2, np.abs(v1 - v2), np.minimum(1.0, v1 + w1.separation + v2))
    if w1.metric == "real":
        return np.minimum(1.0, np.abs(v1 - v2))
    raise RuleError(f"unknown label metric {w1.metric}")


def _support_distance(w1: TilingWindow, i: np.ndarray, w2: TilingWindow, j: np.ndarray) -> np.ndarray:
    if w1.dim == 1:
        return np.abs(w1.verts[i] - w2.verts[j]).max(axis=1)
    if w1.verts.shape[1] != w2.verts.shape[1]:
        raise RuleError("windows mix tile shapes")
    return geo.convex_hausdorff(w1.verts[i], w2.verts[j])


def tile_discrepancies(w1: TilingWindow, w2: TilingWindow, cutoff: float = 1.0,
                       mask: np.ndarray | None = None) -> np.ndarray:
    """``delta_t`` for tiles of ``w1`` against ``w2``; values at or above ``cutoff`` read as 1."""
    idx = np.arange(len(w1)) if mask is None else np.flatnonzero(mask)
    out = np.ones(len(w1))
    if len(idx) == 0 or len(w2) == 0:
        return out
    # a match within cutoff moves the centroid by at most about 3 * cutoff
    search = 3.0 * cutoff + 1e-9 if cutoff < 1.0 else 1.0 + max(w1.diam, w2.diam)
    tree = cKDTree(w2.centroids)
    lists = tree.query_ball_point(w1.centroids[idx], r=search)
    counts = np.fromiter((len(x) for x in lists), dtype=np.int64, count=len(lists))
    if counts.sum() == 0:
        return out
    ii = np.repeat(idx, counts)
    jj = np.fromiter((j for x in lists for j in x), dtype=np.int64, count=int(counts.sum()))
    d = np.maximum(_support_distance(w1, ii, w2, jj), _label_distance(w1, ii, w2, jj))
    best = np.full(len(w1), np.inf)
    np.minimum.at(best, ii, d)
    out[idx] = np.minimum(1.0, best[idx])
    out[out >= cutoff] = 1.0
    return out


def _trusted(w: TilingWindow, other: TilingWindow) -> np.ndarray:
    # tiles whose partners could fall outside the other window are not judged
    margin = 1.0 + max(w.diam, other.diam)
    return w.rdist <= min(w.radius, other.radius) - margin


def dL_distance(w1: TilingWindow, w2: TilingWindow, L: float | None = None,
                step: float | None = None) -> float:
    """``sup`` over shifts in ``[0, L]^p`` of the tiling distance.

    Evaluated exactly per tile, so no translation grid is involved and
    ``step`` is accepted only for interface compatibility (see
    ``dL_grid`` for the grid version).  The result is exact when it is at
    least ``1/(radius - margin)``; below that only the bound is certified.
    """
    if L is not None and abs(L - w1.box) > 1e-12:
        raise RuleError("windows were cut for a different box size")
    if abs(w1.box - w2.box) > 1e-12 or w1.metric != w2.metric:
        raise RuleError("windows are not comparable")
    if min(w1.radius, w2.radius) < 1.0:
        raise RuleError("windows must be valid to radius at least 1")
    worst = 0.0
    for a, b in ((w1, w2), (w2, w1)):
        m = _trusted(a, b)
        delta = tile_discrepancies(a, b, 1.0, m)
        with np.errstate(divide="ignore"):
            inv = np.where(a.rdist > 0, 1.0 / np.maximum(a.rdist, 1e-300), np.inf)
        vals = np.minimum(delta, inv)[m]
        if len(vals):
            worst = max(worst, float(vals.max()))
    return min(1.0, worst)


def dL_grid(w1: TilingWindow, w2: TilingWindow, step: float) -> float:
    """Maximum of the tiling distance over shifts on a grid of spacing ``step`` in the box."""
    ticks = np.arange(0.0, w1.box + 1e-12, step)
    if ticks[-1] < w1.box - 1e-12:
        ticks = np.append(ticks, w1.box)
    shifts = ticks[:, None] if w1.dim == 1 else np.array([(x, y) for x in ticks for y in ticks])
    deltas = []
    for a, b in ((w1, w2), (w2, w1)):
        m = _trusted(a, b)
        deltas.append((a, tile_discrepancies(a, b, 1.0, m), m))
    worst = 0.0
    for x in shifts:
        for a, delta, m in deltas:
            point = a.verts - (x[0] if a.dim == 1 else x)
            r = box_distance(point, 0.0, a.dim)
            with np.errstate(divide="ignore"):
                inv = np.where(r > 0, 1.0 / np.maximum(r, 1e-300), np.inf)
            vals = np.minimum(delta, inv)[m]
            if len(vals):
                worst = max(worst, float(vals.max()))
    return min(1.0, worst)


def tiling_distance(w1: TilingWindow, w2: TilingWindow) -> float:
    """Distance of the two tilings as seen from the origin."""
    if w1.box != 0.0 or w2.box != 0.0:
        w1 = _rebox(w1, 0.0)
        w2 = _rebox(w2, 0.0)
    return dL_distance(w1, w2)


def _rebox(w: TilingWindow, box: float) -> TilingWindow:
    # validity is measured from the box, so shrinking it keeps the radius valid
    return TilingWindow(w.dim, w.verts, w.code, w.value, w.metric, box, w.radius, w.separation, w.pose)


def dL_below(w1: TilingWindow, w2: TilingWindow, eps: float) -> bool:
    """``d_L(w1, w2) < eps``: every tile within ``1/eps`` of the box matches within ``eps``."""
    reach = 1.0 / eps
    for a, b in ((w1, w2), (w2, w1)):
        m = (a.rdist <= reach) & _trusted(a, b)
        if (a.rdist <= reach).sum() != m.sum():
            raise RuleError("window radius too small for this eps")
        delta = tile_discrepancies(a, b, eps, m)
        if (delta[m] >= eps).any():
            return False
    return True


# ------------------------------------------------------------ window models


@dataclass
class Nodes:
    """Placed supertiles of many sampled windows at one level."""

    sid: np.ndarray
    code: np.ndarray
    value: np.ndarray
    pos: np.ndarray

    def take(self, mask) -> "Nodes":
        return Nodes(self.sid[mask], self.code[mask], self.value[mask], self.pos[mask])

    def __len__(self):
        return len(self.sid)


def _concat(parts) -> Nodes:
    return Nodes(np.concatenate([p.sid for p in parts]), np.concatenate([p.code for p in parts]),
                 np.concatenate([p.value for p in parts]), np.vstack([p.pos for p in parts]))


class WindowModel:
    """Rule-specific sampling, subdivision and tile geometry for windows."""

    dim = 2
    metric = "circle"
    separation = 1.0

    def ambient_level(self, extent: float) -> int:
        n = 0
        while self.inradius(n) <= extent:
            n += 1
        return n

    def inradius(self, n: int) -> float:
        raise NotImplementedError

    def children(self, level: int, nodes: Nodes) -> Nodes:
        raise NotImplementedError

    def geometry(self, level: int, nodes: Nodes) -> np.ndarray:
        raise NotImplementedError

    def sample_roots(self, rng, count: int, level: int, eps: float, need: float):
        """Root nodes at ``level`` whose frame puts a uniformly drawn sample point at the origin."""
        raise NotImplementedError

    def tile_codes(self, nodes: Nodes):
        return nodes.code, nodes.value

    def descend(self, roots: Nodes, level: int, lo: np.ndarray, hi: np.ndarray, radius: float) -> Nodes:
        """Level-0 tiles within ``radius`` (bounding-box distance) of per-sample boxes."""
        nodes = roots
        for n in range(level, 0, -1):
            nodes = self.children(n, nodes)
            nodes = nodes.take(self._near(n - 1, nodes, lo, hi, radius))
        return nodes

    def reach(self, n: int) -> float | None:
        """Radius of a disc about the control point containing every level-n support."""
        return None

    def _near(self, n, nodes, lo, hi, radius):
        rho = self.reach(n) if n > 0 else None
        if rho is not None:
            gap = np.maximum(0.0, np.maximum(lo[nodes.sid] - nodes.pos, nodes.pos - hi[nodes.sid]))
            return np.sqrt((gap ** 2).sum(axis=1)) <= radius + rho
        g = self.geometry(n, nodes)
        if self.dim == 1:
            glo, ghi = g[:, 0:1], g[:, 1:2]
        else:
            glo, ghi = g.min(axis=1), g.max(axis=1)
        gap = np.maximum(0.0, np.maximum(lo[nodes.sid] - ghi, glo - hi[nodes.sid]))
        return np.sqrt((gap ** 2).sum(axis=1)) <= radius

    def window(self, roots: Nodes, level: int, box: float, radius: float) -> TilingWindow:
        """Full window of a single root (``sid`` 0) for the box with validity ``radius``."""
        lo = np.zeros((1, self.dim))
        hi = np.full((1, self.dim), box)
        tiles = self.descend(roots, level, lo, hi, radius)
        verts = self.geometry(0, tiles)
        code, value = self.tile_codes(tiles)
        w = TilingWindow(self.dim, verts, code, value, self.metric, box, radius, self.separation)
        keep = w.rdist <= radius
        return TilingWindow(self.dim, verts[keep], code[keep], value[keep], self.metric, box,
                            radius, self.separation)


class TriangleModel(WindowModel):
    dim = 2
    metric = "circle"

    def __init__(self, rule):
        from .rules.pinwheel import SQRT5

        self.rule = rule
        self.sqrt5 = SQRT5
        self.r0 = (1.0 + 2.0 - math.sqrt(5.0)) / 2.0

    def inradius(self, n: int) -> float:
        return self.r0 * self.sqrt5 ** n

    def reach(self, n):
        return math.sqrt(2.5) * self.rule.scale(n)

    def children(self, level, nodes):
        from .rules.pinwheel import batch_children

        out_h, out_t, out_p, out_s = [], [], [], []
        s = self.rule.scale(level) / self.sqrt5
        for code in (0, 1):
            sel = nodes.code == code
            if not sel.any():
                continue
            h, t, p = batch_children(self.rule, nodes.code[sel], nodes.value[sel], nodes.pos[sel], s)
            out_h.append(h)
            out_t.append(t)
            out_p.append(p)
            out_s.append(np.tile(nodes.sid[sel], 5))
        return Nodes(np.concatenate(out_s), np.concatenate(out_h), np.concatenate(out_t), np.vstack(out_p))

    def geometry(self, level, nodes):
        from .rules.pinwheel import batch_vertices

        return batch_vertices(nodes.code, nodes.value, nodes.pos, self.rule.scale(level))

    def sample_roots(self, rng, count, level, eps, need):
        from .rules.pinwheel import PROTO, _rot

        hand = rng.integers(0, 2, size=count).astype(np.int8)
        theta = rng.uniform(0.0, 2 * math.pi, size=count)
        scale = self.rule.scale(level)
        shrink = 1.0 - need / self.inradius(level)
        if shrink <= 0:
            raise RuleError("ambient supertile too small for the window")
        # uniform point in the inner parallel triangle, homothetic about the incentre
        u = rng.random((count, 2))
        flip = u.sum(axis=1) > 1
        u[flip] = 1 - u[flip]
        out_pos = np.empty((count, 2))
        for code, name in ((0, "L"), (1, "R")):
            v = PROTO[name] * scale
            a, b, c = (np.linalg.norm(v[1] - v[2]), np.linalg.norm(v[2] - v[0]),
                       np.linalg.norm(v[0] - v[1]))
            incentre = (a * v[0] + b * v[1] + c * v[2]) / (a + b + c)
            inner = incentre + shrink * (v - incentre)
            sel = hand == code
            pts = inner[0] + u[sel, :1] * (inner[1] - inner[0]) + u[sel, 1:] * (inner[2] - inner[0])
            # rotate with the root and move the sample point to the origin
            c_, s_ = np.cos(theta[sel]), np.sin(theta[sel])
            rx = c_ * pts[:, 0] - s_ * pts[:, 1]
            ry = s_ * pts[:, 0] + c_ * pts[:, 1]
            out_pos[sel] = -np.stack([rx, ry], axis=1)
        return Nodes(np.arange(count), hand, theta, out_pos)


class ShearModel(WindowModel):
    dim = 2
    metric = "finite"

    def __init__(self, rule):
        self.rule = rule

    def inradius(self, n):
        return 0.5 * self.rule.side(n)

    def reach(self, n):
        return math.sqrt(2.0) * self.rule.side(n)

    def _dims(self, level):
        big, small = self.rule.side(level), self.rule.side(level - 1)
        return np.array([(big, big), (big, small), (small, big), (small, small)])

    def children(self, level, nodes):
        parts = []
        for code, name in enumerate("abcd"):
            sel = nodes.code == code
            if not sel.any():
                continue
            for lab, x, y in self.rule.offsets(level, name):
                parts.append(Nodes(nodes.sid[sel], np.full(sel.sum(), "abcd".index(lab)),
                                   nodes.value[sel], nodes.pos[sel] + np.array([float(x), float(y)])))
        return _concat(parts)

    def geometry(self, level, nodes):
        wh = self._dims(level)[nodes.code]
        x, y = nodes.pos[:, 0], nodes.pos[:, 1]
        w, h = wh[:, 0], wh[:, 1]
        return np.stack([np.stack([x, y], 1), np.stack([x + w, y], 1), np.stack([x + w, y + h], 1),
                         np.stack([x, y + h], 1)], axis=1)

    def sample_roots(self, rng, count, level, eps, need):
        w, h = self._dims(level)[0]
        if w <= 2 * need or h <= 2 * need:
            raise RuleError("ambient supertile too small for the window")
        px = rng.uniform(need, w - need, size=count)
        py = rng.uniform(need, h - need, size=count)
        return Nodes(np.arange(count), np.zeros(count, dtype=np.int64), np.zeros(count),
                     -np.stack([px, py], axis=1))


class VarlenModel(WindowModel):
    dim = 1
    metric = "real"

    def __init__(self, rule):
        self.rule = rule

    def inradius(self, n):
        return 0.5 * 1.5 ** n

    def children(self, level, nodes):
        t = 2.0 * 1.5 ** level
        up = nodes.value > t
        x = nodes.value
        first = Nodes(nodes.sid, nodes.code, np.where(up, x / 3.0, x), nodes.pos)
        second = nodes.take(up)
        second = Nodes(second.sid, second.code, 2.0 * second.value / 3.0,
                       second.pos + second.value[:, None] / 3.0)
        return _concat([first, second])

    def geometry(self, level, nodes):
        return np.concatenate([nodes.pos, nodes.pos + nodes.value[:, None]], axis=1)

    def sample_roots(self, rng, count, level, eps, need):
        lo, hi = 1.5 ** level, 3.0 * 1.5 ** level
        x = rng.uniform(lo, hi, size=count)
        usable = x - 2 * need
        if (usable <= 0).any():
            raise RuleError("ambient supertile too small for the window")
        p = need + rng.random(count) * usable
        return Nodes(np.arange(count), np.zeros(count, dtype=np.int64), x, -p[:, None])


class SolenoidModel(WindowModel):
    dim = 1
    metric = "nat"

    def __init__(self, rule):
        self.rule = rule
        self.separation = rule.separation
        self.limit_codes = {lim: -(i + 1) for i, lim in enumerate(rule.limit_ids)}

    def inradius(self, n):
        return 0.5 * 2.0 ** n

    def children(self, level, nodes):
        half = 2.0 ** (level - 1)
        second = Nodes(nodes.sid, np.full(len(nodes), level - 1), nodes.value, nodes.pos + half)
        return _concat([nodes, second])

    def geometry(self, level, nodes):
        return np.concatenate([nodes.pos, nodes.pos + 2.0 ** level], axis=1)

    def sample_roots(self, rng, count, level, eps, need):
        net = self.rule.label_space(level).epsilon_net(eps / 4)
        picks = rng.integers(0, len(net), size=count)
        codes = np.array([self.limit_codes[x] if isinstance(x, str) else x for x in net])[picks]
        length = 2.0 ** level
        if length <= 2 * need:
            raise RuleError("ambient supertile too small for the window")
        p = rng.uniform(need, length - need, size=count)
        return Nodes(np.arange(count), codes, np.zeros(count), -p[:, None])

    def tile_codes(self, nodes):
        inv = {v: k for k, v in self.limit_codes.items()}
        names = list(self.rule.limit_ids)
        code = np.empty(len(nodes), dtype=np.int64)
        value = np.empty(len(nodes))
        for i, k in enumerate(nodes.code):
            k = int(k)
            if k < 0:
                code[i] = names.index(inv[k])
                value[i] = 0.0
            else:
                code[i] = names.index(self.rule.limit_of(k))
                value[i] = 2.0 ** (-k)
        return code, value


class FullShiftModel(WindowModel):
    """i.i.d. labels from a maximal eps-separated set on unit tiles."""

    dim = 1
    metric = "nat"

    def __init__(self, sampler):
        self.sampler = sampler

    def window_from(self, rng, eps: float, box: float, radius: float) -> TilingWindow:
        pool = self.sampler.separated_set(eps)
        offset = rng.random()
        first = -int(math.ceil(radius)) - 1
        count = int(math.ceil(box + 2 * radius)) + 3
        lo = first + offset + np.arange(count)
        picks = rng.integers(0, len(pool), size=count)
        heights = np.array([0.0 if isinstance(x, str) else 2.0 ** (-x) for x in pool])[picks]
        verts = np.stack([lo, lo + 1.0], axis=1)
        w = TilingWindow(1, verts, np.zeros(count, dtype=np.int64), heights, "nat", box, radius)
        keep = w.rdist <= radius
        return TilingWindow(1, verts[keep], w.code[keep], heights[keep], "nat", box, radius)


def window_model(rule):
    from .rules.fullshift import FullShiftSampler
    from .rules.pinwheel import HybridRule, TriangleRule
    from .rules.shear import ShearRule
    from .rules.solenoid import SolenoidRule
    from .rules.varlen import VarlenRule

    if isinstance(rule, HybridRule):
        raise RuleError("complexity sampling is not available for the hybrid rule")
    if isinstance(rule, TriangleRule):
        return TriangleModel(rule)
    if isinstance(rule, ShearRule):
        return ShearModel(rule)
    if isinstance(rule, VarlenRule):
        return VarlenModel(rule)
    if isinstance(rule, SolenoidRule):
        return SolenoidModel(rule)
    if isinstance(rule, FullShiftSampler):
        return FullShiftModel(rule)
    raise RuleError(f"no window model for {getattr(rule, 'name', rule)}")


# ------------------------------------------------------------ sampling


def window_radius(eps: float) -> float:
    """Validity radius around the box: ``1/eps`` plus room for tile matching."""
    return 1.0 / eps + 4.0


_BLOCK = 1024


class WindowSampler:
    """Seeded stream of windows for fixed (rule, eps, L); windows are built lazily."""

    def __init__(self, rule, eps: float, L: float, seed: int, count: int,
                 radius: float | None = None):
        self.model = window_model(rule)
        self.eps, self.L, self.seed, self.count = eps, float(L), seed, count
        self.radius = window_radius(eps) if radius is None else radius
        # draws come in fixed blocks so window i does not depend on count
        blocks = range(-(-count // _BLOCK))
        if isinstance(self.model, FullShiftModel):
            self.roots = None
            # seeds, not generators: an evicted window must rebuild identically
            self._seeds = np.concatenate([np.random.default_rng([seed, b]).integers(0, 2 ** 63, size=_BLOCK)
                                          for b in blocks])[:count]
            self.level = 0
        else:
            half = self.L / 2 if self.model.dim == 1 else self.L / math.sqrt(2)
            need = half + self.radius + 1.0
            self.level = self.model.ambient_level(max(self.L + 2.0 / eps, 2.0 * need))
            parts = [self.model.sample_roots(np.random.default_rng([seed, b]), _BLOCK, self.level, eps, need)
                     for b in blocks]
            roots = _concat(parts).take(slice(0, count))
            roots.sid = np.arange(count)
            # shift so that the box [0, L]^p is centred on the sampled point
            roots.pos = roots.pos + self.L / 2
            self.roots = roots
        self._cache = lru_cache(maxsize=4096)(self._build)

    def window(self, i: int) -> TilingWindow:
        return self._cache(i)

    def _build(self, i: int) -> TilingWindow:
        if self.roots is None:
            rng = np.random.default_rng(int(self._seeds[i]))
            return self.model.window_from(rng, self.eps, self.L, self.radius)
        root = self.roots.take(np.array([i]))
        root = Nodes(np.zeros(1, dtype=np.int64), root.code, root.value, root.pos)
        w = self.model.window(root, self.level, self.L, self.radius)
        w.pose = {"level": self.level, "code": int(root.code[0]), "value": float(root.value[0]),
                  "position": root.pos[0].tolist()}
        return w

    def anchor_points(self) -> np.ndarray:
        if self.model.dim == 1:
            return np.array([[0.0], [self.L]])
        return np.array([(0.0, 0.0), (self.L, 0.0), (0.0, self.L)])

    def grid_points(self, per_side: int = 6) -> np.ndarray:
        """Probe grid over the box and the part of its surroundings that must match."""
        reach = 1.0 / self.eps
        ticks = np.linspace(-reach, self.L + reach, per_side if self.model.dim == 2 else 3 * per_side)
        if self.model.dim == 1:
            return ticks[:, None]
        gx, gy = np.meshgrid(ticks, ticks)
        return np.stack([gx.ravel(), gy.ravel()], axis=1)

    def probe(self, point: np.ndarray, subset: np.ndarray | None = None, radius: float | None = None):
        """Probe data at ``point``: the own-tile features (the tile containing or
        nearest the point) per sample, and (sid, features) of all tiles within eps.

        Features are scaled so that tiles matching within eps have L-infinity
        feature distance below eps.
        """
        idx = np.arange(self.count) if subset is None else subset
        near = self.eps if radius is None else radius
        if self.roots is None:
            sids, feats, dists = [], [], []
            for i in idx:
                w = self.window(int(i))
                d = _point_distance(w.verts, point, 1)
                keep = d <= near
                feats.append(self._features(w.verts[keep], w.code[keep], w.value[keep], point))
                sids.append(np.full(keep.sum(), i))
                dists.append(d[keep])
            sid, feat, dist = np.concatenate(sids), np.vstack(feats), np.concatenate(dists)
        else:
            lo = np.repeat(point[None], self.count, axis=0)
            tiles = self.model.descend(self.roots.take(idx), self.level, lo, lo, near)
            verts = self.model.geometry(0, tiles)
            code, value = self.model.tile_codes(tiles)
            dist = _point_distance(verts, point, self.model.dim)
            keep = dist <= near
            sid, dist = tiles.sid[keep], dist[keep]
            feat = self._features(verts[keep], code[keep], value[keep], point)
        return _own_tiles(sid, dist, feat, self.count), (sid, feat)

    def _features(self, verts, code, value, point) -> np.ndarray:
        m = len(code)
        if self.model.dim == 1:
            geo_part = verts.reshape(m, 2) - point[0]
        else:
            # the Steiner point is 4/pi-Lipschitz in the Hausdorff metric
            geo_part = (steiner_points(verts) - point) / (4.0 / math.pi)
        if self.model.metric == "nat":
            sep = self.model.separation
            lab = np.where(code == 0, value + sep / 2, -(value + sep / 2))[:, None]
        elif self.model.metric == "real":
            lab = value[:, None]
        elif self.model.metric == "circle":
            lab = np.stack([np.mod(value, 2 * math.pi), 100.0 * code], axis=1)
        else:
            lab = 100.0 * code[:, None].astype(float)
        return np.concatenate([geo_part, lab], axis=1)


    def feature_kinds(self) -> list:
        """Per feature column of one probe: 'lin', 'per' (angle mod 2 pi) or 'code'."""
        geo_cols = ["lin", "lin"]
        return geo_cols + {"nat": ["lin"], "real": ["lin"], "circle": ["per", "code"]}.get(
            self.model.metric, ["code"])


def _gap(a: np.ndarray, b: np.ndarray, periodic: np.ndarray) -> np.ndarray:
    """Largest per-column difference, angles compared around the circle."""
    d = np.abs(a - b)
    if periodic.any():
        d[..., periodic] = np.minimum(d[..., periodic], 2 * math.pi - d[..., periodic])
    return d.max(axis=-1)


def steiner_points(verts: np.ndarray) -> np.ndarray:
    """Steiner points of convex polygons: vertices weighted by exterior angle."""
    prev = np.roll(verts, 1, axis=1) - verts
    nxt = np.roll(verts, -1, axis=1) - verts
    cos = (prev * nxt).sum(-1) / (np.linalg.norm(prev, axis=-1) * np.linalg.norm(nxt, axis=-1))
    ext = math.pi - np.arccos(np.clip(cos, -1.0, 1.0))
    return (verts * ext[..., None]).sum(axis=1) / (2 * math.pi)


def _point_distance(verts: np.ndarray, p: np.ndarray, dim: int) -> np.ndarray:
    if dim == 1:
        return np.maximum(0.0, np.maximum(verts[:, 0] - p[0], p[0] - verts[:, 1]))
    return box_distance(verts - p, 0.0, 2)


def _own_tiles(sid, dist, feats, count):
    """Feature row of the tile closest to the probe, per sample."""
    out = np.full((count, feats.shape[1]), np.nan)
    if len(sid) == 0:
        return out
    order = np.lexsort((dist, sid))
    sid, feats = sid[order], feats[order]
    first = np.ones(len(sid), dtype=bool)
    first[1:] = sid[1:] != sid[:-1]
    out[sid[first]] = feats[first]
    return out


def _combos(own_list, near_list, count):
    """Concatenated near-tile features over probes, one row per combination."""
    rows_sid = np.arange(count)
    rows = np.zeros((count, 0))
    for sid, feat in near_list:
        order = np.argsort(sid, kind="stable")
        sid, feat = sid[order], feat[order]
        starts = np.searchsorted(sid, rows_sid, side="left")
        ends = np.searchsorted(sid, rows_sid, side="right")
        n = ends - starts
        rep = np.repeat(np.arange(len(rows_sid)), n)
        take = np.concatenate([np.arange(s, e) for s, e in zip(starts, ends)]) if len(rep) else \
            np.zeros(0, dtype=np.int64)
        rows = np.concatenate([rows[rep], feat[take]], axis=1)
        rows_sid = rows_sid[rep]
    return rows_sid, rows


def candidate_pairs(own_list, near_list, count: int, eps: float, kinds: list,
                    block_dims: int = 5) -> np.ndarray:
    """Pairs (i < j) where i's own tiles match some combination of j's near tiles.

    A grid-hash join with cells of width at least 2 eps on the code columns
    and a few continuous columns finds every row within eps (each eps-ball
    meets two cells per column), then all columns are verified.
    """
    sid, rows = _combos(own_list, near_list, count)
    own = np.concatenate(own_list, axis=1)
    kinds = list(kinds) * len(own_list)
    periodic = np.array([k == "per" for k in kinds])
    valid = np.flatnonzero(~np.isnan(own).any(axis=1))
    if len(rows) == 0 or len(valid) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    q = own[valid]
    cont = [d for d, k in enumerate(kinds) if k == "per"] + [d for d, k in enumerate(kinds) if k == "lin"]
    dims = [d for d, k in enumerate(kinds) if k == "code"] + cont[:block_dims]
    q_cells, r_cells, q_nb, bases = [], [], [], []
    for d in dims:
        if kinds[d] == "per":
            n = int(math.floor(2 * math.pi / (2 * eps)))
            w = 2 * math.pi / n
            qc = np.floor(np.mod(q[:, d], 2 * math.pi) / w).astype(np.int64) % n
            rc = np.floor(np.mod(rows[:, d], 2 * math.pi) / w).astype(np.int64) % n
            frac = np.mod(q[:, d], 2 * math.pi) / w - np.floor(np.mod(q[:, d], 2 * math.pi) / w)
            nb = np.where(frac < 0.5, -1, 1)
            q_cells.append(qc)
            r_cells.append(rc)
            q_nb.append((nb, n))
            bases.append(n)
            continue
        w = 2 * eps
        qc = np.floor(q[:, d] / w).astype(np.int64)
        rc = np.floor(rows[:, d] / w).astype(np.int64)
        lo = min(qc.min(), rc.min()) - 1
        q_cells.append(qc - lo)
        r_cells.append(rc - lo)
        frac = q[:, d] / w - np.floor(q[:, d] / w)
        q_nb.append((None if kinds[d] == "code" else np.where(frac < 0.5, -1, 1), None))
        bases.append(int(max(qc.max(), rc.max()) - lo + 2))
    r_key = np.zeros(len(rows), dtype=np.int64)
    mult = 1
    mults = []
    for rc, base in zip(r_cells, bases):
        r_key += rc * mult
        mults.append(mult)
        mult *= base
        if mult > 2 ** 62:
            raise RuleError("blocking key overflow; reduce block_dims")
    order = np.argsort(r_key, kind="stable")
    r_sorted = r_key[order]
    free = [k for k, (nb, _) in enumerate(q_nb) if nb is not None]
    found_i = []
    chunk = 2048
    for start in range(0, len(q), chunk):
        part = slice(start, start + chunk)
        for combo in range(1 << len(free)):
            key = np.zeros(len(q[part]), dtype=np.int64)
            for k, (qc, (nb, period), m) in enumerate(zip(q_cells, q_nb, mults)):
                c = qc[part]
                if nb is not None and (combo >> free.index(k)) & 1:
                    c = c + nb[part]
                    if period is not None:
                        c = c % period
                key += c * m
            lo = np.searchsorted(r_sorted, key, side="left")
            hi = np.searchsorted(r_sorted, key, side="right")
            n = hi - lo
            total = int(n.sum())
            if total == 0:
                continue
            qi = np.repeat(np.arange(start, start + len(key)), n)
            starts = np.repeat(lo - np.concatenate([[0], np.cumsum(n)[:-1]]), n)
            ri = order[starts + np.arange(total)]
            ok = _gap(q[qi], rows[ri], periodic) < eps
            ii, jj = valid[qi[ok]], sid[ri[ok]]
            keep = ii != jj
            a, b = np.minimum(ii[keep], jj[keep]), np.maximum(ii[keep], jj[keep])
            found_i.append(np.unique(a.astype(np.int64) * (1 << 32) + b))
    if not found_i:
        return np.zeros((0, 2), dtype=np.int64)
    code = np.unique(np.concatenate(found_i))
    return np.stack([code >> 32, code & ((1 << 32) - 1)], axis=1)


def _grid_filter(sampler, pairs: np.ndarray, eps: float) -> np.ndarray:
    """Keep pairs that pass the own-versus-near test at every grid probe, both ways."""
    if len(pairs) == 0:
        return pairs
    ok = np.ones(len(pairs), dtype=bool)
    periodic = np.array([k == "per" for k in sampler.feature_kinds()])
    for p in sampler.grid_points():
        if not ok.any():
            break
        subset = np.unique(pairs[ok])
        own, (sid, feat) = sampler.probe(p, subset)
        order = np.argsort(sid, kind="stable")
        sid, feat = sid[order], feat[order]
        starts = np.searchsorted(sid, np.arange(sampler.count), side="left")
        ends = np.searchsorted(sid, np.arange(sampler.count), side="right")
        width = int((ends - starts)[subset].max()) if len(subset) else 0
        if width == 0:
            continue
        pad = np.full((sampler.count, width, feat.shape[1]), np.nan)
        rank = np.arange(len(sid)) - starts[sid]
        pad[sid, rank] = feat
        live = np.flatnonzero(ok)
        i, j = pairs[live, 0], pairs[live, 1]
        fwd = (_gap(pad[j], own[i][:, None], periodic) < eps).any(axis=1)
        bwd = (_gap(pad[i], own[j][:, None], periodic) < eps).any(axis=1)
        # probes whose own tile lies outside either window impose nothing
        missing = np.isnan(own[i]).any(axis=1) | np.isnan(own[j]).any(axis=1)
        ok[live] = (fwd & bwd) | missing
    return pairs[ok]


# ------------------------------------------------------------ estimators


@dataclass
class ComplexityRow:
    eps: float
    L: float
    size: float
    samples: int
    seed: int
    method: str
    hits: int = 0
    candidates: int = 0


def _anchor_probes(sampler):
    own, near = [], []
    for p in sampler.anchor_points():
        o, n = sampler.probe(p)
        own.append(o)
        near.append(n)
    return own, near


def count_close_pairs(sampler) -> tuple:
    """(confirmed pairs with d_L < eps, candidates after both prefilter stages)."""
    own, near = _anchor_probes(sampler)
    pairs = candidate_pairs(own, near, sampler.count, sampler.eps, sampler.feature_kinds())
    pairs = _grid_filter(sampler, pairs, sampler.eps)
    hits = 0
    for i, j in pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]:
        if dL_below(sampler.window(int(i)), sampler.window(int(j)), sampler.eps):
            hits += 1
    return hits, len(pairs)


def collision_complexity(rule, eps: float, L: float, samples: int, seed: int,
                         min_hits: int = 0, max_samples: int = 400_000) -> ComplexityRow:
    """``C ~ 1/P(d_L(W, W') < eps)`` over independent windows ``W, W'``.

    Candidate pairs come from probe-tile prefilters that only drop pairs at
    distance at least eps; each survivor is confirmed with the exact test.
    With ``min_hits`` the sample count doubles until that many pairs confirm.
    """
    while True:
        sampler = WindowSampler(rule, eps, L, seed, samples)
        hits, cands = count_close_pairs(sampler)
        if hits >= min_hits or samples * 2 > max_samples:
            break
        samples *= 2
    total = samples * (samples - 1) / 2
    size = total / hits if hits else math.inf
    return ComplexityRow(eps, L, size, samples, seed, "collision", hits, cands)


def estimate_complexity(rule, eps: float, L: float, sample_budget: int, stall_limit: int,
                        seed: int) -> ComplexityRow:
    """Greedy (d_L, eps)-separated set: admit a window unless some admitted one is within eps.

    Stops after ``stall_limit`` consecutive rejections or when the budget is spent.
    """
    sampler = WindowSampler(rule, eps, L, seed, sample_budget)
    own, near = _anchor_probes(sampler)
    pairs = candidate_pairs(own, near, sampler.count, eps, sampler.feature_kinds())
    pairs = _grid_filter(sampler, pairs, eps)
    partners = {}
    for i, j in pairs:
        partners.setdefault(int(j), []).append(int(i))
    admitted = set()
    stall = used = 0
    for k in range(sample_budget):
        used = k + 1
        close = any(dL_below(sampler.window(k), sampler.window(i), eps)
                    for i in partners.get(k, ()) if i in admitted)
        if close:
            stall += 1
            if stall >= stall_limit:
                break
        else:
            admitted.add(k)
            stall = 0
    return ComplexityRow(eps, L, float(len(admitted)), used, seed, "greedy")


# ------------------------------------------------------------ tables and fits


@dataclass
class ExponentFit:
    gamma: float
    band: float
    residual: float
    bounded: bool
    offset: float = 0.0


@dataclass
class ComplexityTable:
    rule: str
    rows: list = field(default_factory=list)

    def at_eps(self, eps: float) -> list:
        return [r for r in self.rows if abs(r.eps - eps) < 1e-12]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["eps", "L", "size", "samples", "seed", "method", "hits", "candidates"])
        for r in self.rows:
            writer.writerow([r.eps, r.L, r.size, r.samples, r.seed, r.method, r.hits, r.candidates])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"rule": self.rule, "rows": [r.__dict__ for r in self.rows]})


def fit_exponent(rows, offset: float = 0.0, bounded_ratio: float = 1.1) -> ExponentFit:
    """Least-squares slope of ``log C`` against ``log(L + offset)``.

    Rows at the same L (several seeds) are averaged in log space first.  The
    data are flagged bounded, with slope 0, when the sizes at every L of at
    least a quarter of the largest L agree within ``bounded_ratio``.
    """
    by_l = {}
    for r in rows:
        by_l.setdefault(r.L, []).append(math.log(r.size))
    if len(by_l) < 3:
        raise RuleError("fit_exponent needs at least three distinct L values")
    ls = sorted(by_l)
    y = np.array([np.mean(by_l[L]) for L in ls])
    x = np.log(np.array(ls) + offset)
    tail = y[np.array(ls) >= ls[-1] / 4]
    if math.exp(tail.max() - tail.min()) <= bounded_ratio:
        return ExponentFit(0.0, 0.0, 0.0, True, offset)
    a = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(a, y, rcond=None)
    resid = y - a @ coef
    dof = max(1, len(x) - 2)
    sigma2 = float(resid @ resid) / dof
    band = 2.0 * math.sqrt(sigma2 / float(((x - x.mean()) ** 2).sum()))
    return ExponentFit(float(coef[0]), band, float(np.abs(resid).max()), False, offset)


def size_ratio(rows, big: float, small: float) -> float:
    """Mean-log size at ``big`` over that at ``small``."""
    def at(L):
        vals = [math.log(r.size) for r in rows if r.L == L]
        if not vals:
            raise RuleError(f"no rows at L={L}")
        return float(np.mean(vals))
    return math.exp(at(big) - at(small))


def _table_job(args):
    rule_name, params, eps, L, seed, samples, min_hits = args
    from .rules import get_rule

    return collision_complexity(get_rule(rule_name, **params), eps, L, samples, seed, min_hits=min_hits)


def complexity_table(rule_name: str, params: dict, eps: float, ls, seeds, samples: int = 1000,
                     min_hits: int = 20, workers: int = 1) -> ComplexityTable:
    """Collision estimates for every (L, seed); identical for any worker count."""
    jobs = [(rule_name, dict(params), eps, float(L), int(s), samples, min_hits) for L in ls for s in seeds]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_table_job, jobs))
    else:
        rows = [_table_job(j) for j in jobs]
    return ComplexityTable(rule_name, rows)


def epsilon_entropy(rows, p: int = 1) -> dict:
    """Per eps: ``log C / L^p`` at the largest L and the increment slope ``d log C / d L^p``."""
    out = {}
    for eps in sorted({r.eps for r in rows}):
        by_l = {}
        for r in rows:
            if r.eps == eps:
                by_l.setdefault(r.L, []).append(math.log(r.size))
        ls = sorted(by_l)
        if len(ls) < 3:
            raise RuleError("epsilon_entropy needs rows at three or more L values")
        y = [float(np.mean(by_l[L])) for L in ls]
        vol = [L ** p for L in ls]
        slope = (y[-1] - y[-2]) / (vol[-1] - vol[-2])
        out[eps] = {"ratio": y[-1] / vol[-1], "increment": slope,
                    "trend": [yy / vv for yy, vv in zip(y, vol)]}
    return out


def equicontinuity_delta(rule, eps: float, L: float, pairs: int, seed: int,
                         deltas=(0.2, 0.1, 0.05, 0.02), samples: int = 3000) -> tuple:
    """Largest tested delta for which ``pairs`` sampled window pairs with
    ``d < delta`` all satisfy ``d_L < eps``; returns (delta, pairs checked, worst d_L).

    Close pairs are independent windows found by the probe join at the origin
    and confirmed with the exact tiling distance.
    """
    for delta in deltas:
        sampler = WindowSampler(rule, eps, L, seed, samples, radius=max(1 / eps, 1 / delta) + 4.0)
        origin = np.zeros(sampler.model.dim)
        own, near = sampler.probe(origin, radius=delta)
        cand = candidate_pairs([own], [near], sampler.count, delta, sampler.feature_kinds())
        checked, worst, ok = 0, 0.0, True
        for i, j in cand:
            w1, w2 = sampler.window(int(i)), sampler.window(int(j))
            if tiling_distance(w1, w2) >= delta:
                continue
            checked += 1
            d = dL_distance(w1, w2)
            worst = max(worst, d)
            if d >= eps:
                ok = False
                break
            if checked >= pairs:
                break
        if ok and checked >= pairs:
            return delta, checked, worst
    return None, 0, 1.0
