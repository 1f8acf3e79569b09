"""Supports, rigid placements, volumes and Hausdorff distances.

Supports are either closed intervals on the line or simple counterclockwise
polygons in the plane.  Everything is double precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DEGENERATE_AREA = 1e-12


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise GeometryError(f"interval needs lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def dimension(self) -> int:
        return 1


@dataclass(frozen=True)
class Polygon:
    vertices: tuple

    def __post_init__(self):
        verts = tuple((float(x), float(y)) for x, y in self.vertices)
        if len(verts) < 3:
            raise GeometryError("polygon needs at least 3 vertices")
        object.__setattr__(self, "vertices", verts)
        area = signed_area(verts)
        if area < DEGENERATE_AREA:
            raise GeometryError(f"polygon must be counterclockwise with positive area, got {area:.3g}")

    @property
    def dimension(self) -> int:
        return 2

    def array(self) -> np.ndarray:
        return np.asarray(self.vertices, dtype=float)


@dataclass(frozen=True)
class Placement:
    """Rotation about the origin followed by a translation."""

    translation: tuple = (0.0, 0.0)
    rotation: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "translation", tuple(float(t) for t in self.translation))
        object.__setattr__(self, "rotation", float(self.rotation))

    @classmethod
    def identity(cls, dimension: int = 2) -> "Placement":
        return cls((0.0,) * dimension, 0.0)

    def apply_points(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        if len(self.translation) == 1:
            if self.rotation != 0.0:
                raise GeometryError("1D placements cannot rotate")
            return pts + self.translation[0]
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        x, y = pts[..., 0], pts[..., 1]
        out = np.empty_like(pts)
        out[..., 0] = c * x - s * y + self.translation[0]
        out[..., 1] = s * x + c * y + self.translation[1]
        return out

    def compose(self, inner: "Placement") -> "Placement":
        """Placement equal to applying `inner` first and then `self`."""
        if len(self.translation) == 1:
            return Placement((self.translation[0] + inner.translation[0],), 0.0)
        moved = self.apply_points(np.asarray(inner.translation, dtype=float))
        return Placement((moved[0], moved[1]), self.rotation + inner.rotation)

    def inverse(self) -> "Placement":
        if len(self.translation) == 1:
            return Placement((-self.translation[0],), 0.0)
        c, s = math.cos(-self.rotation), math.sin(-self.rotation)
        tx, ty = self.translation
        return Placement((-(c * tx - s * ty), -(s * tx + c * ty)), -self.rotation)


def signed_area(vertices) -> float:
    v = np.asarray(vertices, dtype=float)
    # shoelace about the first vertex avoids cancellation far from the origin
    v = v - v[0]
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def volume(support) -> float:
    if isinstance(support, Interval):
        return support.hi - support.lo
    area = signed_area(support.vertices)
    if area < DEGENERATE_AREA:
        raise GeometryError(f"degenerate polygon, area {area:.3g}")
    return area


def apply_placement(support, placement: Placement):
    if isinstance(support, Interval):
        shift = placement.translation[0]
        if placement.rotation != 0.0:
            raise GeometryError("1D placements cannot rotate")
        return Interval(support.lo + shift, support.hi + shift)
    return Polygon(tuple(map(tuple, placement.apply_points(support.array()))))


def bounding_box(support) -> tuple:
    if isinstance(support, Interval):
        return (support.lo, support.hi)
    v = support.array()
    return (float(v[:, 0].min()), float(v[:, 1].min()), float(v[:, 0].max()), float(v[:, 1].max()))


def diameter(support) -> float:
    if isinstance(support, Interval):
        return support.hi - support.lo
    v = support.array()
    d = v[:, None, :] - v[None, :, :]
    return float(np.sqrt((d ** 2).sum(-1)).max())


def centroid(support) -> np.ndarray:
    if isinstance(support, Interval):
        return np.array([(support.lo + support.hi) / 2])
    v = support.array()
    x, y = v[:, 0], v[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = cross.sum() / 2
    return np.array([((x + xn) * cross).sum() / (6 * a), ((y + yn) * cross).sum() / (6 * a)])


def boundary_samples(polygon: Polygon, spacing: float) -> np.ndarray:
    """All vertices plus points along every edge at most `spacing` apart."""
    v = polygon.array()
    pieces = []
    for a, b in zip(v, np.roll(v, -1, axis=0)):
        k = max(1, int(math.ceil(np.linalg.norm(b - a) / spacing)))
        t = np.arange(k)[:, None] / k
        pieces.append(a + t * (b - a))
    return np.vstack(pieces)


def point_in_polygon(points, polygon: Polygon) -> np.ndarray:
    """Boolean mask of points inside or on a convex or simple polygon (even-odd rule)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    v = polygon.array()
    inside = np.zeros(len(pts), dtype=bool)
    x, y = pts[:, 0], pts[:, 1]
    for (x1, y1), (x2, y2) in zip(v, np.roll(v, -1, axis=0)):
        crosses = (y1 > y) != (y2 > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (x < xint)
    return inside


def _points_to_polygon_distance(points: np.ndarray, polygon: Polygon) -> np.ndarray:
    v = polygon.array()
    a = v
    b = np.roll(v, -1, axis=0)
    ab = b - a
    ap = points[:, None, :] - a[None, :, :]
    t = np.clip((ap * ab).sum(-1) / (ab * ab).sum(-1), 0.0, 1.0)
    closest = a[None] + t[..., None] * ab[None]
    d = np.sqrt(((points[:, None, :] - closest) ** 2).sum(-1)).min(axis=1)
    d[point_in_polygon(points, polygon)] = 0.0
    return d


def hausdorff_distance(a, b) -> float:
    if a.dimension != b.dimension:
        raise GeometryError("hausdorff_distance needs supports of equal dimension")
    if isinstance(a, Interval):
        return max(abs(a.lo - b.lo), abs(a.hi - b.hi))
    spacing = 1e-3 * max(diameter(a), diameter(b))
    sa, sb = boundary_samples(a, spacing), boundary_samples(b, spacing)
    return float(max(_points_to_polygon_distance(sa, b).max(), _points_to_polygon_distance(sb, a).max()))


def convex_hausdorff(verts_a: np.ndarray, verts_b: np.ndarray) -> np.ndarray:
    """Exact Hausdorff distance between batches of convex polygons.

    ``verts_a`` and ``verts_b`` have shape (m, k, 2); for convex sets the
    distance is attained at a vertex, so only vertices are tested.
    """
    def one_sided(p, q):
        qa = q
        qb = np.roll(q, -1, axis=1)
        e = qb - qa
        rel = p[:, :, None, :] - qa[:, None, :, :]
        t = np.clip((rel * e[:, None]).sum(-1) / (e * e).sum(-1)[:, None, :], 0.0, 1.0)
        near = qa[:, None] + t[..., None] * e[:, None]
        dist = np.sqrt(((p[:, :, None, :] - near) ** 2).sum(-1)).min(axis=2)
        cross = e[:, None, :, 0] * rel[..., 1] - e[:, None, :, 1] * rel[..., 0]
        inside = (cross >= -1e-12).all(axis=2)
        dist[inside] = 0.0
        return dist.max(axis=1)

    return np.maximum(one_sided(verts_a, verts_b), one_sided(verts_b, verts_a))


def polygon_intersection_area(a: Polygon, b: Polygon) -> float:
    """Area of the intersection of two convex polygons (Sutherland-Hodgman)."""
    out = list(a.vertices)
    clip = b.array()
    for (x1, y1), (x2, y2) in zip(clip, np.roll(clip, -1, axis=0)):
        if not out:
            break
        inp, out = out, []

        def side(p):
            return (x2 - x1) * (p[1] - y1) - (y2 - y1) * (p[0] - x1)

        for i, cur in enumerate(inp):
            prev = inp[i - 1]
            sc, sp = side(cur), side(prev)
            if sc >= 0:
                if sp < 0:
                    out.append(_cut(prev, cur, sp, sc))
                out.append(cur)
            elif sp >= 0:
                out.append(_cut(prev, cur, sp, sc))
    if len(out) < 3:
        return 0.0
    return max(0.0, signed_area(out))


def _cut(p, q, sp, sq):
    t = sp / (sp - sq)
    return (p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))
