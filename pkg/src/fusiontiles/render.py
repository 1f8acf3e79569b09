"""Deterministic SVG output: patches, grid densities and complexity plots."""

from __future__ import annotations

import colorsys
import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from . import geometry as geo
from .fusion import FusionRule, Patch, RuleError
from .labels import CircleLabel, label_to_json

COLOR_MODES = ("label", "handedness", "angle", "level")


@dataclass(frozen=True)
class RenderStyle:
    color_by: str = "label"
    stroke_width: float = 0.01
    palette_seed: int = 0

    def __post_init__(self):
        if self.color_by not in COLOR_MODES:
            raise RuleError(f"color_by must be one of {COLOR_MODES}")


def _num(x: float) -> str:
    s = f"{x:.6f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def _label_key(label) -> str:
    return json.dumps(label_to_json(label), sort_keys=True)


def label_hash(label) -> str:
    return hashlib.sha1(_label_key(label).encode()).hexdigest()[:10]


def patch_filename(rule_name: str, level: int, label) -> str:
    return f"{rule_name}-{level}-{label_hash(label)}.svg"


def _hex(h: float, s: float, v: float) -> str:
    r, g, b = colorsys.hsv_to_rgb(h % 1.0, s, v)
    return "#{:02x}{:02x}{:02x}".format(round(r * 255), round(g * 255), round(b * 255))


def _style_of(label, level: int, style: RenderStyle) -> tuple:
    """(css class, fill colour) for a tile."""
    hand = getattr(label, "hand", None)
    cls = {"R": "right-handed", "L": "left-handed"}.get(hand, "tile")
    if style.color_by == "handedness":
        return cls, {"right-handed": "#d95f02", "left-handed": "#7570b3"}.get(cls, "#999999")
    if style.color_by == "angle" and isinstance(label, CircleLabel):
        return cls, _hex(label.theta / (2 * math.pi), 0.55, 0.9)
    if style.color_by == "level":
        return cls, _hex(0.13 * level + 0.07 * style.palette_seed, 0.5, 0.85)
    digest = hashlib.sha1(f"{style.palette_seed}:{_label_key(label)}".encode()).digest()
    return cls, _hex(digest[0] / 256, 0.45 + digest[1] / 1024, 0.8 + digest[2] / 1536)


def render_patch_svg(patch: Patch, rule: FusionRule, style: RenderStyle = RenderStyle()) -> str:
    """One ``path`` per tile; the viewBox is the bounding box padded by 2%."""
    if len(patch) == 0:
        raise RuleError("cannot render an empty patch")
    supports = patch.supports(rule)
    if isinstance(supports[0], geo.Interval):
        lo = min(s.lo for s in supports)
        hi = max(s.hi for s in supports)
        band = max(hi - lo, 1e-9) * 0.05
        shapes = [((s.lo, 0.0), (s.hi, 0.0), (s.hi, band), (s.lo, band)) for s in supports]
    else:
        shapes = [s.vertices for s in supports]
    pts = np.array([p for shape in shapes for p in shape])
    x0, y0 = pts.min(axis=0)
    x1, y1 = pts.max(axis=0)
    pw, ph = 0.02 * (x1 - x0), 0.02 * (y1 - y0)
    vb = (x0 - pw, y0 - ph, (x1 - x0) + 2 * pw, (y1 - y0) + 2 * ph)
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        '<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'viewBox="{" ".join(_num(v) for v in vb)}">',
        # flip y so that the plane's orientation is kept
        f'<g transform="matrix(1 0 0 -1 0 {_num(2 * vb[1] + vb[3])})" '
        f'stroke="#222222" stroke-width="{_num(style.stroke_width * max(vb[2], vb[3]) / 10)}">',
    ]
    for tile, shape in zip(patch.tiles, shapes):
        cls, fill = _style_of(tile.label, tile.level, style)
        d = "M " + " L ".join(f"{_num(x)} {_num(y)}" for x, y in shape) + " Z"
        lines.append(f'<path class="{cls}" fill="{fill}" d="{d}"/>')
    lines += ["</g>", "</svg>", ""]
    return "\n".join(lines)


# ------------------------------------------------------------ plots

_W, _H, _M = 640.0, 420.0, 50.0


def _frame(title: str) -> list:
    return [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" viewBox="0 0 {_num(_W)} {_num(_H)}">',
        f'<rect x="0" y="0" width="{_num(_W)}" height="{_num(_H)}" fill="white"/>',
        f'<text x="{_num(_W / 2)}" y="24" text-anchor="middle" font-size="14">{title}</text>',
        f'<rect x="{_num(_M)}" y="{_num(_M)}" width="{_num(_W - 2 * _M)}" height="{_num(_H - 2 * _M)}" '
        'fill="none" stroke="#888888"/>',
    ]


def _scaler(xs, ys):
    x0, x1 = float(np.min(xs)), float(np.max(xs))
    y0, y1 = float(np.min(ys)), float(np.max(ys))
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y0, y1 = y0 - 0.5 * max(abs(y0), 1.0), y1 + 0.5 * max(abs(y1), 1.0)

    def f(x, y):
        px = _M + (np.asarray(x) - x0) / (x1 - x0) * (_W - 2 * _M)
        py = _H - _M - (np.asarray(y) - y0) / (y1 - y0) * (_H - 2 * _M)
        return px, py

    return f, (x0, x1, y0, y1)


def _polyline(px, py, colour: str, cls: str, dash: str = "") -> str:
    pts = " ".join(f"{_num(a)},{_num(b)}" for a, b in zip(px, py))
    extra = f' stroke-dasharray="{dash}"' if dash else ""
    return f'<polyline class="{cls}" fill="none" stroke="{colour}" stroke-width="1.5"{extra} points="{pts}"/>'


def render_density_plot(density, overlay=None, title: str = "density") -> str:
    """Polyline of the grid values; ``overlay(x)`` (e.g. the c/x^2 closed form) drawn dashed.

    With an overlay the largest relative gap between the curves is annotated.
    """
    x = np.asarray(density.grid, dtype=float)
    y = np.asarray(density.values, dtype=float)
    ys = [y]
    gap = None
    if overlay is not None:
        oy = np.asarray(overlay(x), dtype=float)
        ys.append(oy)
        gap = float(np.max(np.abs(y - oy) / np.maximum(np.abs(oy), 1e-300)))
    scale, (x0, x1, y0, y1) = _scaler(x, np.concatenate(ys))
    out = _frame(title)
    px, py = scale(x, y)
    out.append(_polyline(px, py, "#1b9e77", "values"))
    if overlay is not None:
        px, py = scale(x, ys[1])
        out.append(_polyline(px, py, "#d95f02", "overlay", "6,4"))
        out.append(f'<text class="gap" x="{_num(_W - _M)}" y="{_num(_M - 8)}" text-anchor="end" '
                   f'font-size="12">max relative gap {gap:.3e}</text>')
    out.append(f'<text x="{_num(_M)}" y="{_num(_H - 18)}" font-size="11">x from {x0:.4g} to {x1:.4g}; '
               f'values from {y0:.4g} to {y1:.4g}</text>')
    out += ["</svg>", ""]
    return "\n".join(out)


def render_complexity_plot(rows, fit=None, title: str = "complexity") -> str:
    """log C against log(L + offset) per row, with the fitted line and its slope."""
    offset = fit.offset if fit is not None else 0.0
    lx = np.log(np.array([r.L for r in rows], dtype=float) + offset)
    ly = np.log(np.array([r.size for r in rows], dtype=float))
    scale, _ = _scaler(lx, ly)
    out = _frame(title)
    px, py = scale(lx, ly)
    for a, b in zip(px, py):
        out.append(f'<circle class="point" cx="{_num(a)}" cy="{_num(b)}" r="3" fill="#7570b3"/>')
    if fit is not None:
        if fit.bounded:
            label = "bounded"
            level = float(np.mean(ly))
            fx, fy = scale([lx.min(), lx.max()], [level, level])
        else:
            label = f"slope {fit.gamma:.3f} +/- {fit.band:.3f}"
            intercept = float(np.mean(ly) - fit.gamma * np.mean(lx))
            xs = np.array([lx.min(), lx.max()])
            fx, fy = scale(xs, intercept + fit.gamma * xs)
        out.append(_polyline(fx, fy, "#e7298a", "fit"))
        out.append(f'<text class="slope" x="{_num(_W - _M)}" y="{_num(_M - 8)}" text-anchor="end" '
                   f'font-size="12">{label}</text>')
    out += ["</svg>", ""]
    return "\n".join(out)
