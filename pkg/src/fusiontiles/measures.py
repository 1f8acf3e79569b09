"""Frequency measures, invariant-measure solvers and the varlen transfer operator.

``rho_n`` gives the number of level-``n`` supertiles of each kind per unit
volume.  A sequence ``rho_0, rho_1, ...`` describes an invariant measure when
each ``rho_n`` is volume normalized and ``rho_n = M_{n,N} rho_N``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .fusion import FusionRule, RuleError, label_counts
from .labels import CircleLabel, CompactifiedNaturals, label_to_json
from .transition import _column, pushforward


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, residuals):
        super().__init__(message)
        self.residuals = list(residuals)


# ------------------------------------------------------------ measure types


class AtomicMeasure:
    """Finitely many labels with nonnegative weights, keyed by canonical label."""

    def __init__(self, level: int, entries=None):
        self.level = level
        self._data = {}
        for key, lab, w in entries or ():
            self.add(key, lab, w)

    def add(self, key, label, weight: float):
        if weight < 0:
            raise ValueError("weights must be nonnegative")
        if key in self._data:
            self._data[key][1] += weight
        else:
            self._data[key] = [label, weight]

    def items(self):
        return [(lab, w) for lab, w in self._data.values()]

    def weight(self, key) -> float:
        hit = self._data.get(key)
        return 0.0 if hit is None else hit[1]

    def keys(self):
        return list(self._data)

    def scaled(self, factor: float) -> "AtomicMeasure":
        return AtomicMeasure(self.level, [(k, lab, w * factor) for k, (lab, w) in self._data.items()])

    def total_volume(self, rule: FusionRule) -> float:
        return sum(w * rule.volume(self.level, lab) for lab, w in self.items())

    def normalized(self, rule: FusionRule) -> "AtomicMeasure":
        return self.scaled(1.0 / self.total_volume(rule))

    def mass(self, label_class) -> float:
        return sum(w for lab, w in self.items() if label_class.contains(lab))

    def to_json(self) -> str:
        return json.dumps({"level": self.level,
                           "atoms": [{"label": label_to_json(lab), "weight": w} for lab, w in self.items()]})


@dataclass
class GridDensity:
    """Density per unit label-length on a grid; ``grid`` may repeat a node to hold a jump."""

    level: int
    grid: np.ndarray
    values: np.ndarray
    kind: str = "interval"
    meta: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({"level": self.level, "kind": self.kind, "grid": self.grid.tolist(),
                           "values": self.values.tolist()})

    def to_csv(self) -> str:
        return "x,value\n" + "".join(f"{x:.12g},{v:.12g}\n" for x, v in zip(self.grid, self.values))


def tv_distance(rule: FusionRule, a: AtomicMeasure, b: AtomicMeasure) -> float:
    """Volume-weighted L1 distance; 2 for disjointly supported probability measures."""
    keys = set(a.keys()) | set(b.keys())
    total = 0.0
    for k in keys:
        lab = (a._data.get(k) or b._data.get(k))[0]
        total += rule.volume(a.level, lab) * abs(a.weight(k) - b.weight(k))
    return total


# ------------------------------------------------------------ Perron-Frobenius


@dataclass
class PFResult:
    vector: np.ndarray
    eigenvalue: float
    iterations: int
    residual: float


def power_iteration(matrix: np.ndarray, iters: int = 10_000, tol: float = 1e-14,
                    start: np.ndarray | None = None) -> PFResult:
    """Dominant eigenpair of a nonnegative matrix; the vector has unit 2-norm."""
    a = np.asarray(matrix, dtype=float)
    v = np.ones(a.shape[0]) if start is None else np.asarray(start, dtype=float)
    v = v / np.linalg.norm(v)
    mu = 0.0
    residual = math.inf
    for it in range(1, iters + 1):
        w = a @ v
        mu = float(np.linalg.norm(w))
        w /= mu
        residual = float(np.abs(w - v).max())
        v = w
        if residual < tol:
            return PFResult(v, float(v @ a @ v), it, residual)
    raise ConvergenceError(f"power iteration did not converge, residual {residual:.3g}", [residual])


def solve_invariant_finite(rule: FusionRule, levels, iters: int = 10_000, tol: float = 1e-13,
                           component=None) -> list:
    """Volume-normalized, transition-consistent ``rho_n`` for the listed levels."""
    from .rules.pinwheel import AntiPinwheelRule, ALPHA, HALF_PI
    from .rules.shear import LABELS, MATRIX, ShearRule
    from .rules.solenoid import SolenoidRule

    if isinstance(rule, ShearRule):
        pf = power_iteration(np.array(MATRIX), iters, tol)
        out = []
        for n in levels:
            m = AtomicMeasure(n, [(lab, lab, float(w)) for lab, w in zip(LABELS, pf.vector)])
            out.append(m.normalized(rule))
        return out
    if isinstance(rule, SolenoidRule):
        return [_solenoid_measure(rule, n, iters, tol) for n in levels]
    if isinstance(rule, AntiPinwheelRule):
        if component is None:
            raise RuleError("anti-pinwheel needs a component (hand, theta) at level 0")
        hand0, theta0 = component
        # children of (H, t) sit at t + k*alpha + m*pi/2 with k fixed by H
        table = rule.tables["R"]
        mat = np.zeros((4, 4))
        for _, _, m, _ in table:
            for j in range(4):
                mat[(j + m) % 4, j] += 1
        pf = power_iteration(mat, iters, tol)
        out = []
        for n in levels:
            hand = hand0 if n % 2 == 0 else ("L" if hand0 == "R" else "R")
            base = theta0 + (n % 2) * (ALPHA if hand0 == "R" else -ALPHA)
            atoms = []
            for m in range(4):
                lab = CircleLabel(hand, base + m * HALF_PI)
                atoms.append((rule.canonical(n, lab), lab, float(pf.vector[m])))
            out.append(AtomicMeasure(n, atoms).normalized(rule))
        return out
    raise RuleError(f"{rule.name} has no finite invariant-measure solver")


def _solenoid_measure(rule, n: int, iters: int, tol: float) -> AtomicMeasure:
    prev = None
    for big in range(n + 2, n + 2 + iters):
        q = rule.limit_ids[0]
        cur = supertile_generated_measure(rule, q, n, big)
        if prev is not None and tv_distance(rule, cur, prev) < tol:
            return cur
        prev = cur
    raise ConvergenceError("solenoid measure did not converge", [])


# ------------------------------------------------------------ supertile measures


def supertile_generated_measure(rule: FusionRule, q, n: int, big: int) -> AtomicMeasure:
    """``#(. in Q) / Vol(Q)`` over level-``n`` labels of the level-``N`` supertile ``Q``."""
    if n >= big:
        raise RuleError("need n < N")
    vol = rule.volume(big, q)
    out = AtomicMeasure(n)
    for lab, c in _column(rule, n, big, q):
        out.add(rule.canonical(n, lab), lab, c / vol)
    return out


def angle_histogram(measure: AtomicMeasure, bins: int = 64) -> GridDensity:
    """Per-hand histogram of an atomic circle-label measure over [0, 2pi)."""
    edges = np.linspace(0.0, 2 * math.pi, bins + 1)
    hist = np.zeros(2 * bins)
    for lab, w in measure.items():
        j = min(int(lab.theta / (2 * math.pi) * bins), bins - 1)
        hist[j + (bins if lab.hand == "R" else 0)] += w
    width = edges[1] - edges[0]
    grid = np.concatenate([edges[:-1], edges[:-1]]) + width / 2
    return GridDensity(measure.level, grid, hist / width, kind="circle", meta={"bins": bins})


def ks_to_uniform(angles: np.ndarray, weights: np.ndarray | None = None,
                  period: float = math.pi / 2) -> float:
    """Kolmogorov-Smirnov distance of weighted angles mod ``period`` to uniform."""
    x = np.mod(np.asarray(angles, dtype=float), period) / period
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float)
    order = np.argsort(x, kind="stable")
    x, w = x[order], w[order] / w.sum()
    cdf = np.cumsum(w)
    before = cdf - w
    return float(max(np.max(cdf - x), np.max(x - before)))


def unique_ergodicity_diagnostic(rule: FusionRule, n: int, big_list, samples=None) -> list:
    """Diameter of the normalized columns ``M_{n,N}(., Q)/Vol(Q)`` for each ``N``."""
    from .transition import sample_labels

    out = []
    for big in big_list:
        qs = samples(big) if callable(samples) else (samples or sample_labels(rule, big))
        cols = [_binned(rule, supertile_generated_measure(rule, q, n, big)) for q in qs]
        diam = 0.0
        for i in range(len(cols)):
            for j in range(i + 1, len(cols)):
                diam = max(diam, float(np.abs(cols[i] - cols[j]).sum()))
        out.append(diam)
    return out


def _binned(rule: FusionRule, m: AtomicMeasure, resolution: float = 0.01) -> np.ndarray:
    """Volume-weighted masses on a fixed label net of the given resolution."""
    space = rule.label_space(m.level)
    if isinstance(space, CompactifiedNaturals):
        net = space.epsilon_net(resolution)
        vec = np.zeros(len(net))
        for lab, w in m.items():
            key = lab if lab in net else space.limit_class(lab)
            vec[net.index(key)] += w * rule.volume(m.level, lab)
        return vec
    if hasattr(space, "names"):
        return np.array([m.weight(x) * rule.volume(m.level, x) for x in space.names])
    if isinstance(space.epsilon_net(1.0)[0], CircleLabel):
        bins = int(math.ceil(2 * math.pi / resolution))
        vec = np.zeros(2 * bins)
        for lab, w in m.items():
            j = min(int(lab.theta / resolution), bins - 1)
            vec[j + (bins if lab.hand == "R" else 0)] += w * rule.volume(m.level, lab)
        return vec
    lo, hi = float(space.lo), float(space.hi)
    bins = int(math.ceil((hi - lo) / resolution))
    vec = np.zeros(bins + 1)
    for lab, w in m.items():
        j = int((float(lab.x) - lo) / resolution)
        vec[min(j, bins)] += w * rule.volume(m.level, lab)
    return vec


# ------------------------------------------------------------ patch frequencies


@dataclass
class PatchFrequency:
    value: float
    trace: list
    gap: float


def patch_frequency(rule: FusionRule, rho_list, word, n_max: int, tol: float = 1e-9) -> PatchFrequency:
    """Frequency of a 1D word of level-0 labels: ``sum_P #(word in P) rho_n(P)``.

    The word is matched label by label within ``tol``; occurrences are counted
    strictly inside each level-``n`` supertile, so the estimates increase with
    ``n`` towards the true frequency.
    """
    from .fusion import expand, root_instance

    space = rule.label_space(0)
    trace = []
    for n, rho in enumerate(rho_list[: n_max + 1]):
        if rho.level != n:
            raise RuleError("rho_list[n] must live on level n")
        total = 0.0
        for lab, w in rho.items():
            if w == 0:
                continue
            labels = expand(rule, root_instance(rule, n, lab), n).labels()
            hits = 0
            for i in range(len(labels) - len(word) + 1):
                if all(space.distance(labels[i + j], word[j]) <= tol for j in range(len(word))):
                    hits += 1
            total += w * hits
        trace.append(total)
    gap = trace[-1] - trace[-2] if len(trace) > 1 else math.inf
    return PatchFrequency(trace[-1], trace, gap)


def single_tile_frequency(rho0: AtomicMeasure, key) -> float:
    return rho0.weight(key)


# ------------------------------------------------------------ transfer operator


def transfer_constant() -> float:
    return 1.0 / (3.0 * math.log(3.0) - 2.0 * math.log(2.0))


def closed_form(x: np.ndarray, right: bool) -> np.ndarray:
    c = transfer_constant()
    return (3.0 * c if right else c) / np.asarray(x) ** 2


class TransferOperator:
    """Rescaled-length transfer operator on [1, 3].

    The density jumps at 2, so it is stored as two arrays: ``left`` on the
    nodes of [1, 2] and ``right`` on the nodes of [2, 3].  ``G`` is the number
    of cells on [1, 3] and must be divisible by 4 so that 3/2 and 2 are nodes.
    """

    def __init__(self, G: int):
        if G % 4 or G < 4:
            raise RuleError("grid size must be a positive multiple of 4")
        self.G = G
        self.h = 2.0 / G
        half = G // 2
        self.xl = 1.0 + self.h * np.arange(half + 1)
        self.xr = 2.0 + self.h * np.arange(half + 1)
        q = G // 4
        # [1, 3/2]: pull back 2x onto the right array
        self.first = slice(0, q + 1)
        # (3/2, 2]: pull back 2x/3 onto the left array
        self.second = slice(q + 1, half + 1)
        self.pull_first = 2.0 * self.xl[self.first]
        self.pull_second = 2.0 * self.xl[self.second] / 3.0
        self.pull_third = 2.0 * self.xr / 3.0

    def density(self, left: np.ndarray, right: np.ndarray) -> GridDensity:
        return GridDensity(0, np.concatenate([self.xl, self.xr]), np.concatenate([left, right]),
                           meta={"split": len(self.xl)})

    def split(self, f: GridDensity):
        k = f.meta.get("split")
        if k != len(self.xl) or len(f.values) != 2 * k:
            raise RuleError("density is not on this operator's grid")
        return f.values[:k], f.values[k:]

    def apply_arrays(self, left: np.ndarray, right: np.ndarray):
        new_left = np.empty_like(left)
        new_left[self.first] = (4.0 / 3.0) * np.interp(self.pull_first, self.xr, right)
        new_left[self.second] = (4.0 / 9.0) * np.interp(self.pull_second, self.xl, left)
        new_right = (4.0 / 9.0) * np.interp(self.pull_third, self.xl, left) + (2.0 / 3.0) * right
        return new_left, new_right

    def moment(self, left: np.ndarray, right: np.ndarray) -> float:
        """``integral of x f(x) dx`` by the trapezoid rule on each side."""
        return float(np.trapezoid(self.xl * left, self.xl) + np.trapezoid(self.xr * right, self.xr))


def transfer_apply(op: TransferOperator, f: GridDensity) -> GridDensity:
    left, right = op.split(f)
    return op.density(*op.apply_arrays(left, right))


@dataclass
class TransferReport:
    iterations: int
    residual: float
    moment: float
    c_fitted: float
    c_exact: float
    max_rel_error: float
    residual_history: list


def solve_transfer_fixed_point(G: int = 4096, max_iters: int = 100_000, tol: float = 1e-8,
                               exclude_cells: int = 2):
    """Iterate the operator from a constant density, renormalizing every step."""
    if G < 256:
        raise RuleError("grid size must be at least 256")
    op = TransferOperator(G)
    left = np.ones_like(op.xl)
    right = np.ones_like(op.xr)
    s = op.moment(left, right)
    left, right = left / s, right / s
    history = []
    residual = math.inf
    it = 0
    for it in range(1, max_iters + 1):
        nl, nr = op.apply_arrays(left, right)
        s = op.moment(nl, nr)
        nl, nr = nl / s, nr / s
        residual = float(max(np.abs(nl - left).max(), np.abs(nr - right).max()))
        left, right = nl, nr
        if it % 100 == 0 or residual < tol:
            history.append(residual)
        if residual < tol:
            break
    else:
        raise ConvergenceError(f"transfer iteration stalled at residual {residual:.3g}", history)
    c_exact = transfer_constant()
    mask_l = _away_from(op.xl, (1.5, 2.0), exclude_cells * op.h)
    mask_r = _away_from(op.xr, (2.0,), exclude_cells * op.h)
    err = max(float(np.max(np.abs(left[mask_l] / closed_form(op.xl[mask_l], False) - 1))),
              float(np.max(np.abs(right[mask_r] / closed_form(op.xr[mask_r], True) - 1))))
    c_fit = float(np.median(np.concatenate([left[mask_l] * op.xl[mask_l] ** 2,
                                            right[mask_r] * op.xr[mask_r] ** 2 / 3])))
    report = TransferReport(it, residual, op.moment(left, right), c_fit, c_exact, err, history)
    return op.density(left, right), report


def _away_from(x: np.ndarray, points, dist: float) -> np.ndarray:
    mask = np.ones(len(x), dtype=bool)
    for p in points:
        mask &= np.abs(x - p) > dist + 1e-12
    return mask


# ------------------------------------------------------------ spectral equation


@dataclass
class SpectralRoot:
    gamma: complex
    lam: complex
    residual: float


def spectral_residual(gamma: complex) -> complex:
    return 3.0 ** gamma - 2.0 ** gamma - 1.0


def transfer_spectrum_roots(search_box=(0.0, 4.0, 0.0, 40.0), count: int = 200,
                            max_newton: int = 100) -> tuple:
    """Roots of ``3^g = 2^g + 1`` by Newton from a seed grid; returns (roots, failures)."""
    re_lo, re_hi, im_lo, im_hi = search_box
    side = max(2, int(math.isqrt(count)))
    seeds = [complex(a, b) for a in np.linspace(re_lo, re_hi, side)
             for b in np.linspace(im_lo, im_hi, side)]
    ln2, ln3 = math.log(2.0), math.log(3.0)
    roots, failures = [], 0
    for g in seeds:
        ok = False
        try:
            for _ in range(max_newton):
                f = spectral_residual(g)
                df = ln3 * 3.0 ** g - ln2 * 2.0 ** g
                if df == 0 or abs(g) > 1e3:
                    break
                step = f / df
                g -= step
                if abs(step) < 1e-15 * max(1.0, abs(g)):
                    ok = True
                    break
            res = abs(spectral_residual(g))
        except OverflowError:
            failures += 1
            continue
        if not (ok or res < 1e-12) or res >= 1e-10 or g.imag < -1e-9:
            failures += 1
            continue
        if abs(g.imag) < 1e-12:
            g = complex(g.real, 0.0)
        if not any(abs(g - r.gamma) < 1e-8 for r in roots):
            roots.append(SpectralRoot(g, (1.5) ** (g - 1.0), res))
    roots.sort(key=lambda r: (abs(r.gamma.imag), r.gamma.real))
    return roots, failures


def eigen_constraint(lam: complex) -> float:
    """``ln 2 ln|lam| + ln(3/2) ln|3 lam - 2|``, which vanishes on eigenvalues."""
    return math.log(2.0) * math.log(abs(lam)) + math.log(1.5) * math.log(abs(3 * lam - 2))
