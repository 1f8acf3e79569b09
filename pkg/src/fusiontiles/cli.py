"""Command-line entry point.

Exit codes: 0 on success, 1 when a verification suite fails, 2 on a
configuration error and 3 on a rule error (bad label, level or parameter).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction
from pathlib import Path

import numpy as np

from .fusion import RuleError
from .labels import CircleLabel, LabelError, label_to_json


class ConfigError(ValueError):
    """Malformed command line or configuration file."""


@dataclass
class RunConfig:
    command: str = "rules"
    action: str = ""
    rule: str = "pinwheel"
    alpha: str | None = None
    separation: str | None = None
    level: int = 2
    depth: int | None = None
    label: str | None = None
    eps: float = 0.2
    lengths: list = field(default_factory=lambda: [4.0, 8.0, 16.0, 32.0])
    grid: int = 4096
    iters: int = 100_000
    samples: int = 1000
    seed: int = 0
    seeds: int = 1
    workers: int = 1
    window: int = 1024
    word: str | None = None
    color_by: str = "label"
    svg: bool = False
    broken: bool = False
    out: str | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        data = json.loads(text)
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown configuration keys: {', '.join(sorted(extra))}")
        return cls(**data)

    def rule_params(self) -> dict:
        params = {}
        if self.alpha is not None:
            params["alpha"] = self.alpha
        if self.separation is not None:
            params["separation"] = self.separation
        return params


# ------------------------------------------------------------ parsing helpers


def build_rule(cfg: RunConfig):
    from .rules import get_rule

    return get_rule(cfg.rule, **cfg.rule_params())


def parse_label(rule, level: int, token: str | None):
    """Label from a token: ``R,0.5`` (hand, angle), ``a``, ``7``/``inf``, or ``3/2,+`` (length, side)."""
    from .labels import SlitInterval
    from .rules.solenoid import SolenoidRule

    space = rule.label_space(level)
    if token is None:
        return space.epsilon_net(1.0)[0]
    token = token.strip()
    try:
        if isinstance(space, SlitInterval):
            x, _, side = token.partition(",")
            return space.make(Fraction(x), {"": 0, "-": -1, "+": 1}[side.strip()])
        if isinstance(rule, SolenoidRule):
            return token if token.startswith("inf") else int(token)
        if rule.dimension == 2 and "," in token:
            hand, theta = token.split(",", 1)
            return CircleLabel(hand.strip(), float(theta))
        return token
    except (ValueError, KeyError, LabelError, ZeroDivisionError) as exc:
        raise RuleError(f"cannot parse label {token!r}: {exc}") from exc


def _emit(cfg: RunConfig, name: str, text: str):
    if cfg.out is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
        return
    path = Path(cfg.out)
    path.mkdir(parents=True, exist_ok=True)
    (path / name).write_text(text)
    print(str(path / name))


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, default=_json_default) + "\n"


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, complex):
        return [x.real, x.imag]
    if isinstance(x, Fraction):
        return str(x)
    raise TypeError(f"cannot serialize {type(x).__name__}")


# ------------------------------------------------------------ commands


def cmd_rules(cfg: RunConfig) -> int:
    from .rules import RULE_NAMES

    _emit(cfg, "rules.json", _dump({"rules": list(RULE_NAMES)}))
    return 0


def _patch(cfg: RunConfig):
    from .fusion import expand, root_instance

    rule = build_rule(cfg)
    label = parse_label(rule, cfg.level, cfg.label)
    depth = cfg.level if cfg.depth is None else cfg.depth
    return rule, label, expand(rule, root_instance(rule, cfg.level, label), depth)


def cmd_generate(cfg: RunConfig) -> int:
    from .render import RenderStyle, patch_filename, render_patch_svg

    rule, label, patch = _patch(cfg)
    stem = patch_filename(rule.name, cfg.level, label)[:-4]
    _emit(cfg, stem + ".json", patch.to_json())
    if cfg.svg:
        _emit(cfg, stem + ".svg", render_patch_svg(patch, rule, RenderStyle(cfg.color_by)))
    return 0


def cmd_render(cfg: RunConfig) -> int:
    from .render import RenderStyle, patch_filename, render_patch_svg

    rule, label, patch = _patch(cfg)
    _emit(cfg, patch_filename(rule.name, cfg.level, label),
          render_patch_svg(patch, rule, RenderStyle(cfg.color_by)))
    return 0


def cmd_transition(cfg: RunConfig) -> int:
    from .labels import FiniteSpace
    from .transition import column_measure, matrix_power_check, transition_matrix

    rule = build_rule(cfg)
    big = cfg.level
    n = 0 if cfg.depth is None else big - cfg.depth
    report = {"rule": rule.name, "n": n, "N": big}
    if isinstance(rule.label_space(n), FiniteSpace):
        m = transition_matrix(rule, n, big)
        report["labels"] = list(m.labels_n)
        report["entries"] = [[int(v) for v in row] for row in m.entries]
    else:
        q = parse_label(rule, big, cfg.label)
        col = column_measure(rule, n, big, q)
        report["column"] = {"q": label_to_json(q), "total": col.total,
                            "items": [[label_to_json(lab), c] for lab, c in col.items]}
    report["composition"] = {f"{a}<{m}<{b}": matrix_power_check(rule, a, m, b)
                             for b in range(2, big + 1) for m in range(1, b) for a in range(m)}
    _emit(cfg, f"transition-{rule.name}-{big}.json", _dump(report))
    return 0


def cmd_measure(cfg: RunConfig) -> int:
    action = cfg.action
    handlers = {"solve": _measure_solve, "transfer": _measure_transfer,
                "empirical": _measure_empirical, "frequency": _measure_frequency}
    if action not in handlers:
        raise ConfigError(f"measure needs one of {', '.join(handlers)}")
    return handlers[action](cfg)


def _measure_solve(cfg: RunConfig) -> int:
    from .measures import power_iteration, solve_invariant_finite
    from .rules.shear import MATRIX, ShearRule

    rule = build_rule(cfg)
    report = {"rule": rule.name}
    if isinstance(rule, ShearRule):
        pf = power_iteration(np.array(MATRIX))
        report["pf"] = {"vector": pf.vector, "eigenvalue": pf.eigenvalue,
                        "iterations": pf.iterations, "residual": pf.residual}
    component = None
    if rule.name == "antipinwheel":
        lab = parse_label(rule, 0, cfg.label or "R,0")
        component = (lab.hand, lab.theta)
    rho = solve_invariant_finite(rule, [0], iters=min(cfg.iters, 10_000), component=component)[0]
    report["rho0"] = [[label_to_json(lab), w] for lab, w in rho.items()]
    _emit(cfg, f"measure-{rule.name}.json", _dump(report))
    return 0


def _measure_transfer(cfg: RunConfig) -> int:
    from .measures import closed_form, solve_transfer_fixed_point
    from .render import render_density_plot

    density, rep = solve_transfer_fixed_point(cfg.grid, cfg.iters)
    report = {"grid": cfg.grid, "iterations": rep.iterations, "residual": rep.residual,
              "moment": rep.moment, "c_fitted": rep.c_fitted, "c_exact": rep.c_exact,
              "max_rel_error": rep.max_rel_error}
    _emit(cfg, f"transfer-{cfg.grid}.json", _dump(report))
    if cfg.svg:
        grid = np.asarray(density.grid, dtype=float)
        right = np.zeros(len(grid), dtype=bool)
        right[len(grid) // 2:] = True

        def overlay(x):
            return np.where(right, closed_form(x, True), closed_form(x, False))

        _emit(cfg, f"transfer-{cfg.grid}.svg", render_density_plot(density, overlay, "transfer fixed point"))
    return 0


def _measure_empirical(cfg: RunConfig) -> int:
    from .measures import ks_to_uniform, supertile_generated_measure
    from .rules.pinwheel import TriangleRule, tiles_of

    rule = build_rule(cfg)
    q = parse_label(rule, cfg.level, cfg.label)
    report = {"rule": rule.name, "level": cfg.level, "label": label_to_json(q)}
    if isinstance(rule, TriangleRule) and rule.name != "hybrid":
        hand, theta, _ = tiles_of(rule, cfg.level, q)
        report["tiles"] = int(len(theta))
        report["ks_mod_quarter_turn"] = ks_to_uniform(theta)
        report["right_handed_fraction"] = float(np.mean(hand == 1))
    else:
        m = supertile_generated_measure(rule, q, 0, cfg.level)
        report["measure"] = [[label_to_json(lab), w] for lab, w in m.items()]
    _emit(cfg, f"empirical-{rule.name}-{cfg.level}.json", _dump(report))
    return 0


def _measure_frequency(cfg: RunConfig) -> int:
    from .measures import patch_frequency, solve_invariant_finite

    rule = build_rule(cfg)
    if rule.dimension != 1:
        raise RuleError("patch frequencies are computed for one-dimensional rules")
    if not cfg.word:
        raise ConfigError("frequency needs --word, e.g. 0,1")
    word = [parse_label(rule, 0, t) for t in cfg.word.split(",")]
    rhos = solve_invariant_finite(rule, range(cfg.level + 1))
    freq = patch_frequency(rule, rhos, word, cfg.level)
    _emit(cfg, f"frequency-{rule.name}.json",
          _dump({"rule": rule.name, "word": cfg.word, "value": freq.value, "trace": freq.trace,
                 "gap": freq.gap}))
    return 0


def cmd_complexity(cfg: RunConfig) -> int:
    from .complexity import complexity_table, fit_exponent
    from .render import render_complexity_plot

    seeds = [cfg.seed + i for i in range(cfg.seeds)]
    table = complexity_table(cfg.rule, cfg.rule_params(), cfg.eps, cfg.lengths, seeds,
                             samples=cfg.samples, workers=cfg.workers)
    fit = fit_exponent(table.rows, offset=2.0 / cfg.eps)
    stem = f"complexity-{cfg.rule}-{cfg.eps:g}"
    _emit(cfg, stem + ".csv", table.to_csv())
    _emit(cfg, stem + "-fit.json", _dump({"rule": cfg.rule, "eps": cfg.eps, "gamma": fit.gamma,
                                          "band": fit.band, "bounded": fit.bounded,
                                          "offset": fit.offset}))
    if cfg.svg:
        _emit(cfg, stem + ".svg", render_complexity_plot(table.rows, fit, f"{cfg.rule} eps={cfg.eps:g}"))
    return 0


def cmd_conjugacy(cfg: RunConfig) -> int:
    from .rules.solenoid import admitted_window, greedy_picks, pd_to_toeplitz, toeplitz_to_pd

    if cfg.action not in ("", "t2-pd"):
        raise ConfigError(f"unknown conjugacy {cfg.action!r}; available: t2-pd")
    cfg.rule = "toeplitz2"
    rule = build_rule(cfg)
    mismatches = 0
    for s in range(cfg.seed, cfg.seed + cfg.samples):
        w = admitted_window(rule, cfg.window, np.random.default_rng(s))
        if pd_to_toeplitz(toeplitz_to_pd(w), greedy_picks(w)) != w:
            mismatches += 1
    report = {"roundtrip": "exact" if mismatches == 0 else "mismatch", "windows": cfg.samples,
              "window": cfg.window, "mismatches": mismatches}
    _emit(cfg, "conjugacy-t2-pd.json", json.dumps(report, sort_keys=True) + "\n")
    return 0 if mismatches == 0 else 1


def cmd_verify(cfg: RunConfig) -> int:
    checks = verification_suite(broken=cfg.broken)
    report = {"passed": all(ok for _, ok, _ in checks),
              "checks": [{"name": n, "ok": ok, "detail": d} for n, ok, d in checks]}
    _emit(cfg, "verify.json", _dump(report))
    return 0 if report["passed"] else 1


# ------------------------------------------------------------ verification suite


def broken_shear_rule():
    """Negative control: a shear rule whose first two children overlap."""
    from .geometry import Placement
    from .rules.shear import ShearRule

    class BrokenShear(ShearRule):
        name = "broken-shear"

        def _decompose(self, n, label):
            out = super()._decompose(n, label)
            if len(out) > 1:
                lab, pl = out[1]
                out[1] = (lab, Placement((pl.translation[0] * 0.5, pl.translation[1])))
            return out

    return BrokenShear("1/2")


def verification_suite(broken: bool = False) -> list:
    """Fast automated invariants as (name, ok, detail) triples."""
    from .complexity import collision_complexity
    from .fusion import check_partition, van_hove_ratio
    from .measures import single_tile_frequency, solve_invariant_finite, transfer_spectrum_roots
    from .rules import get_rule
    from .rules.solenoid import INF, admitted_window, greedy_picks, pd_to_toeplitz, toeplitz_to_pd
    from .transition import matrix_power_check, sample_labels

    checks = []

    def record(name, fn):
        try:
            ok, detail = fn()
        except (RuleError, ValueError, ArithmeticError) as exc:
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        checks.append((name, bool(ok), detail))

    rules = {name: get_rule(name) for name in
             ("solenoid", "toeplitz2", "toeplitz-alpha", "pinwheel", "antipinwheel", "shear", "varlen")}
    if broken:
        rules["broken-shear"] = broken_shear_rule()

    for name, rule in rules.items():
        def partition(rule=rule):
            for n in (1, 2):
                for q in sample_labels(rule, n):
                    rep = check_partition(rule, n, q)
                    if not rep.ok:
                        return False, rep.message
            return True, "children tile every sampled parent"
        record(f"partition/{name}", partition)

        def composition(rule=rule):
            ok = all(matrix_power_check(rule, a, m, 3) for m in (1, 2) for a in range(m))
            return ok, "M(n,N) = M(n,m) M(m,N) for N = 3"
        record(f"composition/{name}", composition)

        if name != "broken-shear":
            def vanhove(rule=rule):
                q = lambda n: rule.worst_label(n) if hasattr(rule, "worst_label") else \
                    rule.label_space(n).epsilon_net(1.0)[0]
                r = [van_hove_ratio(rule, n, q(n)) for n in (2, 5, 10)]
                return r[0] > r[1] > r[2], f"ratios {r}"
            record(f"van-hove/{name}", vanhove)

    def solenoid_freq():
        rho = solve_invariant_finite(rules["solenoid"], [0])[0]
        err = max(abs(single_tile_frequency(rho, k) - 2.0 ** -(k + 1)) for k in range(11))
        return err < 1e-12 and single_tile_frequency(rho, INF) < 1e-12, f"max error {err:.3g}"
    record("solenoid-frequencies", solenoid_freq)

    def spectral():
        roots, _ = transfer_spectrum_roots()
        ok = any(abs(r.gamma - 1) < 1e-9 for r in roots) and all(r.residual < 1e-10 for r in roots)
        return ok, f"{len(roots)} roots"
    record("spectral-roots", spectral)

    def conjugacy():
        rule = rules["toeplitz2"]
        for s in range(20):
            w = admitted_window(rule, 256, np.random.default_rng(s))
            if pd_to_toeplitz(toeplitz_to_pd(w), greedy_picks(w)) != w:
                return False, f"seed {s} round trip differs"
        return True, "20 windows of 256 tiles"
    record("conjugacy-roundtrip", conjugacy)

    def determinism():
        rows = [collision_complexity(rules["solenoid"], 0.3, 8.0, 300, 7) for _ in range(2)]
        return rows[0] == rows[1], f"size {rows[0].size}"
    record("complexity-determinism", determinism)

    return checks


# ------------------------------------------------------------ argument handling


COMMANDS = {"rules": cmd_rules, "generate": cmd_generate, "render": cmd_render,
            "transition": cmd_transition, "measure": cmd_measure, "complexity": cmd_complexity,
            "conjugacy": cmd_conjugacy, "verify": cmd_verify}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _lengths(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad --lengths {text!r}") from exc


def make_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fusiontiles", description="Fusion tilings: generation, measures and complexity.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("action", nargs="?", default=None,
                   help="measure: solve|transfer|empirical|frequency; conjugacy: t2-pd")
    p.add_argument("--config", help="JSON RunConfig; explicit flags override it")
    p.add_argument("--rule")
    p.add_argument("--alpha", help="exact token: p/q, sqrt2-1 or bits:0110")
    p.add_argument("--separation", help="distance between the two limit labels")
    p.add_argument("--level", type=int)
    p.add_argument("--depth", type=int)
    p.add_argument("--label")
    p.add_argument("--eps", type=float)
    p.add_argument("--lengths", type=_lengths)
    p.add_argument("--grid", type=int)
    p.add_argument("--iters", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--seeds", type=int, help="number of consecutive seeds")
    p.add_argument("--workers", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--word")
    p.add_argument("--color-by", dest="color_by")
    p.add_argument("--svg", action="store_const", const=True)
    p.add_argument("--broken", action="store_const", const=True,
                   help="verify: include a rule with overlapping children")
    p.add_argument("--out")
    return p


def config_from_args(argv) -> RunConfig:
    args = make_parser().parse_args(argv)
    if args.config:
        try:
            cfg = RunConfig.from_json(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError, TypeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    else:
        cfg = RunConfig()
    cfg.command = args.command
    cfg.action = args.action or ""
    if args.command == "conjugacy" and args.samples is None and not args.config:
        cfg.samples = 100
    for f in fields(RunConfig):
        if f.name in ("command", "action"):
            continue
        value = getattr(args, f.name, None)
        if value is not None:
            setattr(cfg, f.name, value)
    if cfg.eps <= 0 or cfg.samples < 1 or cfg.workers < 1 or cfg.seeds < 1:
        raise ConfigError("eps, samples, seeds and workers must be positive")
    if not all(math.isfinite(L) and L > 0 for L in cfg.lengths):
        raise ConfigError("lengths must be positive")
    return cfg


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = config_from_args(argv)
        return COMMANDS[cfg.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (RuleError, LabelError) as exc:
        print(f"rule error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
