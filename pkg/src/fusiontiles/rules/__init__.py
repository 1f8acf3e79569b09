"""Builtin rules, looked up by name."""

from __future__ import annotations

from fractions import Fraction

from ..fusion import RuleError
from .fullshift import FullShiftSampler, make_full_solenoid_shift
from .pinwheel import (AntiPinwheelRule, HybridRule, PinwheelRule, make_antipinwheel,
                       make_hybrid, make_pinwheel)
from .shear import ShearRule, make_shear
from .solenoid import (SolenoidRule, make_solenoid, make_toeplitz2, make_toeplitz_alpha,
                       pd_to_toeplitz, stretch_lengths, toeplitz_to_pd)
from .varlen import VarlenRule, make_varlen

RULE_NAMES = ("solenoid", "toeplitz2", "toeplitz-alpha", "pinwheel", "antipinwheel", "hybrid",
              "shear", "varlen", "full-shift")


def _distance(token) -> float:
    """Positive distance from a number or an exact token such as ``1/100``."""
    try:
        value = float(Fraction(str(token)))
    except (ValueError, ZeroDivisionError) as exc:
        raise RuleError(f"separation must be a positive number, got {token!r}") from exc
    if value <= 0:
        raise RuleError(f"separation must be positive, got {token!r}")
    return value


def get_rule(name: str, **params):
    """Build a rule from its registry name; unknown parameters are an error."""
    builders = {
        "solenoid": lambda separation=1.0: make_solenoid(separation=_distance(separation)),
        "toeplitz2": lambda separation=1.0: make_toeplitz2(_distance(separation)),
        "toeplitz-alpha": lambda alpha="sqrt2-1", separation=1.0: make_toeplitz_alpha(
            str(alpha), _distance(separation)),
        "pinwheel": make_pinwheel,
        "antipinwheel": make_antipinwheel,
        "hybrid": make_hybrid,
        "shear": lambda alpha="1/2": make_shear(alpha),
        "varlen": make_varlen,
        "full-shift": make_full_solenoid_shift,
    }
    if name not in builders:
        raise RuleError(f"unknown rule {name!r}; known: {', '.join(RULE_NAMES)}")
    try:
        return builders[name](**params)
    except TypeError as exc:
        raise RuleError(f"bad parameters for {name}: {exc}") from exc


__all__ = [
    "RULE_NAMES", "get_rule", "AntiPinwheelRule", "FullShiftSampler", "HybridRule", "PinwheelRule",
    "ShearRule", "SolenoidRule", "VarlenRule", "make_antipinwheel", "make_full_solenoid_shift",
    "make_hybrid", "make_pinwheel", "make_shear", "make_solenoid", "make_toeplitz2",
    "make_toeplitz_alpha", "make_varlen", "pd_to_toeplitz", "stretch_lengths", "toeplitz_to_pd",
]
