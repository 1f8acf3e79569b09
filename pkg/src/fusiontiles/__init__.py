"""Fusion tilings with infinite local complexity: rules, transition maps,
invariant measures, pattern complexity and SVG output."""

from __future__ import annotations

from .fusion import (FusionRule, Patch, RuleError, SupertileInstance, check_partition, expand,
                     label_counts, primitivity_probe, root_instance, van_hove_ratio)
from .rules import RULE_NAMES, get_rule

__all__ = [
    "FusionRule", "Patch", "RULE_NAMES", "RuleError", "SupertileInstance", "check_partition",
    "expand", "get_rule", "label_counts", "primitivity_probe", "root_instance", "van_hove_ratio",
]
