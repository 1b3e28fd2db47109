"""Invariant suites and gradient checks."""

from .gradcheck import SIZES, run_gradcheck
from .oracles import cross_attention_loop, fusion_loop, ray_attention_loop
from .suites import CHECKS, SUITES, Check, run_suite, suite_checks

__all__ = [
    "CHECKS",
    "SIZES",
    "SUITES",
    "Check",
    "cross_attention_loop",
    "fusion_loop",
    "ray_attention_loop",
    "run_gradcheck",
    "run_suite",
    "suite_checks",
]
