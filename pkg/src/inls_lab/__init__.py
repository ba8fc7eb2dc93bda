"""Exponent verifier and pseudospectral solver for the inhomogeneous NLS."""

from .exponent_core import (
    INF,
    ClassKind,
    HypothesisError,
    Pair,
    PairClass,
    ParamSet,
    Region,
    alpha_upper,
    b_upper,
    classify_pair,
    critical_index,
    dual_pair,
    fmt,
    plus_conjugate,
    rat,
    singular_weight_integrable,
    two_star,
)

__version__ = "0.1.0"

__all__ = [
    "INF",
    "ClassKind",
    "HypothesisError",
    "Pair",
    "PairClass",
    "ParamSet",
    "Region",
    "alpha_upper",
    "b_upper",
    "classify_pair",
    "critical_index",
    "dual_pair",
    "fmt",
    "plus_conjugate",
    "rat",
    "singular_weight_integrable",
    "two_star",
]
