"""Symbolic jet-space expressions: exact-rational polynomials over jet
coordinates with a textual DSL, total derivatives, and substitution."""
from .core import (
    Deriv,
    Expr,
    Formal,
    Indep,
    JetCoord,
    NonHarmonicBindingError,
    Param,
    VarSpace,
    free_coords,
    free_formals,
    make_formal,
    max_order,
    normalize,
    partial_wrt,
    substitute,
    total_derivative,
    total_derivative_multi,
)
from .parser import DslError, parse
from .printer import to_dsl

__all__ = [
    "VarSpace",
    "JetCoord",
    "Indep",
    "Deriv",
    "Param",
    "Formal",
    "make_formal",
    "Expr",
    "parse",
    "to_dsl",
    "DslError",
    "normalize",
    "total_derivative",
    "total_derivative_multi",
    "partial_wrt",
    "substitute",
    "free_coords",
    "free_formals",
    "max_order",
    "NonHarmonicBindingError",
]
