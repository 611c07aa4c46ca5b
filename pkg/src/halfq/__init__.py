"""halfq: hybrid classical-quantum dynamics with certified error bounds."""

from .algebra import (
    AlgebraError,
    CNum,
    HybridExpression,
    NonTerminatingSeriesError,
    Symbol,
    System,
    SystemMismatchError,
    UnquantizationWarning,
    commutator,
    div_ihbar,
    double_bracket,
    half_quantize,
    heisenberg_series,
    hybrid_bracket,
    jacobiator,
    mul_ihbar,
    partial_derivative,
    poisson_bracket,
    unquantize,
    weyl_quantize,
)
from .grammar import ExpressionSyntaxError, format_expression, parse_expression

__all__ = [
    "AlgebraError",
    "CNum",
    "ExpressionSyntaxError",
    "HybridExpression",
    "NonTerminatingSeriesError",
    "Symbol",
    "System",
    "SystemMismatchError",
    "UnquantizationWarning",
    "commutator",
    "div_ihbar",
    "double_bracket",
    "format_expression",
    "half_quantize",
    "heisenberg_series",
    "hybrid_bracket",
    "jacobiator",
    "mul_ihbar",
    "parse_expression",
    "partial_derivative",
    "poisson_bracket",
    "unquantize",
    "weyl_quantize",
]

__version__ = "0.1.0"
