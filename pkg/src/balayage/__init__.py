"""Numerical tools for the first analytic content lambda_1 and its isoperimetric bound."""

from .geometry import DomainSpec, GridDomain, rasterize
from .lambda1 import Lambda1Result, compute_lambda1, minimize_sup
from .oracles import bounds, oracle_lambda1, oracle_minimizer

__all__ = [
    "DomainSpec",
    "GridDomain",
    "Lambda1Result",
    "bounds",
    "compute_lambda1",
    "minimize_sup",
    "oracle_lambda1",
    "oracle_minimizer",
    "rasterize",
]
__version__ = "0.1.0"
