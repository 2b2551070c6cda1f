"""Pure-logic backends: an internal decision procedure and an SMT-LIB bridge."""

from .queries import (
    PureQuery,
    PureVerdict,
    SolverError,
    OutOfFragment,
    UnsupportedConstruct,
    infer_sorts,
    make_query,
)
from .internal import internal_decide, quick_valid

__all__ = [
    "PureQuery",
    "PureVerdict",
    "SolverError",
    "OutOfFragment",
    "UnsupportedConstruct",
    "infer_sorts",
    "make_query",
    "internal_decide",
    "quick_valid",
]
