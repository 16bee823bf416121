from .model import (
    BasisState,
    LpSolution,
    ReducedLP,
    add_column,
    dual_violation,
    remove_columns,
    solve,
)
from .simplex import solve_reduced
from .backend import (
    BACKEND_REGISTRY,
    MAX_FULL_PRODUCT,
    BackendResult,
    HighsBackend,
    LpBackend,
    SimplexBackend,
    full_product,
    get_backend,
    relative_gap,
    solve_full_product,
)

__all__ = [
    "BasisState",
    "LpSolution",
    "ReducedLP",
    "add_column",
    "remove_columns",
    "solve",
    "solve_reduced",
    "dual_violation",
    "BACKEND_REGISTRY",
    "MAX_FULL_PRODUCT",
    "BackendResult",
    "HighsBackend",
    "LpBackend",
    "SimplexBackend",
    "full_product",
    "get_backend",
    "relative_gap",
    "solve_full_product",
]
