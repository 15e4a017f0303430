from core.numerics.linalg import (
    complete_basis,
    SvdResult,
    least_squares_fit,
    random_orthogonal,
    tail_energy,
    total_energy,
    truncated_svd,
)
from core.numerics.rng import SplitMix64

__all__ = [
    "SplitMix64",
    "SvdResult",
    "complete_basis",
    "least_squares_fit",
    "random_orthogonal",
    "tail_energy",
    "total_energy",
    "truncated_svd",
]
