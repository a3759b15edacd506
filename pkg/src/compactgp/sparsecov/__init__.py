"""Sparse correlation machinery: pair search, assembly, factorization."""

from .cholesky import (
    CholeskyFactor,
    DenseFactor,
    NotPositiveDefinite,
    SymbolicCache,
    SymbolicFactor,
    logdet,
    solve_transposed,
    sparse_cholesky,
)
from .matrix import SparseSymMatrix, build_sparse_correlation, cross_correlation, sparsity
from .ordering import amd, fill_reducing_order, nested_dissection
from .pairs import NeighborPairs, find_cross_pairs, find_interacting_pairs

__all__ = [
    "CholeskyFactor",
    "DenseFactor",
    "NeighborPairs",
    "NotPositiveDefinite",
    "SparseSymMatrix",
    "SymbolicCache",
    "SymbolicFactor",
    "amd",
    "build_sparse_correlation",
    "cross_correlation",
    "fill_reducing_order",
    "find_cross_pairs",
    "find_interacting_pairs",
    "logdet",
    "nested_dissection",
    "solve_transposed",
    "sparse_cholesky",
    "sparsity",
]
