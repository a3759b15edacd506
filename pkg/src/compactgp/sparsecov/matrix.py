"""Compressed-row symmetric correlation matrices."""

from __future__ import annotations

import struct

import numpy as np
import scipy.sparse as sps
from numba import njit

from ..correlation import ProductCorrelationModel
from .pairs import NeighborPairs, find_interacting_pairs

MAGIC = b"SPCM"


class SparseSymMatrix:
    """Symmetric matrix stored as the compressed-row upper triangle.

    Row ``i`` holds column indices ``>= i`` with the diagonal entry first.
    """

    __slots__ = ("n", "indptr", "indices", "data")

    def __init__(self, n, indptr, indices, data):
        self.n = int(n)
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.indices = np.asarray(indices, dtype=np.int64)
        self.data = np.asarray(data, dtype=float)
        if self.indptr.shape != (self.n + 1,) or self.indices.shape != self.data.shape:
            raise ValueError("inconsistent compressed-row arrays")

    @property
    def nnz(self) -> int:
        return int(self.indptr[-1])

    @property
    def offdiag_pairs(self) -> int:
        """Number of stored strictly-upper entries."""
        return self.nnz - int(np.count_nonzero(self.indices == self._rows()))

    def _rows(self):
        return np.repeat(np.arange(self.n), np.diff(self.indptr))

    def upper(self) -> sps.csr_matrix:
        return sps.csr_matrix((self.data, self.indices, self.indptr), shape=(self.n, self.n))

    def to_scipy(self) -> sps.csr_matrix:
        """Full symmetric matrix in scipy CSR form."""
        U = self.upper()
        strict = sps.triu(U, k=1)
        return (U + strict.T).tocsr()

    def toarray(self) -> np.ndarray:
        return self.to_scipy().toarray()

    def structure_key(self) -> bytes:
        import hashlib

        h = hashlib.blake2b(digest_size=16)
        h.update(np.int64(self.n).tobytes())
        h.update(self.indptr.tobytes())
        h.update(self.indices.tobytes())
        return h.digest()

    def add_diagonal(self, value: float) -> "SparseSymMatrix":
        data = self.data.copy()
        data[self.indices == self._rows()] += value
        return SparseSymMatrix(self.n, self.indptr, self.indices, data)

    @classmethod
    def from_dense(cls, A, tol=0.0) -> "SparseSymMatrix":
        """Upper triangle of a dense symmetric matrix, dropping ``|a| <= tol`` off the diagonal."""
        A = np.asarray(A, dtype=float)
        n = A.shape[0]
        U = np.triu(A)
        keep = (np.abs(U) > tol) | np.eye(n, dtype=bool)
        rows, cols = np.nonzero(keep)
        ptr = np.zeros(n + 1, np.int64)
        np.add.at(ptr, rows + 1, 1)
        return cls(n, np.cumsum(ptr), cols, U[rows, cols])

    def dump(self, path) -> None:
        """Binary dump: magic, little-endian int64 n and nnz, row pointers, columns, values."""
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<qq", self.n, self.nnz))
            fh.write(self.indptr.astype("<i8").tobytes())
            fh.write(self.indices.astype("<i8").tobytes())
            fh.write(self.data.astype("<f8").tobytes())

    @classmethod
    def load(cls, path) -> "SparseSymMatrix":
        with open(path, "rb") as fh:
            if fh.read(4) != MAGIC:
                raise ValueError(f"{path}: not a sparse correlation dump")
            n, nnz = struct.unpack("<qq", fh.read(16))
            ptr = np.frombuffer(fh.read(8 * (n + 1)), dtype="<i8").astype(np.int64)
            idx = np.frombuffer(fh.read(8 * nnz), dtype="<i8").astype(np.int64)
            val = np.frombuffer(fh.read(8 * nnz), dtype="<f8").astype(float)
        return cls(n, ptr, idx, val)


@njit(cache=True)
def _assemble(n, pptr, pcols, vals):
    keep_count = np.zeros(n + 1, np.int64)
    for i in range(n):
        c = 1
        for p in range(pptr[i], pptr[i + 1]):
            if vals[p] != 0.0:
                c += 1
        keep_count[i + 1] = c
    ptr = np.cumsum(keep_count)
    idx = np.empty(ptr[n], np.int64)
    data = np.empty(ptr[n])
    for i in range(n):
        pos = ptr[i]
        idx[pos] = i
        data[pos] = 1.0
        pos += 1
        for p in range(pptr[i], pptr[i + 1]):
            if vals[p] != 0.0:
                idx[pos] = pcols[p]
                data[pos] = vals[p]
                pos += 1
    return ptr, idx, data


def build_sparse_correlation(X, model: ProductCorrelationModel, pairs: NeighborPairs | None = None):
    """Sparse correlation matrix of a compactly supported product model.

    Correlations are evaluated only for interacting pairs; products that
    round to exactly zero are dropped from the structure.
    """
    if not model.fully_compact:
        raise ValueError("sparse assembly needs a compactly supported family in every dimension")
    X = np.asarray(X, dtype=float)
    if pairs is None:
        pairs = find_interacting_pairs(X, model.tau)
    rows = pairs.rows()
    sep = np.abs(X[rows] - X[pairs.cols])
    vals = model.from_separations(sep)
    ptr, idx, data = _assemble(X.shape[0], pairs.ptr, pairs.cols, vals)
    return SparseSymMatrix(X.shape[0], ptr, idx, data)


def sparsity(R: SparseSymMatrix) -> float:
    """Proportion of off-diagonal entries that are structurally nonzero."""
    if R.n < 2:
        return 0.0
    return 2.0 * R.offdiag_pairs / (R.n * (R.n - 1))


def cross_correlation(X, X0, model: ProductCorrelationModel) -> sps.csc_matrix:
    """Sparse ``n x n0`` correlations between training and prediction points."""
    from .pairs import find_cross_pairs

    X = np.asarray(X, dtype=float)
    X0 = np.atleast_2d(np.asarray(X0, dtype=float))
    if not model.fully_compact:
        return sps.csc_matrix(model.dense(X, X0))
    ptr, rows = find_cross_pairs(X, X0, model.tau)
    cols = np.repeat(np.arange(X0.shape[0]), np.diff(ptr))
    vals = model.from_separations(np.abs(X[rows] - X0[cols]))
    G = sps.csc_matrix((vals, rows, ptr), shape=(X.shape[0], X0.shape[0]))
    G.eliminate_zeros()
    return G
