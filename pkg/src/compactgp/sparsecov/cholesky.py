"""Supernodal multifrontal Cholesky factorization of sparse SPD matrices.

The factorization is ``R[perm][:, perm] = Q' Q`` with ``Q`` upper
triangular.  Internally the lower factor ``L = Q'`` is held as dense
supernode blocks so the numeric work runs through LAPACK/BLAS.

Symbolic analysis (ordering, elimination tree, supernode partition and
scatter maps) depends only on the sparsity structure and is cached by a
:class:`SymbolicCache` keyed on that structure.
"""

from __future__ import annotations

import threading
from collections import OrderedDict

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps
from numba import njit
from scipy.linalg import blas, lapack

from .matrix import SparseSymMatrix
from .ordering import fill_reducing_order


class NotPositiveDefinite(np.linalg.LinAlgError):
    """A nonpositive pivot was met; ``index`` is the original row index."""

    def __init__(self, index, message=None):
        self.index = int(index)
        super().__init__(message or f"matrix is not positive definite (pivot at row {self.index})")


# --------------------------------------------------------------------------
# symbolic analysis


@njit(cache=True)
def _permuted_lower(n, Rp, Rj, pinv):
    """Lower CSC pattern of ``C = R[p][:, p]`` with source positions into R's data."""
    cnt = np.zeros(n + 1, np.int64)
    for i in range(n):
        a = pinv[i]
        for q in range(Rp[i], Rp[i + 1]):
            b = pinv[Rj[q]]
            cnt[min(a, b) + 1] += 1
    Lp = np.cumsum(cnt)
    Li = np.empty(Lp[n], np.int64)
    src = np.empty(Lp[n], np.int64)
    fill = Lp[:n].copy()
    for i in range(n):
        a = pinv[i]
        for q in range(Rp[i], Rp[i + 1]):
            b = pinv[Rj[q]]
            c = min(a, b)
            Li[fill[c]] = max(a, b)
            src[fill[c]] = q
            fill[c] += 1
    for c in range(n):
        seg = Li[Lp[c]:Lp[c + 1]]
        order = np.argsort(seg, kind="mergesort")
        Li[Lp[c]:Lp[c + 1]] = seg[order]
        src[Lp[c]:Lp[c + 1]] = src[Lp[c]:Lp[c + 1]][order]
    return Lp, Li, src


@njit(cache=True)
def _upper_from_lower(n, Lp, Li):
    """Strict upper CSC (column j lists rows i < j) from a lower CSC pattern."""
    cnt = np.zeros(n + 1, np.int64)
    for c in range(n):
        for q in range(Lp[c], Lp[c + 1]):
            r = Li[q]
            if r > c:
                cnt[r + 1] += 1
    Up = np.cumsum(cnt)
    Ui = np.empty(Up[n], np.int64)
    fill = Up[:n].copy()
    for c in range(n):
        for q in range(Lp[c], Lp[c + 1]):
            r = Li[q]
            if r > c:
                Ui[fill[r]] = c
                fill[r] += 1
    return Up, Ui


@njit(cache=True)
def _etree(n, Up, Ui):
    parent = np.full(n, -1, np.int64)
    anc = np.full(n, -1, np.int64)
    for k in range(n):
        for q in range(Up[k], Up[k + 1]):
            i = Ui[q]
            while i != -1 and i < k:
                inext = anc[i]
                anc[i] = k
                if inext == -1:
                    parent[i] = k
                    break
                i = inext
    return parent


@njit(cache=True)
def _postorder(n, parent):
    head = np.full(n, -1, np.int64)
    nxt = np.full(n, -1, np.int64)
    for j in range(n - 1, -1, -1):
        if parent[j] != -1:
            nxt[j] = head[parent[j]]
            head[parent[j]] = j
    post = np.empty(n, np.int64)
    stack = np.empty(n, np.int64)
    k = 0
    for j in range(n):
        if parent[j] != -1:
            continue
        top = 0
        stack[0] = j
        while top >= 0:
            p = stack[top]
            i = head[p]
            if i == -1:
                top -= 1
                post[k] = p
                k += 1
            else:
                head[p] = nxt[i]
                top += 1
                stack[top] = i
    return post


@njit(cache=True)
def _column_structure(n, Up, Ui, parent):
    """Row indices below the diagonal of every column of L (row-subtree traversal)."""
    mark = np.full(n, -1, np.int64)
    cnt = np.zeros(n + 1, np.int64)
    for k in range(n):
        mark[k] = k
        for q in range(Up[k], Up[k + 1]):
            i = Ui[q]
            while mark[i] != k:
                cnt[i + 1] += 1
                mark[i] = k
                i = parent[i]
    Sp = np.cumsum(cnt)
    Si = np.empty(Sp[n], np.int64)
    fill = Sp[:n].copy()
    mark[:] = -1
    for k in range(n):
        mark[k] = k
        for q in range(Up[k], Up[k + 1]):
            i = Ui[q]
            while mark[i] != k:
                Si[fill[i]] = k
                fill[i] += 1
                mark[i] = k
                i = parent[i]
    return Sp, Si


@njit(cache=True)
def _supernodes(n, parent, Sp, relax_small, relax_mid, frac_mid, relax_big, frac_big):
    """Fundamental supernodes followed by relaxed amalgamation.

    Returns supernode column pointers; merged supernodes may carry explicit
    zeros within their dense blocks.
    """
    nchild = np.zeros(n, np.int64)
    for j in range(n):
        if parent[j] != -1:
            nchild[parent[j]] += 1
    colcount = np.empty(n, np.int64)
    for j in range(n):
        colcount[j] = Sp[j + 1] - Sp[j] + 1
    starts = np.empty(n + 1, np.int64)
    ns = 0
    for j in range(n):
        if j == 0 or not (parent[j - 1] == j and colcount[j - 1] == colcount[j] + 1 and nchild[j] == 1):
            starts[ns] = j
            ns += 1
    starts[ns] = n
    # per supernode: first col, ncols, below count, true nonzeros
    first = starts[:ns].copy()
    ncols = np.empty(ns, np.int64)
    below = np.empty(ns, np.int64)
    truenz = np.empty(ns, np.int64)
    for s in range(ns):
        ncols[s] = starts[s + 1] - starts[s]
        below[s] = colcount[starts[s + 1] - 1] - 1
        t = 0
        for j in range(starts[s], starts[s + 1]):
            t += colcount[j]
        truenz[s] = t
    col2sn = np.empty(n, np.int64)
    for s in range(ns):
        for j in range(starts[s], starts[s + 1]):
            col2sn[j] = s
    alive = np.ones(ns, np.bool_)
    # supernode s merges into its parent t when t begins right after s
    for s in range(ns):
        last = first[s] + ncols[s] - 1
        pc = parent[last]
        if pc == -1 or pc != last + 1:
            continue
        t = col2sn[pc]
        if first[t] != pc:
            continue
        nc = ncols[s] + ncols[t]
        total = nc * (nc + 1) // 2 + nc * below[t]
        zeros = total - (truenz[s] + truenz[t])
        frac = zeros / total
        ok = nc <= relax_small or (nc <= relax_mid and frac < frac_mid) or (nc <= relax_big and frac < frac_big)
        if ok:
            first[t] = first[s]
            ncols[t] = nc
            truenz[t] = truenz[s] + truenz[t]
            alive[s] = False
    nsn = 0
    for s in range(ns):
        if alive[s]:
            nsn += 1
    ptr = np.empty(nsn + 1, np.int64)
    k = 0
    for s in range(ns):
        if alive[s]:
            ptr[k] = first[s]
            k += 1
    ptr[nsn] = n
    return ptr


@njit(cache=True)
def _supernode_maps(n, snptr, Sp, Si, Lp, Li, Csrc, parent):
    """Row sets, parent links, value scatter maps and extend-add maps per supernode."""
    ns = snptr.shape[0] - 1
    col2sn = np.empty(n, np.int64)
    for s in range(ns):
        for j in range(snptr[s], snptr[s + 1]):
            col2sn[j] = s
    rptr = np.zeros(ns + 1, np.int64)
    for s in range(ns):
        last = snptr[s + 1] - 1
        rptr[s + 1] = rptr[s] + (Sp[last + 1] - Sp[last])
    rows = np.empty(rptr[ns], np.int64)
    snparent = np.full(ns, -1, np.int64)
    for s in range(ns):
        last = snptr[s + 1] - 1
        rows[rptr[s]:rptr[s + 1]] = Si[Sp[last]:Sp[last + 1]]
        if parent[last] != -1:
            snparent[s] = col2sn[parent[last]]
    # value scatter: entries of C's lower columns into the column-major front
    mptr = np.zeros(ns + 1, np.int64)
    for s in range(ns):
        mptr[s + 1] = mptr[s] + (Lp[snptr[s + 1]] - Lp[snptr[s]])
    src = np.empty(mptr[ns], np.int64)
    dst = np.empty((mptr[ns], 2), np.int64)
    pos = np.full(n, -1, np.int64)
    relptr = np.zeros(ns + 1, np.int64)
    for s in range(ns):
        relptr[s + 1] = relptr[s] + (rptr[s + 1] - rptr[s])
    rel = np.empty(relptr[ns], np.int64)
    # children lists
    chead = np.full(ns, -1, np.int64)
    cnext = np.full(ns, -1, np.int64)
    for s in range(ns - 1, -1, -1):
        t = snparent[s]
        if t != -1:
            cnext[s] = chead[t]
            chead[t] = s
    for s in range(ns):
        f = snptr[s]
        k = snptr[s + 1] - f
        nb = rptr[s + 1] - rptr[s]
        for j in range(k):
            pos[f + j] = j
        for t in range(nb):
            pos[rows[rptr[s] + t]] = k + t
        q = mptr[s]
        for c in range(f, f + k):
            for e in range(Lp[c], Lp[c + 1]):
                src[q] = Csrc[e]
                dst[q, 0] = pos[Li[e]]
                dst[q, 1] = c - f
                q += 1
        c = chead[s]
        while c != -1:
            for t in range(rptr[c], rptr[c + 1]):
                rel[relptr[c] + (t - rptr[c])] = pos[rows[t]]
            c = cnext[c]
    return rptr, rows, snparent, mptr, src, dst, relptr, rel


def _analyse(R: SparseSymMatrix, ordering: str):
    """Ordering, postordered elimination tree and factor column structure."""
    n = R.n
    perm = fill_reducing_order(R.upper(), ordering) if n else np.zeros(0, np.int64)
    pinv = np.empty(n, np.int64)
    pinv[perm] = np.arange(n)
    Lp, Li, _ = _permuted_lower(n, R.indptr, R.indices, pinv)
    Up, Ui = _upper_from_lower(n, Lp, Li)
    parent = _etree(n, Up, Ui)
    post = _postorder(n, parent)
    # relabel so the elimination tree is postordered
    perm = perm[post]
    pinv[perm] = np.arange(n)
    Lp, Li, Csrc = _permuted_lower(n, R.indptr, R.indices, pinv)
    Up, Ui = _upper_from_lower(n, Lp, Li)
    parent = _etree(n, Up, Ui)
    Sp, Si = _column_structure(n, Up, Ui, parent)
    flops = float(np.sum((np.diff(Sp) + 1.0) ** 2))
    return perm, pinv, Lp, Li, Csrc, parent, Sp, Si, flops


class SymbolicFactor:
    """Structure-only part of a sparse Cholesky factorization."""

    def __init__(self, R: SparseSymMatrix, ordering="amd", relax=(16, 48, 0.5, 160, 0.12)):
        n = R.n
        self.n = n
        if ordering == "auto":
            # keep whichever ordering predicts less factorization work
            candidates = [_analyse(R, method) for method in ("amd", "nd")]
            best = min(range(2), key=lambda c: candidates[c][-1])
            analysis = candidates[best]
            self.ordering = ("amd", "nd")[best]
        else:
            analysis = _analyse(R, ordering)
            self.ordering = ordering
        perm, pinv, Lp, Li, Csrc, parent, Sp, Si, _ = analysis
        self.perm = perm
        self.pinv = pinv
        self.parent = parent
        self.colcount = np.diff(Sp) + 1
        snptr = _supernodes(n, parent, Sp, relax[0], relax[1], relax[2], relax[3], relax[4])
        (self.rptr, self.rows, self.snparent, self.mptr, self.src, self.dst,
         self.relptr, self.rel) = _supernode_maps(n, snptr, Sp, Si, Lp, Li, Csrc, parent)
        self.snptr = snptr
        children = [[] for _ in range(self.nsuper)]
        for s, t in enumerate(self.snparent):
            if t >= 0:
                children[t].append(s)
        self.children = children

    @property
    def nsuper(self) -> int:
        return len(self.snptr) - 1

    @property
    def nnz_factor(self) -> int:
        """Structural nonzeros of the factor (without amalgamation zeros)."""
        return int(self.colcount.sum())

    @property
    def flops(self) -> float:
        return float(np.sum(self.colcount.astype(float) ** 2))


class SymbolicCache:
    """Small LRU of symbolic analyses keyed by sparsity structure and ordering."""

    def __init__(self, maxsize=4):
        self.maxsize = maxsize
        self._store: OrderedDict = OrderedDict()
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def get(self, R: SparseSymMatrix, ordering: str) -> SymbolicFactor:
        key = (R.structure_key(), ordering)
        with self._lock:
            sym = self._store.get(key)
            if sym is not None:
                self._store.move_to_end(key)
                self.hits += 1
                return sym
        sym = SymbolicFactor(R, ordering)
        with self._lock:
            self.misses += 1
            self._store[key] = sym
            while len(self._store) > self.maxsize:
                self._store.popitem(last=False)
        return sym


# --------------------------------------------------------------------------
# numeric factorization


class CholeskyFactor:
    """Sparse factor with ``R[perm][:, perm] = Q' Q``.

    Attributes
    ----------
    perm : ndarray
        ``perm[k]`` is the original index placed at position ``k``.
    """

    def __init__(self, symbolic: SymbolicFactor, diag_blocks, off_blocks):
        self.symbolic = symbolic
        self.perm = symbolic.perm
        self.n = symbolic.n
        self._L11 = diag_blocks
        self._L21 = off_blocks

    def diagonal(self) -> np.ndarray:
        """Diagonal of ``Q`` in permuted order."""
        if self.n == 0:
            return np.zeros(0)
        return np.concatenate([np.diag(b) for b in self._L11])

    def logdet(self) -> float:
        """``log |R| = 2 sum log diag(Q)``."""
        return float(2.0 * np.sum(np.log(self.diagonal())))

    def _forward(self, W):
        sym = self.symbolic
        for s in range(sym.nsuper):
            f, l = sym.snptr[s], sym.snptr[s + 1]
            W[f:l] = sla.solve_triangular(self._L11[s], W[f:l], lower=True, check_finite=False)
            L21 = self._L21[s]
            if L21 is not None:
                W[sym.rows[sym.rptr[s]:sym.rptr[s + 1]]] -= L21 @ W[f:l]
        return W

    def _backward(self, W):
        sym = self.symbolic
        for s in range(sym.nsuper - 1, -1, -1):
            f, l = sym.snptr[s], sym.snptr[s + 1]
            L21 = self._L21[s]
            if L21 is not None:
                W[f:l] -= L21.T @ W[sym.rows[sym.rptr[s]:sym.rptr[s + 1]]]
            W[f:l] = sla.solve_triangular(self._L11[s], W[f:l], lower=True, trans="T",
                                          check_finite=False)
        return W

    def solve_transposed(self, B) -> np.ndarray:
        """``W`` with ``Q' W = B[perm]``, so that ``W' W = B' R^{-1} B``."""
        B = np.asarray(B, dtype=float)
        if B.shape[0] != self.n:
            raise ValueError(f"right-hand side has {B.shape[0]} rows, factor has order {self.n}")
        return self._forward(B[self.perm].copy())

    def solve(self, B) -> np.ndarray:
        """``R^{-1} B`` in the original ordering."""
        B = np.asarray(B, dtype=float)
        if B.shape[0] != self.n:
            raise ValueError(f"right-hand side has {B.shape[0]} rows, factor has order {self.n}")
        W = self._backward(self._forward(B[self.perm].copy()))
        out = np.empty_like(W)
        out[self.perm] = W
        return out

    @property
    def Q(self) -> sps.csr_matrix:
        """Upper-triangular factor as a scipy sparse matrix (permuted coordinates)."""
        sym = self.symbolic
        rows, cols, vals = [], [], []
        for s in range(sym.nsuper):
            f, l = sym.snptr[s], sym.snptr[s + 1]
            idx = np.concatenate([np.arange(f, l), sym.rows[sym.rptr[s]:sym.rptr[s + 1]]])
            block = np.tril(self._L11[s])
            if self._L21[s] is not None:
                block = np.vstack([block, self._L21[s]])
            r, c = np.nonzero(block)
            rows.append(idx[r])
            cols.append(f + c)
            vals.append(block[r, c])
        if not rows:
            return sps.csr_matrix((self.n, self.n))
        L = sps.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                           shape=(self.n, self.n))
        return L.T.tocsr()


@njit(cache=True)
def _assemble_front(F11, F21, F22, k, dst, src, values):
    for q in range(dst.shape[0]):
        i = dst[q, 0]
        j = dst[q, 1]
        if i < k:
            F11[i, j] = values[src[q]]
        else:
            F21[i - k, j] = values[src[q]]


@njit(cache=True)
def _extend_add(F11, F21, F22, k, U, rel):
    # lower triangle only; rel is increasing so lower maps to lower
    nb = rel.shape[0]
    sk = 0
    while sk < nb and rel[sk] < k:
        sk += 1
    for j in range(sk):
        cj = rel[j]
        for i in range(j, sk):
            F11[rel[i], cj] += U[i, j]
        for i in range(sk, nb):
            F21[rel[i] - k, cj] += U[i, j]
    for j in range(sk, nb):
        cj = rel[j] - k
        for i in range(j, nb):
            F22[rel[i] - k, cj] += U[i, j]


def _numeric(sym: SymbolicFactor, values: np.ndarray) -> CholeskyFactor:
    dpotrf = lapack.dpotrf
    dtrsm = blas.dtrsm
    dsyrk = blas.dsyrk
    ns = sym.nsuper
    L11s = [None] * ns
    L21s = [None] * ns
    updates = [None] * ns
    snptr, rptr, mptr, relptr = sym.snptr, sym.rptr, sym.mptr, sym.relptr
    src, dst, rel = sym.src, sym.dst, sym.rel
    for s in range(ns):
        f = snptr[s]
        k = snptr[s + 1] - f
        nb = rptr[s + 1] - rptr[s]
        # the front is held as three column-major blocks so LAPACK/BLAS work in place
        F11 = np.zeros((k, k), order="F")
        F21 = np.zeros((nb, k), order="F")
        F22 = np.zeros((nb, nb), order="F")
        a, b = mptr[s], mptr[s + 1]
        _assemble_front(F11, F21, F22, k, dst[a:b], src[a:b], values)
        for c in sym.children[s]:
            _extend_add(F11, F21, F22, k, updates[c], rel[relptr[c]:relptr[c + 1]])
            updates[c] = None
        L11, info = dpotrf(F11, lower=1, clean=1, overwrite_a=1)
        if info != 0:
            if info < 0:
                raise ValueError(f"dpotrf argument error {info}")
            raise NotPositiveDefinite(sym.perm[f + info - 1])
        L11s[s] = L11
        if nb:
            L21 = dtrsm(1.0, L11, F21, side=1, lower=1, trans_a=1, overwrite_b=1)
            updates[s] = dsyrk(-1.0, L21, beta=1.0, c=F22, lower=1, overwrite_c=1)
            L21s[s] = L21
    return CholeskyFactor(sym, L11s, L21s)


def sparse_cholesky(R: SparseSymMatrix, ordering: str = "amd", cache: SymbolicCache | None = None,
                    symbolic: SymbolicFactor | None = None) -> CholeskyFactor:
    """Fill-reducing sparse Cholesky factorization of a symmetric positive definite matrix.

    Raises :class:`NotPositiveDefinite` carrying the original row index of
    the failing pivot.
    """
    if symbolic is None:
        symbolic = cache.get(R, ordering) if cache is not None else SymbolicFactor(R, ordering)
    elif symbolic.n != R.n:
        raise ValueError("symbolic analysis does not match the matrix order")
    return _numeric(symbolic, R.data)


def logdet(f) -> float:
    return f.logdet()


def solve_transposed(f, B) -> np.ndarray:
    return f.solve_transposed(B)


class DenseFactor:
    """Dense Cholesky ``R = Q'Q`` with the :class:`CholeskyFactor` interface."""

    def __init__(self, R):
        R = np.asarray(R, dtype=float)
        self.n = R.shape[0]
        self.perm = np.arange(self.n)
        L, info = lapack.dpotrf(R, lower=1, clean=1)
        if info > 0:
            raise NotPositiveDefinite(info - 1)
        if info < 0:
            raise ValueError(f"dpotrf argument error {info}")
        self.L = L

    def diagonal(self):
        return np.diag(self.L).copy()

    def logdet(self) -> float:
        return float(2.0 * np.sum(np.log(np.diag(self.L))))

    def solve_transposed(self, B):
        return sla.solve_triangular(self.L, np.asarray(B, dtype=float), lower=True, check_finite=False)

    def solve(self, B):
        return sla.cho_solve((self.L, True), np.asarray(B, dtype=float), check_finite=False)

    @property
    def Q(self):
        return self.L.T
