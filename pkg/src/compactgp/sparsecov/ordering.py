"""Fill-reducing orderings for symmetric sparsity patterns.

``amd`` is an approximate minimum degree ordering on the quotient graph
(element absorption, approximate external degrees, mass elimination and
indistinguishable-node detection).  ``nd`` delegates nested dissection to
METIS, which produces markedly less fill on large geometric graphs.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sps
from numba import njit


@njit(cache=True)
def _flip(i):
    return -i - 2


@njit(cache=True)
def _wclear(mark, lemax, w, n):
    if mark < 2 or mark + lemax < 0:
        for k in range(n):
            if w[k] != 0:
                w[k] = 1
        mark = 2
    return mark


@njit(cache=True)
def _tdfs(j, k, head, nxt, post, stack):
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
    return k


@njit(cache=True)
def _amd(n, Ap, Ai):
    """Approximate minimum degree of a symmetric pattern without diagonal."""
    dense = max(16, int(10 * math.sqrt(n)))
    dense = min(n - 2, dense)
    cnz = Ap[n]
    nzmax = cnz + cnz // 5 + 2 * n + 1
    Cp = np.empty(n + 1, np.int64)
    Cp[:] = Ap
    Ci = np.empty(nzmax, np.int64)
    Ci[:cnz] = Ai[:cnz]
    ln_ = np.zeros(n + 1, np.int64)
    nv = np.ones(n + 1, np.int64)
    nxt = np.full(n + 1, -1, np.int64)
    head = np.full(n + 1, -1, np.int64)
    elen = np.zeros(n + 1, np.int64)
    degree = np.zeros(n + 1, np.int64)
    w = np.ones(n + 1, np.int64)
    hhead = np.full(n + 1, -1, np.int64)
    last = np.full(n + 1, -1, np.int64)
    for k in range(n):
        ln_[k] = Cp[k + 1] - Cp[k]
        degree[k] = ln_[k]
    mark = _wclear(0, 0, w, n)
    elen[n] = -2
    Cp[n] = -1
    w[n] = 0
    nel = 0
    for i in range(n):
        d = degree[i]
        if d == 0:
            elen[i] = -2
            nel += 1
            Cp[i] = -1
            w[i] = 0
        elif d > dense:
            nv[i] = 0
            elen[i] = -1
            nel += 1
            Cp[i] = _flip(n)
            nv[n] += 1
        else:
            if head[d] != -1:
                last[head[d]] = i
            nxt[i] = head[d]
            head[d] = i
    mindeg = 0
    lemax = 0
    while nel < n:
        # select a node of minimum approximate degree
        k = -1
        while mindeg < n:
            k = head[mindeg]
            if k != -1:
                break
            mindeg += 1
        if nxt[k] != -1:
            last[nxt[k]] = -1
        head[mindeg] = nxt[k]
        elenk = elen[k]
        nvk = nv[k]
        nel += nvk

        # garbage collection
        if elenk > 0 and cnz + mindeg >= nzmax:
            for j in range(n):
                p = Cp[j]
                if p >= 0:
                    Cp[j] = Ci[p]
                    Ci[p] = _flip(j)
            q = 0
            p = 0
            while p < cnz:
                j = _flip(Ci[p])
                p += 1
                if j >= 0:
                    Ci[q] = Cp[j]
                    Cp[j] = q
                    q += 1
                    for _ in range(ln_[j] - 1):
                        Ci[q] = Ci[p]
                        q += 1
                        p += 1
            cnz = q

        # construct the new element Lk
        dk = 0
        nv[k] = -nvk
        p = Cp[k]
        pk1 = p if elenk == 0 else cnz
        pk2 = pk1
        for k1 in range(1, elenk + 2):
            if k1 > elenk:
                e = k
                pj = p
                lne = ln_[k] - elenk
            else:
                e = Ci[p]
                p += 1
                pj = Cp[e]
                lne = ln_[e]
            for _ in range(lne):
                i = Ci[pj]
                pj += 1
                nvi = nv[i]
                if nvi <= 0:
                    continue
                dk += nvi
                nv[i] = -nvi
                Ci[pk2] = i
                pk2 += 1
                if nxt[i] != -1:
                    last[nxt[i]] = last[i]
                if last[i] != -1:
                    nxt[last[i]] = nxt[i]
                else:
                    head[degree[i]] = nxt[i]
            if e != k:
                Cp[e] = _flip(k)
                w[e] = 0
        if elenk != 0:
            cnz = pk2
        degree[k] = dk
        Cp[k] = pk1
        ln_[k] = pk2 - pk1
        elen[k] = -2

        # set differences |Le \ Lk|
        mark = _wclear(mark, lemax, w, n)
        for pk in range(pk1, pk2):
            i = Ci[pk]
            eln = elen[i]
            if eln <= 0:
                continue
            nvi = -nv[i]
            wnvi = mark - nvi
            for p in range(Cp[i], Cp[i] + eln):
                e = Ci[p]
                if w[e] >= mark:
                    w[e] -= nvi
                elif w[e] != 0:
                    w[e] = degree[e] + wnvi

        # approximate degree update
        for pk in range(pk1, pk2):
            i = Ci[pk]
            p1 = Cp[i]
            p2 = p1 + elen[i] - 1
            pn = p1
            h = 0
            d = 0
            for p in range(p1, p2 + 1):
                e = Ci[p]
                if w[e] != 0:
                    dext = w[e] - mark
                    if dext > 0:
                        d += dext
                        Ci[pn] = e
                        pn += 1
                        h += e
                    else:
                        # aggressive absorption
                        Cp[e] = _flip(k)
                        w[e] = 0
            elen[i] = pn - p1 + 1
            p3 = pn
            p4 = p1 + ln_[i]
            for p in range(p2 + 1, p4):
                j = Ci[p]
                nvj = nv[j]
                if nvj <= 0:
                    continue
                d += nvj
                Ci[pn] = j
                pn += 1
                h += j
            if d == 0:
                # mass elimination
                Cp[i] = _flip(k)
                nvi = -nv[i]
                dk -= nvi
                nvk += nvi
                nel += nvi
                nv[i] = 0
                elen[i] = -1
            else:
                degree[i] = min(degree[i], d)
                Ci[pn] = Ci[p3]
                Ci[p3] = Ci[p1]
                Ci[p1] = k
                ln_[i] = pn - p1 + 1
                h = h % n
                nxt[i] = hhead[h]
                hhead[h] = i
                last[i] = h
        degree[k] = dk
        lemax = max(lemax, dk)
        mark = _wclear(mark + lemax, lemax, w, n)

        # indistinguishable node detection
        for pk in range(pk1, pk2):
            i = Ci[pk]
            if nv[i] >= 0:
                continue
            h = last[i]
            i = hhead[h]
            hhead[h] = -1
            while i != -1 and nxt[i] != -1:
                lni = ln_[i]
                eln = elen[i]
                for p in range(Cp[i] + 1, Cp[i] + lni):
                    w[Ci[p]] = mark
                jlast = i
                j = nxt[i]
                while j != -1:
                    ok = ln_[j] == lni and elen[j] == eln
                    p = Cp[j] + 1
                    while ok and p <= Cp[j] + lni - 1:
                        if w[Ci[p]] != mark:
                            ok = False
                        p += 1
                    if ok:
                        Cp[j] = _flip(i)
                        nv[i] += nv[j]
                        nv[j] = 0
                        elen[j] = -1
                        j = nxt[j]
                        nxt[jlast] = j
                    else:
                        jlast = j
                        j = nxt[j]
                i = nxt[i]
                mark += 1

        # finalize Lk and restore degree lists
        p = pk1
        for pk in range(pk1, pk2):
            i = Ci[pk]
            nvi = -nv[i]
            if nvi <= 0:
                continue
            nv[i] = nvi
            d = degree[i] + dk - nvi
            d = min(d, n - nel - nvi)
            if head[d] != -1:
                last[head[d]] = i
            nxt[i] = head[d]
            last[i] = -1
            head[d] = i
            mindeg = min(mindeg, d)
            degree[i] = d
            Ci[p] = i
            p += 1
        nv[k] = nvk
        ln_[k] = p - pk1
        if ln_[k] == 0:
            Cp[k] = -1
            w[k] = 0
        if elenk != 0:
            cnz = p

    # postorder the assembly tree
    for i in range(n):
        Cp[i] = _flip(Cp[i])
    for j in range(n + 1):
        head[j] = -1
    for j in range(n, -1, -1):
        if nv[j] > 0:
            continue
        nxt[j] = head[Cp[j]]
        head[Cp[j]] = j
    for e in range(n, -1, -1):
        if nv[e] <= 0:
            continue
        if Cp[e] != -1:
            nxt[e] = head[Cp[e]]
            head[Cp[e]] = e
    post = np.empty(n + 1, np.int64)
    k = 0
    for i in range(n + 1):
        if Cp[i] == -1:
            k = _tdfs(i, k, head, nxt, post, w)
    return post


def _adjacency(pattern) -> sps.csr_matrix:
    """Symmetric off-diagonal adjacency of a square sparse pattern."""
    A = sps.csr_matrix(pattern, copy=True)
    A.data = np.ones_like(A.data)
    A = (A + A.T).tocsr()
    A.setdiag(0)
    A.eliminate_zeros()
    A.sort_indices()
    return A


def amd(pattern) -> np.ndarray:
    """Approximate minimum degree permutation ``p`` (new position -> old index)."""
    A = _adjacency(pattern)
    n = A.shape[0]
    if n == 0:
        return np.zeros(0, np.int64)
    if n == 1:
        return np.zeros(1, np.int64)
    post = _amd(n, A.indptr.astype(np.int64), A.indices.astype(np.int64))
    perm = post[post != n]
    return perm


def nested_dissection(pattern) -> np.ndarray:
    """METIS nested dissection permutation (new position -> old index)."""
    import pymetis

    A = _adjacency(pattern)
    n = A.shape[0]
    if n <= 2 or A.nnz == 0:
        return np.arange(n, dtype=np.int64)
    perm, _ = pymetis.nested_dissection(
        adjacency=pymetis.CSRAdjacency(A.indptr.astype(np.int32), A.indices.astype(np.int32))
    )
    return np.asarray(perm, dtype=np.int64)


def fill_reducing_order(pattern, method: str = "amd") -> np.ndarray:
    if method == "amd":
        return amd(pattern)
    if method == "nd":
        return nested_dissection(pattern)
    if method == "natural":
        return np.arange(pattern.shape[0], dtype=np.int64)
    raise ValueError(f"unknown ordering {method!r}")
