"""Discovery of point pairs whose product correlation is structurally nonzero."""

from __future__ import annotations

import numpy as np
from numba import njit

# window occupancy above which the sweep is no cheaper than a full scan
SWEEP_OCCUPANCY_LIMIT = 0.5


@njit(cache=True)
def _close(X, i, j, tau):
    for k in range(X.shape[1]):
        if not abs(X[i, k] - X[j, k]) < tau[k]:
            return False
    return True


@njit(cache=True)
def _sweep_pairs(X, tau, axis):
    """Row-compressed upper-triangle pair lists via a sorted sweep along ``axis``."""
    n = X.shape[0]
    order = np.argsort(X[:, axis], kind="mergesort")
    xs = X[order, axis]
    t = tau[axis]
    counts = np.zeros(n + 1, np.int64)
    for a in range(n):
        b = a + 1
        while b < n and xs[b] - xs[a] < t:
            i = order[a]
            j = order[b]
            if _close(X, i, j, tau):
                counts[min(i, j) + 1] += 1
            b += 1
    ptr = np.cumsum(counts)
    cols = np.empty(ptr[n], np.int64)
    fill = ptr[:n].copy()
    for a in range(n):
        b = a + 1
        while b < n and xs[b] - xs[a] < t:
            i = order[a]
            j = order[b]
            if _close(X, i, j, tau):
                lo = min(i, j)
                cols[fill[lo]] = max(i, j)
                fill[lo] += 1
            b += 1
    for i in range(n):
        cols[ptr[i]:ptr[i + 1]] = np.sort(cols[ptr[i]:ptr[i + 1]])
    return ptr, cols


@njit(cache=True)
def _exhaustive_pairs(X, tau):
    n = X.shape[0]
    counts = np.zeros(n + 1, np.int64)
    for i in range(n):
        for j in range(i + 1, n):
            if _close(X, i, j, tau):
                counts[i + 1] += 1
    ptr = np.cumsum(counts)
    cols = np.empty(ptr[n], np.int64)
    pos = 0
    for i in range(n):
        for j in range(i + 1, n):
            if _close(X, i, j, tau):
                cols[pos] = j
                pos += 1
    return ptr, cols


@njit(cache=True)
def _cross_pairs(X, X0, tau, axis):
    """For each column point of ``X0``, the rows of ``X`` within range."""
    n = X.shape[0]
    n0 = X0.shape[0]
    order = np.argsort(X[:, axis], kind="mergesort")
    xs = X[order, axis]
    t = tau[axis]
    d = X.shape[1]
    counts = np.zeros(n0 + 1, np.int64)
    starts = np.searchsorted(xs, X0[:, axis] - t, side="left")
    for c in range(n0):
        a = starts[c]
        while a < n and xs[a] - X0[c, axis] < t:
            i = order[a]
            ok = True
            for k in range(d):
                if not abs(X[i, k] - X0[c, k]) < tau[k]:
                    ok = False
                    break
            if ok:
                counts[c + 1] += 1
            a += 1
    ptr = np.cumsum(counts)
    rows = np.empty(ptr[n0], np.int64)
    for c in range(n0):
        a = starts[c]
        pos = ptr[c]
        while a < n and xs[a] - X0[c, axis] < t:
            i = order[a]
            ok = True
            for k in range(d):
                if not abs(X[i, k] - X0[c, k]) < tau[k]:
                    ok = False
                    break
            if ok:
                rows[pos] = i
                pos += 1
            a += 1
        rows[ptr[c]:ptr[c + 1]] = np.sort(rows[ptr[c]:ptr[c + 1]])
    return ptr, rows


class NeighborPairs:
    """Pairs ``(i, j)``, ``i < j``, with ``|x_ik - x_jk| < tau_k`` in every dimension.

    Stored row-compressed: the partners of ``i`` are
    ``cols[ptr[i]:ptr[i + 1]]``, sorted ascending.
    """

    __slots__ = ("n", "ptr", "cols")

    def __init__(self, n, ptr, cols):
        self.n = int(n)
        self.ptr = ptr
        self.cols = cols

    def __len__(self):
        return int(self.ptr[-1])

    def rows(self) -> np.ndarray:
        return np.repeat(np.arange(self.n), np.diff(self.ptr))

    def as_array(self) -> np.ndarray:
        """``(m, 2)`` array of pairs sorted by ``(i, j)``."""
        return np.column_stack([self.rows(), self.cols])

    def key(self) -> bytes:
        import hashlib

        h = hashlib.blake2b(digest_size=16)
        h.update(np.int64(self.n).tobytes())
        h.update(np.ascontiguousarray(self.ptr).tobytes())
        h.update(np.ascontiguousarray(self.cols).tobytes())
        return h.digest()


def _predicted_occupancy(t):
    # fraction of uniform pairs whose separation along one axis is below t
    t = min(t, 1.0)
    return 2.0 * t - t * t


def find_interacting_pairs(X, tau, method="auto") -> NeighborPairs:
    """All pairs of design points within range in every dimension.

    ``method`` is ``"sweep"``, ``"exhaustive"`` or ``"auto"``; the automatic
    choice sweeps along the dimension with the smallest range unless the
    sweep window is predicted to hold more than half of the points.
    """
    X = np.ascontiguousarray(np.asarray(X, dtype=float))
    tau = np.ascontiguousarray(np.asarray(tau, dtype=float).ravel())
    n, d = X.shape
    if tau.size != d:
        raise ValueError(f"tau has length {tau.size}, design has {d} dimensions")
    if np.any(~(tau > 0)):
        raise ValueError("ranges must be strictly positive")
    axis = int(np.argmin(tau))
    if method == "auto":
        method = "exhaustive" if _predicted_occupancy(tau[axis]) > SWEEP_OCCUPANCY_LIMIT else "sweep"
    if method == "sweep":
        ptr, cols = _sweep_pairs(X, tau, axis)
    elif method == "exhaustive":
        ptr, cols = _exhaustive_pairs(X, tau)
    else:
        raise ValueError(f"unknown pair search method {method!r}")
    return NeighborPairs(n, ptr, cols)


def find_cross_pairs(X, X0, tau):
    """Column-compressed list of training rows within range of each of ``X0``."""
    X = np.ascontiguousarray(np.asarray(X, dtype=float))
    X0 = np.ascontiguousarray(np.atleast_2d(np.asarray(X0, dtype=float)))
    tau = np.ascontiguousarray(np.asarray(tau, dtype=float).ravel())
    axis = int(np.argmin(tau))
    return _cross_pairs(X, X0, tau, axis)
