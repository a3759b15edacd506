"""Prediction scores and the per-step likelihood timing benchmark."""

from __future__ import annotations

import logging
import statistics
import time
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

STEPS = ("checking distances", "building matrix", "cholesky", "backsolve")


class MetricError(ValueError):
    pass


def nse(pred, actual) -> float:
    """Nash-Sutcliffe efficiency ``1 - SSE / SST`` of ``pred`` against ``actual``."""
    pred = np.asarray(pred, dtype=float).ravel()
    actual = np.asarray(actual, dtype=float).ravel()
    if pred.shape != actual.shape:
        raise MetricError("pred and actual must have equal length")
    if actual.size < 2:
        raise MetricError("need at least two values")
    sst = np.sum((actual - actual.mean()) ** 2)
    if sst == 0.0:
        raise MetricError("NSE is undefined for a constant response")
    return float(1.0 - np.sum((pred - actual) ** 2) / sst)


def empirical_coverage(lower, upper, actual) -> float:
    """Fraction of ``actual`` inside the closed intervals ``[lower, upper]``."""
    lower = np.asarray(lower, dtype=float).ravel()
    upper = np.asarray(upper, dtype=float).ravel()
    actual = np.asarray(actual, dtype=float).ravel()
    if not lower.shape == upper.shape == actual.shape:
        raise MetricError("lower, upper and actual must have equal length")
    if np.any(lower > upper):
        raise MetricError("interval lower bound exceeds upper bound")
    if actual.size == 0:
        raise MetricError("no points to score")
    return float(np.mean((lower <= actual) & (actual <= upper)))


@dataclass
class TimingReport:
    """Wall-clock seconds per (path, step, n, sparsity) cell and repeat."""

    records: list = field(default_factory=list)
    nonzeros: dict = field(default_factory=dict)

    def add(self, path, step, n, sparsity, repeat, seconds):
        if seconds < 0:
            raise MetricError("negative timing")
        self.records.append((path, step, int(n), float(sparsity), int(repeat), float(seconds)))

    def _times(self, path, step, n, sparsity):
        return [
            r[5]
            for r in self.records
            if r[0] == path and r[1] == step and r[2] == n and abs(r[3] - sparsity) < 1e-12
        ]

    def mean(self, path, step, n, sparsity):
        return statistics.fmean(self._times(path, step, n, sparsity))

    def median(self, path, step, n, sparsity):
        return statistics.median(self._times(path, step, n, sparsity))

    def steps(self, path):
        return sorted({r[1] for r in self.records if r[0] == path}, key=STEPS.index)

    def summary(self):
        cells = sorted({(r[0], r[1], r[2], r[3]) for r in self.records},
                       key=lambda c: (c[0], c[2], c[3], STEPS.index(c[1])))
        return [
            {"path": p, "step": s, "n": n, "sparsity": sp,
             "mean": self.mean(p, s, n, sp), "median": self.median(p, s, n, sp)}
            for p, s, n, sp in cells
        ]

    def write_csv(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("path,step,n,sparsity,repeat,seconds\n")
            for r in self.records:
                fh.write(f"{r[0]},{r[1]},{r[2]},{r[3]!r},{r[4]},{r[5]!r}\n")


def isotropic_tau_for_sparsity(X, target, tol=0.1, max_iter=60):
    """Common range ``tau`` giving a structural nonzero proportion near ``target``.

    Bisection on the pair count; returns the range and the achieved proportion.
    """
    from .sparsecov import find_interacting_pairs

    X = np.asarray(X, dtype=float)
    n, d = X.shape
    total = n * (n - 1) / 2
    lo, hi = 0.0, 1.0
    tau, frac = hi, 1.0
    for _ in range(max_iter):
        tau = 0.5 * (lo + hi)
        frac = len(find_interacting_pairs(X, np.full(d, tau))) / total
        if abs(frac - target) <= tol * target:
            break
        if frac > target:
            hi = tau
        else:
            lo = tau
    return tau, frac


def timing_benchmark(n_grid, sparsity_grid, d=4, repeats=3, seed=0, dense_cap=6000,
                     ordering="auto"):
    """Time the four likelihood steps on uniform designs.

    For each ``(n, sparsity)`` a uniform design in ``[0, 1]^d`` is drawn, an
    isotropic Bohman range is tuned to the sparsity target and each step is
    timed ``repeats`` times.  A dense power exponential baseline is timed for
    every ``n`` up to ``dense_cap``.
    """
    import scipy.linalg as sla

    from .correlation import Bohman, PowerExponential, ProductCorrelationModel
    from .sparsecov import build_sparse_correlation, find_interacting_pairs, sparse_cholesky

    if not n_grid or not sparsity_grid:
        raise MetricError("benchmark grids must be nonempty")
    report = TimingReport()
    rng = np.random.default_rng(seed)
    clock = time.perf_counter
    for n in n_grid:
        X = rng.random((n, d))
        y = rng.standard_normal(n)
        for s in sparsity_grid:
            tau, frac = isotropic_tau_for_sparsity(X, s)
            model = ProductCorrelationModel.broadcast(Bohman(), d, tau)
            report.nonzeros[(n, s)] = len(find_interacting_pairs(X, model.tau))
            for r in range(repeats):
                t0 = clock()
                pairs = find_interacting_pairs(X, model.tau)
                t1 = clock()
                R = build_sparse_correlation(X, model, pairs=pairs)
                t2 = clock()
                fac = sparse_cholesky(R, ordering=ordering)
                t3 = clock()
                fac.solve_transposed(y)
                t4 = clock()
                for step, sec in zip(STEPS, (t1 - t0, t2 - t1, t3 - t2, t4 - t3)):
                    report.add("sparse", step, n, s, r, sec)
            log.info("n=%d sparsity=%.3f tau=%.4f achieved=%.4f", n, s, tau, frac)
        if n > dense_cap:
            log.warning("dense baseline skipped for n=%d (cap %d)", n, dense_cap)
            continue
        model = ProductCorrelationModel.broadcast(PowerExponential(1.5, 5.0), d)
        for r in range(repeats):
            t1 = clock()
            K = model.dense(X)
            t2 = clock()
            L = sla.cholesky(K, lower=True, check_finite=False)
            t3 = clock()
            sla.solve_triangular(L, y, lower=True, check_finite=False)
            t4 = clock()
            for step, sec in zip(STEPS[1:], (t2 - t1, t3 - t2, t4 - t3)):
                report.add("dense", step, n, 0.0, r, sec)
    return report
