"""Conditional predictive moments per posterior draw and their aggregation.

Given ``tau`` the predictive distribution of ``Y(x0)`` is multivariate t
with ``n - q`` degrees of freedom.  For each retained draw we keep its
pointwise mean and variance, then combine draws by the laws of iterated
expectation and total variance.  Only pointwise summaries are produced; for
simultaneous intervals one should sample the joint predictive instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy import optimize, stats

from .correlation import ProductCorrelationModel
from .inference import IntegratedLikelihood, LikelihoodTerms
from .sparsecov import cross_correlation

DEFAULT_BLOCK = 4096


class PredictionError(ValueError):
    pass


@dataclass
class ConditionalMoments:
    """Pointwise mean ``m`` and variance ``v`` of the t predictive at one draw."""

    m: np.ndarray
    v: np.ndarray
    dof: int

    @property
    def scale2(self) -> np.ndarray:
        """Squared t scale, ``v (dof - 2) / dof``."""
        return self.v * (self.dof - 2) / self.dof


@dataclass
class PredictiveSummary:
    mean: np.ndarray
    variance: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float
    components: list = field(default_factory=list, repr=False)

    def __len__(self):
        return self.mean.size


def _moments_from_terms(terms: LikelihoodTerms, X, Y, F, X0, F0, model, block):
    n, q = terms.n, terms.q
    if n <= q + 2:
        raise PredictionError(f"finite predictive variance needs n > q + 2 (n={n}, q={q})")
    fac = terms.factor
    if terms.alpha is None:
        terms.alpha = fac.solve(Y - F @ terms.beta)
    alpha = terms.alpha
    n0 = X0.shape[0]
    m = np.empty(n0)
    V = np.empty(n0)
    for s in range(0, n0, block):
        e = min(s + block, n0)
        G = cross_correlation(X, X0[s:e], model)
        m[s:e] = F0[s:e] @ terms.beta + G.T @ alpha
        W0 = fac.solve_transposed(G.toarray())
        H = F0[s:e] - W0.T @ terms.wf
        Z = sla.solve_triangular(terms.ftf_chol, H.T, lower=True, check_finite=False)
        V[s:e] = 1.0 - np.einsum("ij,ij->j", W0, W0) + np.einsum("ij,ij->j", Z, Z)
    np.maximum(V, 0.0, out=V)
    dof = n - q
    v = dof / (dof - 2) * terms.sigma2 * V
    return ConditionalMoments(m=m, v=v, dof=dof)


def _as_2d(A, rows):
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A.reshape(rows, -1) if rows else A.reshape(0, -1)
    return A


def conditional_moments(tau, X, Y, F, X0, F0, model: ProductCorrelationModel,
                        block=DEFAULT_BLOCK, likelihood: IntegratedLikelihood | None = None,
                        terms: LikelihoodTerms | None = None, **kw) -> ConditionalMoments:
    """Predictive mean and variance at ``X0`` for one parameter draw.

    Parameters
    ----------
    tau : array_like
        Parameter vector (ranges for compact models, ``phi`` for power exponential).
    X, Y, F : training inputs, outputs and basis matrix.
    X0, F0 : prediction inputs and their basis matrix.
    model : ProductCorrelationModel
        Template whose range parameters are replaced by ``tau``.
    block : int
        Prediction points handled per batch.
    likelihood, terms : optional
        Reuse an existing likelihood object or factorization.
    """
    if block < 1:
        raise PredictionError("block size must be >= 1")
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float).ravel()
    F = _as_2d(F, Y.size)
    X0 = np.asarray(X0, dtype=float).reshape(-1, X.shape[1])
    F0 = np.asarray(F0, dtype=float).reshape(X0.shape[0], F.shape[1])
    if terms is None:
        if likelihood is None:
            likelihood = IntegratedLikelihood(X, Y, F, model, **kw)
        terms = likelihood.terms(tau)
        model_t = likelihood.evaluator.model_at(np.asarray(tau, float))
    else:
        model_t = model
    return _moments_from_terms(terms, X, Y, F, X0, F0, model_t, block)


def aggregate_predictions(moments, level=0.95) -> PredictiveSummary:
    """Combine per-draw moments.

    The mean is the average of the draw means; the variance is the average
    draw variance plus the population variance (divisor ``K``) of the draw
    means.
    """
    moments = list(moments)
    if len(moments) == 0:
        raise PredictionError("no conditional moments to aggregate")
    if len(moments) < 2:
        raise PredictionError("aggregation needs at least two draws")
    M = np.vstack([np.asarray(c.m, float) for c in moments])
    Vv = np.vstack([np.asarray(c.v, float) for c in moments])
    mean = M.mean(axis=0)
    var = Vv.mean(axis=0) + ((M - mean) ** 2).mean(axis=0)
    summary = PredictiveSummary(mean=mean, variance=var, lower=mean.copy(), upper=mean.copy(),
                                level=level, components=moments)
    lo, hi = credible_interval(summary, level)
    summary.lower, summary.upper = lo, hi
    return summary


def _mixture_quantile(p, locs, scales, dof):
    def cdf(y):
        return np.mean(stats.t.cdf((y - locs) / scales, dof)) - p

    lo = np.min(locs + scales * stats.t.ppf(p, dof))
    hi = np.max(locs + scales * stats.t.ppf(p, dof))
    if hi - lo < 1e-300 or cdf(lo) >= 0:
        return lo
    return optimize.brentq(cdf, lo, hi, xtol=1e-12, rtol=1e-12)


def credible_interval(summary: PredictiveSummary, level: float, exact=False):
    """Pointwise ``level`` credible bounds.

    By default a normal approximation ``mean ± z sqrt(variance)``.  With
    ``exact=True`` the quantiles of the equally weighted t mixture over the
    stored draws are found by root finding.
    """
    if not 0 < level < 1:
        raise PredictionError("level must lie in (0, 1)")
    if not exact:
        z = stats.norm.ppf(0.5 * (1 + level))
        half = z * np.sqrt(np.maximum(summary.variance, 0.0))
        return summary.mean - half, summary.mean + half
    if not summary.components:
        raise PredictionError("exact mixture quantiles need the per-draw moments")
    M = np.vstack([c.m for c in summary.components])
    S = np.sqrt(np.vstack([c.scale2 for c in summary.components]))
    dof = summary.components[0].dof
    a = 0.5 * (1 - level)
    lo = np.empty(M.shape[1])
    hi = np.empty(M.shape[1])
    for j in range(M.shape[1]):
        if np.all(S[:, j] == 0):
            lo[j] = M[:, j].min()
            hi[j] = M[:, j].max()
            continue
        lo[j] = _mixture_quantile(a, M[:, j], S[:, j], dof)
        hi[j] = _mixture_quantile(1 - a, M[:, j], S[:, j], dof)
    return lo, hi


def thin_draws(samples, stride=10, K=None):
    """Every ``stride``-th retained draw, optionally capped at ``K`` evenly spaced ones."""
    if stride < 1:
        raise PredictionError("stride must be >= 1")
    draws = np.asarray(samples)[::stride]
    if K is not None and K < len(draws):
        idx = np.linspace(0, len(draws) - 1, K).round().astype(int)
        draws = draws[idx]
    return draws


def predict_from_draws(draws, X, Y, F, X0, F0, model, level=0.95, block=DEFAULT_BLOCK, **kw):
    """Moments at every draw, aggregated into a :class:`PredictiveSummary`."""
    like = IntegratedLikelihood(X, Y, F, model, **kw)
    X0 = np.asarray(X0, dtype=float).reshape(-1, np.asarray(X).shape[1])
    moments = [conditional_moments(t, X, Y, F, X0, F0, model, block=block, likelihood=like)
               for t in draws]
    if len(moments) == 1:
        # a single draw: its own moments, no between-draw term
        c = moments[0]
        s = PredictiveSummary(c.m.copy(), c.v.copy(), c.m.copy(), c.m.copy(), level, moments)
        s.lower, s.upper = credible_interval(s, level)
        return s
    return aggregate_predictions(moments, level)


def write_predictions_csv(path, X0, summary: PredictiveSummary):
    X0 = np.asarray(X0, dtype=float)
    d = X0.shape[1] if X0.ndim == 2 else 0
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# level = {summary.level!r}\n")
        fh.write(",".join([f"x{k + 1}" for k in range(d)] + ["mean", "variance", "lower", "upper"]) + "\n")
        for i in range(len(summary)):
            vals = list(X0[i]) + [summary.mean[i], summary.variance[i], summary.lower[i], summary.upper[i]]
            fh.write(",".join(repr(float(v)) for v in vals) + "\n")


def read_predictions_csv(path):
    """Return ``(X0, summary)`` from a prediction CSV."""
    level = None
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
        if first.startswith("#"):
            key, _, val = first[1:].partition("=")
            if key.strip() == "level":
                level = float(val)
            header = fh.readline()
        else:
            header = first
        cols = header.strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    data = np.array(rows, dtype=float).reshape(len(rows), len(cols))
    idx = {c: k for k, c in enumerate(cols)}
    for need in ("mean", "variance", "lower", "upper"):
        if need not in idx:
            raise PredictionError(f"{path}: missing column {need!r}")
    xcols = [k for k, c in enumerate(cols) if c.startswith("x")]
    summary = PredictiveSummary(
        mean=data[:, idx["mean"]], variance=data[:, idx["variance"]],
        lower=data[:, idx["lower"]], upper=data[:, idx["upper"]],
        level=level if level is not None else float("nan"),
    )
    return data[:, xcols], summary
