"""Integrated likelihood, priors, adaptive Metropolis sampling and cutoff calibration.

With the prior ``p(beta, sigma^2, tau) ∝ pi(tau) / sigma^2`` the regression
coefficients and the marginal variance integrate out in closed form, leaving

    log L(tau) = -1/2 log|G| - 1/2 log|F' G^{-1} F| - (n - q)/2 log RSS(tau)

up to a constant, where ``G`` is the correlation matrix and ``RSS`` the
generalized residual sum of squares.  Only ``tau`` is sampled.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from numba import njit

from .correlation import PowerExponential, ProductCorrelationModel
from .sparsecov import (
    DenseFactor,
    NotPositiveDefinite,
    SymbolicCache,
    build_sparse_correlation,
    find_interacting_pairs,
    sparse_cholesky,
)

log = logging.getLogger(__name__)


class InferenceError(ValueError):
    pass


class RankDeficientError(InferenceError, np.linalg.LinAlgError):
    pass


# --------------------------------------------------------------------------
# priors


@dataclass(frozen=True)
class SimplexPrior:
    """Uniform prior on ``{tau : tau_k > 0, sum(tau) <= C}``."""

    C: float
    d: int

    def __post_init__(self):
        if not self.C > 0:
            raise InferenceError("cutoff C must be positive")
        if self.d < 1:
            raise InferenceError("dimension must be >= 1")

    def contains(self, tau) -> bool:
        tau = np.asarray(tau, dtype=float)
        return bool(tau.shape == (self.d,) and np.all(tau > 0) and tau.sum() <= self.C)

    def initial(self) -> np.ndarray:
        return np.full(self.d, self.C / (2 * self.d))

    def initial_cov(self) -> np.ndarray:
        return (0.1 * self.C / self.d) ** 2 * np.eye(self.d)

    def sample(self, size, rng) -> np.ndarray:
        """Uniform draws from the simplex region."""
        # d+1 spacings of uniform order statistics; the last one is slack
        e = rng.exponential(size=(size, self.d + 1))
        return self.C * e[:, : self.d] / e.sum(axis=1, keepdims=True)


def prior_contains(tau, prior: SimplexPrior) -> bool:
    return prior.contains(tau)


@dataclass(frozen=True)
class CubePrior:
    """Uniform prior on the box ``lower < theta_k <= upper``.

    Used for power exponential ``phi`` and as the cube restriction
    ``tau_k <= B`` kept for comparison with the simplex prior.
    """

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.array(self.lower, dtype=float).ravel()
        hi = np.array(self.upper, dtype=float).ravel()
        if lo.shape != hi.shape or np.any(hi <= lo):
            raise InferenceError("cube prior needs upper > lower in every dimension")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def d(self):
        return self.lower.size

    def contains(self, theta) -> bool:
        theta = np.asarray(theta, dtype=float)
        return bool(theta.shape == (self.d,) and np.all(theta > self.lower) and np.all(theta <= self.upper))

    def initial(self):
        return 0.5 * (self.lower + self.upper)

    def initial_cov(self):
        return np.diag((0.05 * (self.upper - self.lower)) ** 2)

    def sample(self, size, rng):
        return rng.uniform(self.lower, self.upper, size=(size, self.d))


def cube_restriction_contains(tau, B: float) -> bool:
    """Membership in the cube ``0 < tau_k <= B`` (comparison utility only)."""
    tau = np.asarray(tau, dtype=float)
    return bool(np.all(tau > 0) and np.all(tau <= B))


# --------------------------------------------------------------------------
# correlation matrices for parameter vectors


class CorrelationEvaluator:
    """Factor the training correlation matrix for a parameter vector.

    ``param`` selects what the sampled vector means: ``"tau"`` for support
    ranges of compact families, ``"phi"`` for power exponential scales.
    Compact models use the sparse path unless ``dense=True``.
    """

    def __init__(self, X, model: ProductCorrelationModel, param=None, dense=False,
                 ordering="amd", jitter=0.0, cache_size=4):
        self.X = np.ascontiguousarray(np.asarray(X, dtype=float))
        self.model = model
        if param is None:
            param = "tau" if model.fully_compact else "phi"
        if param == "phi" and not all(isinstance(f, PowerExponential) for f in model.families):
            raise InferenceError("phi parameterization needs power exponential families")
        self.param = param
        self.sparse = model.fully_compact and not dense
        self.ordering = ordering
        self.jitter = float(jitter)
        self.cache = SymbolicCache(cache_size)

    def model_at(self, theta) -> ProductCorrelationModel:
        if self.param == "tau":
            return self.model.with_tau(theta)
        return self.model.with_phi(theta)

    def matrix(self, theta):
        model = self.model_at(theta)
        if self.sparse:
            R = build_sparse_correlation(self.X, model)
            return R.add_diagonal(self.jitter) if self.jitter else R
        K = model.dense(self.X)
        if self.jitter:
            K[np.diag_indices_from(K)] += self.jitter
        return K

    def factor(self, theta):
        R = self.matrix(theta)
        if self.sparse:
            return sparse_cholesky(R, ordering=self.ordering, cache=self.cache)
        return DenseFactor(R)


# --------------------------------------------------------------------------
# integrated likelihood


@dataclass
class LikelihoodTerms:
    """Pieces of the integrated likelihood at one parameter value."""

    loglik: float
    logdet_gamma: float
    logdet_ftf: float
    rss: float
    beta: np.ndarray
    sigma2: float
    yty: float
    n: int
    q: int
    factor: object = field(repr=False, default=None)
    ftf_chol: np.ndarray = field(repr=False, default=None)
    wf: np.ndarray = field(repr=False, default=None)
    alpha: np.ndarray = field(repr=False, default=None)


class IntegratedLikelihood:
    """Integrated log likelihood of a parameter vector for fixed data."""

    def __init__(self, X, Y, F, model: ProductCorrelationModel, **evaluator_kw):
        self.Y = np.asarray(Y, dtype=float).ravel()
        self.F = np.atleast_2d(np.asarray(F, dtype=float))
        if self.F.shape[0] != self.Y.size:
            self.F = self.F.reshape(self.Y.size, -1)
        self.n, self.q = self.F.shape
        if self.n <= self.q + 2:
            raise InferenceError(f"need n > q + 2, got n={self.n}, q={self.q}")
        self.evaluator = CorrelationEvaluator(X, model, **evaluator_kw)
        if self.evaluator.X.shape[0] != self.n:
            raise InferenceError("X, Y and F must have the same number of rows")

    def terms(self, theta) -> LikelihoodTerms:
        fac = self.evaluator.factor(np.asarray(theta, dtype=float))
        return self._terms_from_factor(fac)

    def _terms_from_factor(self, fac) -> LikelihoodTerms:
        n, q = self.n, self.q
        wy = fac.solve_transposed(self.Y)
        wf = fac.solve_transposed(self.F)
        A = wf.T @ wf
        try:
            cA = sla.cholesky(A, lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            raise RankDeficientError("F' G^-1 F is not positive definite (rank-deficient basis)") from None
        dA = np.diag(cA)
        if dA.min() <= 1e-12 * dA.max():
            raise RankDeficientError("F' G^-1 F is numerically singular (rank-deficient basis)")
        beta = sla.cho_solve((cA, True), wf.T @ wy, check_finite=False)
        r = wy - wf @ beta
        rss = float(r @ r)
        logdet_gamma = fac.logdet()
        logdet_ftf = float(2.0 * np.sum(np.log(dA)))
        loglik = -0.5 * logdet_gamma - 0.5 * logdet_ftf - 0.5 * (n - q) * math.log(rss) if rss > 0 else math.inf
        return LikelihoodTerms(
            loglik=loglik, logdet_gamma=logdet_gamma, logdet_ftf=logdet_ftf, rss=rss,
            beta=beta, sigma2=rss / (n - q), yty=float(wy @ wy), n=n, q=q,
            factor=fac, ftf_chol=cA, wf=wf, alpha=None,
        )

    def __call__(self, theta) -> float:
        return self.terms(theta).loglik


def integrated_loglik(tau, X, Y, F, model: ProductCorrelationModel, **kw):
    """Integrated log likelihood and its terms at ``tau``.

    Returns
    -------
    loglik : float
    terms : LikelihoodTerms
    """
    terms = IntegratedLikelihood(X, Y, F, model, **kw).terms(tau)
    return terms.loglik, terms


# --------------------------------------------------------------------------
# adaptive Metropolis


@dataclass
class MCMCConfig:
    """Settings for the random-walk Metropolis sampler.

    Proposal adaptation follows a log-adaptive scheme: after every block of
    ``block`` iterations the proposal covariance becomes the chain's
    empirical covariance scaled by ``c``, with
    ``log c += k**-decay * (acceptance - target_accept)``.
    """

    iterations: int = 3000
    burn_in: int = 500
    stride: int = 10
    initial: np.ndarray | None = None
    target_accept: float = 0.234
    block: int = 50
    decay: float = 0.6
    seed: int | None = None
    adapt: bool = True
    proposal_cov: np.ndarray | None = None
    init_log_scale: float | None = None

    def __post_init__(self):
        if self.iterations < 1:
            raise InferenceError("iterations must be >= 1")
        if not 0 <= self.burn_in < self.iterations:
            raise InferenceError("burn-in must be smaller than the number of iterations")
        if self.stride < 1:
            raise InferenceError("stride must be >= 1")
        if self.block < 1:
            raise InferenceError("adaptation block must be >= 1")
        if not 0.5 < self.decay <= 1.0:
            raise InferenceError("decay exponent must lie in (0.5, 1] for vanishing adaptation")

    def gamma(self, k):
        """Adaptation step size after block ``k`` (1-based)."""
        return float(k) ** (-self.decay)


@dataclass
class Chain:
    """Full sampler trace; retained draws are the post-burn-in part."""

    samples: np.ndarray
    logliks: np.ndarray
    accepted: np.ndarray
    burn_in: int
    block_rates: list = field(default_factory=list)
    cov_history: list = field(default_factory=list)
    log_scales: list = field(default_factory=list)
    failures: int = 0

    @property
    def retained(self) -> np.ndarray:
        return self.samples[self.burn_in:]

    @property
    def retained_logliks(self) -> np.ndarray:
        return self.logliks[self.burn_in:]

    @property
    def acceptance_rate(self) -> float:
        return float(self.accepted.mean())

    def thinned(self, stride) -> np.ndarray:
        return self.retained[::stride]

    def write_csv(self, path):
        d = self.samples.shape[1]
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("iter," + ",".join(f"tau_{k + 1}" for k in range(d)) + ",loglik,accepted\n")
            for i in range(self.samples.shape[0]):
                vals = ",".join(repr(float(v)) for v in self.samples[i])
                fh.write(f"{i + 1},{vals},{float(self.logliks[i])!r},{int(self.accepted[i])}\n")

    def write_sidecar(self, path, config: MCMCConfig, extra=None):
        """Run metadata as ``key = value`` lines (TOML-compatible scalars and arrays)."""
        def fmt(v):
            if isinstance(v, (bool, np.bool_)):
                return "true" if v else "false"
            if isinstance(v, str):
                return '"' + v.replace('\\', '\\\\').replace('"', '\\"') + '"'
            if isinstance(v, (list, tuple, np.ndarray)):
                return "[" + ", ".join(fmt(x) for x in np.asarray(v).ravel().tolist()) + "]"
            if v is None:
                return '"none"'
            return repr(float(v)) if isinstance(v, (float, np.floating)) else str(int(v))

        items = {
            "seed": "none" if config.seed is None else config.seed,
            "iterations": config.iterations, "burn_in": config.burn_in, "stride": config.stride,
            "target_accept": config.target_accept, "block": config.block, "decay": config.decay,
            "adapt": config.adapt,
            "acceptance_rate": self.acceptance_rate,
            "retained_acceptance_rate": float(self.accepted[self.burn_in:].mean()),
            "failures": self.failures,
            "final_log_scale": self.log_scales[-1] if self.log_scales else 0.0,
        }
        if config.initial is not None:
            items["initial"] = config.initial
        items.update(extra or {})
        with open(path, "w", encoding="utf-8") as fh:
            for k, v in items.items():
                fh.write(f"{k} = {fmt(v)}\n")

    @classmethod
    def read_csv(cls, path, burn_in=0):
        data = np.genfromtxt(path, delimiter=",", names=True)
        data = np.atleast_1d(data)
        names = data.dtype.names
        taus = [n for n in names if n.startswith("tau_")]
        samples = np.column_stack([data[n] for n in taus]) if len(data) else np.zeros((0, len(taus)))
        return cls(samples=samples, logliks=np.asarray(data["loglik"], float),
                   accepted=np.asarray(data["accepted"], bool), burn_in=burn_in)


class SamplerAborted(InferenceError):
    """Likelihood failure inside the sampler; ``state`` holds a diagnostic dump."""

    def __init__(self, message, state):
        super().__init__(message)
        self.state = state


def metropolis_run(config: MCMCConfig, loglik, prior) -> Chain:
    """Random-walk Metropolis over ``prior`` targeting ``exp(loglik)``.

    Parameters
    ----------
    config : MCMCConfig
    loglik : callable
        Log target up to a constant, evaluated only inside the prior support.
        A :class:`NotPositiveDefinite` failure (possible only through
        rounding) rejects the proposal and is logged; any other error aborts
        the run with :class:`SamplerAborted` carrying the sampler state.
    prior : SimplexPrior or CubePrior
        Anything with ``contains``, ``initial``, ``initial_cov`` and ``d``.
    """
    rng = np.random.default_rng(config.seed)
    d = prior.d
    theta = prior.initial() if config.initial is None else np.array(config.initial, dtype=float)
    if not prior.contains(theta):
        raise InferenceError(f"initial value {theta} lies outside the prior support")
    try:
        cur = float(loglik(theta))
    except RankDeficientError:
        raise
    except Exception as exc:
        state = {"iteration": 0, "current": theta.tolist(), "candidate": theta.tolist(),
                 "proposal_cov": None, "error": f"{type(exc).__name__}: {exc}"}
        raise SamplerAborted(f"likelihood failed at the initial value {theta}: {exc}", state) from exc
    if not np.isfinite(cur):
        raise InferenceError(f"non-finite log likelihood {cur} at the initial value {theta}")

    base_cov = prior.initial_cov() if config.proposal_cov is None else np.array(config.proposal_cov, float)
    log_c0 = math.log(2.38 ** 2 / d) if config.init_log_scale is None else config.init_log_scale
    log_c = log_c0
    cov = base_cov.copy()
    chol = np.linalg.cholesky(cov)

    B = config.iterations
    samples = np.empty((B, d))
    logliks = np.empty(B)
    accepted = np.zeros(B, dtype=bool)
    block_rates, cov_history, log_scales = [], [cov.copy()], [log_c]
    failures = 0
    # running moments of the chain for the empirical covariance
    s1 = np.zeros(d)
    s2 = np.zeros((d, d))
    n_accept_total = 0
    k = 0
    for i in range(B):
        cand = theta + chol @ rng.standard_normal(d)
        ok = False
        if prior.contains(cand):
            try:
                val = float(loglik(cand))
            except NotPositiveDefinite as exc:
                failures += 1
                log.warning("rejecting proposal %s: %s", cand, exc)
                val = -math.inf
            except Exception as exc:
                state = {
                    "iteration": i + 1, "current": theta.copy(), "candidate": cand.copy(),
                    "current_loglik": cur, "proposal_cov": cov.copy(), "log_scale": log_c,
                    "accepted_so_far": int(n_accept_total), "error": repr(exc),
                }
                raise SamplerAborted(f"likelihood failed at iteration {i + 1}: {exc}", state) from exc
            if np.isfinite(val) or val == math.inf:
                ok = math.log(rng.random()) < val - cur
            else:
                rng.random()
            if ok:
                theta, cur = cand, val
        accepted[i] = ok
        n_accept_total += ok
        samples[i] = theta
        logliks[i] = cur
        s1 += theta
        s2 += np.outer(theta, theta)
        if (i + 1) % config.block == 0:
            k += 1
            rate = float(accepted[i + 1 - config.block:i + 1].mean())
            block_rates.append(rate)
            if config.adapt:
                log_c += config.gamma(k) * (rate - config.target_accept)
                m = i + 1
                emp = s2 / m - np.outer(s1 / m, s1 / m)
                emp = 0.5 * (emp + emp.T) * m / max(m - 1, 1)
                if n_accept_total >= 2 * d:
                    cov = math.exp(log_c) * (emp + 1e-10 * np.eye(d))
                else:
                    # too few moves for a covariance estimate: rescale the start
                    cov = math.exp(log_c - log_c0) * base_cov
                try:
                    chol = np.linalg.cholesky(cov)
                except np.linalg.LinAlgError:
                    cov = math.exp(log_c - log_c0) * base_cov
                    chol = np.linalg.cholesky(cov)
                cov_history.append(cov.copy())
                log_scales.append(log_c)
    return Chain(samples=samples, logliks=logliks, accepted=accepted, burn_in=config.burn_in,
                 block_rates=block_rates, cov_history=cov_history, log_scales=log_scales,
                 failures=failures)


# --------------------------------------------------------------------------
# cutoff calibration


@njit(cache=True)
def _count_pairs_sorted(Xs, tau, axis):
    # Xs sorted along ``axis``
    n, d = Xs.shape
    t = tau[axis]
    count = 0
    for a in range(n):
        b = a + 1
        while b < n and Xs[b, axis] - Xs[a, axis] < t:
            ok = True
            for k in range(d):
                if not abs(Xs[a, k] - Xs[b, k]) < tau[k]:
                    ok = False
                    break
            if ok:
                count += 1
            b += 1
    return count


class _PairCounter:
    def __init__(self, X):
        self.X = np.ascontiguousarray(X)
        self.sorted = [np.ascontiguousarray(self.X[np.argsort(self.X[:, k], kind="mergesort")])
                       for k in range(self.X.shape[1])]
        n = self.X.shape[0]
        self.total = n * (n - 1) / 2

    def proportion(self, tau):
        tau = np.ascontiguousarray(tau, dtype=float)
        axis = int(np.argmin(tau))
        return _count_pairs_sorted(self.sorted[axis], tau, axis) / self.total


@dataclass
class CalibrationReport:
    C: float
    achieved: float
    tau_max: np.ndarray
    s_target: float
    n_used: int
    n_total: int
    subsampled: bool

    def lines(self):
        out = [
            f"C = {self.C:.6g}",
            f"worst-case nonzero proportion = {self.achieved:.6g} (target {self.s_target:.6g})",
            "maximizing tau = " + ", ".join(f"{v:.6g}" for v in self.tau_max),
        ]
        if self.subsampled:
            out.append(f"pair counts from a random subsample of {self.n_used} of {self.n_total} points")
        return out


def _face_max(counter, C, d, starts, warm=None, rel_tol=1e-3):
    """Heuristic max of the nonzero proportion over ``{tau > 0, sum(tau) = C}``."""
    best_val, best_tau = -1.0, None
    inits = [C * w for w in starts]
    if warm is not None:
        inits.append(warm * (C / warm.sum()))
    for tau in inits:
        tau = tau.copy()
        val = counter.proportion(tau)
        step = C / 4.0
        while step > rel_tol * C:
            improved = False
            for j in range(d):
                for k in range(d):
                    if j == k:
                        continue
                    delta = min(step, 0.999 * tau[j])
                    if delta <= 0:
                        continue
                    trial = tau.copy()
                    trial[j] -= delta
                    trial[k] += delta
                    v = counter.proportion(trial)
                    if v > val:
                        tau, val, improved = trial, v, True
            if not improved:
                step /= 2.0
        if val > best_val:
            best_val, best_tau = val, tau
    return best_val, best_tau


def calibrate_cutoff(X, s_target, tol=1e-3, restarts=8, max_points=2000, seed=0) -> CalibrationReport:
    """Largest cutoff ``C`` whose worst-case structural nonzero proportion is at most ``s_target``.

    The worst case over the face ``sum(tau) = C`` is found by multi-start
    coordinate ascent (mass transfers between pairs of dimensions).  It is a
    heuristic maximum, not a certified one.
    """
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    if not 0 <= s_target <= 1:
        raise InferenceError("sparsity target must lie in [0, 1]")
    if n < 2:
        raise InferenceError("need at least two design points")
    rng = np.random.default_rng(seed)
    subsampled = n > max_points
    Xc = X[np.sort(rng.choice(n, max_points, replace=False))] if subsampled else X
    counter = _PairCounter(Xc)
    starts = [np.full(d, 1.0 / d)]
    starts += list(rng.dirichlet(np.ones(d), size=max(restarts - 1, 0)))

    floor = counter.proportion(np.full(d, 1e-12))
    if floor > s_target:
        raise InferenceError(
            f"no positive cutoff meets target {s_target}: coincident points give a minimum "
            f"nonzero proportion of {floor:.6g}"
        )
    hi_val, hi_tau = _face_max(counter, float(d), d, starts)
    if hi_val <= s_target:
        return CalibrationReport(float(d), hi_val, hi_tau, s_target, Xc.shape[0], n, subsampled)
    lo, hi = 0.0, float(d)
    lo_val, lo_tau = floor, np.full(d, 0.0)
    warm = hi_tau
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        val, tau = _face_max(counter, mid, d, starts, warm=warm)
        if val <= s_target:
            lo, lo_val, lo_tau = mid, val, tau
        else:
            hi = mid
            warm = tau
    return CalibrationReport(lo, lo_val, lo_tau, s_target, Xc.shape[0], n, subsampled)


def nonzero_proportion(X, tau) -> float:
    """Structural nonzero proportion of the off-diagonal correlation entries."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    return len(find_interacting_pairs(X, tau)) / (n * (n - 1) / 2)
