"""Gaussian process realizations and the dense-versus-sparse simulation study.

Each replicate draws a random Latin hypercube training design and a Latin
hypercube evaluation set, samples one GP realization over both jointly, and
fits (a) the data-generating power exponential model with ``alpha`` fixed at
the truth and (b) the compactly supported truncated power model with a
Legendre basis, at each requested sparsity target.
"""

from __future__ import annotations

import itertools
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla

from .basis import BasisSpec, build_basis_matrix
from .correlation import (
    PowerExponential,
    ProductCorrelationModel,
    TruncatedPower,
    effective_range_to_phi,
)
from .design import latin_hypercube
from .evaluation import empirical_coverage, nse
from .inference import (
    CubePrior,
    IntegratedLikelihood,
    MCMCConfig,
    SimplexPrior,
    calibrate_cutoff,
    metropolis_run,
)
from .predict import predict_from_draws, thin_draws

log = logging.getLogger(__name__)


class SimulationError(ValueError):
    pass


@dataclass
class GPSpec:
    """Covariance ``sigma2 * R`` plus a mean that is a constant or ``F(x) beta``."""

    model: ProductCorrelationModel
    sigma2: float = 1.0
    mean: float = 0.0
    basis: BasisSpec | None = None
    beta: np.ndarray | None = None

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise SimulationError("marginal variance must be positive")
        if (self.basis is None) != (self.beta is None):
            raise SimulationError("basis and beta must be given together")
        if self.basis is not None and len(self.beta) != self.basis.q:
            raise SimulationError(f"beta has {len(self.beta)} entries, basis has {self.basis.q} terms")

    @classmethod
    def power_exponential(cls, d, alpha, effective_range, sigma2=1.0, mean=0.0):
        phi = effective_range_to_phi(effective_range, alpha)
        model = ProductCorrelationModel.broadcast(PowerExponential(alpha, phi), d)
        return cls(model=model, sigma2=sigma2, mean=mean)

    def mean_function(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if self.basis is not None:
            return build_basis_matrix(X, self.basis) @ np.asarray(self.beta, float)
        return np.full(X.shape[0], float(self.mean))


def sample_gp(X, spec: GPSpec, seed=None) -> np.ndarray:
    """One realization ``mean + L z`` with ``L`` the dense Cholesky factor."""
    X = np.asarray(X, dtype=float)
    K = spec.sigma2 * spec.model.dense(X)
    try:
        L = sla.cholesky(K, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        lam = sla.eigvalsh(K, subset_by_index=[0, 0])[0]
        raise SimulationError(
            f"GP covariance is not positive definite (smallest eigenvalue about {lam:.3e})"
        ) from None
    z = np.random.default_rng(seed).standard_normal(X.shape[0])
    return spec.mean_function(X) + L @ z


# --------------------------------------------------------------------------
# study configuration


@dataclass
class SimStudyConfig:
    """Grid and fitting settings for the simulation study.

    The defaults are desk scale (20 replicates, sample sizes up to 650);
    :meth:`full_scale` restores 100 replicates and the full sample-size grid.
    """

    dims: tuple = (2, 4)
    alphas: tuple = (1.5, 1.99)
    ranges: tuple = (0.5, 2.0)
    n_grid: tuple = (100, 250, 650)
    replicates: int = 20
    sparsity_targets: tuple = (0.02, 0.05)
    n_eval: int = 512
    seed: int = 0
    iterations: int = 1000
    burn_in: int = 200
    stride: int = 10
    range_bounds: tuple = (0.05, 5.0)
    degree: int = 5
    interactions: int = 2
    level: float = 0.95
    truncpow_alpha: float = 1.5
    dense_jitter: float = 0.0
    conditions: list | None = None

    def __post_init__(self):
        for name in ("dims", "alphas", "ranges", "n_grid", "sparsity_targets", "range_bounds"):
            vals = tuple(getattr(self, name))
            setattr(self, name, vals)
            if not vals or any(not v > 0 for v in vals):
                raise SimulationError(f"{name} must be a nonempty list of positive values")
        if self.replicates < 1:
            raise SimulationError("replicate count must be >= 1")
        if self.n_eval < 2:
            raise SimulationError("evaluation set needs at least two points")
        lo, hi = self.range_bounds
        if not 0 < lo < hi:
            raise SimulationError("range bounds must satisfy 0 < lower < upper")
        if self.conditions is not None:
            self.conditions = [tuple(c) for c in self.conditions]

    @classmethod
    def full_scale(cls, **kw):
        kw.setdefault("replicates", 100)
        kw.setdefault("n_grid", (100, 150, 250, 400, 650, 1100))
        return cls(**kw)

    def grid(self):
        """Conditions ``(d, alpha, effective_range)``."""
        if self.conditions is not None:
            return list(self.conditions)
        return list(itertools.product(self.dims, self.alphas, self.ranges))

    def mcmc(self, seed) -> MCMCConfig:
        return MCMCConfig(iterations=self.iterations, burn_in=self.burn_in,
                          stride=self.stride, seed=seed)

    def echo(self) -> dict:
        out = asdict(self)
        out["conditions"] = [list(c) for c in self.grid()]
        return out


@dataclass
class ReplicateResult:
    condition: tuple
    method: str
    n: int
    replicate: int
    nse: float
    coverage: float
    seconds: float


@dataclass
class StudyResults:
    records: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    def table(self, condition=None, method=None, n=None):
        return [r for r in self.records
                if (condition is None or r.condition == tuple(condition))
                and (method is None or r.method == method)
                and (n is None or r.n == n)]

    def summary(self):
        """Rows of mean and Monte Carlo standard error per condition, method and n."""
        keys = sorted({(r.condition, r.method, r.n) for r in self.records})
        rows = []
        for cond, method, n in keys:
            recs = self.table(cond, method, n)
            e = np.array([r.nse for r in recs])
            c = np.array([r.coverage for r in recs])
            k = len(recs)
            se = (lambda a: float(a.std(ddof=1) / np.sqrt(k)) if k > 1 else float("nan"))
            nfail = sum(1 for f in self.failures
                        if f["condition"] == cond and f["method"] == method and f["n"] == n)
            rows.append({
                "d": cond[0], "alpha": cond[1], "range": cond[2], "method": method, "n": n,
                "replicates": k, "nse_mean": float(e.mean()), "nse_se": se(e),
                "coverage_mean": float(c.mean()), "coverage_se": se(c), "failures": nfail,
            })
        return rows

    def write(self, out_dir, config: SimStudyConfig | None = None):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for cond in sorted({r.condition for r in self.records} | {f["condition"] for f in self.failures}):
            name = "condition_d{}_alpha{}_range{}.csv".format(*cond)
            with open(out / name, "w", encoding="utf-8") as fh:
                fh.write("method,n,replicate,nse,coverage\n")
                for r in self.table(cond):
                    fh.write(f"{r.method},{r.n},{r.replicate},{r.nse!r},{r.coverage!r}\n")
        rows = self.summary()
        cols = ["d", "alpha", "range", "method", "n", "replicates", "nse_mean", "nse_se",
                "coverage_mean", "coverage_se", "failures"]
        with open(out / "summary.csv", "w", encoding="utf-8") as fh:
            fh.write(",".join(cols) + "\n")
            for row in rows:
                fh.write(",".join(str(row[c]) for c in cols) + "\n")
        with open(out / "failures.csv", "w", encoding="utf-8") as fh:
            fh.write("d,alpha,range,method,n,replicate,error\n")
            for f in self.failures:
                msg = f["error"].replace(",", ";").replace("\n", " ")
                fh.write("{},{},{},{},{},{},{}\n".format(*f["condition"], f["method"], f["n"],
                                                         f["replicate"], msg))
        if config is not None:
            with open(out / "config.txt", "w", encoding="utf-8") as fh:
                for k, v in config.echo().items():
                    fh.write(f"{k} = {v!r}\n")


# --------------------------------------------------------------------------
# fitting


def fit_dense(Xtr, Ytr, Xev, alpha, cfg: SimStudyConfig, seed):
    """Power exponential model with ``alpha`` fixed and a cube prior on ``phi``."""
    d = Xtr.shape[1]
    lo_r, hi_r = cfg.range_bounds
    prior = CubePrior(np.full(d, effective_range_to_phi(hi_r, alpha)),
                      np.full(d, effective_range_to_phi(lo_r, alpha)))
    model = ProductCorrelationModel.broadcast(PowerExponential(alpha, 1.0), d)
    F = np.ones((Xtr.shape[0], 1))
    like = IntegratedLikelihood(Xtr, Ytr, F, model, param="phi", jitter=cfg.dense_jitter)
    chain = metropolis_run(cfg.mcmc(seed), like, prior)
    draws = thin_draws(chain.retained, cfg.stride)
    return predict_from_draws(draws, Xtr, Ytr, F, Xev, np.ones((Xev.shape[0], 1)), model,
                              level=cfg.level, param="phi", jitter=cfg.dense_jitter)


def fit_sparse(Xtr, Ytr, Xev, target, cfg: SimStudyConfig, seed):
    """Truncated power model on the simplex prior calibrated to ``target``."""
    d = Xtr.shape[1]
    C = calibrate_cutoff(Xtr, target, seed=seed % (2 ** 32)).C
    prior = SimplexPrior(C, d)
    basis = BasisSpec(cfg.degree, min(cfg.interactions, d), d)
    F = build_basis_matrix(Xtr, basis)
    model = ProductCorrelationModel.broadcast(TruncatedPower(cfg.truncpow_alpha), d, prior.initial())
    like = IntegratedLikelihood(Xtr, Ytr, F, model)
    chain = metropolis_run(cfg.mcmc(seed), like, prior)
    draws = thin_draws(chain.retained, cfg.stride)
    return predict_from_draws(draws, Xtr, Ytr, F, Xev, build_basis_matrix(Xev, basis), model,
                              level=cfg.level)


def _seed(cfg, ci, n, rep):
    return int(np.random.SeedSequence([cfg.seed, ci, n, rep]).generate_state(1)[0])


def run_replicate(cfg: SimStudyConfig, ci, condition, n, rep, results: StudyResults):
    d, alpha, r = condition
    seed = _seed(cfg, ci, n, rep)
    rng = np.random.default_rng(seed)
    Xtr = np.asarray(latin_hypercube(n, d, seed=rng))
    Xev = np.asarray(latin_hypercube(cfg.n_eval, d, seed=rng))
    spec = GPSpec.power_exponential(d, alpha, r)
    try:
        Y = sample_gp(np.vstack([Xtr, Xev]), spec, seed=rng)
    except SimulationError as exc:
        for m in ["dense"] + [f"sparse_{t}" for t in cfg.sparsity_targets]:
            results.failures.append({"condition": condition, "method": m, "n": n,
                                     "replicate": rep, "error": str(exc)})
        return
    Ytr, Yev = Y[:n], Y[n:]
    jobs = [("dense", lambda s: fit_dense(Xtr, Ytr, Xev, alpha, cfg, s))]
    for t in cfg.sparsity_targets:
        jobs.append((f"sparse_{t}", lambda s, t=t: fit_sparse(Xtr, Ytr, Xev, t, cfg, s)))
    for k, (method, fit) in enumerate(jobs):
        t0 = time.perf_counter()
        try:
            summ = fit(seed + k + 1)
            rec = ReplicateResult(condition, method, n, rep, nse(summ.mean, Yev),
                                  empirical_coverage(summ.lower, summ.upper, Yev),
                                  time.perf_counter() - t0)
            results.records.append(rec)
            log.info("d=%s alpha=%s range=%s n=%d rep=%d %s: nse=%.4f coverage=%.4f (%.1fs)",
                     d, alpha, r, n, rep, method, rec.nse, rec.coverage, rec.seconds)
        except Exception as exc:  # recorded, never silently dropped
            log.warning("replicate failed (%s, %s, n=%d, rep=%d): %s", condition, method, n, rep, exc)
            results.failures.append({"condition": condition, "method": method, "n": n,
                                     "replicate": rep, "error": f"{type(exc).__name__}: {exc}"})


def run_sim_study(config: SimStudyConfig, out_dir=None) -> StudyResults:
    """Run every condition, sample size and replicate; optionally write CSVs."""
    results = StudyResults()
    for ci, cond in enumerate(config.grid()):
        for n in config.n_grid:
            for rep in range(config.replicates):
                run_replicate(config, ci, tuple(cond), int(n), rep, results)
    if out_dir is not None:
        results.write(out_dir, config)
    return results
