import csv

import numpy as np
import pytest

from compactgp import simulator
from compactgp.basis import BasisSpec
from compactgp.correlation import PowerExponential, ProductCorrelationModel, effective_range_to_phi
from compactgp.design import latin_hypercube
from compactgp.simulator import GPSpec, SimStudyConfig, SimulationError, run_sim_study, sample_gp


def test_tiny_variance_returns_mean():
    X = np.asarray(latin_hypercube(40, 2, seed=1))
    spec = GPSpec.power_exponential(2, 1.5, 0.5, sigma2=1e-30, mean=3.25)
    assert np.abs(sample_gp(X, spec, seed=0) - 3.25).max() <= 1e-10
    spec = GPSpec(spec.model, 1e-30, basis=BasisSpec(1, 1, 2), beta=np.array([1.0, 2.0, -1.0]))
    Y = sample_gp(X, spec, seed=0)
    assert np.abs(Y - spec.mean_function(X)).max() <= 1e-10


def test_two_point_covariance_monte_carlo():
    X = np.array([[0.1, 0.2], [0.4, 0.3]])
    spec = GPSpec.power_exponential(2, 1.5, 0.5, sigma2=2.0)
    N = 200_000
    Ys = np.array([sample_gp(X, spec, seed=s) for s in range(N)])
    S = np.cov(Ys.T)
    phi = effective_range_to_phi(0.5, 1.5)
    k01 = 2.0 * np.exp(-phi * 0.3 ** 1.5 - phi * 0.1 ** 1.5)
    K = np.array([[2.0, k01], [k01, 2.0]])
    assert np.allclose(S, K, rtol=0.02)


def test_seeded_determinism_and_errors():
    X = np.asarray(latin_hypercube(30, 3, seed=2))
    spec = GPSpec.power_exponential(3, 1.99, 2.0)
    assert np.array_equal(sample_gp(X, spec, seed=5), sample_gp(X, spec, seed=5))
    with pytest.raises(SimulationError):
        GPSpec.power_exponential(2, 1.5, 0.5, sigma2=0.0)
    # coincident points make the covariance singular
    Xd = np.vstack([X, X[:1]])
    with pytest.raises(SimulationError, match="eigenvalue"):
        sample_gp(Xd, spec, seed=1)


def test_config_validation():
    with pytest.raises(SimulationError):
        SimStudyConfig(replicates=0)
    with pytest.raises(SimulationError):
        SimStudyConfig(ranges=(0.5, -1.0))
    c = SimStudyConfig()
    assert len(c.grid()) == 8 and c.n_eval == 512
    assert SimStudyConfig.full_scale().replicates == 100


def _tiny(**kw):
    base = dict(conditions=[(2, 1.5, 0.5)], n_grid=(100,), replicates=1, n_eval=64,
                iterations=120, burn_in=20, stride=10, seed=3)
    base.update(kw)
    return SimStudyConfig(**base)


def test_smoke_run(tmp_path):
    res = run_sim_study(_tiny(), out_dir=tmp_path)
    assert not res.failures
    methods = {r.method for r in res.records}
    assert methods == {"dense", "sparse_0.02", "sparse_0.05"}
    for r in res.records:
        assert np.isfinite(r.nse) and 0 <= r.coverage <= 1
    rows = list(csv.DictReader(open(tmp_path / "condition_d2_alpha1.5_range0.5.csv")))
    assert len(rows) == 3 and set(rows[0]) == {"method", "n", "replicate", "nse", "coverage"}
    assert (tmp_path / "summary.csv").exists() and (tmp_path / "config.txt").exists()
    # replicates are seeded from the study seed
    again = run_sim_study(_tiny())
    assert [r.nse for r in again.records] == [r.nse for r in res.records]


def test_failures_are_recorded(monkeypatch, tmp_path):
    def boom(*a, **k):
        raise FloatingPointError("synthetic failure")

    monkeypatch.setattr(simulator, "fit_sparse", boom)
    res = run_sim_study(_tiny(), out_dir=tmp_path)
    assert {r.method for r in res.records} == {"dense"}
    assert len(res.failures) == 2
    assert "synthetic failure" in (tmp_path / "failures.csv").read_text()
    row = [r for r in res.summary() if r["method"] == "dense"][0]
    assert row["replicates"] == 1 and row["failures"] == 0
