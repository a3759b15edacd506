import numpy as np
import pytest
from scipy import stats

from compactgp.correlation import Bohman, ProductCorrelationModel, TruncatedPower
from compactgp.design import latin_hypercube
from compactgp.inference import integrated_loglik
from compactgp.predict import (
    ConditionalMoments,
    PredictionError,
    PredictiveSummary,
    aggregate_predictions,
    conditional_moments,
    credible_interval,
    predict_from_draws,
    read_predictions_csv,
    thin_draws,
    write_predictions_csv,
)
from compactgp.sparsecov import cross_correlation


def _problem(n=60, d=2, seed=3):
    X = np.asarray(latin_hypercube(n, d, seed=seed))
    y = np.sin(4 * X[:, 0]) + X[:, 1] ** 2 + 10.0
    F = np.column_stack([np.ones(n), X[:, 0]])
    model = ProductCorrelationModel.broadcast(TruncatedPower(1.5), d, [0.5] * d)
    return X, y, F, model


def test_interpolation_at_training_points():
    X, y, F, model = _problem()
    for tau in ([0.4, 0.4], [0.9, 0.1], [0.2, 0.3]):
        c = conditional_moments(tau, X, y, F, X, F, model)
        _, t = integrated_loglik(tau, X, y, F, model)
        assert np.all(np.abs(c.m - y) <= 1e-6 * np.abs(y))
        assert np.all(c.v <= 1e-8 * t.sigma2)
        assert np.all(c.v >= 0)


def test_far_point_decouples():
    X, y, F, model = _problem()
    tau = [0.1, 0.1]
    X0 = np.array([[2.0, 2.0]])  # outside every support
    F0 = np.array([[1.0, 2.0]])
    c = conditional_moments(tau, X, y, F, X0, F0, model)
    _, t = integrated_loglik(tau, X, y, F, model)
    assert c.m[0] == pytest.approx(F0[0] @ t.beta, rel=1e-12)
    # V = 1 + F0 (F' G^-1 F)^-1 F0'
    K = model.with_tau(tau).dense(X)
    A = F.T @ np.linalg.solve(K, F)
    V = 1 + F0[0] @ np.linalg.solve(A, F0[0])
    dof = 60 - 2
    assert c.v[0] == pytest.approx(dof / (dof - 2) * t.sigma2 * V, rel=1e-10)


def test_moments_match_hierarchical_monte_carlo():
    n, n0 = 30, 5
    X = np.asarray(latin_hypercube(n, 2, seed=21))
    y = np.cos(3 * X[:, 0]) - X[:, 1] + 10.0
    F = np.column_stack([np.ones(n), X[:, 1]])
    X0 = np.asarray(latin_hypercube(n0, 2, seed=22))
    F0 = np.column_stack([np.ones(n0), X0[:, 1]])
    model = ProductCorrelationModel.broadcast(Bohman(), 2, [0.5, 0.5])
    tau = [0.6, 0.7]
    c = conditional_moments(tau, X, y, F, X0, F0, model)

    # independent oracle: sigma^2 | Y, then beta | sigma^2, Y, then Y0 | beta, sigma^2, Y
    m_t = model.with_tau(tau)
    K = m_t.dense(X)
    g = m_t.dense(np.vstack([X, X0]))[:n, n:]
    K0 = m_t.dense(X0)
    Ki = np.linalg.inv(K)
    A = F.T @ Ki @ F
    bhat = np.linalg.solve(A, F.T @ Ki @ y)
    r = y - F @ bhat
    rss = r @ Ki @ r
    rng = np.random.default_rng(77)
    N = 2_000_000
    sig2 = rss / rng.chisquare(n - 2, N)
    La = np.linalg.cholesky(np.linalg.inv(A))
    beta = bhat + np.sqrt(sig2)[:, None] * (rng.standard_normal((N, 2)) @ La.T)
    W = Ki @ g
    mean0 = beta @ F0.T + (y[None, :] - beta @ F.T) @ W
    C0 = K0 - g.T @ W
    L0 = np.linalg.cholesky(C0 + 1e-14 * np.eye(n0))
    Y0 = mean0 + np.sqrt(sig2)[:, None] * (rng.standard_normal((N, n0)) @ L0.T)
    assert np.allclose(c.m, Y0.mean(axis=0), rtol=5e-3)
    assert np.allclose(c.v, Y0.var(axis=0), rtol=5e-3)


def test_aggregate_examples():
    s = aggregate_predictions([ConditionalMoments(np.array([0.0]), np.array([1.0]), 10),
                               ConditionalMoments(np.array([2.0]), np.array([1.0]), 10)])
    assert s.mean[0] == 1.0 and s.variance[0] == 2.0
    same = [ConditionalMoments(np.array([1.0, 2.0]), np.array([0.3, 0.4]), 10)] * 5
    s = aggregate_predictions(same)
    assert np.array_equal(s.variance, [0.3, 0.4])
    with pytest.raises(PredictionError):
        aggregate_predictions([])
    with pytest.raises(PredictionError):
        aggregate_predictions(same[:1])


def test_aggregate_order_invariance_and_decomposition(rng):
    ms = [ConditionalMoments(rng.normal(size=7), rng.random(7), 50) for _ in range(9)]
    a = aggregate_predictions(ms)
    b = aggregate_predictions(ms[::-1])
    assert np.allclose(a.mean, b.mean, atol=1e-14) and np.allclose(a.variance, b.variance, atol=1e-14)
    assert np.all(a.variance >= np.mean([m.v for m in ms], axis=0))
    assert np.all(a.lower <= a.mean) and np.all(a.mean <= a.upper)


def test_credible_interval_examples():
    s = PredictiveSummary(np.array([0.0, 3.0]), np.array([1.0, 0.0]), None, None, 0.95)
    lo, hi = credible_interval(s, 0.95)
    assert lo[0] == pytest.approx(-1.959964, abs=1e-6) and hi[0] == pytest.approx(1.959964, abs=1e-6)
    assert lo[1] == hi[1] == 3.0
    lo99, hi99 = credible_interval(s, 0.99)
    assert lo99[0] < lo[0] and hi99[0] > hi[0]
    with pytest.raises(PredictionError):
        credible_interval(s, 1.0)


def test_exact_mixture_quantiles(rng):
    dof = 8
    ms = [ConditionalMoments(np.array([mu]), np.array([v]), dof) for mu, v in ((0.0, 1.0), (1.5, 0.5), (-0.5, 2.0))]
    s = aggregate_predictions(ms)
    lo, hi = credible_interval(s, 0.9, exact=True)
    N = 1_000_000
    k = rng.integers(0, 3, N)
    mus = np.array([m.m[0] for m in ms])[k]
    sc = np.sqrt(np.array([m.scale2[0] for m in ms]))[k]
    draws = mus + sc * rng.standard_t(dof, N)
    assert np.mean(draws < lo[0]) == pytest.approx(0.05, abs=2e-3)
    assert np.mean(draws > hi[0]) == pytest.approx(0.05, abs=2e-3)


def test_translation_equivariance():
    X, y, F, model = _problem()
    X0 = np.asarray(latin_hypercube(40, 2, seed=8))
    F0 = np.column_stack([np.ones(40), X0[:, 0]])
    draws = [[0.4, 0.4], [0.3, 0.5], [0.6, 0.2]]
    a = predict_from_draws(draws, X, y, F, X0, F0, model)
    b = predict_from_draws(draws, X, y + 123.0, F, X0, F0, model)
    assert np.allclose(b.mean - a.mean, 123.0, atol=1e-10)
    assert np.allclose(b.variance, a.variance, atol=1e-10)


def test_blocking_invariance():
    X, y, F, model = _problem()
    X0 = np.asarray(latin_hypercube(25, 2, seed=9))
    F0 = np.column_stack([np.ones(25), X0[:, 0]])
    a = conditional_moments([0.4, 0.3], X, y, F, X0, F0, model, block=4096)
    b = conditional_moments([0.4, 0.3], X, y, F, X0, F0, model, block=7)
    assert np.allclose(a.m, b.m, rtol=0, atol=1e-12) and np.allclose(a.v, b.v, rtol=0, atol=1e-12)
    with pytest.raises(PredictionError):
        conditional_moments([0.4, 0.3], X, y, F, X0, F0, model, block=0)


def test_cross_correlation_zero_pattern():
    X, y, F, model = _problem()
    X0 = np.asarray(latin_hypercube(30, 2, seed=10))
    tau = np.array([0.15, 0.2])
    G = cross_correlation(X, X0, model.with_tau(tau)).toarray()
    inside = np.all(np.abs(X[:, None, :] - X0[None, :, :]) < tau, axis=2)
    assert np.array_equal(G != 0, inside)
    assert G.min() >= 0 and G.max() <= 1


def test_needs_dof():
    X = np.linspace(0, 1, 4)[:, None]
    model = ProductCorrelationModel.broadcast(Bohman(), 1, [0.5])
    with pytest.raises(Exception):
        conditional_moments([0.5], X, X[:, 0], np.ones((4, 2)), X, np.ones((4, 2)), model)


def test_thin_draws():
    s = np.arange(100)[:, None]
    assert thin_draws(s, 10)[:, 0].tolist() == list(range(0, 100, 10))
    assert len(thin_draws(s, 1, K=7)) == 7
    with pytest.raises(PredictionError):
        thin_draws(s, 0)


def test_csv_round_trip(tmp_path, rng):
    X0 = rng.random((6, 3))
    ms = [ConditionalMoments(rng.normal(size=6), rng.random(6), 20) for _ in range(3)]
    s = aggregate_predictions(ms, level=0.9)
    p = tmp_path / "pred.csv"
    write_predictions_csv(p, X0, s)
    lines = p.read_text().splitlines()
    assert lines[0] == "# level = 0.9"
    assert lines[1] == "x1,x2,x3,mean,variance,lower,upper"
    X1, s1 = read_predictions_csv(p)
    assert np.array_equal(X1, X0) and np.array_equal(s1.mean, s.mean)
    assert np.array_equal(s1.upper, s.upper) and s1.level == 0.9
