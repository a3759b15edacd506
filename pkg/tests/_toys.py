"""Shared toy problems for the inference and acceptance tests."""

import numpy as np

from compactgp.correlation import Bohman, ProductCorrelationModel


def toy_1d(n=12):
    """The n=12, d=1, q=2 toy: stratified inputs, smooth response, linear basis."""
    x = (np.arange(n) + 0.5) / n + 0.02 * np.sin(7 * np.arange(n))
    y = np.sin(2 * np.pi * x) + 0.5 * x
    F = np.column_stack([np.ones(n), x])
    model = ProductCorrelationModel.broadcast(Bohman(), 1, [0.5])
    return x[:, None], y, F, model


def quadrature_log_marginal(K, y, F, nb=161, ns=1200, width=14.0):
    """log of the integral over (beta, sigma^2) of N(y; F beta, sigma^2 K) / sigma^2.

    Brute-force tensor trapezoid over beta (2-D) and s = log sigma^2.
    """
    n = y.size
    Ki = np.linalg.inv(K)
    _, logdetK = np.linalg.slogdet(K)
    A = F.T @ Ki @ F
    b = np.linalg.solve(A, F.T @ Ki @ y)
    r = y - F @ b
    s2 = r @ Ki @ r / (n - F.shape[1])
    sd = np.sqrt(np.diag(np.linalg.inv(A)) * s2)
    g1 = b[0] + sd[0] * np.linspace(-width, width, nb)
    g2 = b[1] + sd[1] * np.linspace(-width, width, nb)
    B1, B2 = np.meshgrid(g1, g2, indexing="ij")
    betas = np.stack([B1.ravel(), B2.ravel()], axis=1)
    R = y[None, :] - betas @ F.T
    Q = np.einsum("ij,jk,ik->i", R, Ki, R)
    s_mid = np.log(Q.min() / n)
    s = np.linspace(s_mid - 10, s_mid + 25, ns)
    # log integrand in (beta, s): -(n/2) log(2 pi) - (1/2) log|K| - (n/2) s - Q e^{-s} / 2
    logf = -0.5 * n * s[None, :] - 0.5 * Q[:, None] * np.exp(-s)[None, :]
    mx = logf.max()
    inner = np.trapezoid(np.exp(logf - mx), s, axis=1).reshape(nb, nb)
    total = np.trapezoid(np.trapezoid(inner, g2, axis=1), g1)
    return np.log(total) + mx - 0.5 * n * np.log(2 * np.pi) - 0.5 * logdetK


def batch_means_se(x, nbatch=50):
    x = np.asarray(x, dtype=float)
    m = len(x) // nbatch
    means = x[: m * nbatch].reshape(nbatch, m).mean(axis=1)
    return means.std(ddof=1) / np.sqrt(nbatch)


def truncation_acceptance_oracle(C, d, sd, size=2_000_000, seed=99):
    """P(tau + eps in T_C) for tau uniform on T_C and eps ~ N(0, sd^2 I).

    Uniform draws on T_C by rejection from the cube [0, C]^d.
    """
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0, C, size=(size, d))
    pts = pts[pts.sum(axis=1) <= C]
    cand = pts + sd * rng.standard_normal(pts.shape)
    inside = np.all(cand > 0, axis=1) & (cand.sum(axis=1) <= C)
    p = inside.mean()
    return p, np.sqrt(p * (1 - p) / inside.size)
