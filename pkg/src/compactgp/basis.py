"""Tensor-product shifted-Legendre regression bases.

Terms are indexed by exponent tuples ``(a_1, ..., a_d)``.  A term is kept
when at most ``m`` exponents are nonzero and their sum is at most ``p``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .evaluation import nse


class BasisError(ValueError):
    pass


@dataclass(frozen=True)
class BasisSpec:
    """Maximum total degree ``p`` and maximum interaction order ``m``."""

    p: int
    m: int
    d: int

    def __post_init__(self):
        if self.d < 1:
            raise BasisError("d must be >= 1")
        if self.p < 0:
            raise BasisError("p must be >= 0")
        if not 1 <= self.m <= self.d:
            raise BasisError(f"m must satisfy 1 <= m <= d, got m={self.m}, d={self.d}")

    @property
    def q(self) -> int:
        return len(enumerate_terms(self))

    def to_dict(self):
        return {"p": self.p, "m": self.m}


def legendre_shifted(k: int, x):
    """Shifted Legendre polynomial ``P_k(2x - 1)`` on ``[0, 1]``.

    Evaluated by the three-term recurrence; vectorized over ``x``.
    """
    if k < 0:
        raise BasisError("degree must be nonnegative")
    x = np.asarray(x, dtype=float)
    if x.size and (np.nanmin(x) < 0.0 or np.nanmax(x) > 1.0):
        raise BasisError("shifted Legendre polynomials are defined on [0, 1]")
    z = 2.0 * x - 1.0
    p_prev = np.ones_like(z)
    if k == 0:
        return p_prev[()] if p_prev.ndim == 0 else p_prev
    p = z.copy()
    for j in range(1, k):
        p_prev, p = p, ((2 * j + 1) * z * p - j * p_prev) / (j + 1)
    return p[()] if p.ndim == 0 else p


def _legendre_table(x: np.ndarray, pmax: int) -> np.ndarray:
    """``table[j]`` holds ``P_j(2x - 1)`` for ``j = 0..pmax``."""
    z = 2.0 * x - 1.0
    table = np.empty((pmax + 1,) + x.shape)
    table[0] = 1.0
    if pmax >= 1:
        table[1] = z
    for j in range(1, pmax):
        table[j + 1] = ((2 * j + 1) * z * table[j] - j * table[j - 1]) / (j + 1)
    return table


def enumerate_terms(spec: BasisSpec) -> list[tuple[int, ...]]:
    """All admissible exponent tuples in graded-lexicographic order.

    The intercept comes first; within a total degree, tuples with larger
    leading exponents come first.
    """
    terms = [(0,) * spec.d]
    for k in range(1, min(spec.m, spec.d) + 1):
        for dims in itertools.combinations(range(spec.d), k):
            # all exponents >= 1 on the chosen dims with sum <= p
            for exps in itertools.product(range(1, spec.p + 1), repeat=k):
                if sum(exps) > spec.p:
                    continue
                a = [0] * spec.d
                for dim, e in zip(dims, exps):
                    a[dim] = e
                terms.append(tuple(a))
    terms.sort(key=lambda a: (sum(a), tuple(-v for v in a)))
    return terms


def build_basis_matrix(X, spec: BasisSpec, terms=None) -> np.ndarray:
    """Regression matrix ``F`` with ``F[i, j] = prod_k P_{a_jk}(x_ik)``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != spec.d:
        raise BasisError(f"design has {X.shape[1]} columns, basis expects {spec.d}")
    if X.size and (X.min() < 0.0 or X.max() > 1.0):
        raise BasisError("basis inputs must lie in [0, 1]")
    terms = enumerate_terms(spec) if terms is None else terms
    table = _legendre_table(X, spec.p)  # (p+1, n, d)
    F = np.ones((X.shape[0], len(terms)))
    for j, a in enumerate(terms):
        for k, e in enumerate(a):
            if e:
                F[:, j] *= table[e, :, k]
    return F


def write_terms_csv(path, spec: BasisSpec) -> None:
    terms = enumerate_terms(spec)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(f"a{k + 1}" for k in range(spec.d)) + "\n")
        for a in terms:
            fh.write(",".join(str(v) for v in a) + "\n")


def ols_fit(F: np.ndarray, y: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    """Least squares coefficients via a thin QR factorization."""
    Q, R = np.linalg.qr(F, mode="reduced")
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag.min() <= rtol * diag.max():
        raise BasisError("basis matrix is rank deficient")
    return np.linalg.solve(R, Q.T @ y)


def select_basis(train, holdout, candidates, tie_tol: float = 1e-9):
    """Pick the candidate basis with the best held-out NSE of an OLS fit.

    Parameters
    ----------
    train, holdout : tuple of (X, y)
    candidates : sequence of BasisSpec

    Returns
    -------
    best : BasisSpec
    report : list of dict
        One record per candidate with keys ``p, m, q, nse``.
    """
    X, y = (np.asarray(a, dtype=float) for a in train)
    X0, y0 = (np.asarray(a, dtype=float) for a in holdout)
    candidates = list(candidates)
    if not candidates:
        raise BasisError("no candidate bases")
    report = []
    for spec in candidates:
        terms = enumerate_terms(spec)
        if X.shape[0] <= len(terms):
            raise BasisError(f"training size {X.shape[0]} does not exceed q={len(terms)} for {spec}")
        F = build_basis_matrix(X, spec, terms)
        try:
            beta = ols_fit(F, y)
        except BasisError as exc:
            raise BasisError(f"{exc} for candidate {spec}") from None
        pred = build_basis_matrix(X0, spec, terms) @ beta
        report.append({"p": spec.p, "m": spec.m, "q": len(terms), "nse": nse(pred, y0)})
    best_nse = max(r["nse"] for r in report)
    tied = [i for i, r in enumerate(report) if r["nse"] >= best_nse - tie_tol]
    best = min(tied, key=lambda i: (report[i]["q"], i))
    return candidates[best], report
