import itertools

import numpy as np
import pytest
from numpy.polynomial import legendre as npleg
from numpy.polynomial import polynomial as nppoly

from compactgp.basis import (
    BasisError,
    BasisSpec,
    build_basis_matrix,
    enumerate_terms,
    legendre_shifted,
    select_basis,
    write_terms_csv,
)


def test_legendre_examples():
    assert legendre_shifted(0, 0.37) == 1.0
    assert legendre_shifted(1, 0.5) == 0.0
    assert legendre_shifted(2, 0.0) == 1.0
    with pytest.raises(BasisError):
        legendre_shifted(2, 1.2)
    with pytest.raises(BasisError):
        legendre_shifted(1, -0.1)


@pytest.mark.parametrize("k", range(9))
def test_legendre_matches_numpy(k):
    x = np.linspace(0, 1, 501)
    c = np.zeros(k + 1)
    c[k] = 1
    assert np.allclose(legendre_shifted(k, x), npleg.legval(2 * x - 1, c), atol=1e-13)
    vals = np.abs(legendre_shifted(k, x))
    assert vals.max() == pytest.approx(1.0)
    assert abs(legendre_shifted(k, 0.0)) == 1.0 and legendre_shifted(k, 1.0) == 1.0


def _brute_terms(d, p, m):
    out = []
    for a in itertools.product(range(p + 1), repeat=d):
        if sum(a) <= p and sum(v > 0 for v in a) <= m:
            out.append(a)
    return out


def test_term_counts():
    assert len(enumerate_terms(BasisSpec(4, 2, 4))) == 53
    assert len(enumerate_terms(BasisSpec(5, 2, 2))) == 21
    assert enumerate_terms(BasisSpec(0, 1, 3)) == [(0, 0, 0)]
    for d, p, m in [(3, 3, 2), (4, 4, 2), (2, 5, 2), (3, 4, 3), (5, 2, 1)]:
        assert sorted(enumerate_terms(BasisSpec(p, m, d))) == sorted(_brute_terms(d, p, m))


def test_term_order_graded():
    terms = enumerate_terms(BasisSpec(3, 2, 3))
    assert terms[0] == (0, 0, 0)
    degs = [sum(t) for t in terms]
    assert degs == sorted(degs)
    assert terms[1:4] == [(1, 0, 0), (0, 1, 0), (0, 0, 1)]


def test_count_permutation_invariant():
    # counts depend only on (d, p, m), so relabeling dimensions cannot change them
    terms = enumerate_terms(BasisSpec(4, 2, 4))
    for perm in itertools.permutations(range(4)):
        assert sorted(tuple(t[i] for i in perm) for t in terms) == sorted(terms)


def test_basis_matrix_intercept_and_symmetry():
    F = build_basis_matrix(np.array([[0.5, 0.5]]), BasisSpec(2, 2, 2))
    terms = enumerate_terms(BasisSpec(2, 2, 2))
    for j, a in enumerate(terms):
        if any(v % 2 for v in a):
            assert F[0, j] == 0.0
    assert np.all(build_basis_matrix(np.random.default_rng(0).random((5, 3)), BasisSpec(0, 1, 3)) == 1.0)


def test_basis_matrix_monomial_oracle(rng):
    X = rng.random((3, 2))
    spec = BasisSpec(3, 2, 2)
    F = build_basis_matrix(X, spec)
    # expand each shifted Legendre polynomial into monomial coefficients in x
    polys = []
    for k in range(4):
        c = np.zeros(k + 1)
        c[k] = 1
        coef_x = np.zeros(1)
        for j, cz in enumerate(npleg.leg2poly(c)):
            coef_x = nppoly.polyadd(coef_x, cz * nppoly.polypow([-1.0, 2.0], j))
        polys.append(coef_x)
    for i in range(3):
        for j, a in enumerate(enumerate_terms(spec)):
            val = np.prod([nppoly.polyval(X[i, k], np.atleast_1d(polys[e])) for k, e in enumerate(a)])
            assert F[i, j] == pytest.approx(val, abs=1e-12)


def test_gram_orthogonality():
    L = 10_001
    g = np.linspace(0, 1, L)
    spec = BasisSpec(6, 1, 1)
    F = build_basis_matrix(g[:, None], spec)
    G = F.T @ F / L
    off = G - np.diag(np.diag(G))
    assert np.abs(off).max() < 1e-3
    degs = [t[0] for t in enumerate_terms(spec)]
    assert np.allclose(np.diag(G), [1 / (2 * k + 1) for k in degs], atol=1e-3)


def test_basis_rejects_outside():
    with pytest.raises(BasisError):
        build_basis_matrix(np.array([[1.1, 0.2]]), BasisSpec(2, 1, 2))
    with pytest.raises(BasisError):
        BasisSpec(2, 3, 2)


def test_select_basis_exact_polynomial(rng):
    X = rng.random((80, 2))
    X0 = rng.random((40, 2))
    f = lambda Z: 1 + 2 * Z[:, 0] - Z[:, 1] ** 2 + 0.5 * Z[:, 0] * Z[:, 1]
    cands = [BasisSpec(p, 2, 2) for p in (1, 2, 3)]
    best, report = select_basis((X, f(X)), (X0, f(X0)), cands)
    assert best.p == 2
    assert report[1]["nse"] == pytest.approx(1.0, abs=1e-10)
    assert report[2]["nse"] == pytest.approx(1.0, abs=1e-10)
    assert report[0]["nse"] < 1.0
    assert [r["q"] for r in report] == [3, 6, 10]


def test_select_basis_constant_response(rng):
    X = rng.random((30, 2))
    X0 = rng.random((20, 2))
    y0 = np.zeros(20)
    y0[0] = 1.0  # holdout must vary for NSE to exist
    cands = [BasisSpec(p, 1, 2) for p in (0, 1, 2)]
    best, report = select_basis((X, np.full(30, 3.0)), (X0, y0), cands)
    assert all(r["nse"] <= 0 for r in report)
    assert report[0]["nse"] >= max(r["nse"] for r in report) - 1e-9
    assert best.p == 0


def test_select_basis_needs_enough_points(rng):
    X = rng.random((5, 2))
    with pytest.raises(BasisError):
        select_basis((X, X[:, 0]), (X, X[:, 0]), [BasisSpec(4, 2, 2)])


def test_terms_csv(tmp_path):
    p = tmp_path / "t.csv"
    write_terms_csv(p, BasisSpec(2, 2, 2))
    lines = p.read_text().splitlines()
    assert lines[0] == "a1,a2" and lines[1] == "0,0" and len(lines) == 7
