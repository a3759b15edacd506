import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from compactgp.design import (
    DesignError,
    DesignMatrix,
    ScalingSpec,
    latin_hypercube,
    read_design_csv,
    rescale_inputs,
    unscale_inputs,
    write_design_csv,
)


def test_single_point():
    X = np.asarray(latin_hypercube(1, 3, seed=0))
    assert X.shape == (1, 3)
    assert np.all((X >= 0) & (X < 1))


@given(st.integers(1, 60), st.integers(1, 5), st.integers(0, 2**31))
@settings(max_examples=40, deadline=None)
def test_one_point_per_stratum(n, d, seed):
    X = np.asarray(latin_hypercube(n, d, seed=seed))
    for k in range(d):
        assert np.array_equal(np.sort(np.floor(X[:, k] * n).astype(int)), np.arange(n))


def test_seed_determinism():
    a = np.asarray(latin_hypercube(4, 2, seed=7))
    b = np.asarray(latin_hypercube(4, 2, seed=7))
    assert a.tobytes() == b.tobytes()
    c = np.asarray(latin_hypercube(4, 2, seed=8))
    assert not np.array_equal(a, c)


def test_midpoint_option():
    X = np.asarray(latin_hypercube(5, 2, seed=1, midpoint=True))
    assert np.allclose(np.sort(X[:, 0]), (np.arange(5) + 0.5) / 5)


def test_marginal_uniformity_ks():
    n, R = 50, 200
    vals = np.concatenate([np.asarray(latin_hypercube(n, 2, seed=s))[:, 1] for s in range(R)])
    D = stats.kstest(vals, "uniform").statistic
    assert D < 1.63 / np.sqrt(n * R)


def test_design_matrix_invariants():
    with pytest.raises(DesignError):
        DesignMatrix(np.array([[1.5]]))
    with pytest.raises(DesignError):
        DesignMatrix(np.zeros((0, 2)))
    D = DesignMatrix(np.array([[0.1, 0.2]]))
    assert D.n == 1 and D.d == 2
    with pytest.raises(ValueError):
        D.points[0, 0] = 0.3


def test_rescale_examples():
    spec = ScalingSpec.from_pairs([(0, 10)])
    assert np.asarray(rescale_inputs([[5]], spec)).tolist() == [[0.5]]
    assert np.asarray(rescale_inputs([[0], [10]], spec)).tolist() == [[0.0], [1.0]]
    with pytest.raises(DesignError):
        rescale_inputs([[12]], spec)
    assert np.asarray(rescale_inputs([[12]], spec, clamp=True)).tolist() == [[1.0]]


def test_degenerate_spec():
    with pytest.raises(DesignError):
        ScalingSpec.from_pairs([(1, 1)])


def test_rescale_round_trip(rng):
    raw = rng.uniform(-3, 7, size=(40, 3))
    spec = ScalingSpec.from_data(raw)
    back = unscale_inputs(rescale_inputs(raw, spec), spec)
    assert np.allclose(back, raw, rtol=1e-12, atol=0)


def test_csv_round_trip(tmp_path):
    X = latin_hypercube(7, 3, seed=2)
    p = tmp_path / "d.csv"
    write_design_csv(p, X)
    assert p.read_text().splitlines()[0] == "x1,x2,x3"
    assert np.array_equal(np.asarray(read_design_csv(p)), np.asarray(X))
