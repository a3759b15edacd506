import json

import numpy as np
import pytest

from compactgp.cli import main
from compactgp.design import latin_hypercube
from compactgp.inference import Chain
from compactgp.predict import read_predictions_csv


def _write(path, X, y=None):
    d = X.shape[1]
    cols = [f"x{k + 1}" for k in range(d)] + (["y"] if y is not None else [])
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for i in range(X.shape[0]):
            vals = list(X[i]) + ([y[i]] if y is not None else [])
            fh.write(",".join(repr(float(v)) for v in vals) + "\n")


def _poly(X):
    return 1 + 2 * X[:, 0] - X[:, 1] ** 2 + 0.5 * X[:, 0] * X[:, 1] + 0.1 * np.sin(9 * X[:, 0])


@pytest.fixture
def train(tmp_path):
    X = 2.0 + 3.0 * np.asarray(latin_hypercube(50, 2, seed=1))  # raw units, rescaled by the tool
    p = tmp_path / "train.csv"
    _write(p, X, _poly(X))
    return p, X


def _fit(train_path, out, *extra):
    return main(["fit", str(train_path), "--p", "2", "--iterations", "200", "--burn-in", "50",
                 "--C", "1.0", "--seed", "7", "--out", str(out), *extra])


def _err(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_fit_bundle_and_determinism(train, tmp_path):
    p, _ = train
    assert _fit(p, tmp_path / "a") == 0
    assert _fit(p, tmp_path / "b") == 0
    a = (tmp_path / "a" / "chain.csv").read_bytes()
    assert a == (tmp_path / "b" / "chain.csv").read_bytes()
    ch = Chain.read_csv(tmp_path / "a" / "chain.csv", burn_in=50)
    assert ch.samples.shape == (200, 2)
    assert np.all(ch.samples > 0) and np.all(ch.samples.sum(axis=1) <= 1.0)
    for f in ("train.csv", "scaling.csv", "config.toml", "chain_meta.txt", "draws.csv"):
        assert (tmp_path / "a" / f).exists()


def test_fit_missing_y(tmp_path, capsys):
    p = tmp_path / "noy.csv"
    _write(p, np.random.default_rng(0).random((50, 2)))
    assert main(["fit", str(p), "--C", "1", "--out", str(tmp_path / "o")]) == 2
    assert _err(capsys)["error"] == "schema"


def test_fit_config_errors(train, tmp_path, capsys):
    p, _ = train
    code = main(["fit", str(p), "--C", "1", "--sparsity-target", "0.05", "--out", str(tmp_path / "o")])
    assert code == 4 and _err(capsys)["error"] == "config"
    assert main(["fit", str(p), "--out", str(tmp_path / "o")]) == 4
    cfg = tmp_path / "bad.toml"
    cfg.write_text("[fit]\nbogus = 1\n")
    assert main(["fit", str(p), "--C", "1", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 4


def test_fit_rank_deficient(tmp_path, capsys):
    X = np.column_stack([np.repeat([0.0, 1.0], 25), np.linspace(0, 1, 50)])
    p = tmp_path / "t.csv"
    _write(p, X, X[:, 1] + X[:, 0])
    code = main(["fit", str(p), "--p", "2", "--m", "1", "--C", "1", "--iterations", "10",
                 "--burn-in", "2", "--out", str(tmp_path / "o")])
    assert code == 3 and _err(capsys)["error"] == "rank_deficient"


def test_config_file_and_flag_precedence(train, tmp_path):
    p, _ = train
    cfg = tmp_path / "run.toml"
    cfg.write_text("seed = 7\n[fit]\np = 2\nC = 1.0\niterations = 120\nburn_in = 20\n")
    assert main(["fit", str(p), "--config", str(cfg), "--out", str(tmp_path / "c")]) == 0
    assert Chain.read_csv(tmp_path / "c" / "chain.csv").samples.shape[0] == 120
    assert main(["fit", str(p), "--config", str(cfg), "--iterations", "80", "--out", str(tmp_path / "d")]) == 0
    assert Chain.read_csv(tmp_path / "d" / "chain.csv").samples.shape[0] == 80


def test_predict_round_trip(train, tmp_path):
    p, X = train
    assert _fit(p, tmp_path / "m") == 0
    inp = tmp_path / "inputs.csv"
    _write(inp, X)
    out = tmp_path / "pred.csv"
    assert main(["predict", str(tmp_path / "m"), str(inp), "-o", str(out)]) == 0
    X0, s = read_predictions_csv(out)
    y = _poly(X)
    assert np.allclose(X0, X)
    assert np.all(np.abs(s.mean - y) <= 1e-6 * np.abs(y))
    assert np.all(s.lower <= s.mean) and np.all(s.mean <= s.upper)


def test_predict_empty_and_blocking(train, tmp_path, capsys):
    p, X = train
    assert _fit(p, tmp_path / "m") == 0
    empty = tmp_path / "empty.csv"
    empty.write_text("x1,x2\n")
    assert main(["predict", str(tmp_path / "m"), str(empty), "-o", str(tmp_path / "e.csv")]) == 0
    assert (tmp_path / "e.csv").read_text().splitlines()[1:] == ["x1,x2,mean,variance,lower,upper"]
    X0 = 2.0 + 3.0 * np.asarray(latin_hypercube(24, 2, seed=9))
    inp = tmp_path / "x0.csv"
    _write(inp, X0)
    assert main(["predict", str(tmp_path / "m"), str(inp), "--block", "8", "-o", str(tmp_path / "b8.csv")]) == 0
    assert main(["predict", str(tmp_path / "m"), str(inp), "--block", "24", "-o", str(tmp_path / "b24.csv")]) == 0
    _, a = read_predictions_csv(tmp_path / "b8.csv")
    _, b = read_predictions_csv(tmp_path / "b24.csv")
    assert np.allclose(a.mean, b.mean, rtol=0, atol=1e-12) and np.allclose(a.variance, b.variance, rtol=0, atol=1e-12)
    bad = tmp_path / "bad.csv"
    _write(bad, np.zeros((2, 3)))
    capsys.readouterr()
    assert main(["predict", str(tmp_path / "m"), str(bad), "-o", str(tmp_path / "x.csv")]) == 2
    assert _err(capsys)["error"] == "dimension"


def test_eval(train, tmp_path, capsys):
    p, X = train
    assert _fit(p, tmp_path / "m") == 0
    Xe = 2.0 + 3.0 * np.asarray(latin_hypercube(40, 2, seed=4))
    _write(tmp_path / "xe.csv", Xe)
    _write(tmp_path / "truth.csv", Xe, _poly(Xe))
    assert main(["predict", str(tmp_path / "m"), str(tmp_path / "xe.csv"), "-o", str(tmp_path / "pe.csv")]) == 0
    capsys.readouterr()
    assert main(["eval", str(tmp_path / "pe.csv"), str(tmp_path / "truth.csv")]) == 0
    out = dict(line.split(" = ") for line in capsys.readouterr().out.strip().splitlines())
    assert float(out["nse"]) > 0.9 and 0 <= float(out["coverage"]) <= 1 and float(out["level"]) == 0.95


def test_calibrate(tmp_path, capsys):
    _write(tmp_path / "d.csv", np.array([[0.25, 0.25], [0.75, 0.75]]))
    assert main(["calibrate", str(tmp_path / "d.csv"), "--sparsity-target", "0", "--no-rescale",
                 "--out", str(tmp_path / "c")]) == 0
    text = capsys.readouterr().out
    assert "C = " in text
    C = float(text.split("C = ")[1].split()[0])
    assert abs(C - 1.0) <= 1e-3
    assert (tmp_path / "c" / "calibration.csv").exists()


def test_select_basis_and_design(tmp_path, capsys):
    assert main(["design", "--n", "120", "--d", "2", "--seed", "3", "-o", str(tmp_path / "des.csv")]) == 0
    X = np.loadtxt(tmp_path / "des.csv", delimiter=",", skiprows=1)
    assert X.shape == (120, 2)
    assert np.array_equal(np.sort(np.floor(X * 120), axis=0), np.tile(np.arange(120.0)[:, None], (1, 2)))
    _write(tmp_path / "t.csv", X, _poly(X))
    assert main(["select-basis", str(tmp_path / "t.csv"), "--p-grid", "1,2,3", "--m-grid", "1,2",
                 "--out", str(tmp_path / "s")]) == 0
    out = capsys.readouterr().out
    assert "selected = p=" in out
    rows = (tmp_path / "s" / "select_basis.csv").read_text().splitlines()
    assert rows[0] == "p,m,q,nse" and len(rows) == 7


def test_bench_and_simstudy(tmp_path, capsys):
    assert main(["bench", "--n-grid", "200", "--sparsity-grid", "0.05", "--d", "2", "--repeats", "1",
                 "--out", str(tmp_path / "b")]) == 0
    assert "median=" in capsys.readouterr().out
    assert (tmp_path / "b" / "timing.csv").read_text().startswith("path,step,n,sparsity,repeat,seconds")
    code = main(["simstudy", "--dims", "2", "--alphas", "1.5", "--ranges", "0.5", "--n-grid", "60",
                 "--replicates", "1", "--n-eval", "32", "--iterations", "60", "--burn-in", "10",
                 "--sparsity-targets", "0.05", "--out", str(tmp_path / "sim")])
    assert code == 0
    assert (tmp_path / "sim" / "summary.csv").exists()
