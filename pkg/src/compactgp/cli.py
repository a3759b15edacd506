"""Command-line interface.

Subcommands: ``fit``, ``predict``, ``calibrate``, ``eval``, ``simstudy``,
``bench``, ``select-basis`` and ``design``.  Settings come from built-in
defaults, then an optional TOML file (``--config``), then command-line
flags, later sources overriding earlier ones.

Exit codes: 0 success, 2 input or schema error, 3 numerical failure,
4 configuration error.  Failures print a one-line JSON record on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import shutil
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .basis import BasisError, BasisSpec, build_basis_matrix, select_basis
from .correlation import (
    Bohman,
    CorrelationError,
    PowerExponential,
    ProductCorrelationModel,
    TruncatedPower,
    effective_range_to_phi,
)
from .design import DesignError, ScalingSpec, latin_hypercube, write_design_csv
from .evaluation import MetricError, empirical_coverage, nse, timing_benchmark
from .inference import (
    Chain,
    CubePrior,
    InferenceError,
    IntegratedLikelihood,
    MCMCConfig,
    RankDeficientError,
    SamplerAborted,
    SimplexPrior,
    calibrate_cutoff,
    metropolis_run,
)
from .predict import (
    PredictionError,
    predict_from_draws,
    read_predictions_csv,
    thin_draws,
    write_predictions_csv,
)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger("compactgp")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_CONFIG = 0, 2, 3, 4


class CLIError(Exception):
    """Error carrying an exit code and a short machine-readable kind."""

    def __init__(self, kind, message, code):
        super().__init__(message)
        self.kind = kind
        self.code = code


def input_error(kind, message):
    return CLIError(kind, message, EXIT_INPUT)


def config_error(message):
    return CLIError("config", message, EXIT_CONFIG)


# --------------------------------------------------------------------------
# CSV and config helpers


def read_table(path):
    """Header and float rows of a CSV file; ``#`` lines are comments."""
    path = Path(path)
    if not path.exists():
        raise input_error("io", f"{path}: no such file")
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            lines = [ln for ln in fh if not ln.startswith("#")]
        reader = csv.reader(lines)
        header = next(reader, None)
        if not header:
            raise input_error("parse", f"{path}: empty file")
        header = [h.strip() for h in header]
        rows = [row for row in reader if row]
        data = np.array(rows, dtype=float) if rows else np.zeros((0, len(header)))
    except ValueError as exc:
        raise input_error("parse", f"{path}: {exc}") from None
    if data.ndim != 2 or data.shape[1] != len(header):
        raise input_error("parse", f"{path}: ragged rows")
    return header, data


def split_xy(path, header, data, need_y=True):
    """Columns ``x1..xd`` and ``y`` of a table."""
    idx = {h: k for k, h in enumerate(header)}
    d = 0
    while f"x{d + 1}" in idx:
        d += 1
    if d == 0:
        raise input_error("schema", f"{path}: no input columns x1..xd")
    X = data[:, [idx[f"x{k + 1}"] for k in range(d)]]
    if "y" not in idx:
        if need_y:
            raise input_error("schema", f"{path}: missing column 'y'")
        return X, None
    return X, data[:, idx["y"]]


def write_table(path, header, rows):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(v if isinstance(v, str) else repr(float(v)) if isinstance(v, float)
                              else str(v) for v in row) + "\n")


def _toml_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, dict):
        return "{ " + ", ".join(f"{k} = {_toml_value(x)}" for k, x in v.items()) + " }"
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_toml_value(x) for x in list(v)) + "]"
    raise TypeError(f"cannot serialize {v!r}")


def write_toml(path, tables: dict):
    with open(path, "w", encoding="utf-8") as fh:
        for k, v in tables.items():
            if not isinstance(v, dict) or k == "basis":
                if v is not None:
                    fh.write(f"{k} = {_toml_value(v)}\n")
        for k, v in tables.items():
            if isinstance(v, dict) and k != "basis":
                fh.write(f"\n[{k}]\n")
                for kk, vv in v.items():
                    if vv is not None:
                        fh.write(f"{kk} = {_toml_value(vv)}\n")


def load_config(path):
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise config_error(f"{path}: config file not found") from None
    except tomllib.TOMLDecodeError as exc:
        raise config_error(f"{path}: {exc}") from None


def _parse_list(value, kind=float):
    if value is None:
        return None
    if isinstance(value, (list, tuple)):
        return [kind(v) for v in value]
    return [kind(v) for v in str(value).split(",") if v.strip()]


class Settings:
    """Resolved settings for one command: flag > config table > config root > default."""

    def __init__(self, args, config, section, defaults):
        self.values = dict(defaults)
        root = {k: v for k, v in config.items() if not isinstance(v, dict)}
        table = dict(config.get(section, {}))
        if section == "fit":
            table = {**config.get("mcmc", {}), **table}
        for k in root:
            if k.replace("-", "_") not in GLOBAL_DEFAULTS:
                raise config_error(f"unknown top-level config key {k!r}")
        for src in (root, table):
            for k, v in src.items():
                key = k.replace("-", "_")
                if key == "basis" and isinstance(v, dict):
                    self.values.update({"p": v.get("p", self.values.get("p")),
                                        "m": v.get("m", self.values.get("m"))})
                elif key in self.values:
                    self.values[key] = v
                else:
                    raise config_error(f"unknown config key {k!r} for {section}")
        for k in self.values:
            v = getattr(args, k, None)
            if v is not None:
                self.values[k] = v

    def __getattr__(self, name):
        try:
            return self.__dict__["values"][name]
        except KeyError:
            raise AttributeError(name) from None


GLOBAL_DEFAULTS = {"seed": 0, "threads": None, "out": None, "jitter": 0.0, "verbose": False}


def _out_dir(s, fallback="."):
    out = Path(s.out if s.out is not None else fallback)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --------------------------------------------------------------------------
# model construction shared by fit and predict


def _family(s, d):
    if s.family == "bohman":
        return ProductCorrelationModel.broadcast(Bohman(), d, np.full(d, 0.5))
    if s.family == "truncpow":
        return ProductCorrelationModel.broadcast(
            TruncatedPower(float(s.alpha), None if s.nu is None else float(s.nu)), d, np.full(d, 0.5))
    if s.family == "powexp":
        return ProductCorrelationModel.broadcast(PowerExponential(float(s.alpha), 1.0), d)
    raise config_error(f"unknown correlation family {s.family!r}")


def _cube_prior(s, d):
    lo_r, hi_r = _parse_list(s.range_bounds)
    a = float(s.alpha)
    return CubePrior(np.full(d, effective_range_to_phi(hi_r, a)), np.full(d, effective_range_to_phi(lo_r, a)))


FIT_DEFAULTS = {
    "train": None, "p": 2, "m": 2, "family": "truncpow", "alpha": 1.5, "nu": None,
    "C": None, "sparsity_target": None, "iterations": 3000, "burn_in": 500, "stride": 10,
    "draws": None, "level": 0.95, "block": 4096, "ordering": "amd", "range_bounds": [0.05, 5.0],
    "target_accept": 0.234, "adapt_block": 50, "decay": 0.6, "max_points": 2000,
}


def cmd_fit(args, config):
    s = Settings(args, config, "fit", {**GLOBAL_DEFAULTS, **FIT_DEFAULTS})
    if s.train is None:
        raise config_error("fit needs a training CSV")
    header, data = read_table(s.train)
    raw, y = split_xy(s.train, header, data)
    n, d = raw.shape
    if s.family != "powexp" and (s.C is None) == (s.sparsity_target is None):
        raise config_error("give exactly one of C or sparsity_target")
    try:
        scaling = ScalingSpec.from_data(raw)
        X = np.asarray(scaling_apply(raw, scaling))
        basis = BasisSpec(int(s.p), int(s.m), d)
        model = _family(s, d)
    except (DesignError, BasisError, CorrelationError) as exc:
        raise config_error(str(exc)) from None
    if n <= basis.q + 2:
        raise config_error(f"n={n} must exceed q+2={basis.q + 2} for basis p={s.p}, m={s.m}")
    F = build_basis_matrix(X, basis)
    out = _out_dir(s)
    calibration = None
    if s.family == "powexp":
        prior = _cube_prior(s, d)
        C = None
    else:
        if s.sparsity_target is not None:
            calibration = calibrate_cutoff(X, float(s.sparsity_target), max_points=int(s.max_points),
                                           seed=int(s.seed))
            C = calibration.C
            for line in calibration.lines():
                log.info("calibration: %s", line)
        else:
            C = float(s.C)
        prior = SimplexPrior(C, d)
    mc = MCMCConfig(iterations=int(s.iterations), burn_in=int(s.burn_in), stride=int(s.stride),
                    seed=int(s.seed), target_accept=float(s.target_accept),
                    block=int(s.adapt_block), decay=float(s.decay))
    like = IntegratedLikelihood(X, y, F, model, jitter=float(s.jitter), ordering=s.ordering)
    chain = metropolis_run(mc, like, prior)
    shutil.copyfile(s.train, out / "train.csv")
    write_table(out / "scaling.csv", ["dim", "lower", "upper"],
                [[k + 1, float(lo), float(hi)] for k, (lo, hi) in enumerate(zip(scaling.lower, scaling.upper))])
    chain.write_csv(out / "chain.csv")
    chain.write_sidecar(out / "chain_meta.txt", mc, extra={"C": C if C is not None else "none"})
    draws = thin_draws(chain.retained, int(s.stride), None if s.draws is None else int(s.draws))
    write_table(out / "draws.csv", [f"tau_{k + 1}" for k in range(d)], [list(map(float, t)) for t in draws])
    echo = {
        "version": __version__, "seed": int(s.seed), "jitter": float(s.jitter), "d": d, "n": n,
        "basis": {"p": int(s.p), "m": int(s.m)},
        "fit": {k: s.values[k] for k in FIT_DEFAULTS if k not in ("train", "p", "m")},
    }
    echo["fit"]["C"] = C
    write_toml(out / "config.toml", echo)
    log.info("fit: %d iterations, acceptance %.3f, C=%s", mc.iterations, chain.acceptance_rate, C)
    print(f"bundle = {out}")
    print(f"acceptance_rate = {chain.acceptance_rate:.6g}")
    if C is not None:
        print(f"C = {C:.6g}")
    return EXIT_OK


def scaling_apply(raw, scaling: ScalingSpec, warn=False):
    """Unit-cube coordinates; out-of-box points are clipped with a warning."""
    lo = np.asarray(scaling.lower)
    hi = np.asarray(scaling.upper)
    x = (np.asarray(raw, dtype=float) - lo) / (hi - lo)
    outside = (x < 0) | (x > 1)
    if outside.any():
        rows = int(outside.any(axis=1).sum())
        if warn:
            log.warning("%d prediction points lie outside the training box; they are clipped to "
                        "its boundary for prediction (extrapolation is not supported)", rows)
        x = np.clip(x, 0.0, 1.0)
    return x


def _load_bundle(path):
    bundle = Path(path)
    if not (bundle / "config.toml").exists():
        raise input_error("bundle", f"{bundle}: not a model bundle (config.toml missing)")
    with open(bundle / "config.toml", "rb") as fh:
        cfg = tomllib.load(fh)
    _, sc = read_table(bundle / "scaling.csv")
    scaling = ScalingSpec(tuple(sc[:, 1]), tuple(sc[:, 2]))
    header, data = read_table(bundle / "train.csv")
    raw, y = split_xy(bundle / "train.csv", header, data)
    return bundle, cfg, scaling, raw, y


PREDICT_DEFAULTS = {"bundle": None, "inputs": None, "level": None, "block": None, "stride": None,
                    "draws": None, "output": None, "exact": False}


def cmd_predict(args, config):
    s = Settings(args, config, "predict", {**GLOBAL_DEFAULTS, **PREDICT_DEFAULTS})
    bundle, cfg, scaling, raw, y = _load_bundle(s.bundle)
    fit = cfg["fit"]
    d = int(cfg["d"])
    header, data = read_table(s.inputs)
    raw0, _ = split_xy(s.inputs, header, data, need_y=False)
    if raw0.shape[1] != d:
        raise input_error("dimension", f"inputs have {raw0.shape[1]} columns, model expects {d}")
    X = scaling_apply(raw, scaling)
    X0 = scaling_apply(raw0, scaling, warn=True)
    basis = BasisSpec(int(cfg["basis"]["p"]), int(cfg["basis"]["m"]), d)
    fs = Settings(argparse.Namespace(), {}, "fit", {**GLOBAL_DEFAULTS, **FIT_DEFAULTS})
    fs.values.update(fit)
    model = _family(fs, d)
    level = float(s.level if s.level is not None else fit["level"])
    block = int(s.block if s.block is not None else fit["block"])
    stride = int(s.stride if s.stride is not None else fit["stride"])
    K = s.draws if s.draws is not None else fit.get("draws")
    chain = Chain.read_csv(bundle / "chain.csv", burn_in=int(fit["burn_in"]))
    draws = thin_draws(chain.retained, stride, None if K is None else int(K))
    if len(draws) == 0:
        raise config_error("no retained draws to predict with")
    F = build_basis_matrix(X, basis)
    F0 = build_basis_matrix(X0, basis) if X0.shape[0] else np.zeros((0, basis.q))
    kw = {"jitter": float(cfg.get("jitter", 0.0)), "ordering": fit.get("ordering", "amd")}
    summary = predict_from_draws(draws, X, y, F, X0, F0, model, level=level, block=block, **kw)
    if s.exact and len(summary):
        from .predict import credible_interval

        summary.lower, summary.upper = credible_interval(summary, level, exact=True)
    out = Path(s.output) if s.output else _out_dir(s) / "predictions.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_predictions_csv(out, raw0, summary)
    print(f"predictions = {out}")
    print(f"points = {len(summary)}")
    print(f"draws = {len(draws)}")
    return EXIT_OK


CALIBRATE_DEFAULTS = {"design": None, "sparsity_target": 0.02, "max_points": 2000, "restarts": 8,
                      "tol": 1e-3, "no_rescale": False}


def cmd_calibrate(args, config):
    s = Settings(args, config, "calibrate", {**GLOBAL_DEFAULTS, **CALIBRATE_DEFAULTS})
    header, data = read_table(s.design)
    raw, _ = split_xy(s.design, header, data, need_y=False)
    X = raw if s.no_rescale else scaling_apply(raw, ScalingSpec.from_data(raw))
    rep = calibrate_cutoff(X, float(s.sparsity_target), tol=float(s.tol), restarts=int(s.restarts),
                           max_points=int(s.max_points), seed=int(s.seed))
    for line in rep.lines():
        print(line)
    if s.out is not None:
        out = _out_dir(s)
        write_table(out / "calibration.csv", ["C", "achieved", "s_target", "n_used", "n_total"]
                    + [f"tau_{k + 1}" for k in range(X.shape[1])],
                    [[rep.C, rep.achieved, float(rep.s_target), rep.n_used, rep.n_total]
                     + [float(t) for t in rep.tau_max]])
    return EXIT_OK


EVAL_DEFAULTS = {"predictions": None, "truth": None}


def cmd_eval(args, config):
    s = Settings(args, config, "eval", {**GLOBAL_DEFAULTS, **EVAL_DEFAULTS})
    if not Path(s.predictions).exists():
        raise input_error("io", f"{s.predictions}: no such file")
    try:
        _, summ = read_predictions_csv(s.predictions)
    except (ValueError, PredictionError) as exc:
        raise input_error("parse", f"{s.predictions}: {exc}") from None
    header, data = read_table(s.truth)
    if "y" not in header:
        raise input_error("schema", f"{s.truth}: missing column 'y'")
    truth = data[:, header.index("y")]
    if truth.size != len(summ):
        raise input_error("dimension", f"{len(summ)} predictions but {truth.size} truth values")
    e = nse(summ.mean, truth)
    c = empirical_coverage(summ.lower, summ.upper, truth)
    print(f"nse = {e:.6g}")
    print(f"coverage = {c:.6g}")
    print(f"level = {summ.level:.6g}")
    print(f"points = {truth.size}")
    if s.out is not None:
        write_table(_out_dir(s) / "metrics.csv", ["nse", "coverage", "level", "points"],
                    [[e, c, float(summ.level), truth.size]])
    return EXIT_OK


SIM_DEFAULTS = {"dims": "2,4", "alphas": "1.5,1.99", "ranges": "0.5,2", "n_grid": "100,250,650",
                "replicates": 20, "sparsity_targets": "0.02,0.05", "n_eval": 512,
                "iterations": 1000, "burn_in": 200, "stride": 10, "full_scale": False}


def cmd_simstudy(args, config):
    from .simulator import SimStudyConfig, SimulationError, run_sim_study

    s = Settings(args, config, "simstudy", {**GLOBAL_DEFAULTS, **SIM_DEFAULTS})
    kw = dict(dims=tuple(_parse_list(s.dims, int)), alphas=tuple(_parse_list(s.alphas)),
              ranges=tuple(_parse_list(s.ranges)), n_grid=tuple(_parse_list(s.n_grid, int)),
              replicates=int(s.replicates), sparsity_targets=tuple(_parse_list(s.sparsity_targets)),
              n_eval=int(s.n_eval), seed=int(s.seed), iterations=int(s.iterations),
              burn_in=int(s.burn_in), stride=int(s.stride), dense_jitter=float(s.jitter))
    try:
        if s.full_scale:
            given = config.get("simstudy", {})
            for key in ("replicates", "n_grid"):
                if getattr(args, key, None) is None and key not in given:
                    kw.pop(key)
            cfg = SimStudyConfig.full_scale(**kw)
        else:
            cfg = SimStudyConfig(**kw)
    except (SimulationError, InferenceError) as exc:
        raise config_error(str(exc)) from None
    out = _out_dir(s, "simstudy")
    res = run_sim_study(cfg, out_dir=out)
    for row in res.summary():
        print("d={d} alpha={alpha} range={range} {method} n={n}: nse={nse_mean:.4f} "
              "coverage={coverage_mean:.4f} (replicates={replicates}, failures={failures})".format(**row))
    print(f"summary = {out / 'summary.csv'}")
    return EXIT_OK


BENCH_DEFAULTS = {"n_grid": "1000,2000,4000", "sparsity_grid": "0.02,0.05", "d": 4, "repeats": 3,
                  "dense_cap": 6000, "ordering": "auto"}


def cmd_bench(args, config):
    s = Settings(args, config, "bench", {**GLOBAL_DEFAULTS, **BENCH_DEFAULTS})
    with _threads(1):
        rep = timing_benchmark(_parse_list(s.n_grid, int), _parse_list(s.sparsity_grid), d=int(s.d),
                               repeats=int(s.repeats), seed=int(s.seed), dense_cap=int(s.dense_cap),
                               ordering=s.ordering)
    out = _out_dir(s, "bench")
    rep.write_csv(out / "timing.csv")
    for row in rep.summary():
        print("{path} {step} n={n} sparsity={sparsity:g}: median={median:.4g}s mean={mean:.4g}s".format(**row))
    print(f"timing = {out / 'timing.csv'}")
    return EXIT_OK


SELECT_DEFAULTS = {"train": None, "holdout": None, "holdout_fraction": 0.25, "p_grid": "1,2,3,4,5",
                   "m_grid": "1,2"}


def cmd_select_basis(args, config):
    s = Settings(args, config, "select-basis", {**GLOBAL_DEFAULTS, **SELECT_DEFAULTS})
    header, data = read_table(s.train)
    raw, y = split_xy(s.train, header, data)
    d = raw.shape[1]
    if s.holdout is not None:
        h2, d2 = read_table(s.holdout)
        raw0, y0 = split_xy(s.holdout, h2, d2)
        if raw0.shape[1] != d:
            raise input_error("dimension", "holdout and training inputs differ in dimension")
    else:
        frac = float(s.holdout_fraction)
        if not 0 < frac < 1:
            raise config_error("holdout_fraction must lie in (0, 1)")
        perm = np.random.default_rng(int(s.seed)).permutation(raw.shape[0])
        k = int(round(frac * raw.shape[0]))
        if k < 2 or raw.shape[0] - k < 2:
            raise config_error("holdout split leaves too few points")
        raw0, y0 = raw[perm[:k]], y[perm[:k]]
        raw, y = raw[perm[k:]], y[perm[k:]]
    scaling = ScalingSpec.from_data(np.vstack([raw, raw0]))
    X, X0 = scaling_apply(raw, scaling), scaling_apply(raw0, scaling)
    try:
        cands = [BasisSpec(p, min(m, d), d) for p in _parse_list(s.p_grid, int)
                 for m in sorted(set(min(m, d) for m in _parse_list(s.m_grid, int)))]
    except BasisError as exc:
        raise config_error(str(exc)) from None
    try:
        best, report = select_basis((X, y), (X0, y0), cands)
    except BasisError as exc:
        kind, code = ("rank_deficient", EXIT_NUMERIC) if "rank deficient" in str(exc) else ("config", EXIT_CONFIG)
        raise CLIError(kind, str(exc), code) from None
    out = _out_dir(s)
    write_table(out / "select_basis.csv", ["p", "m", "q", "nse"],
                [[r["p"], r["m"], r["q"], float(r["nse"])] for r in report])
    for r in report:
        print(f"p={r['p']} m={r['m']} q={r['q']} nse={r['nse']:.6g}")
    print(f"selected = p={best.p} m={best.m} q={best.q}")
    return EXIT_OK


DESIGN_DEFAULTS = {"n": None, "d": None, "midpoint": False, "output": None}


def cmd_design(args, config):
    s = Settings(args, config, "design", {**GLOBAL_DEFAULTS, **DESIGN_DEFAULTS})
    if s.n is None or s.d is None:
        raise config_error("design needs --n and --d")
    try:
        X = latin_hypercube(int(s.n), int(s.d), seed=int(s.seed), midpoint=bool(s.midpoint))
    except DesignError as exc:
        raise config_error(str(exc)) from None
    out = Path(s.output) if s.output else _out_dir(s) / "design.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_design_csv(out, X)
    print(f"design = {out}")
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing


class _threads:
    """Cap BLAS and numba thread pools inside a ``with`` block."""

    def __init__(self, n):
        self.n = n

    def __enter__(self):
        self._ctx = None
        if self.n is None:
            return self
        import numba
        from threadpoolctl import threadpool_limits

        self._numba = numba.get_num_threads()
        numba.set_num_threads(max(1, min(int(self.n), numba.config.NUMBA_NUM_THREADS)))
        self._ctx = threadpool_limits(limits=int(self.n))
        return self

    def __exit__(self, *exc):
        if self._ctx is not None:
            import numba

            self._ctx.restore_original_limits()
            numba.set_num_threads(self._numba)
        return False


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=None, help="random seed (default 0)")
    g.add_argument("--threads", type=int, default=None, help="cap on worker threads")
    g.add_argument("--config", default=None, help="TOML config file")
    g.add_argument("--out", default=None, help="output directory")
    g.add_argument("--verbose", "-v", action="store_true", default=None, help="log progress")
    g.add_argument("--jitter", type=float, default=None, help="value added to the correlation diagonal")

    parser = argparse.ArgumentParser(prog="compactgp", parents=[common],
                                     description="Sparse Gaussian process emulation with compactly "
                                                 "supported correlations.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", parents=[common], help="sample the range posterior and write a model bundle")
    p.add_argument("train", nargs="?", default=None, help="training CSV with columns x1..xd,y")
    p.add_argument("--p", type=int, default=None, help="maximum basis degree")
    p.add_argument("--m", type=int, default=None, help="maximum interacting dimensions")
    p.add_argument("--family", choices=["truncpow", "bohman", "powexp"], default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--nu", type=float, default=None)
    p.add_argument("--C", type=float, default=None, help="simplex cutoff")
    p.add_argument("--sparsity-target", type=float, default=None, help="calibrate C to this proportion")
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--burn-in", type=int, default=None)
    p.add_argument("--stride", type=int, default=None)
    p.add_argument("--draws", type=int, default=None, help="cap on draws used for prediction")
    p.add_argument("--level", type=float, default=None)
    p.add_argument("--block", type=int, default=None)
    p.add_argument("--ordering", choices=["amd", "nd", "auto", "natural"], default=None)
    p.add_argument("--range-bounds", default=None, help="effective-range bounds for powexp, e.g. 0.05,5")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", parents=[common], help="predict from a model bundle")
    p.add_argument("bundle")
    p.add_argument("inputs", help="CSV with columns x1..xd")
    p.add_argument("--level", type=float, default=None)
    p.add_argument("--block", type=int, default=None)
    p.add_argument("--stride", type=int, default=None)
    p.add_argument("--draws", type=int, default=None)
    p.add_argument("--exact", action="store_true", default=None, help="exact t-mixture quantiles")
    p.add_argument("--output", "-o", default=None)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("calibrate", parents=[common], help="cutoff C for a sparsity target")
    p.add_argument("design")
    p.add_argument("--sparsity-target", type=float, default=None)
    p.add_argument("--max-points", type=int, default=None)
    p.add_argument("--restarts", type=int, default=None)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--no-rescale", action="store_true", default=None)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("eval", parents=[common], help="NSE and coverage of predictions")
    p.add_argument("predictions")
    p.add_argument("truth", help="CSV with a y column, rows aligned with the predictions")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("simstudy", parents=[common], help="dense versus sparse simulation study")
    p.add_argument("--dims", default=None)
    p.add_argument("--alphas", default=None)
    p.add_argument("--ranges", default=None)
    p.add_argument("--n-grid", default=None)
    p.add_argument("--replicates", type=int, default=None)
    p.add_argument("--sparsity-targets", default=None)
    p.add_argument("--n-eval", type=int, default=None)
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--burn-in", type=int, default=None)
    p.add_argument("--stride", type=int, default=None)
    p.add_argument("--full-scale", action="store_true", default=None)
    p.set_defaults(func=cmd_simstudy)

    p = sub.add_parser("bench", parents=[common], help="per-step timing benchmark")
    p.add_argument("--n-grid", default=None)
    p.add_argument("--sparsity-grid", default=None)
    p.add_argument("--d", type=int, default=None)
    p.add_argument("--repeats", type=int, default=None)
    p.add_argument("--dense-cap", type=int, default=None)
    p.add_argument("--ordering", choices=["amd", "nd", "auto", "natural"], default=None)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("select-basis", parents=[common], help="OLS screening of Legendre bases")
    p.add_argument("train")
    p.add_argument("--holdout", default=None, help="holdout CSV (default: random split)")
    p.add_argument("--holdout-fraction", type=float, default=None)
    p.add_argument("--p-grid", default=None)
    p.add_argument("--m-grid", default=None)
    p.set_defaults(func=cmd_select_basis)

    p = sub.add_parser("design", parents=[common], help="random Latin hypercube design")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--d", type=int, default=None)
    p.add_argument("--midpoint", action="store_true", default=None)
    p.add_argument("--output", "-o", default=None)
    p.set_defaults(func=cmd_design)
    return parser


def _error(kind, message, code):
    rec = {"status": "error", "error": kind, "exit_code": code, "message": str(message)}
    print(json.dumps(rec), file=sys.stderr)
    return code


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args.config)
        threads = args.threads if args.threads is not None else config.get("threads")
        with _threads(threads):
            return args.func(args, config)
    except CLIError as exc:
        return _error(exc.kind, exc, exc.code)
    except (RankDeficientError, SamplerAborted, np.linalg.LinAlgError) as exc:
        rec = "rank_deficient" if isinstance(exc, RankDeficientError) else "numerical"
        return _error(rec, exc, EXIT_NUMERIC)
    except (InferenceError, BasisError, CorrelationError, DesignError, PredictionError,
            MetricError, TypeError, ValueError) as exc:
        return _error("config", exc, EXIT_CONFIG)


if __name__ == "__main__":
    sys.exit(main())
