"""Experimental designs on the unit cube.

Latin hypercube sampling plus the rescaling helpers used to map raw
simulator inputs onto ``[0, 1]^d`` and back.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class DesignError(ValueError):
    """Raised for malformed designs or scaling specifications."""


@dataclass(frozen=True)
class DesignMatrix:
    """An ``n x d`` read-only array of points in the unit cube."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float, copy=True)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise DesignError(f"design must be n x d with n, d >= 1, got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise DesignError("design contains non-finite values")
        if pts.min() < 0.0 or pts.max() > 1.0:
            raise DesignError("design coordinates must lie in [0, 1]")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.points
        return self.points.astype(dtype)

    def __len__(self):
        return self.n


@dataclass(frozen=True)
class ScalingSpec:
    """Per-dimension ``(min, max)`` bounds in raw input units."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        if len(lo) != len(hi) or not lo:
            raise DesignError("scaling bounds must be non-empty and of equal length")
        for k, (a, b) in enumerate(zip(lo, hi)):
            if not b > a:
                raise DesignError(f"degenerate scaling in dimension {k + 1}: max={b} <= min={a}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def d(self) -> int:
        return len(self.lower)

    @classmethod
    def from_pairs(cls, pairs):
        pairs = list(pairs)
        return cls(tuple(p[0] for p in pairs), tuple(p[1] for p in pairs))

    @classmethod
    def from_data(cls, raw) -> "ScalingSpec":
        """Bounds taken from the column-wise min and max of ``raw``."""
        raw = np.atleast_2d(np.asarray(raw, dtype=float))
        return cls(tuple(raw.min(axis=0)), tuple(raw.max(axis=0)))


def latin_hypercube(n: int, d: int, seed=None, midpoint: bool = False) -> DesignMatrix:
    """Random Latin hypercube sample of ``n`` points in ``[0, 1]^d``.

    Each column places exactly one point in every stratum ``[i/n, (i+1)/n)``.
    With ``midpoint=True`` points sit at stratum centres instead of being
    jittered uniformly within the stratum.
    """
    if n < 1 or d < 1:
        raise DesignError(f"need n >= 1 and d >= 1, got n={n}, d={d}")
    rng = np.random.default_rng(seed)
    strata = np.stack([rng.permutation(n) for _ in range(d)], axis=1)
    offset = 0.5 if midpoint else rng.random((n, d))
    return DesignMatrix((strata + offset) / n)


def rescale_inputs(raw, spec: ScalingSpec, clamp: bool = False) -> DesignMatrix:
    """Map raw inputs to the unit cube with ``(x - min) / (max - min)``."""
    raw = np.asarray(raw, dtype=float)
    if raw.ndim == 1:
        raw = raw[:, None]
    if raw.shape[1] != spec.d:
        raise DesignError(f"input has {raw.shape[1]} columns, scaling spec has {spec.d}")
    lo = np.asarray(spec.lower)
    hi = np.asarray(spec.upper)
    x = (raw - lo) / (hi - lo)
    if clamp:
        x = np.clip(x, 0.0, 1.0)
    elif x.size and (x.min() < 0.0 or x.max() > 1.0):
        bad = np.argwhere((x < 0.0) | (x > 1.0))[0]
        raise DesignError(
            f"input row {bad[0]} column {bad[1] + 1} lies outside the scaling range; "
            "pass clamp=True to clip"
        )
    return DesignMatrix(x)


def unscale_inputs(x, spec: ScalingSpec) -> np.ndarray:
    """Inverse of :func:`rescale_inputs`."""
    x = np.asarray(x, dtype=float)
    lo = np.asarray(spec.lower)
    hi = np.asarray(spec.upper)
    return lo + x * (hi - lo)


def write_design_csv(path, X) -> None:
    pts = np.asarray(X, dtype=float)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{k + 1}" for k in range(pts.shape[1])])
        for row in pts:
            writer.writerow([repr(float(v)) for v in row])


def read_design_csv(path) -> DesignMatrix:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise DesignError(f"{path}: empty file")
        expected = [f"x{k + 1}" for k in range(len(header))]
        if [h.strip() for h in header] != expected:
            raise DesignError(f"{path}: header must be {','.join(expected)}")
        rows = [[float(v) for v in row] for row in reader if row]
    return DesignMatrix(np.array(rows, dtype=float).reshape(len(rows), len(header)))
