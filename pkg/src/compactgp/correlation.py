"""One-dimensional correlation families and their product composition.

Compactly supported families (Bohman, truncated power) return an exact
``0.0`` at and beyond their range, which is what makes the assembled
correlation matrices sparse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

# Sufficient (alpha, minimal nu) pairs for the truncated power function to be
# a valid one-dimensional correlation.  alpha = 1 is Askey's condition.
TRUNCPOW_MIN_NU = {1.0: 1.0, 1.5: 2.0, 5.0 / 3.0: 3.0}

_LOG_005 = math.log(0.05)


class CorrelationError(ValueError):
    """Invalid correlation family parameters or model construction."""


def _match_alpha(alpha: float) -> float | None:
    for a in TRUNCPOW_MIN_NU:
        if abs(alpha - a) < 1e-12:
            return a
    return None


def truncpow_min_nu(alpha: float, d: int = 1) -> float:
    """Smallest admitted ``nu`` for the truncated power family.

    Only published sufficient conditions are used.  For ``alpha = 1``
    Askey's bound ``(d + 1) / 2`` applies; the other tabulated values are
    for one-dimensional factors.
    """
    a = _match_alpha(alpha)
    if a is None:
        raise CorrelationError(
            f"no tabulated validity bound for truncated power alpha={alpha}; "
            "allowed values are 1, 3/2, 5/3 (or supply nu with waive_validity=True)"
        )
    if a == 1.0:
        return (d + 1) / 2.0
    if d != 1:
        raise CorrelationError(f"validity bound for alpha={alpha} is only tabulated for d=1")
    return TRUNCPOW_MIN_NU[a]


def bohman(t, tau):
    """Bohman correlation; exactly zero for ``t >= tau``."""
    t = np.asarray(t, dtype=float)
    s = t / tau
    inside = s < 1.0
    sc = np.where(inside, s, 0.0)
    val = (1.0 - sc) * np.cos(np.pi * sc) + np.sin(np.pi * sc) / np.pi
    # the cubic behaviour near s = 1 can round slightly below zero
    out = np.where(inside, np.maximum(val, 0.0), 0.0)
    return out[()] if out.ndim == 0 else out


def truncated_power(t, tau, alpha, nu):
    """Truncated power correlation ``[1 - (t/tau)^alpha]^nu`` for ``t < tau``."""
    t = np.asarray(t, dtype=float)
    s = t / tau
    inside = s < 1.0
    base = np.where(inside, 1.0 - np.where(inside, s, 0.0) ** alpha, 0.0)
    out = np.where(inside, base ** nu, 0.0)
    return out[()] if out.ndim == 0 else out


def power_exponential(t, phi, alpha):
    """Power exponential correlation ``exp(-phi t^alpha)``."""
    t = np.asarray(t, dtype=float)
    out = np.exp(-phi * t ** alpha)
    return out[()] if out.ndim == 0 else out


def effective_range_to_phi(r: float, alpha: float) -> float:
    """``phi`` such that the power exponential correlation equals 0.05 at ``r``."""
    if r <= 0:
        raise CorrelationError("effective range must be positive")
    return -_LOG_005 / r ** alpha


@dataclass(frozen=True)
class Bohman:
    name = "bohman"
    compact = True

    def __call__(self, t, tau):
        return bohman(t, tau)

    def to_dict(self):
        return {"family": "bohman"}


@dataclass(frozen=True)
class TruncatedPower:
    """Truncated power family; ``nu=None`` picks the minimal valid value."""

    alpha: float = 1.0
    nu: float | None = None
    waive_validity: bool = False

    name = "truncpow"
    compact = True

    def __post_init__(self):
        if not 0.0 < self.alpha < 2.0:
            raise CorrelationError(f"truncated power needs 0 < alpha < 2, got {self.alpha}")
        if self.waive_validity:
            if self.nu is None:
                raise CorrelationError("waive_validity requires an explicit nu")
            if self.nu <= 0:
                raise CorrelationError("nu must be positive")
            return
        nu_min = truncpow_min_nu(self.alpha, 1)
        if self.nu is None:
            object.__setattr__(self, "nu", nu_min)
        elif self.nu < nu_min:
            raise CorrelationError(
                f"nu={self.nu} is below the admitted bound {nu_min} for alpha={self.alpha}"
            )

    def __call__(self, t, tau):
        return truncated_power(t, tau, self.alpha, self.nu)

    def to_dict(self):
        return {"family": "truncpow", "alpha": self.alpha, "nu": self.nu}


@dataclass(frozen=True)
class PowerExponential:
    alpha: float = 2.0
    phi: float = 1.0

    name = "powexp"
    compact = False

    def __post_init__(self):
        if not 1.0 <= self.alpha <= 2.0:
            raise CorrelationError(f"power exponential needs 1 <= alpha <= 2, got {self.alpha}")
        if not self.phi > 0:
            raise CorrelationError(f"phi must be positive, got {self.phi}")

    def __call__(self, t, tau=None):
        return power_exponential(t, self.phi, self.alpha)

    def to_dict(self):
        return {"family": "powexp", "alpha": self.alpha, "phi": self.phi}


CorrelationFamily = Bohman | TruncatedPower | PowerExponential


def family_from_dict(spec: dict) -> CorrelationFamily:
    """Build a family from a config mapping such as ``{"family": "truncpow", "alpha": 1.5}``."""
    name = spec.get("family", "bohman")
    if name == "bohman":
        return Bohman()
    if name == "truncpow":
        return TruncatedPower(
            alpha=float(spec.get("alpha", 1.0)),
            nu=None if spec.get("nu") is None else float(spec["nu"]),
            waive_validity=bool(spec.get("waive_validity", False)),
        )
    if name == "powexp":
        return PowerExponential(alpha=float(spec.get("alpha", 2.0)), phi=float(spec.get("phi", 1.0)))
    raise CorrelationError(f"unknown correlation family {name!r}")


@dataclass(frozen=True)
class ProductCorrelationModel:
    """Anisotropic product correlation ``prod_k R_k(|x_k - x'_k|)``.

    ``tau`` holds one support range per dimension; it is ignored for power
    exponential factors, whose scale lives in the family's ``phi``.
    """

    families: tuple
    tau: np.ndarray = field(default=None)

    def __post_init__(self):
        fams = tuple(self.families)
        if not fams:
            raise CorrelationError("need at least one dimension")
        object.__setattr__(self, "families", fams)
        tau = np.ones(len(fams)) if self.tau is None else np.array(self.tau, dtype=float).ravel()
        if tau.shape != (len(fams),):
            raise CorrelationError(f"tau has length {tau.size}, expected {len(fams)}")
        if np.any(~(tau > 0)):
            raise CorrelationError("all ranges tau_k must be strictly positive")
        tau.setflags(write=False)
        object.__setattr__(self, "tau", tau)

    @classmethod
    def broadcast(cls, family: CorrelationFamily, d: int, tau=None) -> "ProductCorrelationModel":
        tau = np.full(d, 1.0) if tau is None else np.broadcast_to(np.asarray(tau, float), (d,))
        return cls(tuple([family] * d), tau)

    @property
    def d(self) -> int:
        return len(self.families)

    @property
    def compact(self) -> np.ndarray:
        """Per-dimension compact-support flags."""
        return np.array([f.compact for f in self.families])

    @property
    def fully_compact(self) -> bool:
        return bool(self.compact.all())

    def with_tau(self, tau) -> "ProductCorrelationModel":
        return ProductCorrelationModel(self.families, tau)

    def with_phi(self, phi) -> "ProductCorrelationModel":
        """Replace the ``phi`` of every power exponential factor."""
        phi = np.broadcast_to(np.asarray(phi, float), (self.d,))
        fams = tuple(
            PowerExponential(alpha=f.alpha, phi=float(p)) if isinstance(f, PowerExponential) else f
            for f, p in zip(self.families, phi)
        )
        return ProductCorrelationModel(fams, self.tau)

    def from_separations(self, sep: np.ndarray) -> np.ndarray:
        """Correlation for rows of absolute per-dimension separations ``(m, d)``."""
        sep = np.asarray(sep, dtype=float)
        out = np.ones(sep.shape[0])
        for k, fam in enumerate(self.families):
            out *= fam(sep[:, k], self.tau[k])
        return out

    def __call__(self, x, x2) -> float:
        """Correlation between two points."""
        x = np.asarray(x, dtype=float).ravel()
        x2 = np.asarray(x2, dtype=float).ravel()
        if x.size != self.d or x2.size != self.d:
            raise CorrelationError(f"points must have dimension {self.d}")
        sep = np.abs(x - x2)
        val = 1.0
        for k, fam in enumerate(self.families):
            if fam.compact and sep[k] >= self.tau[k]:
                return 0.0
            val *= float(fam(sep[k], self.tau[k]))
        return val

    def dense(self, X1, X2=None) -> np.ndarray:
        """Dense cross-correlation matrix between two point sets."""
        X1 = np.atleast_2d(np.asarray(X1, dtype=float))
        X2 = X1 if X2 is None else np.atleast_2d(np.asarray(X2, dtype=float))
        if X1.shape[1] != self.d or X2.shape[1] != self.d:
            raise CorrelationError(f"points must have dimension {self.d}")
        out = np.ones((X1.shape[0], X2.shape[0]))
        for k, fam in enumerate(self.families):
            out *= fam(np.abs(X1[:, k, None] - X2[None, :, k]), self.tau[k])
        return out

    def to_dict(self) -> dict:
        return {"families": [f.to_dict() for f in self.families], "tau": self.tau.tolist()}


def product_correlation(x, x2, model: ProductCorrelationModel) -> float:
    return model(x, x2)
