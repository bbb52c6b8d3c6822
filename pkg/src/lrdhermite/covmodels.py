"""Isotropic long-range covariance models and their spectral densities."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .errors import (DomainError, QuadratureError, SingularityError,
                     UnsupportedDimensionError)

SLOWLY_VARYING_FAMILIES = ("constant", "log_shifted", "cauchy_factor")
COVARIANCE_FAMILIES = ("cauchy", "pure_power_tail", "generic", "unit")


def _radii(r):
    r = np.asarray(r, dtype=float)
    if np.any(r < 0) or np.any(np.isnan(r)):
        raise DomainError("radius must be nonnegative")
    return r


@dataclass(frozen=True)
class SlowlyVarying:
    """Slowly varying factor L(r).

    constant:       c
    log_shifted:    c * log(s + r) / log(s + 1), needs s > 1 so L > 0 on [0, inf)
    cauchy_factor:  (r^2 / (1 + r^2))^(alpha/2), taken as 1 at r = 0
    """

    family: str = "constant"
    c: float = 1.0
    s: float = math.e
    alpha: float = 1.0

    def __post_init__(self):
        if self.family not in SLOWLY_VARYING_FAMILIES:
            raise DomainError(f"unknown slowly varying family {self.family!r}")
        if self.c <= 0:
            raise DomainError("slowly varying scale c must be positive")
        if self.family == "log_shifted" and not self.s > 1:
            raise DomainError("log_shifted needs shift s > 1")

    def __call__(self, r):
        r = _radii(r)
        if self.family == "constant":
            out = np.full(r.shape, float(self.c))
        elif self.family == "log_shifted":
            out = self.c * np.log(self.s + r) / math.log(self.s + 1.0)
        else:
            with np.errstate(divide="ignore", invalid="ignore"):
                out = (1.0 + r ** -2.0) ** (-self.alpha / 2)
            out = np.where(r == 0, 1.0, out)
        return out if out.ndim else float(out)

    def to_record(self) -> dict:
        return {"L_family": self.family, "L_c": repr(float(self.c)),
                "L_s": repr(float(self.s)), "L_alpha": repr(float(self.alpha))}


def slowly_varying_eval(L: SlowlyVarying, r):
    return L(r)


def c1_constant(n: int, alpha: float) -> float:
    """Normalizing constant of the Riesz pair r^-alpha <-> c1 |lambda|^(alpha-n)."""
    if not 0 < alpha < n:
        raise DomainError(f"c1 needs 0 < alpha < n, got alpha={alpha}, n={n}")
    return math.gamma((n - alpha) / 2) / (
        2.0 ** alpha * math.pi ** (n / 2) * math.gamma(alpha / 2))


def y_n_eval(n: int, u):
    """Bessel-type kernel Y_n with Y_n(0) = 1; Y_1 = cos, Y_3 = sin(u)/u."""
    if n not in (1, 2, 3):
        raise UnsupportedDimensionError(f"Y_n supports n in {{1, 2, 3}}, got {n}")
    u = _radii(u)
    if n == 1:
        out = np.cos(u)
    elif n == 3:
        out = np.sinc(u / math.pi)
    else:
        out = special.j0(u)
    return out if out.ndim else float(out)


def _sphere_area(n: int) -> float:
    return 2 * math.pi ** (n / 2) / math.gamma(n / 2)


@dataclass(frozen=True)
class CovarianceModel:
    """Isotropic correlation function B(r) with declared tail r^-alpha L(r).

    Families: ``cauchy`` (1 + r^2)^(-alpha/2), ``pure_power_tail``
    min(1, r^-alpha L(r)), ``generic`` r^-alpha L(r) beyond r0 with a
    quadratic head below it, and ``unit`` (B == 1, a degenerate model for
    exactness checks).
    """

    n: int
    alpha: float
    family: str = "cauchy"
    L: SlowlyVarying = field(default=None)
    r0: float = 1.0

    def __post_init__(self):
        if self.family not in COVARIANCE_FAMILIES:
            raise DomainError(f"unknown covariance family {self.family!r}")
        if int(self.n) != self.n or not 1 <= self.n <= 3:
            raise UnsupportedDimensionError(f"n must be 1, 2 or 3, got {self.n}")
        if self.family != "unit" and not 0 < self.alpha < self.n:
            raise DomainError(f"alpha must lie in (0, n), got {self.alpha}")
        if self.L is None:
            L = (SlowlyVarying("cauchy_factor", alpha=self.alpha)
                 if self.family == "cauchy" else SlowlyVarying())
            object.__setattr__(self, "L", L)
        if self.family == "generic":
            b0 = self.r0 ** -self.alpha * float(self.L(self.r0))
            if not (self.r0 > 0 and 0 <= b0 <= 1):
                raise DomainError("generic family needs r0 > 0 with r0^-alpha L(r0) in [0, 1]")

    @classmethod
    def cauchy(cls, n: int, alpha: float) -> "CovarianceModel":
        return cls(n, alpha, "cauchy")

    def cov(self, r):
        r = _radii(r)
        a = self.alpha
        if self.family == "cauchy":
            out = (1.0 + r * r) ** (-a / 2)
        elif self.family == "unit":
            out = np.ones_like(r)
        elif self.family == "pure_power_tail":
            with np.errstate(divide="ignore"):
                out = np.minimum(1.0, r ** -a * self.L(r))
            out = np.where(r == 0, 1.0, out)
        else:
            b0 = self.r0 ** -a * float(self.L(self.r0))
            with np.errstate(divide="ignore"):
                tail = r ** -a * self.L(r)
            head = 1.0 - (1.0 - b0) * (r / self.r0) ** 2
            out = np.where(r < self.r0, head, tail)
        return out if out.ndim else float(out)

    __call__ = cov

    def spectral(self) -> "SpectralModel":
        return SpectralModel(self.n, self.alpha, self.L)

    def fingerprint(self) -> str:
        rec = self.to_record()
        return ";".join(f"{k}={rec[k]}" for k in sorted(rec))

    def to_record(self) -> dict:
        rec = {"family": self.family, "n": str(self.n),
               "alpha": repr(float(self.alpha)), "r0": repr(float(self.r0))}
        rec.update(self.L.to_record())
        return rec

    @classmethod
    def from_record(cls, rec) -> "CovarianceModel":
        family = rec.get("family", "cauchy")
        n = int(rec["n"])
        alpha = float(rec.get("alpha", 1.0))
        L = None
        if "L_family" in rec:
            Lfam = rec["L_family"]
            L = SlowlyVarying(Lfam, c=float(rec.get("L_c", 1.0)),
                              s=float(rec.get("L_s", math.e)),
                              alpha=float(rec.get("L_alpha", alpha)))
        return cls(n, alpha, family, L, float(rec.get("r0", 1.0)))


def covariance_eval(model: CovarianceModel, r):
    return model.cov(r)


@dataclass(frozen=True)
class SpectralModel:
    """Radial spectral density f(lam) = c1(n, alpha) lam^(alpha-n) L(1/lam)."""

    n: int
    alpha: float
    L: SlowlyVarying = field(default_factory=SlowlyVarying)

    @property
    def c1(self) -> float:
        return c1_constant(self.n, self.alpha)

    def density(self, lam):
        lam = np.asarray(lam, dtype=float)
        if np.any(lam <= 0):
            raise SingularityError("spectral density is singular at lambda = 0")
        out = self.c1 * lam ** (self.alpha - self.n) * self.L(1.0 / lam)
        return out if out.ndim else float(out)

    __call__ = density


def spectral_density_eval(s: SpectralModel, lambda_norm):
    return s.density(lambda_norm)


def hankel_reconstruct(s: SpectralModel, r: float, cutoff: float,
                       max_panels: int = 200000):
    """Truncated radial transform of the density evaluated at lag r.

    Returns (value, tail_estimate). The integrable singularity u^(alpha-1)
    at the origin is handled with an algebraic weight; the oscillatory part
    is split into half-periods of the kernel. The tail estimate bounds the
    neglected integral beyond ``cutoff`` by twice the envelope there over r.
    """
    n, a = s.n, s.alpha
    if n not in (1, 2):
        raise UnsupportedDimensionError("radial reconstruction supports n in {1, 2}")
    if r <= 0 or cutoff <= 0:
        raise DomainError("r and cutoff must be positive")
    area = _sphere_area(n)
    c1 = s.c1

    def smooth(u):  # integrand divided by u^(alpha-1)
        return area * c1 * float(s.L(1.0 / max(u, 1e-300))) * float(y_n_eval(n, r * u))

    def full(u):
        return area * u ** (n - 1) * float(s.density(u)) * float(y_n_eval(n, r * u))

    half = math.pi / r
    u1 = min(cutoff, half)
    total, err = integrate.quad(smooth, 0.0, u1, weight="alg", wvar=(a - 1, 0.0), limit=200)
    npanel = int(math.ceil((cutoff - u1) / half))
    if npanel > max_panels:
        raise QuadratureError("oscillatory range exceeds panel budget", residual=math.inf)
    edges = np.linspace(u1, cutoff, npanel + 1) if npanel else np.array([u1])
    for lo, hi in zip(edges[:-1], edges[1:]):
        v, e = integrate.quad(full, lo, hi, limit=100)
        total += v
        err += e
    amp = 1.0 if n == 1 else math.sqrt(2.0 / (math.pi * r * cutoff))
    envelope = area * cutoff ** (n - 1) * float(s.density(cutoff)) * amp
    return total, 2.0 * envelope / r + err


def hankel_consistency_gap(model: CovarianceModel, s: SpectralModel, r: float,
                           cutoff: float, nodes: int = 0, budget: float = 0.5) -> float:
    """|B(r) - truncated radial transform of f at r|, a diagnostic.

    ``nodes`` is accepted for interface compatibility; the adaptive rule
    chooses its own node counts. Raises QuadratureError when the tail
    estimate exceeds ``budget``.
    """
    if (model.n, model.alpha) != (s.n, s.alpha):
        raise DomainError("covariance and spectral models disagree on (n, alpha)")
    value, tail = hankel_reconstruct(s, r, cutoff)
    if not math.isfinite(value) or tail > budget:
        raise QuadratureError(f"tail estimate {tail:.3g} exceeds budget {budget}", residual=tail)
    return abs(float(model.cov(r)) - value)
