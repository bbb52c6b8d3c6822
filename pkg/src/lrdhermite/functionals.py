"""Weighted additive and integral Hermite functionals of sampled fields."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (CoverageError, DomainError, LongRangeViolationError,
                     RankMismatchError)
from .hermite import (TestFunction, hermite_coefficients, hermite_eval,
                      hermite_rank)

WEIGHT_FAMILIES = ("constant", "power", "power_log")


@dataclass(frozen=True)
class WeightFunction:
    """Separable weight g(t) = prod_l g_l(t_l) on the nonnegative orthant.

    constant:   c
    power:      prod t_l^mu_l
    power_log:  prod t_l log(mu_l + t_l)   (mu_l > 0)
    """

    family: str = "constant"
    n: int = 1
    c: float = 1.0
    mu: tuple = ()

    def __post_init__(self):
        if self.family not in WEIGHT_FAMILIES:
            raise DomainError(f"unknown weight family {self.family!r}")
        mu = tuple(float(v) for v in self.mu) if self.mu else ()
        if self.family != "constant":
            if len(mu) == 1 and self.n > 1:
                mu = mu * self.n
            if len(mu) != self.n:
                raise DomainError("weight needs one exponent per axis")
            if self.family == "power_log" and any(v <= 0 for v in mu):
                raise DomainError("power_log needs mu_l > 0")
            if self.family == "power" and any(v < 0 for v in mu):
                raise DomainError("power weight needs mu_l >= 0")
        elif self.c == 0:
            raise DomainError("constant weight must be nonzero")
        object.__setattr__(self, "mu", mu)

    def axis_factor(self, l: int, t):
        """Factor g_l of axis l; the constant sits on axis 0."""
        t = np.asarray(t, dtype=float)
        if self.family == "constant":
            return np.full(t.shape, float(self.c) if l == 0 else 1.0)
        if self.family == "power":
            return t ** self.mu[l]
        return t * np.log(self.mu[l] + t)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = self.axis_factor(0, t[..., 0])
        for l in range(1, self.n):
            out = out * self.axis_factor(l, t[..., l])
        return out

    def at_diagonal(self, T: float) -> float:
        """g(T, ..., T)."""
        return float(self(np.full(self.n, float(T))))

    def limit(self, u):
        """Scaling limit g*(u) on [0, 1]^n."""
        u = np.asarray(u, dtype=float)
        if self.family == "constant":
            return np.ones(u.shape[:-1])
        if self.family == "power":
            return np.prod(u ** np.asarray(self.mu), axis=-1)
        return np.prod(u, axis=-1)

    def axis_limit(self, l: int, u):
        u = np.asarray(u, dtype=float)
        if self.family == "constant":
            return np.ones(u.shape)
        if self.family == "power":
            return u ** self.mu[l]
        return u

    def ratio(self, T: float, u):
        """g(T u) / g(T, ..., T), evaluated per family without cancellation."""
        u = np.asarray(u, dtype=float)
        if self.family != "power_log":
            return self.limit(u)
        mu = np.asarray(self.mu)
        return np.prod(u * np.log(mu + T * u) / np.log(mu + T), axis=-1)

    def scaled(self, c: float) -> "WeightFunction":
        if self.family == "constant":
            return WeightFunction("constant", self.n, self.c * c)
        raise DomainError("only constant weights support scaling by record")

    def to_record(self) -> dict:
        rec = {"family": self.family, "n": str(self.n), "c": repr(float(self.c))}
        if self.mu:
            rec["mu"] = ",".join(repr(v) for v in self.mu)
        return rec

    @classmethod
    def from_record(cls, rec, n: Optional[int] = None) -> "WeightFunction":
        mu = tuple(float(v) for v in rec.get("mu", "").split(",") if v.strip())
        return cls(rec.get("family", "constant"), int(rec.get("n", n or 1)),
                   float(rec.get("c", 1.0)), mu)


def _grid_offsets(grid, coords_per_axis, spacing):
    """Index slices into the grid for the requested coordinates, or raise."""
    sl = []
    for ax, (want, h) in enumerate(zip(coords_per_axis, spacing)):
        if not math.isclose(grid.spacing[ax], h, rel_tol=1e-12):
            raise CoverageError(f"axis {ax}: grid spacing {grid.spacing[ax]} differs from {h}")
        start = (want[0] - grid.origin[ax]) / h
        k = int(round(start))
        if abs(start - k) > 1e-9 or k < 0 or k + len(want) > grid.counts[ax]:
            raise CoverageError(f"axis {ax}: grid does not cover the required points")
        sl.append(slice(k, k + len(want)))
    return tuple(sl)


def _weighted_reduce(vals: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Sum of weights * vals over the trailing grid axes, fixed order."""
    nb = vals.ndim - weights.ndim
    flat = vals.reshape(vals.shape[:nb] + (-1,))
    out = flat @ weights.ravel()
    return out if out.ndim else float(out)


def _outer_weights(g: WeightFunction, axes) -> np.ndarray:
    w = np.ones(())
    for l, t in enumerate(axes):
        w = np.multiply.outer(w, g.axis_factor(l, t))
    return w


def weighted_sum_functional(field, g: WeightFunction, m: int, T: Sequence[float]):
    """sum over i in prod {0..floor(T_l)-1} of g(i) H_m(xi(i)) (unnormalized)."""
    grid = field.grid
    Ti = [int(math.floor(t)) for t in T]
    if len(Ti) != grid.n or g.n != grid.n:
        raise CoverageError("extent, weight and grid dimensions differ")
    axes = [np.arange(t, dtype=float) for t in Ti]
    sl = _grid_offsets(grid, axes, (1.0,) * grid.n)
    vals = field.values[(Ellipsis,) + sl]
    return _weighted_reduce(np.asarray(hermite_eval(m, vals)), _outer_weights(g, axes))


def weighted_integral_functional(field, g: WeightFunction, m: int, T: Sequence[float], q: int):
    """Midpoint rule for int over [0, T] of g(t) H_m(xi(t)) dt at spacing 1/q."""
    grid = field.grid
    if len(T) != grid.n or g.n != grid.n:
        raise CoverageError("extent, weight and grid dimensions differ")
    counts = [q * t for t in T]
    if any(abs(c - round(c)) > 1e-9 for c in counts):
        raise CoverageError("q * T_l must be integers")
    axes = [(np.arange(int(round(c))) + 0.5) / q for c in counts]
    sl = _grid_offsets(grid, axes, (1.0 / q,) * grid.n)
    vals = field.values[(Ellipsis,) + sl]
    w = _outer_weights(g, axes) * float(q) ** (-grid.n)
    return _weighted_reduce(np.asarray(hermite_eval(m, vals)), w)


def normalizer(n: int, m: int, alpha: float, L, g: WeightFunction, Ttilde: float) -> float:
    """d = T^(n - m alpha/2) |g(T, ..., T)| L(T)^(m/2)."""
    if not alpha * m < n:
        raise LongRangeViolationError(
            f"long-range condition alpha*m < n fails: alpha*m = {alpha * m} >= n = {n}")
    if Ttilde < 1:
        raise DomainError("Ttilde must be at least 1")
    gd = abs(g.at_diagonal(Ttilde))
    return float(Ttilde ** (n - m * alpha / 2) * gd * float(L(Ttilde)) ** (m / 2))


@dataclass
class FunctionalResult:
    raw: object
    normalizer: float
    normalized: object = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.normalizer > 0:
            raise DomainError("normalizer must be positive")
        self.normalized = np.asarray(self.raw) / self.normalizer

    def rows(self):
        raw = np.atleast_1d(self.raw)
        norm = np.atleast_1d(self.normalized)
        T = "x".join(str(t) for t in self.meta.get("T", ()))
        return [(T, self.meta.get("m"), self.meta.get("family"), float(r), self.normalizer,
                 float(v), self.meta.get("seed")) for r, v in zip(raw, norm)]


def exact_coefficients(G: TestFunction, jmax: int):
    """Hermite coefficients of polynomial G by basis conversion, or None."""
    if G.family == "monomial":
        poly = [0.0] * G.p + [1.0]
    elif G.family == "polynomial":
        poly = list(G.coeffs)
    elif G.family == "hermite":
        herm = np.zeros(max(jmax, G.p) + 1)
        herm[G.p] = G.scale
        b = herm
        return np.array([b[j] * math.factorial(j) for j in range(jmax + 1)])
    else:
        return None
    b = np.polynomial.hermite_e.poly2herme(np.asarray(poly, dtype=float)) * G.scale
    b = np.concatenate([b, np.zeros(max(0, jmax + 1 - len(b)))])
    return np.array([b[j] * math.factorial(j) for j in range(jmax + 1)])


def theorem1_pair(G: TestFunction, kappa: int, field, T=None, q: Optional[int] = None,
                  jmax: int = 10):
    """(K_r, K_r_kappa) over all grid points of ``field``.

    K_r is the Riemann sum of G(xi) - C_0 and K_r_kappa that of
    (C_kappa / kappa!) H_kappa(xi), both with the grid cell volume.
    Polynomial G uses exact basis-conversion coefficients.
    """
    rank = hermite_rank(G, jmax)
    if rank != kappa:
        raise RankMismatchError(f"Hermite rank of G is {rank}, not {kappa}")
    grid = field.grid
    if T is not None and q is not None:
        want = tuple(int(round(q * t)) for t in T)
        if want != tuple(grid.counts):
            raise CoverageError(f"grid counts {grid.counts} differ from q*T = {want}")
    coeffs = exact_coefficients(G, jmax)
    if coeffs is None:
        coeffs = hermite_coefficients(G, jmax).coeffs
    vol = float(np.prod(grid.spacing))
    vals = field.values
    nb = vals.ndim - grid.n
    flat = vals.reshape(vals.shape[:nb] + (-1,))
    ones = np.full(flat.shape[-1], vol)
    k_r = (np.asarray(G(flat)) - coeffs[0]) @ ones
    k_rk = (coeffs[kappa] / math.factorial(kappa)) * (np.asarray(hermite_eval(kappa, flat)) @ ones)
    return k_r, k_rk


def weight_limit_gap(g: WeightFunction, Ttilde: float, grid_points: int = 101) -> float:
    """max over a uniform grid on [0, 1]^n of |g(T u)/g(T, ..., T) - g*(u)|."""
    if Ttilde < 1:
        raise DomainError("Ttilde must be at least 1")
    u1 = np.linspace(0.0, 1.0, grid_points)
    U = np.stack(np.meshgrid(*([u1] * g.n), indexing="ij"), axis=-1).reshape(-1, g.n)
    return float(np.max(np.abs(g.ratio(Ttilde, U) - g.limit(U))))
