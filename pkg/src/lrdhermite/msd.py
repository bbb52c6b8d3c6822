"""Deterministic mean-square gap between weighted integral and sum functionals.

For a separable weight the 2n-dimensional integrals collapse to n-dimensional
integrals over the lag h = x - x':

    d1 = m! int K(h) prod_l A_l(h_l) dh,       A_l(h) = int g_l(s) g_l(s + h) ds
    d2 = -2 m! int K(h) prod_l b_l(h_l) dh,    b_l(h) = sum_i g_l(i) g_l(i + h)
    d3 = m! sum_h K(h) prod_l c_l(h_l),        c_l(h) = sum_i g_l(i) g_l(i + h)

with K(h) = B(|h|)^m, integration variables restricted to [0, T_l] and
lattice indices to {0, ..., floor(T_l) - 1}. Every factor is even in h or
paired with its reflection, so each axis is folded onto h_l >= 0. The folded
lag integrals use composite Gauss-Legendre panels split at every point where
b_l jumps, with dyadic refinement towards h_l = 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import BudgetError, DivergenceError, DomainError, LongRangeViolationError
from .fieldsim import GridSpec, simulate_field_exact
from .functionals import WeightFunction
from .hermite import hermite_eval
from .quadrature import panel_rule, singular_box_integral, tensor_rule

MAX_TENSOR_NODES = 40_000_000


@dataclass(frozen=True)
class QuadSpec:
    points_per_unit: int = 4
    depth: int = 4

    def __post_init__(self):
        if self.points_per_unit < 2:
            raise DomainError("quadrature needs at least 2 points per unit")
        if self.depth < 0:
            raise DomainError("subdivision depth must be nonnegative")

    def doubled(self) -> "QuadSpec":
        return QuadSpec(2 * self.points_per_unit, self.depth)


@dataclass(frozen=True)
class MsdConfig:
    n: int
    m: int
    model: object
    g: WeightFunction
    T: tuple
    quad: QuadSpec = field(default_factory=QuadSpec)

    def __post_init__(self):
        T = tuple(float(t) for t in (self.T if np.iterable(self.T) else (self.T,) * self.n))
        if len(T) == 1 and self.n > 1:
            T = T * self.n
        object.__setattr__(self, "T", T)
        if self.n not in (1, 2, 3) or len(T) != self.n:
            raise DomainError("need n in {1, 2, 3} and one extent per axis")
        if self.model.n != self.n or self.g.n != self.n:
            raise DomainError("model, weight and configuration dimensions differ")
        if self.m < 1:
            raise DomainError("Hermite order must be at least 1")
        if not 0 < self.model.alpha * self.m < self.n:
            raise LongRangeViolationError(
                f"long-range condition 0 < alpha*m < n fails: alpha*m = {self.model.alpha * self.m}, n = {self.n}")
        if any(t < 1 for t in T):
            raise DomainError("extents must be at least 1")

    @property
    def Ttilde(self) -> float:
        return max(self.T)


@dataclass
class MsdReport:
    d1: float
    d2: float
    d3: float
    total: float
    denominator: float
    ratio: float
    error_estimate: float
    ratio_error: float
    config: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    COLUMNS = ("n", "m", "alpha", "L", "g", "T", "d1", "d2", "d3", "total",
               "denominator", "ratio", "error_estimate")

    def row(self) -> list:
        c = self.config
        return [c["n"], c["m"], c["alpha"], c["L"], c["g"], "x".join(repr(t) for t in c["T"]),
                self.d1, self.d2, self.d3, self.total, self.denominator, self.ratio,
                self.error_estimate]


def _axis_edges(T: float, depth: int) -> np.ndarray:
    Tf = math.floor(T)
    edges = {0.0, float(T)}
    edges.update(2.0 ** -k for k in range(1, depth + 1))
    edges.update(float(k) for k in range(1, Tf + 1))
    edges.update(T - k for k in range(0, Tf + 1) if T - k > 0)
    return np.array(sorted(e for e in edges if 0 <= e <= T))


def _interval_overlap(g: WeightFunction, l: int, lo: float, hi: float, h: np.ndarray,
                      p: int = 16) -> np.ndarray:
    """A(h) = int over s, s + h in [lo, hi] of g_l(s) g_l(s + h) ds for h >= 0."""
    out = np.zeros(h.shape)
    if g.family == "constant":
        c = g.axis_factor(l, 0.0)
        return c * c * np.clip(hi - lo - h, 0.0, None)
    for k, hk in enumerate(h):
        b = hi - hk
        if b <= lo:
            continue
        npan = max(1, int(math.ceil(b - lo)))
        s, w = panel_rule(np.linspace(lo, b, npan + 1), p)
        out[k] = np.dot(w, g.axis_factor(l, s) * g.axis_factor(l, s + hk))
    return out


def _lattice_overlap(g: WeightFunction, l: int, T: float, h: np.ndarray) -> np.ndarray:
    """b(h) + b(-h) for h >= 0 against x in [0, T] and i in {0..floor(T)-1}."""
    i = np.arange(math.floor(T), dtype=float)[:, None]
    gi = g.axis_factor(l, i)
    hp = i + h[None, :]
    fwd = np.where(hp <= T, gi * g.axis_factor(l, np.minimum(hp, T)), 0.0).sum(axis=0)
    hm = i - h[None, :]
    bwd = np.where(hm >= 0, gi * g.axis_factor(l, np.maximum(hm, 0.0)), 0.0).sum(axis=0)
    return fwd + bwd


def _lattice_autocorr(g: WeightFunction, l: int, N: int) -> np.ndarray:
    """c(h) = sum_i g(i) g(i + h) for h = -(N-1)..N-1."""
    v = g.axis_factor(l, np.arange(N, dtype=float))
    return np.correlate(v, v, mode="full")


def _kernel(model, m: int, pts: np.ndarray) -> np.ndarray:
    r = np.sqrt(np.sum(pts * pts, axis=-1))
    return np.asarray(model.cov(r), dtype=float) ** m


def _tensor_contract(model, m: int, nodes, factors) -> float:
    """sum over the tensor grid of K(h) prod_l factors_l(h_l), slab by slab."""
    n = len(nodes)
    total = 0.0
    if n == 1:
        return float(np.dot(_kernel(model, m, nodes[0][:, None]), factors[0]))
    rest_pts, rest_w = tensor_rule([(x, f) for x, f in zip(nodes[1:], factors[1:])])
    if len(rest_pts) * len(nodes[0]) > MAX_TENSOR_NODES * 4:
        raise BudgetError(f"tensor rule with {len(rest_pts) * len(nodes[0])} nodes exceeds budget")
    for x0, f0 in zip(nodes[0], factors[0]):
        pts = np.concatenate([np.full((len(rest_pts), 1), x0), rest_pts], axis=1)
        total += f0 * float(np.dot(_kernel(model, m, pts), rest_w))
    return total


def _lag_rules(cfg: MsdConfig, quad: QuadSpec):
    rules = []
    for T in cfg.T:
        rules.append(panel_rule(_axis_edges(T, quad.depth), quad.points_per_unit))
    size = math.prod(len(r[0]) for r in rules)
    if size > MAX_TENSOR_NODES:
        raise BudgetError(f"lag tensor rule needs {size} nodes (budget {MAX_TENSOR_NODES})",
                          residual=math.nan)
    return rules


def _d1_on(cfg: MsdConfig, rules, bounds=None) -> float:
    nodes, factors = [], []
    for l, ((x, w), T) in enumerate(zip(rules, cfg.T)):
        lo, hi = bounds[l] if bounds else (0.0, T)
        keep = x <= hi - lo
        xs = x[keep]
        nodes.append(xs)
        factors.append(w[keep] * 2.0 * _interval_overlap(cfg.g, l, lo, hi, xs))
    return math.factorial(cfg.m) * _tensor_contract(cfg.model, cfg.m, nodes, factors)


def _d2_on(cfg: MsdConfig, rules) -> float:
    nodes, factors = [], []
    for l, ((x, w), T) in enumerate(zip(rules, cfg.T)):
        nodes.append(x)
        factors.append(w * _lattice_overlap(cfg.g, l, T, x))
    return -2.0 * math.factorial(cfg.m) * _tensor_contract(cfg.model, cfg.m, nodes, factors)


def d1_term(cfg: MsdConfig, quad: Optional[QuadSpec] = None) -> float:
    """m! int int g(x) g(x') B(|x - x'|)^m over [0, T]^2."""
    return _d1_on(cfg, _lag_rules(cfg, quad or cfg.quad))


def d2_term(cfg: MsdConfig, quad: Optional[QuadSpec] = None) -> float:
    """-2 m! int over [0, T] of sum over lattice i of g(x) g(i) B(|x - i|)^m."""
    return _d2_on(cfg, _lag_rules(cfg, quad or cfg.quad))


def d3_term(cfg: MsdConfig) -> float:
    """m! sum over lattice pairs of g(i) g(i') B(|i - i'|)^m, exact."""
    Ns = [int(math.floor(t)) for t in cfg.T]
    grids = [np.arange(-(N - 1), N, dtype=float) for N in Ns]
    H = np.stack(np.meshgrid(*grids, indexing="ij"), axis=-1)
    K = _kernel(cfg.model, cfg.m, H)
    w = np.ones(())
    for l, N in enumerate(Ns):
        w = np.multiply.outer(w, _lattice_autocorr(cfg.g, l, N))
    return math.factorial(cfg.m) * float(np.dot(K.ravel(), w.ravel()))


def denominator(cfg: MsdConfig) -> float:
    Tt = cfg.Ttilde
    return float(Tt ** (2 * cfg.n - cfg.model.alpha * cfg.m) * cfg.g.at_diagonal(Tt) ** 2
                 * float(cfg.model.L(Tt)) ** cfg.m)


def _strip_terms(cfg: MsdConfig, rules) -> list:
    """Mean squares of the integral over each boundary strip [floor(T_l), T_l]."""
    out = []
    for l, T in enumerate(cfg.T):
        if T == math.floor(T):
            continue
        bounds = []
        for k, Tk in enumerate(cfg.T):
            if k < l:
                bounds.append((0.0, float(math.floor(Tk))))
            elif k == l:
                bounds.append((float(math.floor(T)), T))
            else:
                bounds.append((0.0, Tk))
        out.append(_d1_on(cfg, rules, bounds))
    return out


def total_gap(cfg: MsdConfig) -> MsdReport:
    """E[(integral - sum)^2] via d1 + d2 + d3 at resolutions p and 2p.

    Values are reported at 2p; the error estimate is |total(p) - total(2p)|.
    Non-integer extents are evaluated exactly (integral over [0, T], sum
    over floor(T)); the strip mean squares are kept as diagnostics.
    """
    d3 = d3_term(cfg)
    levels = []
    for quad in (cfg.quad, cfg.quad.doubled()):
        rules = _lag_rules(cfg, quad)
        levels.append((_d1_on(cfg, rules), _d2_on(cfg, rules), rules))
    (a1, a2, _), (d1, d2, rules) = levels
    total = d1 + d2 + d3
    err = abs((a1 + a2 + d3) - total)
    den = denominator(cfg)
    model = cfg.model
    conf = {"n": cfg.n, "m": cfg.m, "alpha": model.alpha,
            "L": model.L.family, "g": cfg.g.family, "T": cfg.T}
    diag = {"total_coarse": float(a1 + a2 + d3), "nodes": [len(r[0]) for r in rules],
            "points_per_unit": cfg.quad.points_per_unit, "depth": cfg.quad.depth}
    strips = _strip_terms(cfg, rules)
    if strips:
        diag["strip_mean_squares"] = [float(v) for v in strips]
    return MsdReport(float(d1), float(d2), float(d3), float(total), den, float(total / den),
                     float(err), float(err / den), conf, diag)


def l12_constant(n: int, m: int, alpha: float, gstar: WeightFunction, a: Sequence[float],
                 quad: Optional[QuadSpec] = None, p: int = 16, depth: int = 40) -> float:
    """int over [0, a]^n x [0, a]^n of g*(u) g*(v) |u - v|^(-alpha m).

    Folded to the lag h >= 0 like d1; the singular corner h = 0 is handled by
    dyadic shells with a geometric closure, the rest of the box by panels.
    ``quad`` is accepted for signature symmetry with the other terms.
    """
    s = alpha * m
    if s >= n:
        raise DivergenceError(f"alpha*m = {s} >= n = {n}: the kernel is not integrable")
    a = tuple(float(v) for v in (a if np.iterable(a) else (a,) * n))
    if len(a) != n or any(not 0 < v <= 1 for v in a):
        raise DomainError("limits a_l must lie in (0, 1]")

    def overlap(l, h):
        out = np.empty(h.shape)
        x, w = panel_rule(np.array([0.0, 1.0]), 24)
        for k, hk in enumerate(h.ravel()):
            b = a[l] - hk
            sx = x * b
            out.flat[k] = b * np.dot(w, gstar.axis_limit(l, sx) * gstar.axis_limit(l, sx + hk)) if b > 0 else 0.0
        return out

    def integrand(pts):
        r = np.sqrt(np.sum(pts * pts, axis=-1))
        with np.errstate(divide="ignore"):
            val = r ** (-s) if s > 0 else np.ones_like(r)
        for l in range(n):
            val = val * 2.0 * overlap(l, pts[:, l])
        return val

    return singular_box_integral(integrand, a, s, p=p, depth=depth)


def monte_carlo_gap(cfg: MsdConfig, reps: int, q: int, seed: int, workers: int = 1):
    """Direct estimate of E[(integral - sum)^2] from exact field simulation.

    The field lives on the spacing-1/(2q) grid, which contains both the
    integer lattice and the spacing-1/q midpoints. Returns (estimate, stderr).
    """
    if any(abs(q * t - round(q * t)) > 1e-9 for t in cfg.T):
        raise DomainError("q * T_l must be integers")
    counts = tuple(int(round(2 * q * t)) for t in cfg.T)
    grid = GridSpec(counts, (0.5 / q,) * cfg.n)
    fs = simulate_field_exact(cfg.model, grid, seed, reps=reps, workers=workers)
    V = fs.values
    mid = tuple(slice(1, None, 2) for _ in cfg.T)
    lat = tuple(slice(0, 2 * q * int(math.floor(t)), 2 * q) for t in cfg.T)
    w_mid = np.ones(())
    w_lat = np.ones(())
    for l, t in enumerate(cfg.T):
        xm = (np.arange(int(round(q * t))) + 0.5) / q
        xi = np.arange(int(math.floor(t)), dtype=float)
        w_mid = np.multiply.outer(w_mid, cfg.g.axis_factor(l, xm))
        w_lat = np.multiply.outer(w_lat, cfg.g.axis_factor(l, xi))
    Hm = np.asarray(hermite_eval(cfg.m, V[(slice(None),) + mid]))
    Hl = np.asarray(hermite_eval(cfg.m, V[(slice(None),) + lat]))
    integral = Hm.reshape(reps, -1) @ w_mid.ravel() * float(q) ** (-cfg.n)
    lattice_sum = Hl.reshape(reps, -1) @ w_lat.ravel()
    sq = (integral - lattice_sum) ** 2
    return float(sq.mean()), float(sq.std(ddof=1) / math.sqrt(reps))
