"""Probabilists' Hermite polynomials, expansion coefficients and rank."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

from .errors import (DomainError, IntegrabilityError, ModelError,
                     OrderTooLargeError, RankUndetectedError)
from .quadrature import panel_rule
from .rng import chunk_ranges, stream

MAX_ORDER = 30
DEFAULT_NODES = 200
RANK_TOL = 1e-8


def hermite_eval(m: int, x):
    """H_m(x) by the recurrence H_{k+1} = x H_k - k H_{k-1}."""
    if m < 0 or int(m) != m:
        raise DomainError("Hermite order must be a nonnegative integer")
    if m > MAX_ORDER:
        raise OrderTooLargeError(f"Hermite order {m} exceeds {MAX_ORDER}")
    x = np.asarray(x, dtype=float)
    prev, cur = np.ones_like(x), x.copy()
    if m == 0:
        cur = prev
    for k in range(1, int(m)):
        prev, cur = cur, x * cur - k * prev
    return cur if cur.ndim else float(cur)


def hermite_all(jmax: int, x) -> np.ndarray:
    """Stack of H_0..H_jmax at x, shape (jmax + 1, *x.shape)."""
    if jmax > MAX_ORDER:
        raise OrderTooLargeError(f"Hermite order {jmax} exceeds {MAX_ORDER}")
    x = np.asarray(x, dtype=float)
    out = np.empty((jmax + 1,) + x.shape)
    out[0] = 1.0
    if jmax >= 1:
        out[1] = x
    for k in range(1, jmax):
        out[k + 1] = x * out[k] - k * out[k - 1]
    return out


@lru_cache(maxsize=16)
def gauss_hermite_rule(nodes: int):
    """Gauss rule for the standard normal density (weights sum to one).

    Nodes from the Golub-Welsch solve are polished by Newton steps on the
    orthonormal recurrence in extended precision, and the weights are
    recomputed from the Christoffel function there.
    """
    x0, _ = hermegauss(nodes)
    x = x0.astype(np.longdouble)
    for _ in range(3):
        psi_prev, psi = np.zeros_like(x), np.ones_like(x)
        for k in range(nodes):
            psi_prev, psi = psi, (x * psi - np.sqrt(np.longdouble(k)) * psi_prev) / np.sqrt(np.longdouble(k + 1))
        x = x - psi / (np.sqrt(np.longdouble(nodes)) * psi_prev)
    s = np.zeros_like(x)
    psi_prev, psi = np.zeros_like(x), np.ones_like(x)
    for k in range(nodes):
        s += psi * psi
        psi_prev, psi = psi, (x * psi - np.sqrt(np.longdouble(k)) * psi_prev) / np.sqrt(np.longdouble(k + 1))
    w = 1.0 / s
    w = w / w.sum()
    xs, ws = np.asarray(x, dtype=float), np.asarray(w, dtype=float)
    xs.setflags(write=False)
    ws.setflags(write=False)
    return xs, ws


@lru_cache(maxsize=4)
def _kinked_rule(breakpoints: tuple, p: int = 24, half_width: float = 40.0):
    # unit panels on [-40, 40] refined at the kinks, density folded in
    edges = np.arange(-half_width, half_width + 0.5, 1.0)
    extra = [b for b in breakpoints if -half_width < b < half_width]
    edges = np.unique(np.concatenate([edges, extra]))
    x, w = panel_rule(edges, p)
    w = w * np.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)
    return x, w


@dataclass(frozen=True)
class TestFunction:
    """A function G of a standard Gaussian argument.

    Families: ``monomial`` (x^p), ``polynomial`` (power-basis ``coeffs``),
    ``hermite`` (H_p), ``indicator_positive``, ``absolute_value``,
    ``tabulated`` (linear interpolation of ``table``, constant beyond its
    ends) and ``custom`` (callable ``func`` with optional ``breakpoints``).
    ``scale`` multiplies the output.
    """

    __test__ = False  # not a pytest class

    family: str
    p: int = 1
    coeffs: tuple = ()
    table: Optional[tuple] = None
    func: Optional[Callable] = field(default=None, compare=False)
    breakpoints: tuple = ()
    scale: float = 1.0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        fam = self.family
        if fam == "monomial":
            y = x ** self.p
        elif fam == "polynomial":
            y = np.polynomial.polynomial.polyval(x, np.asarray(self.coeffs, dtype=float))
        elif fam == "hermite":
            y = np.asarray(hermite_eval(self.p, x))
        elif fam == "indicator_positive":
            y = (x > 0).astype(float)
        elif fam == "absolute_value":
            y = np.abs(x)
        elif fam == "tabulated":
            tx, ty = self.table
            y = np.interp(x, tx, ty)
        elif fam == "custom":
            y = np.asarray(self.func(x), dtype=float)
        else:
            raise DomainError(f"unknown test function family {fam!r}")
        return self.scale * y

    def kinks(self) -> tuple:
        if self.family in ("indicator_positive", "absolute_value"):
            return (0.0,)
        if self.family == "tabulated":
            return tuple(float(v) for v in self.table[0])
        if self.family == "custom":
            return tuple(float(v) for v in self.breakpoints)
        return ()

    def smooth(self) -> bool:
        return self.family in ("monomial", "polynomial", "hermite") or (
            self.family == "custom" and not self.breakpoints)

    def scaled(self, c: float) -> "TestFunction":
        return TestFunction(self.family, self.p, self.coeffs, self.table,
                            self.func, self.breakpoints, self.scale * c)

    def to_record(self) -> dict:
        rec = {"family": self.family, "p": str(self.p), "scale": repr(self.scale)}
        if self.coeffs:
            rec["coeffs"] = ",".join(repr(float(c)) for c in self.coeffs)
        return rec

    @classmethod
    def from_record(cls, rec) -> "TestFunction":
        coeffs = tuple(float(c) for c in rec.get("coeffs", "").split(",") if c.strip())
        return cls(rec["family"], p=int(rec.get("p", 1)), coeffs=coeffs,
                   scale=float(rec.get("scale", 1.0)))


def _rule_for(G: TestFunction, nodes: int):
    if G.smooth():
        return gauss_hermite_rule(nodes)
    return _kinked_rule(tuple(sorted(set(G.kinks()))))


@dataclass(frozen=True)
class HermiteExpansion:
    """Coefficients C_j = E[G(Z) H_j(Z)], j = 0..jmax (not divided by j!)."""

    coeffs: np.ndarray
    jmax: int
    quadrature_nodes: int
    second_moment: float = float("nan")

    def parseval_sum(self) -> float:
        j = np.arange(self.jmax + 1)
        fact = np.array([math.factorial(int(k)) for k in j], dtype=float)
        return float(np.sum(self.coeffs ** 2 / fact))

    def rows(self):
        return [(j, float(c)) for j, c in enumerate(self.coeffs)]


def hermite_coefficients(G: TestFunction, jmax: int, nodes: int = DEFAULT_NODES) -> HermiteExpansion:
    if jmax > MAX_ORDER:
        raise OrderTooLargeError(f"jmax {jmax} exceeds {MAX_ORDER}")
    if nodes < 4 * jmax:
        raise DomainError(f"need at least 4*jmax = {4 * jmax} quadrature nodes, got {nodes}")
    x, w = _rule_for(G, nodes)
    gx = np.asarray(G(x), dtype=float)
    if not np.all(np.isfinite(gx)):
        raise IntegrabilityError("test function is not finite at quadrature nodes")
    H = hermite_all(jmax, x)
    coeffs = H @ (w * gx)
    m2 = float(np.dot(w, gx * gx))
    if not (np.all(np.isfinite(coeffs)) and math.isfinite(m2)):
        raise IntegrabilityError("Hermite coefficient quadrature is not finite")
    return HermiteExpansion(coeffs, int(jmax), len(x), m2)


def hermite_rank(G: TestFunction, jmax: int = 10, rank_tol: float = RANK_TOL,
                 nodes: int = DEFAULT_NODES) -> int:
    """Smallest j >= 1 whose coefficient exceeds rank_tol times the largest one."""
    exp = hermite_coefficients(G, jmax, nodes)
    c = np.abs(exp.coeffs[1:])
    top = c.max() if c.size else 0.0
    # coefficients at rounding level relative to the size of G count as zero
    floor = 1e-13 * max(abs(exp.coeffs[0]), math.sqrt(exp.second_moment))
    if not top > floor:
        raise RankUndetectedError(f"no nonzero coefficient among orders 1..{jmax}")
    return int(np.argmax(c > rank_tol * top)) + 1


def parseval_gap(G: TestFunction, jmax: int, nodes: int = DEFAULT_NODES) -> float:
    exp = hermite_coefficients(G, jmax, nodes)
    return abs(exp.parseval_sum() - exp.second_moment)


def orthogonality_target(model, m1: int, m2: int, r: float) -> float:
    if m1 != m2:
        return 0.0
    return math.factorial(m1) * float(model.cov(r)) ** m1


def orthogonality_mc_check(model, m1: int, m2: int, r: float, reps: int, seed: int,
                           chunk: int = 20000):
    """Monte Carlo estimate of E[H_m1(X) H_m2(Y)] for a pair with correlation B(r).

    Returns (estimate, standard error). Draws come in fixed-size chunks with
    their own seed-derived streams, so the result does not depend on how
    chunks are scheduled.
    """
    if max(m1, m2) > 6:
        raise OrderTooLargeError("orthogonality check supports orders up to 6")
    if reps < 2:
        raise DomainError("need at least two replicates")
    rho = float(model.cov(r))
    if abs(rho) > 1:
        raise ModelError(f"|B(r)| = {abs(rho)} exceeds one")
    prods = np.empty(reps)
    for idx, lo, hi in chunk_ranges(reps, chunk):
        z = stream(seed, 11, idx).standard_normal((2, hi - lo))
        x = z[0]
        y = rho * z[0] + math.sqrt(max(0.0, 1 - rho * rho)) * z[1]
        prods[lo:hi] = np.asarray(hermite_eval(m1, x)) * np.asarray(hermite_eval(m2, y))
    return float(prods.mean()), float(prods.std(ddof=1) / math.sqrt(reps))
