"""Limit laws for Hermite functionals over dilated rectangles.

The limit of the rank-kappa functional is the kappa-fold Wiener-Ito integral
of K(lam_1 + ... + lam_kappa) prod |lam_i|^(-(n-alpha)/2) times c1^(kappa/2),
where K is the Fourier transform of the rectangle's indicator. kappa = 1 is
Gaussian; kappa = 2 is sampled as an eigen-expansion sum mu_k (Z_k^2 - 1) of
a discretized quadratic form.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy import integrate, linalg, stats
from scipy.stats import qmc

from .covmodels import c1_constant
from .errors import (BudgetError, DivergenceError, DomainError, InputError,
                     LongRangeViolationError, QuadratureError)
from .fieldsim import GridSpec, simulate_field_exact
from .functionals import exact_coefficients
from .hermite import TestFunction, hermite_coefficients, hermite_eval, hermite_rank
from .quadrature import panel_rule, singular_box_integral, tensor_rule
from .rng import chunk_ranges, derive, stream
from .spectral import SpectralDiscretization

DEFAULT_CUTOFF = 40.0
DEFAULT_CELLS = {1: 128, 2: 64, 3: 16}
SAMPLE_CHUNK = 4096


@dataclass(frozen=True)
class RectDomain:
    """Rectangle prod [a_l, b_l] containing the origin in its interior."""

    a: tuple
    b: tuple

    def __post_init__(self):
        a = tuple(float(v) for v in self.a)
        b = tuple(float(v) for v in self.b)
        if len(a) != len(b) or not a:
            raise DomainError("a and b need the same positive length")
        for l, (lo, hi) in enumerate(zip(a, b)):
            if not lo < 0 < hi:
                raise DomainError(f"axis {l}: need a_l < 0 < b_l, got a={lo}, b={hi}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @classmethod
    def symmetric(cls, n: int, half: float = 1.0) -> "RectDomain":
        return cls((-half,) * n, (half,) * n)

    @property
    def n(self) -> int:
        return len(self.a)

    @property
    def widths(self) -> np.ndarray:
        return np.asarray(self.b) - np.asarray(self.a)

    @property
    def volume(self) -> float:
        return float(np.prod(self.widths))

    def scaled(self, r: float) -> "RectDomain":
        return RectDomain(tuple(r * v for v in self.a), tuple(r * v for v in self.b))

    def lattice_bounds(self, T: float):
        """Integer index range per axis of the lattice points in T * domain."""
        lo = [int(math.ceil(T * v - 1e-12)) for v in self.a]
        hi = [int(math.floor(T * v + 1e-12)) for v in self.b]
        return lo, hi


def kernel_K_rect(x, dom: RectDomain):
    """prod_l (e^{i b_l x_l} - e^{i a_l x_l}) / (i x_l), equal to b_l - a_l at x_l = 0."""
    x = np.asarray(x, dtype=float)
    a = np.asarray(dom.a)
    b = np.asarray(dom.b)
    w = b - a
    c = 0.5 * (a + b)
    # w sinc(w x / 2 pi) e^{i c x} avoids cancellation near x = 0
    fac = w * np.sinc(w * x / (2 * math.pi)) * np.exp(1j * c * x)
    out = np.prod(fac, axis=-1)
    return out if np.ndim(out) else complex(out)


def kernel_K_numeric(x, dom: RectDomain, p: int = 16, panel_width: float = 0.5,
                     budget: int = 2_000_000):
    """Direct tensor Gauss-Legendre quadrature of int over the domain of e^{i<u, x>} du."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    rules = []
    for lo, hi in zip(dom.a, dom.b):
        k = max(1, int(math.ceil((hi - lo) / panel_width)))
        rules.append(panel_rule(np.linspace(lo, hi, k + 1), p))
    size = math.prod(len(r[0]) for r in rules)
    if size > budget:
        raise BudgetError(f"direct kernel quadrature needs {size} nodes (budget {budget})")
    pts, w = tensor_rule(rules)
    out = np.array([np.dot(w, np.exp(1j * (pts @ xi))) for xi in x])
    return out if len(out) > 1 else complex(out[0])


def _k_sq_1d(s, width: float):
    """|K(s)|^2 for an interval of the given width."""
    return (width * np.sinc(width * np.asarray(s) / (2 * math.pi))) ** 2


def _lemma_k1_n1(tau: float, width: float, R: float) -> float:
    edges = np.concatenate([[0.0], np.arange(1.0, R, 1.0), [R]])
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        if lo == 0.0:
            v = integrate.quad(lambda s: _k_sq_1d(s, width), lo, hi, weight="alg",
                               wvar=(tau - 1, 0.0))[0]
        else:
            v = integrate.quad(lambda s: _k_sq_1d(s, width) * s ** (tau - 1), lo, hi)[0]
        total += v
    return 2.0 * total


def _pair_inner(s: float, t1: float, t2: float, R: float) -> float:
    """int |l|^(t1-1) |s-l|^(t2-1) over |l| <= R, |s-l| <= R, for s >= 0."""
    s = max(s, 1e-12)
    lo, hi = max(-R, s - R), min(R, s + R)
    tot = 0.0
    if lo < 0:
        tot += integrate.quad(lambda l: (s - l) ** (t2 - 1), lo, 0.0, weight="alg", wvar=(0.0, t1 - 1))[0]
    tot += integrate.quad(lambda l: 1.0, 0.0, s, weight="alg", wvar=(t1 - 1, t2 - 1))[0]
    if hi > s:
        tot += integrate.quad(lambda l: l ** (t1 - 1), s, hi, weight="alg", wvar=(t2 - 1, 0.0))[0]
    return tot


def _lemma_k2_n1(t1: float, t2: float, width: float, R: float) -> float:
    st = t1 + t2
    edges = np.concatenate([[0.0], np.arange(1.0, 2 * R, 1.0), [2 * R]])
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        if lo == 0.0 and st < 1:
            f = lambda s: _k_sq_1d(s, width) * _pair_inner(s, t1, t2, R) / max(s, 1e-12) ** (st - 1)
            total += integrate.quad(f, lo, hi, weight="alg", wvar=(st - 1, 0.0))[0]
        else:
            total += integrate.quad(lambda s: _k_sq_1d(s, width) * _pair_inner(s, t1, t2, R), lo, hi)[0]
    return 2.0 * total


def _sphere_area(n: int) -> float:
    return 2 * math.pi ** (n / 2) / math.gamma(n / 2)


def _directions(u: np.ndarray, n: int) -> np.ndarray:
    """Map n - 1 uniform coordinates to uniform points on the unit sphere (n = 2, 3)."""
    if n == 2:
        phi = 2 * math.pi * u[:, 0]
        return np.column_stack([np.cos(phi), np.sin(phi)])
    z = 2 * u[:, 0] - 1
    phi = 2 * math.pi * u[:, 1]
    rho = np.sqrt(np.clip(1 - z * z, 0.0, None))
    return np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])


def _lemma_qmc(n: int, tau: Sequence[float], dom: RectDomain, R: float, points: int, seed: int) -> float:
    """Radial importance sampling: |lam| = R v^(1/tau) makes |lam|^(tau-n) d lam uniform in v."""
    kappa = len(tau)
    u = qmc.Sobol(d=kappa * n, scramble=True, seed=np.random.default_rng(seed)).random(points)
    norm = 1.0
    lam_sum = np.zeros((points, n))
    for i, t in enumerate(tau):
        block = u[:, i * n:(i + 1) * n]
        r = R * block[:, 0] ** (1.0 / t)
        lam_sum += r[:, None] * _directions(block[:, 1:], n)
        norm *= _sphere_area(n) * R ** t / t
    ksq = np.abs(kernel_K_rect(lam_sum, dom)) ** 2
    return float(norm * ksq.mean())


def lemma1_integral(n: int, kappa: int, tau, dom: RectDomain, R_ladder,
                    qmc_points: int = 2 ** 18, seed: int = 0) -> list:
    """Truncated integrals of |K(lam_1 + ... + lam_kappa)|^2 prod |lam_i|^(tau_i - n).

    Every lam_i ranges over the ball of radius R. n = 1 uses adaptive
    quadrature with algebraic endpoint weights (kappa <= 2); other cases use
    scrambled Sobol points with radial importance sampling.
    """
    tau = tuple(float(t) for t in (tau if np.iterable(tau) else (tau,)))
    if len(tau) != kappa or kappa not in (1, 2):
        raise DomainError("need kappa in {1, 2} with one tau per factor")
    if any(t <= 0 for t in tau):
        raise DomainError("tau must be positive")
    if sum(tau) >= n:
        raise DivergenceError(f"sum of tau = {sum(tau)} >= n = {n}")
    if dom.n != n:
        raise DomainError("domain dimension differs from n")
    if n not in (1, 2, 3):
        raise DomainError(f"unsupported dimension {n}")
    out = []
    for R in R_ladder:
        if n == 1 and kappa == 1:
            out.append(_lemma_k1_n1(tau[0], float(dom.widths[0]), float(R)))
        elif n == 1:
            out.append(_lemma_k2_n1(tau[0], tau[1], float(dom.widths[0]), float(R)))
        else:
            out.append(_lemma_qmc(n, tau, dom, float(R), qmc_points, seed))
    return out


def _gauss_smoothed_k_sq(t: float, w: float) -> float:
    """F(t) = int over R of |K(lam)|^2 exp(-t lam^2) for an interval of width w."""
    f = lambda l: (2.0 * (1.0 - math.cos(w * l)) / (l * l) if abs(l) > 1e-6 else w * w * (1 - (w * l) ** 2 / 12)) * math.exp(-t * l * l)
    if t >= 1.0 / 16:
        top = 12.0 / math.sqrt(t)
        edges = np.linspace(0.0, top, int(math.ceil(top * w / math.pi)) + 2)
        return 2.0 * sum(integrate.quad(f, lo, hi, limit=100)[0] for lo, hi in zip(edges[:-1], edges[1:]))
    head = sum(integrate.quad(f, lo, hi, limit=100)[0]
               for lo, hi in zip(np.linspace(0, 1, 5)[:-1], np.linspace(0, 1, 5)[1:]))
    smooth = integrate.quad(lambda l: 2.0 * math.exp(-t * l * l) / (l * l), 1.0, np.inf, limit=200)[0]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = integrate.quad(lambda l: 2.0 * math.exp(-t * l * l) / (l * l), 1.0, np.inf,
                             weight="cos", wvar=w, full_output=1)
    osc = res[0]
    if len(res) > 3 or not math.isfinite(osc):
        # fall back to half-period panels up to where the Gaussian kills the tail
        top = 1.0 + 12.0 / math.sqrt(t)
        x, wt = panel_rule(np.arange(1.0, top + math.pi / w, math.pi / w), 12)
        osc = float(np.dot(wt, 2.0 * np.exp(-t * x * x) * np.cos(w * x) / (x * x)))
    return 2.0 * (head + smooth - osc)


def limit_variance_k1(n: int, alpha: float, dom: RectDomain, quad=None) -> float:
    """c1 int |K(lam)|^2 |lam|^(alpha - n) d lam, through the Gaussian subordination

    |lam|^(-2 beta) = Gamma(beta)^-1 int_0^inf t^(beta-1) exp(-t |lam|^2) dt,
    which turns the n-dimensional integral into a 1-d integral of a product
    of per-axis smoothed kernels. Tails in log t are closed analytically.
    """
    if not 0 < alpha < n:
        raise DivergenceError(f"need 0 < alpha < n, got alpha={alpha}, n={n}")
    widths = [float(w) for w in dom.widths]
    beta = (n - alpha) / 2
    U0, U1 = -30.0, 30.0

    def g(u):
        t = math.exp(u)
        return math.exp(beta * u) * math.prod(_gauss_smoothed_k_sq(t, w) for w in widths)

    body, err = integrate.quad(g, U0, U1, limit=400, epsrel=1e-9)
    lo = math.exp(beta * U0) / beta * math.prod(2 * math.pi * w for w in widths)
    hi = math.prod(w * w * math.sqrt(math.pi) for w in widths) * math.exp(-alpha * U1 / 2) / (alpha / 2)
    if err > 1e-6 * abs(body):
        raise QuadratureError("subordination integral did not converge", residual=err)
    return c1_constant(n, alpha) / math.gamma(beta) * (body + lo + hi)


def direct_space_variance_k1(n: int, alpha: float, dom: RectDomain) -> float:
    """int over the domain twice of |x - y|^-alpha, folded to the lag."""
    if not 0 < alpha < n:
        raise DivergenceError(f"need 0 < alpha < n, got alpha={alpha}, n={n}")
    widths = [float(w) for w in dom.widths]

    def integrand(h):
        r = np.sqrt(np.sum(h * h, axis=-1))
        with np.errstate(divide="ignore"):
            val = r ** (-alpha)
        for l, w in enumerate(widths):
            val = val * 2.0 * (w - h[:, l])
        return val

    return singular_box_integral(integrand, widths, alpha)


@dataclass
class SampleSet:
    values: np.ndarray
    generator: str
    seed: Optional[int] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).ravel()
        if not np.all(np.isfinite(self.values)):
            raise InputError("sample values must be finite")

    def __len__(self):
        return len(self.values)

    def moments(self) -> dict:
        v = self.values
        if len(v) < 2:
            return {"mean": float(v.mean()) if len(v) else math.nan, "var": math.nan, "skew": math.nan}
        return {"mean": float(v.mean()), "var": float(v.var(ddof=1)),
                "skew": float(stats.skew(v))}

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("value\n")
            fh.writelines(f"{x!r}\n" for x in self.values.tolist())


def sample_limit_k1(n: int, alpha: float, dom: RectDomain, nsamples: int, seed: int,
                    variance: Optional[float] = None) -> SampleSet:
    sigma2 = limit_variance_k1(n, alpha, dom) if variance is None else variance
    out = np.empty(nsamples)
    for idx, lo, hi in chunk_ranges(nsamples, SAMPLE_CHUNK):
        out[lo:hi] = stream(seed, 301, idx).standard_normal(hi - lo)
    return SampleSet(math.sqrt(sigma2) * out, f"gaussian_limit;n={n};alpha={alpha!r}", seed)


def default_discretization(n: int) -> SpectralDiscretization:
    return SpectralDiscretization(n, DEFAULT_CUTOFF, DEFAULT_CELLS[n])


def _rosenblatt_cache_key(n, alpha, dom, disc):
    return (n, float(alpha), dom.a, dom.b, disc.n, disc.cutoff, disc.cells_per_axis)


@lru_cache(maxsize=8)
def _rosenblatt_eigs(key):
    n, alpha, a, b, _, cutoff, cells = key
    dom = RectDomain(a, b)
    disc = SpectralDiscretization(n, cutoff, cells)
    mass = disc.masses(n - alpha)
    pos, mir = disc.half_space()
    centers = disc.centers
    order = np.concatenate([pos, mir])
    lam = centers[order]
    s = np.sqrt(mass[order])
    k = c1_constant(n, alpha) * kernel_K_rect(lam[:, None, :] + lam[None, :, :], dom) * np.outer(s, s)
    H = len(pos)
    eye = np.eye(H)
    U = np.block([[eye, eye], [1j * eye, -1j * eye]])
    Mc = 0.5 * (U @ k @ U.T)
    M = Mc.real
    M = 0.5 * (M + M.T)
    try:
        mu = linalg.eigvalsh(M)
    except linalg.LinAlgError as exc:
        raise QuadratureError(f"eigendecomposition failed: {exc}") from exc
    mu.setflags(write=False)
    return mu, float(2.0 * np.sum(np.abs(k) ** 2))


def rosenblatt_eigenvalues(n: int, alpha: float, dom: RectDomain,
                           disc: Optional[SpectralDiscretization] = None) -> np.ndarray:
    """Eigenvalues of the real symmetric form of the discretized double integral.

    Cells of the positive half-space carry W_c = sqrt(m_c) (A_c + i B_c)/sqrt(2)
    and their mirrors the conjugate; m_c integrates |lam|^(alpha-n) over the
    cell. With kernel k(c, d) = c1 K(lam_c + lam_d) sqrt(m_c m_d), the form
    sum k W_c W_d equals z^T M z for z = (A, B) and M = Re(U k U^T) / 2.
    """
    if not 0 < alpha < n / 2:
        raise DivergenceError(f"rank-2 limit needs 0 < alpha < n/2, got alpha={alpha}, n={n}")
    disc = disc or default_discretization(n)
    if disc.n != n or dom.n != n:
        raise DomainError("discretization, domain and n disagree")
    return _rosenblatt_eigs(_rosenblatt_cache_key(n, alpha, dom, disc))[0]


def sample_limit_k2(n: int, alpha: float, dom: RectDomain,
                    disc: Optional[SpectralDiscretization], nsamples: int, seed: int) -> SampleSet:
    mu = rosenblatt_eigenvalues(n, alpha, dom, disc)
    out = np.empty(nsamples)
    step = max(1, min(SAMPLE_CHUNK, 2_000_000 // max(1, len(mu))))
    for idx, lo, hi in chunk_ranges(nsamples, step):
        z = stream(seed, 302, idx).standard_normal((hi - lo, len(mu)))
        out[lo:hi] = (z * z - 1.0) @ mu
    return SampleSet(out, f"rosenblatt_eigen;n={n};alpha={alpha!r}", seed)


def ks_distance(s1, s2) -> float:
    """Two-sample Kolmogorov-Smirnov statistic sup |F1 - F2|."""
    x1 = np.sort(np.asarray(getattr(s1, "values", s1), dtype=float).ravel())
    x2 = np.sort(np.asarray(getattr(s2, "values", s2), dtype=float).ravel())
    if x1.size == 0 or x2.size == 0:
        raise InputError("both samples must be nonempty")
    pooled = np.concatenate([x1, x2])
    f1 = np.searchsorted(x1, pooled, side="right") / x1.size
    f2 = np.searchsorted(x2, pooled, side="right") / x2.size
    return float(np.max(np.abs(f1 - f2)))


STUDY_COLUMNS = ("T", "reps", "ks", "mean", "var", "skew", "seed")


def _lattice_field(model, dom: RectDomain, T: float, reps: int, seed: int, workers: int):
    lo, hi = dom.lattice_bounds(T)
    grid = GridSpec.lattice(lo, hi)
    return simulate_field_exact(model, grid, seed, reps=reps, workers=workers)


def convergence_study(kind: str, model, dom: RectDomain, T_ladder, reps: int, seed: int,
                      limit_samples: int = 20000, G: Optional[TestFunction] = None,
                      disc: Optional[SpectralDiscretization] = None, workers: int = 1,
                      return_samples: bool = False):
    """KS distance between normalized lattice functionals and their limit along T.

    For each T the field is simulated exactly on the integer lattice inside
    T * dom; the functional is sum H_kappa(xi(i)) normalized by
    T^(n - kappa alpha/2) L(T)^(kappa/2). ``theorem1_demo`` instead compares
    the standardized functional of G with that of its leading Hermite term.
    Returns a list of row dicts with keys STUDY_COLUMNS.
    """
    if kind not in ("k1_gaussian", "k2_rosenblatt", "theorem1_demo"):
        raise DomainError(f"unknown study kind {kind!r}")
    n, alpha = model.n, model.alpha
    if dom.n != n:
        raise DomainError("domain dimension differs from the model")
    if kind == "theorem1_demo":
        G = G or TestFunction("polynomial", coeffs=(0.0, 0.0, 1.0, 0.1))
        kappa = hermite_rank(G)
    else:
        kappa = 1 if kind == "k1_gaussian" else 2
    if not alpha * kappa < n:
        raise LongRangeViolationError(
            f"long-range condition alpha*kappa < n fails: alpha*kappa = {alpha * kappa}, n = {n}")
    rows, kept = [], []
    if reps <= 0:
        return (rows, kept) if return_samples else rows
    limit = None
    if kind == "k1_gaussian":
        limit = sample_limit_k1(n, alpha, dom, limit_samples, derive(seed, 0))
    elif kind == "k2_rosenblatt":
        limit = sample_limit_k2(n, alpha, dom, disc, limit_samples, derive(seed, 0))
    for k, T in enumerate(T_ladder):
        fseed = derive(seed, 1, k)
        fs = _lattice_field(model, dom, T, reps, fseed, workers)
        flat = fs.flat()
        if kind == "theorem1_demo":
            coeffs = exact_coefficients(G, kappa)
            if coeffs is None:
                coeffs = hermite_coefficients(G, max(kappa, 10)).coeffs
            kr = (np.asarray(G(flat)) - coeffs[0]).sum(axis=1)
            kk = coeffs[kappa] / math.factorial(kappa) * np.asarray(hermite_eval(kappa, flat)).sum(axis=1)
            a = kr / kr.std(ddof=1)
            b = kk / kk.std(ddof=1)
            ks = ks_distance(a, b)
            sample = SampleSet(a, "theorem1_demo", fseed)
        else:
            d = T ** (n - kappa * alpha / 2) * float(model.L(T)) ** (kappa / 2)
            vals = np.asarray(hermite_eval(kappa, flat)).sum(axis=1) / d
            sample = SampleSet(vals, kind, fseed)
            ks = ks_distance(sample, limit)
        mom = sample.moments()
        rows.append({"T": T, "reps": reps, "ks": ks, "mean": mom["mean"], "var": mom["var"],
                     "skew": mom["skew"], "seed": fseed})
        kept.append(sample)
    return (rows, kept) if return_samples else rows
