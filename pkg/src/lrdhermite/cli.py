"""Configuration-driven experiment runner.

Each experiment is one INI file with an ``[experiment]`` section naming its
``kind`` plus optional ``[model]``, ``[weight]``, ``[domain]``,
``[quadrature]`` and ``[test_function*]`` sections. Every run writes CSV
tables and a ``manifest.json`` with checksums into the output directory.

Exit codes: 0 success, 2 configuration or validation failure, 1 runtime error.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import datetime
import hashlib
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .covmodels import CovarianceModel
from .errors import ConfigError, LRDError, ValidationError
from .fieldsim import (MAX_EXACT_POINTS, GridSpec, empirical_covariance, empirical_mean,
                       simulate_field_exact, simulate_field_spectral,
                       spectral_lag_covariance)
from .functionals import WeightFunction, theorem1_pair
from .hermite import (MAX_ORDER, TestFunction, gauss_hermite_rule, hermite_all,
                      hermite_coefficients, hermite_rank, orthogonality_mc_check,
                      orthogonality_target)
from .limitdist import (DEFAULT_CELLS, DEFAULT_CUTOFF, STUDY_COLUMNS, RectDomain, convergence_study,
                        direct_space_variance_k1, kernel_K_numeric, kernel_K_rect,
                        lemma1_integral, limit_variance_k1, rosenblatt_eigenvalues,
                        sample_limit_k1, sample_limit_k2)
from .msd import (MsdConfig, MsdReport, QuadSpec, d1_term, l12_constant, monte_carlo_gap,
                  total_gap)
from .rng import derive, stream
from .spectral import SpectralDiscretization

EXPERIMENTS = ("hermite-coeffs", "field-validate", "msd-ratio", "l12", "kernel-check",
               "limit-sample", "convergence-study", "theorem1-demo")


# ---------------------------------------------------------------- parsing

def _parser_obj() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keys are case-sensitive (T, L_family)
    return cp


def load_config(path) -> configparser.ConfigParser:
    cp = _parser_obj()
    try:
        with open(path) as fh:
            cp.read_file(fh, source=str(path))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    return cp


def parse_config_text(text: str) -> configparser.ConfigParser:
    cp = _parser_obj()
    try:
        cp.read_string(text, source="<string>")
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    return cp


class Params:
    """Typed access to one config section; bad values raise ConfigError naming the field."""

    def __init__(self, cp: configparser.ConfigParser, section: str):
        self.section = section
        self.data = dict(cp[section]) if cp.has_section(section) else {}
        self.used = set()

    def __contains__(self, key):
        return key in self.data

    def _raw(self, key, default):
        self.used.add(key)
        if key not in self.data:
            if default is _REQUIRED:
                raise ConfigError(f"[{self.section}] {key}: missing required field")
            return default
        return self.data[key].strip()

    def _conv(self, key, raw, fn, what):
        try:
            return fn(raw)
        except (TypeError, ValueError):
            raise ConfigError(f"[{self.section}] {key}: cannot parse {raw!r} as {what}") from None

    def str(self, key, default=None):
        return self._raw(key, default if default is not None else _REQUIRED)

    def int(self, key, default=None):
        raw = self._raw(key, _REQUIRED if default is None else default)
        return raw if not isinstance(raw, str) else self._conv(key, raw, int, "integer")

    def float(self, key, default=None):
        raw = self._raw(key, _REQUIRED if default is None else default)
        return raw if not isinstance(raw, str) else self._conv(key, raw, float, "number")

    def bool(self, key, default=False):
        raw = self._raw(key, default)
        if not isinstance(raw, str):
            return raw
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"[{self.section}] {key}: cannot parse {raw!r} as boolean")

    def floats(self, key, default=None):
        raw = self._raw(key, _REQUIRED if default is None else default)
        if not isinstance(raw, str):
            return tuple(raw)
        return self._conv(key, raw, lambda s: tuple(float(v) for v in s.split(",") if v.strip()),
                          "comma-separated numbers")

    def ints(self, key, default=None):
        raw = self._raw(key, _REQUIRED if default is None else default)
        if not isinstance(raw, str):
            return tuple(raw)
        return self._conv(key, raw, lambda s: tuple(int(v) for v in s.split(",") if v.strip()),
                          "comma-separated integers")

    def groups(self, key, default=""):
        """Semicolon-separated groups of colon/comma-separated numbers."""
        raw = self._raw(key, default)
        if not raw:
            return []

        def conv(s):
            return [tuple(tuple(float(x) for x in part.split(",")) for part in grp.split(":"))
                    for grp in s.split(";") if grp.strip()]

        return self._conv(key, raw, conv, "groups like '1:0.5;2:1.0'")


_REQUIRED = object()


def _extents(raw: tuple, n: int) -> list:
    return [t if len(t) == n else (t[0],) * n for t in raw]


def _ladder(p: Params, key: str, n: int) -> list:
    """T ladder: entries separated by commas, per-axis extents joined by 'x'."""
    raw = p.str(key)
    try:
        ladder = [tuple(float(v) for v in item.split("x")) for item in raw.split(",") if item.strip()]
    except ValueError:
        raise ConfigError(f"[{p.section}] {key}: cannot parse {raw!r} as a ladder like '2,4,8' or '2x3'") from None
    return _extents(ladder, n)


# ------------------------------------------------------------ validation

class Checks:
    """Collects named precondition violations while building experiment objects."""

    def __init__(self):
        self.violations = []

    def attempt(self, label: str, fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError:
            raise
        except (LRDError, ValueError, KeyError, TypeError) as exc:
            self.violations.append(f"{label}: {exc}")
            return None

    def require(self, ok: bool, message: str):
        if not ok:
            self.violations.append(message)
        return ok


def _model(cp, chk: Checks):
    rec = dict(cp["model"]) if cp.has_section("model") else {}
    if "n" not in rec:
        raise ConfigError("[model] n: missing required field")
    return chk.attempt("model", CovarianceModel.from_record, rec)


def _weight(cp, n: int, chk: Checks):
    p = Params(cp, "weight")
    rec = dict(p.data)
    rec.setdefault("n", str(n))
    return chk.attempt("weight", WeightFunction.from_record, rec, n)


def _domain(cp, n: int, chk: Checks):
    p = Params(cp, "domain")
    a = p.floats("a", (-1.0,) * n)
    b = p.floats("b", (1.0,) * n)
    if len(a) == 1:
        a = a * n
    if len(b) == 1:
        b = b * n
    dom = chk.attempt("domain (need a_l < 0 < b_l on every axis)", RectDomain, a, b)
    if dom is not None:
        chk.require(dom.n == n, f"domain: dimension {dom.n} differs from n = {n}")
    return dom


def _test_functions(cp, chk: Checks):
    out = []
    for sec in cp.sections():
        if sec.startswith("test_function"):
            rec = dict(cp[sec])
            if "family" not in rec:
                raise ConfigError(f"[{sec}] family: missing required field")
            G = chk.attempt(sec, TestFunction.from_record, rec)
            if G is not None:
                out.append((sec, G))
    return out


def _quad(cp, chk: Checks):
    p = Params(cp, "quadrature")
    return chk.attempt("quadrature", QuadSpec, p.int("points_per_unit", 4), p.int("depth", 4))


def _order_guard(chk: Checks, jmax: int, label: str = "jmax"):
    chk.require(jmax <= MAX_ORDER,
                f"order guard: {label} = {jmax} exceeds the maximum Hermite order {MAX_ORDER}")


def _long_range(chk: Checks, alpha: float, m: int, n: int):
    return chk.require(0 < alpha * m < n,
                       f"long-range condition alpha*m < n fails: alpha*m = {alpha * m}, n = {n}")


def _lattice_size(dom: RectDomain, T: float) -> int:
    lo, hi = dom.lattice_bounds(T)
    return math.prod(h - l + 1 for l, h in zip(lo, hi))


# ------------------------------------------------------------- experiments
# Each planner validates its config and returns a runner taking (out, seed, workers).

def plan_hermite_coeffs(cp, exp: Params, chk: Checks):
    jmax = exp.int("jmax", 10)
    nodes = exp.int("nodes", 200)
    gram = exp.int("gram_order", 0)
    funcs = _test_functions(cp, chk)
    _order_guard(chk, jmax)
    _order_guard(chk, gram, "gram_order")
    chk.require(nodes >= 4 * max(jmax, gram),
                f"quadrature nodes: need at least 4*jmax = {4 * max(jmax, gram)}, got {nodes}")
    mc_reps = exp.int("mc_reps", 0)
    mc_alphas = exp.floats("mc_alphas", ())
    mc_lags = exp.floats("mc_lags", ())
    mc_orders = exp.ints("mc_orders", (1, 2, 3))
    models = []
    if mc_reps:
        chk.require(mc_reps >= 2, "mc_reps: need at least two replicates")
        chk.require(max(mc_orders) <= 6, "mc_orders: orthogonality check supports orders up to 6")
        base = dict(cp["model"]) if cp.has_section("model") else {"n": "2", "family": "cauchy"}
        for a in mc_alphas or (float(base.get("alpha", 1.0)),):
            rec = dict(base, alpha=repr(a))
            rec.pop("L_alpha", None)
            m = chk.attempt(f"model alpha={a}", CovarianceModel.from_record, rec)
            if m is not None:
                models.append(m)

    def run(out, seed, workers):
        summary = []
        coeff_rows = []
        for name, G in funcs:
            exp_ = hermite_coefficients(G, jmax, nodes)
            coeff_rows += [(name, j, c) for j, c in exp_.rows()]
            try:
                rank = hermite_rank(G, jmax, nodes=nodes)
            except LRDError:
                rank = ""
            summary.append((name, G.family, jmax, exp_.second_moment, exp_.parseval_sum(),
                            abs(exp_.parseval_sum() - exp_.second_moment), rank))
        if funcs:
            out.table("coefficients.csv", ("function", "j", "coefficient"), coeff_rows)
            out.table("summary.csv", ("function", "family", "jmax", "second_moment",
                                      "parseval_sum", "parseval_gap", "rank"), summary)
        if gram:
            x, w = gauss_hermite_rule(nodes)
            H = hermite_all(gram, x)
            G_ = (H * w) @ H.T
            rows = []
            for i in range(gram + 1):
                for j in range(gram + 1):
                    target = float(math.factorial(i)) if i == j else 0.0
                    rows.append((i, j, G_[i, j], target, abs(G_[i, j] - target)))
            out.table("gram.csv", ("i", "j", "value", "target", "abs_error"), rows)
        if mc_reps:
            rows = []
            for k, model in enumerate(models):
                for r in mc_lags:
                    for m1 in mc_orders:
                        for m2 in mc_orders:
                            s = derive(seed, k, int(1000 * r), m1, m2)
                            est, se = orthogonality_mc_check(model, m1, m2, r, mc_reps, s)
                            tgt = orthogonality_target(model, m1, m2, r)
                            rows.append((model.alpha, r, m1, m2, est, se, tgt, abs(est - tgt) / se))
            out.table("orthogonality_mc.csv", ("alpha", "r", "m1", "m2", "estimate", "stderr",
                                               "target", "z"), rows)

    return run


def plan_field_validate(cp, exp: Params, chk: Checks):
    model = _model(cp, chk)
    method = exp.str("method", "exact")
    counts = exp.ints("counts", (16,) * (model.n if model else 1))
    reps = exp.int("reps", 200)
    lags = exp.groups("lags", "0")
    cutoff = exp.float("cutoff", 40.0)
    cells = exp.int("cells_per_axis", 64)
    chk.require(method in ("exact", "spectral"), f"method: unknown {method!r} (exact or spectral)")
    chk.require(reps >= 30, "reps: need at least 30 replicates")
    grid = chk.attempt("grid", GridSpec, counts)
    if model is None or grid is None:
        return None
    chk.require(grid.n == model.n, "grid: dimension differs from the model")
    if method == "exact":
        chk.require(grid.size <= MAX_EXACT_POINTS,
                    f"grid size guard: {grid.size} points exceed {MAX_EXACT_POINTS}")
    else:
        chk.require(cells >= 16, "cells_per_axis: must be at least 16")
        chk.attempt("spectral model", model.spectral)
    lag_vecs = []
    for g in lags:
        lag = tuple(int(v) for v in g[0])
        if len(lag) == 1:
            lag = lag * grid.n
        if chk.require(len(lag) == grid.n and all(abs(l) < c for l, c in zip(lag, grid.counts)),
                       f"lag {lag}: does not fit in grid {grid.counts}"):
            lag_vecs.append(lag)

    def run(out, seed, workers):
        if method == "exact":
            fs = simulate_field_exact(model, grid, seed, reps=reps, workers=workers)
        else:
            fs = simulate_field_spectral(model.spectral(), grid, seed, cutoff, cells, reps, workers)
        rows = []
        for lag in lag_vecs:
            est, se = empirical_covariance(fs, lag)
            if method == "exact":
                tgt = float(model.cov(math.sqrt(sum(l * l for l in lag))))
            else:
                tgt = spectral_lag_covariance(model.spectral(), cutoff, cells, lag)
            rows.append((",".join(map(str, lag)), est, se, tgt, (est - tgt) / se if se > 0 else 0.0))
        out.table("covariance.csv", ("lag", "empirical", "stderr", "target", "z"), rows)
        mean, mse = empirical_mean(fs)
        out.table("mean.csv", ("method", "reps", "mean", "stderr"), [(method, reps, mean, mse)])

    return run


def plan_msd_ratio(cp, exp: Params, chk: Checks):
    model = _model(cp, chk)
    if model is None:
        return None
    n = model.n
    m = exp.int("m", 1)
    g = _weight(cp, n, chk)
    quad = _quad(cp, chk)
    ladder = _ladder(exp, "T", n)
    mc_reps = exp.int("mc_reps", 0)
    mc_q = exp.int("mc_q", 8)
    if not _long_range(chk, model.alpha, m, n) or g is None or quad is None:
        return None
    cfgs = [c for c in (chk.attempt(f"T={T}", MsdConfig, n, m, model, g, T, quad) for T in ladder)
            if c is not None]
    if mc_reps:
        chk.require(mc_reps >= 2, "mc_reps: need at least two replicates")
        for T in ladder:
            chk.require(all(abs(mc_q * t - round(mc_q * t)) < 1e-9 for t in T),
                        f"T={T}: mc_q * T_l must be integers")
            size = math.prod(int(round(2 * mc_q * t)) for t in T)
            chk.require(size <= MAX_EXACT_POINTS,
                        f"T={T}: Monte Carlo grid of {size} points exceeds {MAX_EXACT_POINTS}")

    def run(out, seed, workers):
        cols = MsdReport.COLUMNS + (("mc_estimate", "mc_stderr") if mc_reps else ())
        rows = []
        for k, cfg in enumerate(cfgs):
            rep = total_gap(cfg)
            row = rep.row()
            if mc_reps:
                row += list(monte_carlo_gap(cfg, mc_reps, mc_q, derive(seed, k), workers))
            rows.append(row)
        out.table("msd.csv", cols, rows)

    return run


def plan_l12(cp, exp: Params, chk: Checks):
    n = exp.int("n")
    m = exp.int("m", 1)
    alpha = exp.float("alpha")
    a = exp.floats("a", (1.0,))
    if len(a) == 1:
        a = a * n
    p = exp.int("p", 16)
    depth = exp.int("depth", 40)
    g = _weight(cp, n, chk)
    chk.require(0 < alpha * m < n, f"long-range condition alpha*m < n fails: alpha*m = {alpha * m}, n = {n}")
    chk.require(len(a) == n and all(0 < v <= 1 for v in a), "a: limits a_l must lie in (0, 1]")
    cfgs = []
    if "T" in exp:
        model = _model(cp, chk)
        quad = _quad(cp, chk)
        if model is not None and g is not None and quad is not None:
            chk.require(model.n == n and abs(model.alpha - alpha) < 1e-15,
                        "model: n and alpha must match the experiment")
            cfgs = [chk.attempt(f"T={T}", MsdConfig, n, m, model, g, T, quad)
                    for T in _ladder(exp, "T", n)]
            cfgs = [c for c in cfgs if c is not None]

    def run(out, seed, workers):
        val = l12_constant(n, m, alpha, g, a, p=p, depth=depth)
        out.table("l12.csv", ("n", "m", "alpha", "a", "g", "l12"),
                  [(n, m, alpha, ",".join(map(repr, a)), g.family, val)])
        if cfgs:
            rows = []
            for cfg in cfgs:
                Tt = cfg.Ttilde
                d1 = d1_term(cfg, cfg.quad.doubled())
                scaled = d1 / (math.factorial(m) * Tt ** (2 * n - m * alpha) * g.at_diagonal(Tt) ** 2)
                rows.append((Tt, d1, scaled, val, abs(scaled - val)))
            out.table("ladder.csv", ("T", "d1", "scaled", "l12", "gap"), rows)

    return run


def plan_kernel_check(cp, exp: Params, chk: Checks):
    n = exp.int("n", 1)
    points = exp.int("points", 100)
    box = exp.float("box", 10.0)
    p = exp.int("p", 16)
    panel = exp.float("panel_width", 0.5)
    dom = _domain(cp, n, chk) if points else None
    chk.require(n in (1, 2, 3), f"n: unsupported dimension {n}")
    dual = exp.groups("dual_cases")
    for case in dual:
        dn, da = int(case[0][0]), case[1][0]
        chk.require(0 < da < dn, f"dual case {dn}:{da}: need 0 < alpha < n")
    lemma = exp.groups("lemma_cases")
    radii = exp.floats("lemma_R", (10.0, 20.0, 40.0, 80.0))
    for case in lemma:
        ln, lk, tau = int(case[0][0]), int(case[1][0]), case[2]
        chk.require(lk in (1, 2) and len(tau) == lk, "lemma case: need kappa in {1, 2} with one tau each")
        chk.require(sum(tau) < ln, f"lemma case: sum of tau must be below n = {ln}")

    def run(out, seed, workers):
        if points:
            x = stream(seed, 401).uniform(-box, box, (points, n))
            kp = np.atleast_1d(kernel_K_rect(x, dom))
            kn = np.atleast_1d(kernel_K_numeric(x, dom, p=p, panel_width=panel))
            rows = [(",".join(repr(float(v)) for v in xi), a.real, a.imag, b.real, b.imag, abs(a - b))
                    for xi, a, b in zip(x, kp, kn)]
            out.table("kernel.csv", ("x", "product_re", "product_im", "numeric_re", "numeric_im",
                                     "discrepancy"), rows)
            origin = abs(kernel_K_numeric(np.zeros(n), dom, p=p, panel_width=panel) - dom.volume)
            sym = float(np.max(np.abs(np.atleast_1d(kernel_K_rect(-x, dom)) - np.conj(kp))))
            out.table("kernel_summary.csv", ("n", "points", "max_discrepancy", "origin_error",
                                             "symmetry_error"),
                      [(n, points, float(np.max(np.abs(kp - kn))), origin, sym)])
        if dual:
            rows = []
            for case in dual:
                dn, da = int(case[0][0]), case[1][0]
                d = RectDomain.symmetric(dn)
                s = limit_variance_k1(dn, da, d)
                t = direct_space_variance_k1(dn, da, d)
                rows.append((dn, da, s, t, abs(s - t) / t))
            out.table("dual_variance.csv", ("n", "alpha", "spectral", "direct", "rel_gap"), rows)
        if lemma:
            rows = []
            for k, case in enumerate(lemma):
                ln, lk, tau = int(case[0][0]), int(case[1][0]), case[2]
                vals = lemma1_integral(ln, lk, tau, RectDomain.symmetric(ln), radii,
                                       seed=derive(seed, 2, k))
                prev_inc = None
                for i, (R, v) in enumerate(zip(radii, vals)):
                    inc = v - vals[i - 1] if i else ""
                    shrink = prev_inc / inc if i > 1 and inc else ""
                    rows.append((ln, lk, ",".join(map(repr, tau)), R, v, inc, shrink))
                    prev_inc = inc if i else None
            out.table("lemma.csv", ("n", "kappa", "tau", "R", "value", "increment",
                                    "shrink_factor"), rows)

    return run


def _disc(exp: Params, n: int, chk: Checks):
    cutoff = exp.float("cutoff", DEFAULT_CUTOFF)
    cells = exp.int("cells_per_axis", DEFAULT_CELLS.get(n, 16))
    return chk.attempt("spectral discretization", SpectralDiscretization, n, cutoff, cells)


def plan_limit_sample(cp, exp: Params, chk: Checks):
    kappa = exp.int("kappa", 1)
    n = exp.int("n", 1)
    alpha = exp.float("alpha")
    nsamples = exp.int("nsamples", 10000)
    dom = _domain(cp, n, chk)
    chk.require(kappa in (1, 2), "kappa: samplers exist for kappa in {1, 2}")
    _long_range(chk, alpha, kappa, n)
    chk.require(nsamples >= 2, "nsamples: need at least two samples")
    disc = _disc(exp, n, chk) if kappa == 2 else None

    def run(out, seed, workers):
        if kappa == 1:
            var = limit_variance_k1(n, alpha, dom)
            s = sample_limit_k1(n, alpha, dom, nsamples, seed, variance=var)
            third = 0.0
        else:
            mu = rosenblatt_eigenvalues(n, alpha, dom, disc)
            s = sample_limit_k2(n, alpha, dom, disc, nsamples, seed)
            var, third = 2 * float(np.sum(mu ** 2)), 8 * float(np.sum(mu ** 3))
        out.table("samples.csv", ("value",), [(v,) for v in s.values])
        mom = s.moments()
        out.table("moments.csv", ("kappa", "n", "alpha", "nsamples", "mean", "var", "skew",
                                  "theory_var", "theory_third_moment"),
                  [(kappa, n, alpha, nsamples, mom["mean"], mom["var"], mom["skew"], var, third)])

    return run


def _study_checks(exp, chk, model, dom, kappa, long_range=True):
    ladder = exp.floats("T")
    reps = exp.int("reps", 2000)
    chk.require(reps >= 0, "reps: must be nonnegative")
    if model is not None and long_range:
        _long_range(chk, model.alpha, kappa, model.n)
    if dom is not None:
        for T in ladder:
            size = _lattice_size(dom, T)
            chk.require(size <= MAX_EXACT_POINTS,
                        f"T={T}: lattice of {size} points exceeds the exact limit {MAX_EXACT_POINTS}")
    return ladder, reps


def plan_convergence_study(cp, exp: Params, chk: Checks):
    model = _model(cp, chk)
    if model is None:
        return None
    study = exp.str("study", "k1_gaussian")
    kappa = {"k1_gaussian": 1, "k2_rosenblatt": 2}.get(study)
    chk.require(kappa is not None, f"study: unknown {study!r} (k1_gaussian or k2_rosenblatt)")
    dom = _domain(cp, model.n, chk)
    ladder, reps = _study_checks(exp, chk, model, dom, kappa or 1)
    limit_samples = exp.int("limit_samples", 20000)
    disc = _disc(exp, model.n, chk) if kappa == 2 else None

    def run(out, seed, workers):
        rows = convergence_study(study, model, dom, ladder, reps, seed, limit_samples,
                                 disc=disc, workers=workers)
        out.table("convergence.csv", STUDY_COLUMNS, [[r[c] for c in STUDY_COLUMNS] for r in rows])

    return run


def plan_theorem1_demo(cp, exp: Params, chk: Checks):
    model = _model(cp, chk)
    funcs = _test_functions(cp, chk)
    chk.require(len(funcs) == 1, "test_function: exactly one test function section is needed")
    if model is None or len(funcs) != 1:
        return None
    G = funcs[0][1]
    kappa = chk.attempt("Hermite rank", hermite_rank, G)
    dom = _domain(cp, model.n, chk)
    do_study = exp.bool("study", True)
    pair_reps = exp.int("pair_reps", 50)
    # the realization-wise pair check needs no long-range condition, the KS study does
    ladder, reps = _study_checks(exp, chk, model, dom, kappa or 1, long_range=do_study)
    chk.require(pair_reps >= 1, "pair_reps: need at least one replicate")

    def run(out, seed, workers):
        rows = []
        for k, T in enumerate(ladder):
            lo, hi = dom.lattice_bounds(T)
            fs = simulate_field_exact(model, GridSpec.lattice(lo, hi), derive(seed, 2, k),
                                      reps=pair_reps, workers=workers)
            kr, kk = theorem1_pair(G, kappa, fs)
            rows.append((T, pair_reps, float(np.max(np.abs(kr - kk))), float(np.max(np.abs(kr)))))
        out.table("pair_gap.csv", ("T", "reps", "max_abs_diff", "max_abs_value"), rows)
        if do_study:
            res = convergence_study("theorem1_demo", model, dom, ladder, reps, seed, G=G,
                                    workers=workers)
            out.table("convergence.csv", STUDY_COLUMNS, [[r[c] for c in STUDY_COLUMNS] for r in res])

    return run


PLANNERS = {
    "hermite-coeffs": plan_hermite_coeffs,
    "field-validate": plan_field_validate,
    "msd-ratio": plan_msd_ratio,
    "l12": plan_l12,
    "kernel-check": plan_kernel_check,
    "limit-sample": plan_limit_sample,
    "convergence-study": plan_convergence_study,
    "theorem1-demo": plan_theorem1_demo,
}


def config_kind(cp) -> str:
    return cp["experiment"].get("kind", "").strip() if cp.has_section("experiment") else ""


def plan(cp, kind: str = None):
    """Build the runner for a config; returns (runner, violations)."""
    declared = config_kind(cp)
    kind = kind or declared
    chk = Checks()
    if kind not in PLANNERS:
        raise ConfigError(f"[experiment] kind: unknown experiment {kind!r}; expected one of {', '.join(EXPERIMENTS)}")
    if declared and declared != kind:
        return None, [f"experiment kind {declared!r} does not match subcommand {kind!r}"]
    exp = Params(cp, "experiment")
    exp.used.update({"kind", "seed"})
    runner = PLANNERS[kind](cp, exp, chk)
    unknown = sorted(set(exp.data) - exp.used)
    if unknown:
        chk.violations.append(f"[experiment]: unknown fields {', '.join(unknown)}")
    if runner is None and not chk.violations:
        chk.violations.append("configuration is incomplete")
    return runner, chk.violations


def validate(cp, kind: str = None) -> list:
    """Violated preconditions of a parsed config; empty iff a run would start."""
    return plan(cp, kind)[1]


# ----------------------------------------------------------------- output

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


class OutputDir:
    """Writes tables, tracks them for the manifest, and removes them on failure."""

    def __init__(self, path, json_mirror: bool = False):
        self.path = Path(path)
        self.json_mirror = json_mirror
        self.files = []
        self.created = not self.path.exists()

    def _write(self, name: str, text: str):
        self.path.mkdir(parents=True, exist_ok=True)
        target = self.path / name
        target.write_text(text)
        self.files.append(target)

    def table(self, name: str, columns, rows):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        body = [[_fmt(v) for v in row] for row in rows]
        w.writerows(body)
        self._write(name, buf.getvalue())
        if self.json_mirror:
            recs = [dict(zip(columns, row)) for row in body]
            self._write(Path(name).with_suffix(".json").name, json.dumps(recs, indent=1) + "\n")

    def manifest(self, cp, kind, seed, workers, started, finished):
        outputs = {f.name: hashlib.sha256(f.read_bytes()).hexdigest() for f in self.files}
        doc = {"tool": "lrdhermite", "version": __version__, "experiment": kind, "seed": seed,
               "workers": workers, "started": started, "finished": finished,
               "config": {s: dict(cp[s]) for s in cp.sections()}, "outputs": outputs}
        self._write("manifest.json", json.dumps(doc, indent=1, sort_keys=True) + "\n")

    def discard(self):
        for f in self.files:
            f.unlink(missing_ok=True)
        if self.created and self.path.exists() and not any(self.path.iterdir()):
            self.path.rmdir()


def run(cp, kind: str, out_dir, seed: int = None, workers: int = 1, json_mirror: bool = False) -> Path:
    """Validate and execute one experiment; returns the manifest path."""
    runner, violations = plan(cp, kind)
    if violations:
        raise ValidationError(violations)
    if seed is None:
        seed = Params(cp, "experiment").int("seed", 0)
    if not 0 <= seed < 2 ** 64:
        raise ValidationError(["seed: must be an unsigned 64-bit integer"])
    out = OutputDir(out_dir, json_mirror)
    started = datetime.datetime.now(datetime.timezone.utc).isoformat()
    try:
        runner(out, seed, workers)
        finished = datetime.datetime.now(datetime.timezone.utc).isoformat()
        out.manifest(cp, kind, seed, workers, started, finished)
    except BaseException:
        out.discard()
        raise
    return out.path / "manifest.json"


# -------------------------------------------------------------------- main

def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lrdhermite", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS + ("validate",):
        p = sub.add_parser(name)
        p.add_argument("--config", required=name == "validate", help="INI experiment file")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--workers", type=int, default=1, help="parallel workers (outputs do not depend on it)")
        p.add_argument("--out", default=None, help="output directory (default results/<kind>)")
        p.add_argument("--json", action="store_true", help="write JSON mirrors of each CSV")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cp = load_config(args.config) if args.config else parse_config_text(
            f"[experiment]\nkind = {args.command}\n")
        if args.command == "validate":
            kind = config_kind(cp)
            violations = validate(cp, kind or None)
            for v in violations:
                print(f"violation: {v}", file=sys.stderr)
            if violations:
                return 2
            print(f"ok: {kind} config is valid")
            return 0
        if args.workers < 1:
            raise ValidationError(["workers: must be at least 1"])
        out = args.out or str(Path("results") / args.command)
        manifest = run(cp, args.command, out, args.seed, args.workers, args.json)
        print(f"wrote {manifest}")
        return 0
    except ValidationError as exc:
        for v in exc.violations:
            print(f"violation: {v}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (LRDError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"error in {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
