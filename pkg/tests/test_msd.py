import math

import numpy as np
import pytest
from scipy import integrate

from lrdhermite.covmodels import CovarianceModel
from lrdhermite.errors import DivergenceError, DomainError, LongRangeViolationError
from lrdhermite.functionals import WeightFunction
from lrdhermite.msd import (MsdConfig, QuadSpec, d1_term, d2_term, d3_term, l12_constant,
                            monte_carlo_gap, total_gap)

UNIT1 = CovarianceModel(1, 0.5, "unit")
UNIT2 = CovarianceModel(2, 0.5, "unit")
C1 = WeightFunction("constant", 1)
C2 = WeightFunction("constant", 2)


class SquaredCauchy:
    """Cauchy model with B replaced by B^2 (same alpha bookkeeping halved)."""

    def __init__(self, base):
        self.base, self.n, self.alpha, self.L = base, base.n, base.alpha, base.L

    def cov(self, r):
        return np.asarray(self.base.cov(r)) ** 2


def brute_d1(model, m, g, T):
    # 2n-dimensional oracle for n = 1 by scipy dblquad
    f = lambda y, x: g(np.array([x])) * g(np.array([y])) * model.cov(abs(x - y)) ** m
    return math.factorial(m) * integrate.dblquad(f, 0, T, 0, T, epsabs=1e-11, epsrel=1e-11)[0]


def brute_d2(model, m, g, T):
    tot = 0.0
    for i in range(int(math.floor(T))):
        f = lambda x: g(np.array([x])) * g(np.array([float(i)])) * model.cov(abs(x - i)) ** m
        tot += integrate.quad(f, 0, T, points=[i], epsabs=1e-12, limit=200)[0]
    return -2 * math.factorial(m) * tot


def test_degenerate_unit_examples():
    cfg = MsdConfig(1, 1, UNIT1, C1, (1,))
    assert d1_term(cfg) == pytest.approx(1.0, abs=1e-13)
    cfg = MsdConfig(1, 1, UNIT1, C1, (2,))
    assert d2_term(cfg) == pytest.approx(-8.0, abs=1e-12)
    for T in (2, 3):
        r = total_gap(MsdConfig(2, 1, UNIT2, C2, (T, T)))
        assert r.d1 == pytest.approx(T ** 4, rel=1e-12)
        assert r.d2 == pytest.approx(-2 * T ** 4, rel=1e-12)
        assert r.d3 == pytest.approx(T ** 4, rel=1e-12)
        assert abs(r.total) < 1e-9


def test_d3_small_case():
    m = CovarianceModel.cauchy(1, 0.7)
    b = m.cov(1.0)
    assert d3_term(MsdConfig(1, 1, m, C1, (2,))) == pytest.approx(2 + 2 * b, rel=1e-15)


@pytest.mark.parametrize("g", [C1, WeightFunction("power", 1, mu=(1.0,)),
                               WeightFunction("power_log", 1, mu=(math.e,))])
@pytest.mark.parametrize("T", [2.0, 3.5])
def test_terms_match_direct_quadrature_n1(g, T):
    model = CovarianceModel.cauchy(1, 0.4)
    cfg = MsdConfig(1, 2, model, g, (T,), QuadSpec(8))
    assert d1_term(cfg) == pytest.approx(brute_d1(model, 2, g, T), rel=1e-9)
    assert d2_term(cfg) == pytest.approx(brute_d2(model, 2, g, T), rel=1e-9)


def test_d3_matches_double_loop():
    model = CovarianceModel.cauchy(2, 0.6)
    g = WeightFunction("power", 2, mu=(1.0, 0.5))
    pts = [(i, j) for i in range(3) for j in range(4)]
    brute = sum(g(np.array(p, float)) * g(np.array(q, float)) * model.cov(math.dist(p, q)) ** 2
                for p in pts for q in pts) * 2
    assert d3_term(MsdConfig(2, 2, model, g, (3, 4))) == pytest.approx(brute, rel=1e-12)


def test_d1_m2_equals_squared_model():
    base = CovarianceModel.cauchy(2, 0.4)
    a = d1_term(MsdConfig(2, 2, base, C2, (3, 3)))
    b = d1_term(MsdConfig(2, 1, SquaredCauchy(base), C2, (3, 3)))
    assert a == pytest.approx(2 * b, rel=1e-12)


def test_signs_and_lower_bounds():
    model = CovarianceModel.cauchy(2, 0.8)
    g = WeightFunction("power", 2, mu=(1.0, 1.0))
    cfg = MsdConfig(2, 1, model, g, (4, 3))
    assert d2_term(cfg) <= 0
    diag = sum(float(g(np.array([i, j], float))) ** 2 for i in range(4) for j in range(3))
    assert d3_term(cfg) >= diag


def test_config_validation():
    model = CovarianceModel.cauchy(2, 1.2)
    with pytest.raises(LongRangeViolationError):
        MsdConfig(2, 2, model, C2, (4, 4))
    with pytest.raises(DomainError):
        QuadSpec(1)


@pytest.mark.parametrize("m,g", [(1, C2), (2, WeightFunction("power", 2, mu=(1, 1)))])
def test_report_invariants(m, g):
    r = total_gap(MsdConfig(2, m, CovarianceModel.cauchy(2, 0.6), g, (5, 3)))
    assert r.total == r.d1 + r.d2 + r.d3
    assert r.total >= -r.error_estimate
    assert r.ratio == pytest.approx(r.total / r.denominator)
    assert len(r.row()) == len(r.COLUMNS)


def test_error_estimate_shrinks():
    model = CovarianceModel.cauchy(2, 0.6)
    errs = [total_gap(MsdConfig(2, 1, model, C2, (8, 8), QuadSpec(p))).error_estimate for p in (2, 4)]
    assert errs[1] <= errs[0] / 1.5
    r = total_gap(MsdConfig(2, 1, model, C2, (8, 8), QuadSpec(2)))
    fine = total_gap(MsdConfig(2, 1, model, C2, (8, 8), QuadSpec(16)))
    assert abs(r.total - fine.total) <= r.error_estimate


def test_non_integer_extent_and_strips():
    model = CovarianceModel.cauchy(2, 0.6)
    r = total_gap(MsdConfig(2, 1, model, C2, (4.5, 3.25)))
    assert len(r.diagnostics["strip_mean_squares"]) == 2
    assert r.total >= -r.error_estimate
    # n = 1 exactness against direct 2-d quadrature of the same quantity
    m1 = CovarianceModel.cauchy(1, 0.5)
    r1 = total_gap(MsdConfig(1, 1, m1, C1, (3.5,), QuadSpec(8)))
    oracle = brute_d1(m1, 1, C1, 3.5) + brute_d2(m1, 1, C1, 3.5) + r1.d3
    assert r1.total == pytest.approx(oracle, rel=1e-8)


def test_ratio_decreases_n1():
    model = CovarianceModel.cauchy(1, 0.4)
    ratios = [total_gap(MsdConfig(1, 2, model, C1, (T,))).ratio for T in (8, 64)]
    assert ratios[1] < ratios[0]


def test_three_dimensional_config():
    model = CovarianceModel.cauchy(3, 0.9)
    r = total_gap(MsdConfig(3, 1, model, WeightFunction("constant", 3), (3, 3, 3)))
    est, se = monte_carlo_gap(MsdConfig(3, 1, model, WeightFunction("constant", 3), (3, 3, 3)), 2000, 2, 3)
    assert r.total >= 0
    assert abs(r.total - est) <= 4 * se + r.error_estimate + 0.02 * r.total


def test_l12_examples():
    assert l12_constant(1, 1, 1e-300, C1, 1.0) == pytest.approx(1.0, rel=1e-12)
    assert l12_constant(1, 1, 0.5, C1, 1.0) == pytest.approx(8 / 3, rel=1e-10)
    for s in (0.2, 0.7):
        assert l12_constant(1, 1, s, C1, 1.0) == pytest.approx(2 / ((1 - s) * (2 - s)), rel=1e-10)
    with pytest.raises(DivergenceError):
        l12_constant(1, 2, 0.5, C1, 1.0)


def test_l12_unequal_box_and_weight_against_dblquad():
    g = WeightFunction("power", 1, mu=(1.0,))
    # symmetric in (u, v): twice the triangle v < u, singular edge as an endpoint
    f = lambda v, u: u * v * (u - v) ** -0.4
    oracle = 2 * integrate.dblquad(f, 0, 0.7, 0, lambda u: u, epsabs=1e-12)[0]
    assert l12_constant(1, 1, 0.4, g, 0.7) == pytest.approx(oracle, rel=1e-7)
    g2 = WeightFunction("constant", 2)
    v = l12_constant(2, 1, 0.6, g2, (1.0, 0.5))
    f2 = lambda y, x: (x * x + y * y) ** -0.3 * 4 * (1 - x) * (0.5 - y)
    oracle2 = integrate.dblquad(f2, 0, 1, 0, 0.5, epsabs=1e-10)[0]
    assert v == pytest.approx(oracle2, rel=1e-6)


def test_monte_carlo_cross_validation_small():
    model = CovarianceModel.cauchy(2, 0.6)
    cfg = MsdConfig(2, 1, model, C2, (2, 2))
    r = total_gap(cfg)
    est, se = monte_carlo_gap(cfg, 3000, 4, 17)
    assert abs(r.total - est) <= 4 * se + r.error_estimate
