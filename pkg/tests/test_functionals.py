import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lrdhermite.covmodels import CovarianceModel, SlowlyVarying
from lrdhermite.errors import CoverageError, LongRangeViolationError, RankMismatchError
from lrdhermite.fieldsim import FieldSample, GridSpec, simulate_field_exact
from lrdhermite.functionals import (FunctionalResult, WeightFunction, exact_coefficients,
                                    normalizer, theorem1_pair, weight_limit_gap,
                                    weighted_integral_functional, weighted_sum_functional)
from lrdhermite.hermite import TestFunction, hermite_eval

ONE = SlowlyVarying()


def injected(values, spacing=None, origin=None):
    values = np.asarray(values, dtype=float)
    g = GridSpec(values.shape, spacing, origin)
    return FieldSample(g, values, "injected", 0)


def test_sum_examples_zero_field():
    f = injected(np.zeros((3, 4)))
    g = WeightFunction("constant", 2)
    assert weighted_sum_functional(f, g, 1, (3, 4)) == 0.0
    assert weighted_sum_functional(f, g, 2, (3, 4)) == -12.0


def test_sum_power_weight_enumeration():
    v = np.array([[0.3, -1.1], [2.0, 0.7]])
    g = WeightFunction("power", 2, mu=(1, 1))
    brute = sum(i * j * v[i, j] for i in range(2) for j in range(2))
    assert brute == 0.7
    assert weighted_sum_functional(injected(v), g, 1, (2, 2)) == pytest.approx(0.7, abs=1e-15)


def test_sum_non_integer_extent_uses_floor():
    v = np.arange(12.0).reshape(3, 4)
    g = WeightFunction("constant", 2)
    assert weighted_sum_functional(injected(v), g, 1, (2.7, 3.2)) == v[:2, :3].sum()


def test_sum_coverage_error():
    with pytest.raises(CoverageError):
        weighted_sum_functional(injected(np.zeros((2, 2))), WeightFunction("constant", 2), 1, (3, 2))
    with pytest.raises(CoverageError):
        weighted_sum_functional(injected(np.zeros((4, 4)), (0.5, 0.5)),
                                WeightFunction("constant", 2), 1, (2, 2))


def test_integral_examples():
    g = WeightFunction("constant", 2)
    for q in (1, 2, 4):
        f = injected(np.zeros((2 * q, 2 * q)), (1 / q, 1 / q), (0.5 / q, 0.5 / q))
        assert weighted_integral_functional(f, g, 1, (2, 2), q) == 0.0
        assert weighted_integral_functional(f, g, 2, (2, 2), q) == pytest.approx(-4.0, abs=1e-14)


def test_integral_matches_midpoint_enumeration():
    rng = np.random.default_rng(1)
    v = rng.standard_normal((3, 3))
    f = injected(v, None, (0.5, 0.5))
    g = WeightFunction("power", 2, mu=(1, 2))
    brute = sum((i + 0.5) * (j + 0.5) ** 2 * v[i, j] for i in range(3) for j in range(3))
    assert weighted_integral_functional(f, g, 1, (3, 3), 1) == pytest.approx(brute, rel=1e-14)
    g1 = WeightFunction("constant", 2)
    assert weighted_integral_functional(f, g1, 1, (3, 3), 1) == pytest.approx(v.sum(), rel=1e-14)


def test_integral_coverage_from_larger_grid():
    q = 4
    f = injected(np.ones((4 * q, 4 * q)), (1 / q, 1 / q), (0.5 / q, 0.5 / q))
    assert weighted_integral_functional(f, WeightFunction("constant", 2), 1, (2, 3), q) == pytest.approx(6.0)
    with pytest.raises(CoverageError):
        weighted_integral_functional(f, WeightFunction("constant", 2), 1, (2.1, 3), q)


def test_normalizer_examples():
    g2 = WeightFunction("constant", 2)
    assert normalizer(2, 1, 1.0, ONE, g2, 4.0) == pytest.approx(8.0, rel=1e-15)
    assert normalizer(2, 2, 0.6, ONE, g2, 10.0) == pytest.approx(10 ** 1.4, rel=1e-14)
    assert normalizer(2, 2, 0.6, ONE, g2, 10.0) == pytest.approx(25.1189, abs=1e-4)
    g1 = WeightFunction("power", 1, mu=(1,))
    assert normalizer(1, 2, 0.4, ONE, g1, 100.0) == pytest.approx(100 ** 1.6, rel=1e-14)
    with pytest.raises(LongRangeViolationError):
        normalizer(2, 2, 1.0, ONE, g2, 4.0)


@given(st.floats(0.01, 100), st.integers(1, 2))
@settings(max_examples=40, deadline=None)
def test_scaling_invariance(c, m):
    v = np.random.default_rng(2).standard_normal((5, 5))
    f = injected(v)
    g = WeightFunction("constant", 2)
    gc = WeightFunction("constant", 2, c=c)
    raw, rawc = (weighted_sum_functional(f, w, m, (5, 5)) for w in (g, gc))
    d, dc = (normalizer(2, m, 0.6, ONE, w, 5.0) for w in (g, gc))
    assert rawc == pytest.approx(c * raw, rel=1e-12)
    assert dc == pytest.approx(c * d, rel=1e-12)
    assert FunctionalResult(rawc, dc).normalized == pytest.approx(FunctionalResult(raw, d).normalized, rel=1e-12)


def test_linearity_m1():
    rng = np.random.default_rng(3)
    a, b = rng.standard_normal((2, 4, 3))
    g = WeightFunction("power", 2, mu=(0.5, 2))
    s = [weighted_sum_functional(injected(x), g, 1, (4, 3)) for x in (a, b, a + b)]
    assert s[2] == pytest.approx(s[0] + s[1], rel=1e-12, abs=1e-12)


def test_batched_evaluation():
    m = CovarianceModel.cauchy(2, 0.6)
    f = simulate_field_exact(m, GridSpec((4, 4)), 1, reps=3)
    out = weighted_sum_functional(f, WeightFunction("constant", 2), 2, (4, 4))
    assert out.shape == (3,)
    assert out[1] == pytest.approx(float(np.sum(hermite_eval(2, f.values[1]))), rel=1e-13)


def test_normalized_variance_bounded():
    m = CovarianceModel.cauchy(2, 0.6)
    g = WeightFunction("constant", 2)
    var = []
    for T in (8, 16, 32):
        f = simulate_field_exact(m, GridSpec((T, T)), 20 + T, reps=500)
        raw = weighted_sum_functional(f, g, 1, (T, T))
        var.append(np.var(raw / normalizer(2, 1, 0.6, m.L, g, T), ddof=1))
    assert max(var) / min(var) <= 3


def test_theorem1_pair_examples():
    m = CovarianceModel.cauchy(2, 0.6)
    f = simulate_field_exact(m, GridSpec((6, 6)), 4, reps=50)
    kr, k2 = theorem1_pair(TestFunction("hermite", p=2), 2, f)
    np.testing.assert_array_equal(kr, k2)
    kr, k2 = theorem1_pair(TestFunction("monomial", p=2), 2, f)
    assert np.max(np.abs(kr - k2)) <= 1e-12
    assert np.allclose(exact_coefficients(TestFunction("monomial", p=2), 2), [1, 0, 2])
    zero = injected(np.zeros((3, 3)), (0.5, 0.5))
    kr, k2 = theorem1_pair(TestFunction("monomial", p=2), 2, zero)
    assert kr == pytest.approx(-9 * 0.25) and k2 == pytest.approx(-9 * 0.25)
    with pytest.raises(RankMismatchError):
        theorem1_pair(TestFunction("monomial", p=3), 2, f)


def test_theorem1_rank_one_coefficient():
    G = TestFunction("polynomial", coeffs=(0, 0, 1, 0.1))
    c = exact_coefficients(G, 3)
    np.testing.assert_allclose(c, [1.0, 0.3, 2.0, 0.6], atol=1e-15)


def test_weight_limit_examples():
    for g in (WeightFunction("constant", 2, c=3.0), WeightFunction("power", 2, mu=(0.5, 2.0)),
              WeightFunction("power", 1, mu=(1.3,))):
        for T in (1.0, 7.0, 1e3):
            assert weight_limit_gap(g, T) == 0.0
    gl = WeightFunction("power_log", 2, mu=(math.e,))
    gaps = [weight_limit_gap(gl, T) for T in (10, 1e2, 1e3)]
    assert gaps[0] > gaps[1] > gaps[2] > 0


def test_weight_ratio_matches_direct_evaluation():
    g = WeightFunction("power_log", 2, mu=(2.0, 3.0))
    u = np.array([[0.3, 0.9], [1.0, 0.1]])
    direct = g(50 * u) / g.at_diagonal(50)
    np.testing.assert_allclose(g.ratio(50, u), direct, rtol=1e-13)
    gp = WeightFunction("power", 2, mu=(1.5, 0.5))
    np.testing.assert_allclose(gp(50 * u) / gp.at_diagonal(50), gp.limit(u), rtol=1e-13)


def test_weight_nonzero_at_diagonal():
    for g in (WeightFunction("power_log", 3, mu=(0.5,)), WeightFunction("power", 2, mu=(2, 0))):
        for T in (1, 2, 10, 1e4):
            assert g.at_diagonal(T) != 0
