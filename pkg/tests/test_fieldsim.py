import math

import numpy as np
import pytest
from scipy import integrate, stats

from lrdhermite.covmodels import CovarianceModel, SpectralModel
from lrdhermite.errors import DomainError, GridSizeError, LagError, NonPSDCovarianceError
from lrdhermite.fieldsim import (GridSpec, empirical_covariance, empirical_mean,
                                 simulate_field_exact, simulate_field_spectral,
                                 spectral_lag_covariance)
from lrdhermite.spectral import SpectralDiscretization


def test_grid_spec():
    g = GridSpec((3, 2), (0.5, 1.0), (1.0, -1.0))
    pts = g.points()
    assert pts.shape == (6, 2) and g.size == 6
    np.testing.assert_allclose(pts[1], [1.0, 0.0])
    with pytest.raises(DomainError):
        GridSpec((0,))
    with pytest.raises(DomainError):
        GridSpec((2,), (0.0,))
    r = GridSpec.refined((2, 2), 4)
    assert r.counts == (8, 8) and r.axes()[0][0] == 0.125


def test_single_point_variance():
    f = simulate_field_exact(CovarianceModel.cauchy(2, 0.6), GridSpec((1, 1)), 5, reps=100_000)
    x2 = f.flat()[:, 0] ** 2
    assert abs(x2.mean() - 1) <= 4 * x2.std(ddof=1) / math.sqrt(x2.size)


def test_two_point_correlation():
    m = CovarianceModel.cauchy(2, 1.0)
    f = simulate_field_exact(m, GridSpec((2, 1), (math.sqrt(3), 1.0)), 6, reps=100_000)
    v = f.flat()
    prod = v[:, 0] * v[:, 1]
    assert abs(prod.mean() - 0.5) <= 4 * prod.std(ddof=1) / math.sqrt(prod.size)


def test_exact_determinism_and_workers():
    m = CovarianceModel.cauchy(2, 0.6)
    g = GridSpec((6, 5))
    a = simulate_field_exact(m, g, 42, reps=700)
    b = simulate_field_exact(m, g, 42, reps=700)
    c = simulate_field_exact(m, g, 42, reps=700, workers=3)
    assert a.values.tobytes() == b.values.tobytes() == c.values.tobytes()
    d = simulate_field_exact(m, g, 43, reps=700)
    assert np.any(a.values != d.values)
    single = simulate_field_exact(m, g, 42)
    assert single.values.shape == (6, 5)


def test_exact_lags_within_stderr():
    m = CovarianceModel.cauchy(2, 0.8)
    g = GridSpec((16, 16))
    f = simulate_field_exact(m, g, 7, reps=500)
    rng = np.random.default_rng(0)
    for _ in range(5):
        lag = tuple(int(v) for v in rng.integers(-6, 7, size=2))
        est, se = empirical_covariance(f, lag)
        assert abs(est - m.cov(math.hypot(*lag))) <= 4 * se


def test_empirical_covariance_examples():
    m = CovarianceModel.cauchy(2, 0.6)
    f = simulate_field_exact(m, GridSpec((12, 12)), 8, reps=400)
    est, se = empirical_covariance(f, (0, 0))
    assert abs(est - 1) <= 4 * se
    est, se = empirical_covariance(f, (2, 0))
    assert abs(est - 5 ** -0.3) <= 4 * se
    mu, se = empirical_mean(f)
    assert abs(mu) <= 4 * se
    with pytest.raises(LagError):
        empirical_covariance(f, (12, 0))
    few = simulate_field_exact(m, GridSpec((4, 4)), 8, reps=10)
    with pytest.raises(DomainError):
        empirical_covariance(few, (1, 0))


def test_exact_size_guard():
    with pytest.raises(GridSizeError):
        simulate_field_exact(CovarianceModel.cauchy(2, 0.5), GridSpec((91, 91)), 0)


def test_non_psd_detected():
    # the truncated power min(1, r^-alpha) is not positive definite on a dense 3-d grid
    m = CovarianceModel(3, 2.9, "pure_power_tail")
    with pytest.raises(NonPSDCovarianceError):
        simulate_field_exact(m, GridSpec((6, 6, 6), (0.3, 0.3, 0.3)), 0)


def test_gaussian_kurtosis():
    f = simulate_field_exact(CovarianceModel.cauchy(2, 0.6), GridSpec((10, 10)), 9, reps=1500)
    k = stats.kurtosis(f.flat().ravel(), fisher=False)
    assert 2.8 <= k <= 3.2


def truncated_mass_oracle(c1, R):
    # int over [-R, R]^2 of c1 / |lam| = 8 c1 R asinh(1)
    return 8 * c1 * R * math.asinh(1.0)


def test_cell_masses_match_closed_form():
    s = SpectralModel(2, 1.0)
    for N in (16, 64, 65):
        disc = SpectralDiscretization(2, 40.0, N)
        total = disc.density_masses(s).sum()
        if N % 2 == 0:
            assert total == pytest.approx(truncated_mass_oracle(s.c1, 40.0), rel=1e-9)
        else:
            assert total < truncated_mass_oracle(s.c1, 40.0)


def test_spectral_variance_matches_truncated_mass():
    s = SpectralModel(2, 1.0)
    f = simulate_field_spectral(s, GridSpec((4, 4)), 11, cutoff=40.0, cells_per_axis=64, reps=2000)
    v = f.flat()[:, 5].var()
    assert abs(v / truncated_mass_oracle(s.c1, 40.0) - 1) < 0.10


def test_spectral_isotropy_and_model_covariance():
    s = SpectralModel(2, 1.0)
    f = simulate_field_spectral(s, GridSpec((10, 10)), 12, cutoff=20.0, cells_per_axis=64, reps=2000)
    a, sa = empirical_covariance(f, (2, 0))
    b, sb = empirical_covariance(f, (0, 2))
    assert abs(a - b) < 4 * math.hypot(sa, sb)
    assert abs(a - spectral_lag_covariance(s, 20.0, 64, (2, 0))) <= 4 * sa


def test_spectral_refinement_moves_toward_truncated_target():
    s = SpectralModel(2, 1.0)
    target = 4 * integrate.dblquad(lambda y, x: s.c1 / math.hypot(x, y) * math.cos(x),
                                   0, 40, 0, 40, epsabs=1e-7)[0]
    gaps = [abs(spectral_lag_covariance(s, 40.0, N, (1, 0)) - target) for N in (64, 128, 256)]
    assert gaps[0] > gaps[1] > gaps[2]


def test_spectral_determinism():
    s = SpectralModel(1, 0.5)
    g = GridSpec((20,))
    a = simulate_field_spectral(s, g, 3, cells_per_axis=32, reps=300)
    b = simulate_field_spectral(s, g, 3, cells_per_axis=32, reps=300, workers=2)
    assert a.values.tobytes() == b.values.tobytes()
    c = simulate_field_spectral(s, g, 4, cells_per_axis=32, reps=300)
    assert np.any(a.values != c.values)


def test_half_space_pairing():
    for n, N in ((1, 16), (2, 8), (2, 7), (3, 4)):
        disc = SpectralDiscretization(n, 5.0, N)
        pos, mir = disc.half_space()
        c = disc.centers
        np.testing.assert_allclose(c[pos], -c[mir], atol=1e-12)
        assert 2 * len(pos) == len(c)


def test_csv_export(tmp_path):
    f = simulate_field_exact(CovarianceModel.cauchy(1, 0.5), GridSpec((3,)), 1, reps=2)
    p = tmp_path / "f.csv"
    f.to_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0].startswith("# n=1;counts=3") and len(lines) == 5
