import math

import mpmath
import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy import stats

from bayesinv.basis import BasisError, FrequencyGrid, RadialGrid, design_matrices
from bayesinv.scattering import (
    FERMI_Q_POINTS,
    FermiModel,
    fermi_density,
    fermi_form_factor,
    form_factor_quadrature,
    noise_sigma,
    normalize_fermi,
    nuclear_radius,
    simulate_fermi_dataset,
    simulate_synthetic,
)

CARBON = FermiModel.carbon12()


def tanh_alpha(R, d, Z):
    # exact charge integral of the symmetric Fermi shape
    return Z * math.tanh(R / d) / (4 * math.pi / 3 * R * (R * R + math.pi ** 2 * d * d))


class TestDensity:
    def test_half_density_radius(self):
        assert fermi_density(CARBON.R, CARBON) == pytest.approx(CARBON.alpha / 2, rel=1e-15)

    def test_center(self):
        m = FermiModel(R=10.0, d=0.5, Z=1.0)
        assert fermi_density(0.0, m) == pytest.approx(m.alpha, rel=1e-8)

    def test_extended_precision_tail(self):
        R, d = 2.517, 0.626
        m = FermiModel(R=R, d=d, Z=6.0)
        with mpmath.workdps(40):
            c = mpmath.cosh(mpmath.mpf(R) / d)
            want = float(mpmath.mpf(m.alpha) * c / (c + mpmath.cosh(mpmath.mpf(8) / d)))
        assert fermi_density(8.0, m) == pytest.approx(want, rel=1e-13)

    def test_monotone_positive(self):
        r = np.linspace(0, 60, 2001)
        rho = fermi_density(r, CARBON)
        assert np.all(rho > 0) and np.all(np.diff(rho) < 0)

    def test_no_overflow_far_out(self):
        with np.errstate(over="raise"):
            v = fermi_density(1e4, CARBON)
        assert 0.0 <= v < 1e-300


class TestNormalization:
    def test_radius_rule(self):
        assert nuclear_radius(12) == pytest.approx(2.51837, abs=1e-5)

    def test_matches_exact_integral(self):
        for R, d, Z in [(CARBON.R, CARBON.d, 6.0), (5.0, 0.5, 20.0), (1.0, 0.9, 1.0)]:
            assert normalize_fermi(R, d, Z) == pytest.approx(tanh_alpha(R, d, Z), rel=1e-10)

    def test_linear_in_charge(self):
        assert normalize_fermi(2.5, 0.6, 12.0) == pytest.approx(
            2 * normalize_fermi(2.5, 0.6, 6.0), rel=1e-14)

    def test_hard_sphere_limit(self):
        R, Z = 3.0, 6.0
        a = normalize_fermi(R, 1e-3 * R, Z)
        assert a == pytest.approx(3 * Z / (4 * math.pi * R ** 3), rel=1e-2)

    @pytest.mark.parametrize("R,d,Z", [(0.0, 1.0, 1.0), (1.0, -1.0, 1.0), (1.0, 1.0, 0.0)])
    def test_invalid(self, R, d, Z):
        with pytest.raises(ValueError):
            normalize_fermi(R, d, Z)
        with pytest.raises(ValueError):
            FermiModel(R, d, Z)


class TestFormFactor:
    def test_small_q_gives_charge(self):
        assert fermi_form_factor(0.001, CARBON) == pytest.approx(6.0, rel=1e-3)

    def test_against_quadrature(self):
        m = FermiModel(R=2.517, d=0.626, Z=6.0)
        q = np.concatenate([[2.0], np.linspace(0.01, 8.0, 60)])
        got = fermi_form_factor(q, m)
        want = form_factor_quadrature(q, m)
        assert_allclose(got, want, rtol=1e-6, atol=1e-9 * abs(want).max())
        assert abs(got[0] / want[0] - 1) < 1e-6

    def test_continuous_at_switch(self):
        lo = fermi_form_factor(np.nextafter(1e-3, 0), CARBON)
        hi = fermi_form_factor(1e-3, CARBON)
        assert lo == pytest.approx(hi, rel=1e-8)

    @pytest.mark.parametrize("q", [0.0, -1.0])
    def test_requires_positive_q(self, q):
        with pytest.raises(ValueError):
            fermi_form_factor(q, CARBON)

    def test_large_q_finite(self):
        with np.errstate(over="raise"):
            f = fermi_form_factor(np.array([50.0, 500.0]), CARBON)
        assert np.all(np.isfinite(f)) and np.all(np.abs(f) < 1e-10)


class TestSynthetic:
    def test_zero_noise(self):
        ds = simulate_synthetic(3, 5, sigma=0.0, seed=1)
        assert_array_equal(ds.y_noisy, ds.y_clean)
        assert ds.m == 20 and ds.sigma == 0.0

    def test_unit_coefficients(self):
        grid, qgrid = RadialGrid(), FrequencyGrid.default(20)
        ds = simulate_synthetic(1, 6, grid, qgrid, x_gen=np.ones(6), sigma=0.0)
        dm = design_matrices(grid, qgrid, 1, 6)
        assert_allclose(dm.B @ ds.x, dm.B.sum(axis=1), rtol=1e-14, atol=1e-15)
        assert_allclose(ds.y_clean, dm.A.sum(axis=1), rtol=1e-13)

    def test_seeded_twice(self):
        a, b = simulate_synthetic(2, 4, snr=100, seed=9), simulate_synthetic(2, 4, snr=100, seed=9)
        assert_array_equal(a.y_noisy, b.y_noisy)
        assert_array_equal(a.x, b.x)

    def test_bad_coefficients(self):
        with pytest.raises(ValueError):
            simulate_synthetic(2, 4, x_gen=np.ones(3))

    def test_noise_scale(self):
        hits = 0
        for seed in range(200):
            ds = simulate_synthetic(2, 4, sigma=0.05, seed=seed)
            s = np.std(ds.y_noisy - ds.y_clean, ddof=0)
            hits += abs(s / 0.05 - 1) < 0.3
        assert hits >= 170

    def test_noise_is_gaussian(self):
        qgrid = FrequencyGrid(np.linspace(0.01, 20, 10000))
        ds = simulate_synthetic(3, 4, qgrid=qgrid, sigma=0.2, seed=4)
        z = (ds.y_noisy - ds.y_clean) / 0.2
        chi2 = float(z @ z)
        lo, hi = stats.chi2.ppf([0.0005, 0.9995], z.size)
        assert lo < chi2 < hi
        assert stats.kstest(z, "norm").pvalue > 1e-3


class TestNoiseSigma:
    def test_explicit(self):
        assert noise_sigma(np.ones(3), sigma=0.2) == 0.2

    def test_snr(self):
        assert noise_sigma(np.array([3.0, 4.0]), snr=10) == pytest.approx(
            math.sqrt(12.5) / 10, rel=1e-15)

    def test_default(self):
        assert noise_sigma(np.array([-5.0, 2.0])) == pytest.approx(5e-3)

    def test_invalid(self):
        with pytest.raises(ValueError):
            noise_sigma(np.ones(2), sigma=-1.0)
        with pytest.raises(ValueError):
            noise_sigma(np.ones(2), snr=0.0)


class TestFermiDataset:
    def test_default_points(self):
        ds = simulate_fermi_dataset()
        assert ds.m == 15
        assert ds.q[0] == 0.001 and ds.q[-1] == 7.0
        assert_allclose(np.diff(ds.q[1:]), 0.5)
        assert ds.y_clean[0] == pytest.approx(6.0, rel=1e-3)
        assert_array_equal(ds.y_noisy, ds.y_clean)

    def test_diffraction_envelope_decreases(self):
        q = np.linspace(0.01, 8.0, 4000)
        a = np.abs(fermi_form_factor(q, CARBON))
        peaks = a[1:-1][(a[1:-1] > a[:-2]) & (a[1:-1] > a[2:])]
        assert peaks.size >= 1
        assert np.all(np.diff(np.concatenate([[a[0]], peaks])) < 0)

    def test_noisy_seeded(self):
        a = simulate_fermi_dataset(sigma=1e-3, seed=2)
        b = simulate_fermi_dataset(sigma=1e-3, seed=2)
        assert_array_equal(a.y_noisy, b.y_noisy)
        assert not np.array_equal(a.y_noisy, a.y_clean)

    def test_rejects_unsorted(self):
        with pytest.raises(BasisError):
            simulate_fermi_dataset(q_list=[1.0, 0.5])

    def test_points_constant(self):
        assert FERMI_Q_POINTS.size == 15
