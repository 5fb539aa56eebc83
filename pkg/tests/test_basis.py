import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal
from scipy import integrate

from bayesinv.basis import (
    FAMILY_NAMES,
    L_MAX,
    BasisError,
    BasisFamily,
    FrequencyGrid,
    RadialGrid,
    basis_value,
    build_A,
    build_B,
    build_C,
    design_matrices,
    spherical_j0,
)


def scalar_basis(l, x):
    """Independent scalar oracle in extended precision."""
    x = mpmath.mpf(x)
    if l == 1:
        return float(mpmath.besselj(0, x))
    if l == 2:
        return float(mpmath.sinc(x))
    if l == 3:
        return float(mpmath.exp(-x * x / 2))
    if l == 4:
        return float(mpmath.exp(-x * x / 2) * mpmath.besselj(0, x))
    if l == 5:
        return float(mpmath.sech(x))
    return float(1 / (1 + x * x))


class TestBasisValue:
    def test_sinc_at_origin(self):
        assert basis_value(2, 1.7, 0.0) == 1.0

    def test_lorentzian_at_unit_argument(self):
        assert basis_value(6, 2.0, 0.5) == 0.5

    def test_bessel_first_root(self):
        # first zero of J0 from the extended-precision oracle
        root = float(mpmath.besseljzero(0, 1))
        assert abs(root - 2.4048) < 1e-4
        assert abs(basis_value(1, 1.0, 2.4048)) < 1e-4
        assert abs(basis_value(1, 1.0, root)) < 1e-15

    @pytest.mark.parametrize("l", sorted(FAMILY_NAMES))
    def test_matches_scalar_oracle(self, l):
        x = np.array([0.0, 0.3, 1.0, 2.5, 7.0, 19.0])
        got = basis_value(l, 1.0, x)
        want = [scalar_basis(l, v) for v in x]
        assert_allclose(got, want, rtol=1e-13, atol=1e-15)

    def test_scale_and_radius_enter_as_product(self):
        r = np.linspace(0, 8, 17)
        for l in FAMILY_NAMES:
            assert_allclose(basis_value(l, 2.0, r), basis_value(l, 1.0, 2.0 * r), rtol=1e-14)

    @pytest.mark.parametrize("l", [0, 7, -1, 2.5])
    def test_unknown_family(self, l):
        with pytest.raises(BasisError, match="unknown basis family"):
            basis_value(l, 1.0, 1.0)

    def test_sech_large_argument_no_overflow(self):
        with np.errstate(over="raise"):
            v = basis_value(5, 1.0, 1e4)
        assert v == 0.0

    @settings(max_examples=200, deadline=None)
    @given(l=st.integers(1, L_MAX), q=st.floats(1e-6, 1e3), r=st.floats(0.0, 1e3))
    def test_finite_and_bounded(self, l, q, r):
        v = basis_value(l, q, r)
        assert np.isfinite(v)
        assert abs(v) <= 1.0 + 1e-15


class TestGrids:
    def test_radial_grid_left_endpoint(self):
        g = RadialGrid(100, 8.0)
        assert g.dr == 0.08
        assert g.r[0] == 0.0
        assert g.r.size == 100
        assert_allclose(g.r[-1], 8.0 - 0.08)

    def test_trapezoid_nodes(self):
        r, w = RadialGrid(10, 1.0).nodes("trapezoid")
        assert r.size == 11 and r[-1] == 1.0
        assert_allclose(w.sum(), 1.0)

    def test_unknown_quadrature(self):
        with pytest.raises(BasisError):
            RadialGrid().nodes("simpson")

    @pytest.mark.parametrize("N,R_c", [(0, 8.0), (10, 0.0), (10, -1.0)])
    def test_invalid_radial_grid(self, N, R_c):
        with pytest.raises(BasisError):
            RadialGrid(N, R_c)

    def test_default_frequency_rule(self):
        q = FrequencyGrid.default(20, 8.0).q
        assert_allclose(q, np.arange(1, 21) * np.pi / 8.0)

    @pytest.mark.parametrize("q", [[], [0.0, 1.0], [1.0, 1.0], [2.0, 1.0], [-1.0, 1.0]])
    def test_invalid_frequency_grid(self, q):
        with pytest.raises(BasisError):
            FrequencyGrid(np.array(q))

    def test_frequency_grid_is_read_only(self):
        g = FrequencyGrid.default(5)
        with pytest.raises(ValueError):
            g.q[0] = 1.0

    def test_family_order_bounds(self):
        with pytest.raises(BasisError):
            BasisFamily.default(1, 13)
        with pytest.raises(BasisError):
            BasisFamily.default(1, 0)
        assert BasisFamily.default(3, 4).k == 4
        assert BasisFamily.default(3, 4).name == "gaussian"


class TestBuildB:
    grid = RadialGrid(100, 8.0)

    @pytest.mark.parametrize("l", [3, 5])
    def test_origin_row_is_one(self, l):
        B = build_B(self.grid, BasisFamily.default(l, 6))
        assert_array_equal(B[0], 1.0)

    @pytest.mark.parametrize("l", sorted(FAMILY_NAMES))
    def test_origin_row_finite(self, l):
        B = build_B(self.grid, BasisFamily.default(l, 12))
        assert np.all(np.isfinite(B))

    def test_bessel_family_elementwise(self):
        fam = BasisFamily.default(1, 6)
        B = build_B(self.grid, fam)
        assert B.shape == (100, 6)
        want = np.array([[scalar_basis(1, fam.scales[j] * r) for j in range(6)]
                         for r in self.grid.r])
        assert_allclose(B, want, rtol=1e-12, atol=1e-15)

    def test_truncation_takes_leading_columns(self):
        fam = BasisFamily.default(4, 8)
        assert_array_equal(build_B(self.grid, fam, k=3), build_B(self.grid, fam)[:, :3])
        with pytest.raises(BasisError):
            build_B(self.grid, fam, k=9)


class TestBuildC:
    grid = RadialGrid(100, 8.0)
    qgrid = FrequencyGrid.default(20, 8.0)

    def test_origin_column_zero(self):
        C = build_C(self.grid, self.qgrid)
        assert C.shape == (20, 100)
        assert_array_equal(C[:, 0], 0.0)

    def test_small_q_limit(self):
        # q -> 0+: C[i, n] -> 4 pi dr r_n^2 with dr = 0.08
        C = build_C(self.grid, FrequencyGrid(np.array([1e-9])))
        r = self.grid.r
        assert_allclose(C[0], 4 * np.pi * 0.08 * r * r, rtol=1e-12)

    def test_scalar_formula(self):
        C = build_C(self.grid, self.qgrid)
        rng = np.random.default_rng(3)
        for i, n in zip(rng.integers(0, 20, 25), rng.integers(1, 100, 25)):
            q, r = self.qgrid.q[i], self.grid.r[n]
            want = 4 * math.pi * 0.08 * r * r * math.sin(q * r) / (q * r)
            assert_allclose(C[i, n], want, rtol=1e-12, atol=1e-14)


class TestBuildA:
    grid = RadialGrid(100, 8.0)
    qgrid = FrequencyGrid.default(20, 8.0)

    def test_zero_C(self):
        B = build_B(self.grid, BasisFamily.default(2, 5))
        assert_array_equal(build_A(B, np.zeros((20, 100))), 0.0)

    def test_identity_B(self):
        C = build_C(self.grid, self.qgrid)
        assert_allclose(build_A(np.eye(100), C), C, rtol=0, atol=0)

    def test_dimension_mismatch(self):
        with pytest.raises(BasisError, match="cannot multiply"):
            build_A(np.ones((50, 3)), np.ones((20, 100)))

    def test_matches_triple_loop(self):
        dm = design_matrices(self.grid, self.qgrid, 4, 6)
        B, C = dm.B, dm.C
        ref = np.zeros((20, 6))
        for i in range(20):
            for j in range(6):
                acc = 0.0
                for n in range(100):
                    acc += C[i, n] * B[n, j]
                ref[i, j] = acc
        assert_allclose(dm.A, ref, rtol=1e-12, atol=1e-12 * np.abs(ref).max())

    def test_sinc_family_diagonal_for_matching_scales(self):
        qgrid = FrequencyGrid.default(8, 8.0)
        A = design_matrices(self.grid, qgrid, 2, 8).A
        off = A - np.diag(np.diag(A))
        assert np.all(np.abs(np.diag(A)) > 1e6 * np.abs(off).max(axis=1))

    def test_sinc_columns_match_quadrature(self):
        """Column j approximates 4 pi int_0^Rc r^2 j0(q_i r) sinc(q_j r) dr."""
        qgrid = FrequencyGrid.default(6, 8.0)
        A = design_matrices(RadialGrid(400, 8.0), qgrid, 2, 6).A
        q = qgrid.q
        for i in range(6):
            for j in range(6):
                f = lambda r: r * r * spherical_j0(q[i] * r) * spherical_j0(q[j] * r)  # noqa: E731
                want = 4 * np.pi * integrate.quad(f, 0, 8.0, limit=200)[0]
                assert abs(A[i, j] - want) < 1e-3 * np.abs(np.diag(A)).max()

    @pytest.mark.parametrize("l", [1, 3, 6])
    def test_first_order_convergence(self, l):
        diffs, drs = [], []
        for N in (100, 200, 400):
            a = design_matrices(RadialGrid(N, 8.0), self.qgrid, l, 6).A
            b = design_matrices(RadialGrid(2 * N, 8.0), self.qgrid, l, 6).A
            diffs.append(np.abs(a - b).max())
            drs.append(8.0 / N)
        c = diffs[0] / drs[0]
        assert all(d <= 1.05 * c * dr for d, dr in zip(diffs, drs))

    def test_trapezoid_option(self):
        a = design_matrices(self.grid, self.qgrid, 3, 4, quadrature="trapezoid")
        assert a.B.shape == (101, 4) and a.C.shape == (20, 101)
        fine = design_matrices(RadialGrid(3200, 8.0), self.qgrid, 3, 4).A
        b = design_matrices(self.grid, self.qgrid, 3, 4).A
        assert np.abs(a.A - fine).max() <= np.abs(b - fine).max() + 1e-12

    def test_design_arrays_read_only(self):
        dm = design_matrices(self.grid, self.qgrid, 1, 3)
        for arr in (dm.A, dm.B, dm.C):
            with pytest.raises(ValueError):
                arr[0, 0] = 1.0
