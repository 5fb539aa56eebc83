import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy.special import logsumexp

from bayesinv import kernels


def spectral_inputs(seed, m, k):
    rng = np.random.default_rng(seed)
    A = rng.uniform(-1, 1, (m, k))
    y = rng.standard_normal(m)
    U, sv, _ = np.linalg.svd(A, full_matrices=False)
    b = U.T @ y
    rperp2 = float(y @ y - b @ b)
    phis = 10.0 ** rng.uniform(-2, 2, 7)
    psis = 10.0 ** rng.uniform(-2, 2, 5)
    return A, y, sv ** 2, b ** 2, max(rperp2, 0.0), phis, psis


def direct_criterion(A, y, phi, psi, coefs):
    # dense normal-equations evaluation of the same expression
    c0, a_phi, a_psi, b_phi, b_psi = coefs
    k = A.shape[1]
    lam = psi / phi
    G = A.T @ A + lam * np.eye(k)
    x = np.linalg.solve(G, A.T @ y)
    logdet = np.linalg.slogdet(G)[1]
    return (c0 + a_phi * np.log(phi) + a_psi * np.log(psi) - b_phi * phi - b_psi * psi
            - 0.5 * logdet - 0.5 * phi * y @ (y - A @ x))


COEFS = (0.3, 9.0, 1.5, 1.0, 0.5)


class TestCriterionGrid:
    def test_matches_dense_oracle(self):
        A, y, s, b2, rp, phis, psis = spectral_inputs(0, 9, 4)
        grid = kernels.criterion_grid_numpy(s, b2, rp, 4, phis, psis, COEFS)
        for i, psi in enumerate(psis):
            for j, phi in enumerate(phis):
                assert grid[i, j] == pytest.approx(direct_criterion(A, y, phi, psi, COEFS),
                                                   rel=1e-10)

    def test_rank_deficient_design(self):
        # k > m: zero singular values enter through (k - rank) ln(lam)
        A, y, s, b2, rp, phis, psis = spectral_inputs(1, 3, 6)
        grid = kernels.criterion_grid_numpy(s, b2, rp, 6, phis, psis, COEFS)
        assert grid[2, 3] == pytest.approx(direct_criterion(A, y, phis[3], psis[2], COEFS),
                                           rel=1e-9)

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**31), m=st.integers(1, 25), k=st.integers(1, 12))
    def test_numpy_and_loop_agree(self, seed, m, k):
        _, _, s, b2, rp, phis, psis = spectral_inputs(seed, m, k)
        a = kernels.criterion_grid_numpy(s, b2, rp, k, phis, psis, COEFS)
        b = kernels.criterion_grid_loop(s, b2, rp, k, phis, psis, COEFS)
        assert a.shape == (psis.size, phis.size)
        assert_allclose(a, b, rtol=1e-12, atol=1e-12)

    @pytest.mark.skipif(not kernels.HAS_NUMBA, reason="numba not available")
    def test_dispatch_uses_compiled(self):
        assert kernels.criterion_grid is kernels.criterion_grid_numba
        assert kernels.grid_log_mean_exp is kernels.grid_log_mean_exp_numba


class TestLogMeanExp:
    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**31), m=st.integers(1, 25), k=st.integers(1, 12))
    def test_matches_dense_grid(self, seed, m, k):
        _, _, s, b2, rp, phis, psis = spectral_inputs(seed, m, k)
        grid = kernels.criterion_grid_numpy(s, b2, rp, k, phis, psis, COEFS)
        want = logsumexp(grid) - np.log(grid.size)
        assert kernels.grid_log_mean_exp_numpy(s, b2, rp, k, phis, psis, COEFS, chunk=2) == \
            pytest.approx(want, rel=1e-12, abs=1e-12)
        assert kernels.grid_log_mean_exp_loop(s, b2, rp, k, phis, psis, COEFS) == \
            pytest.approx(want, rel=1e-12, abs=1e-12)

    def test_huge_magnitudes(self):
        # log weights near -1e17 must not collapse
        _, _, s, b2, rp, phis, psis = spectral_inputs(3, 10, 3)
        coefs = (-1e17,) + COEFS[1:]
        a = kernels.grid_log_mean_exp_loop(s, b2, rp, 3, phis, psis, coefs)
        b = kernels.grid_log_mean_exp_numpy(s, b2, rp, 3, phis, psis, coefs)
        assert np.isfinite(a) and a == pytest.approx(b, rel=1e-15)

    def test_all_minus_infinity(self):
        _, _, s, b2, rp, phis, psis = spectral_inputs(4, 5, 2)
        coefs = (-np.inf,) + COEFS[1:]
        assert kernels.grid_log_mean_exp_loop(s, b2, rp, 2, phis, psis, coefs) == -np.inf
        assert kernels.grid_log_mean_exp_numpy(s, b2, rp, 2, phis, psis, coefs) == -np.inf


def test_pure_numpy_fallback_in_subprocess():
    code = (
        "import numpy as np; from bayesinv import kernels, _accel;"
        "assert not _accel.HAS_NUMBA;"
        "assert kernels.criterion_grid is kernels.criterion_grid_numpy;"
        "assert kernels.criterion_grid_numba is None;"
        "print(kernels.grid_log_mean_exp(np.array([1.0]), np.array([0.5]), 0.1, 1,"
        " np.array([1.0, 2.0]), np.array([0.5]), (0.0, 1.0, 1.0, 1.0, 1.0)))"
    )
    env = dict(os.environ, BAYESINV_NO_NUMBA="1")
    proc = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    got = float(proc.stdout)
    want = kernels.grid_log_mean_exp_loop(np.array([1.0]), np.array([0.5]), 0.1, 1,
                                          np.array([1.0, 2.0]), np.array([0.5]),
                                          (0.0, 1.0, 1.0, 1.0, 1.0))
    assert got == pytest.approx(want, rel=1e-13)
