"""Hot inner loops of the evidence computations.

Every criterion evaluated over a (phi, psi) sample grid has the form

    c0 + a_phi*ln(phi) + a_psi*ln(psi) - b_phi*phi - b_psi*psi
       - 0.5*logdet(A'A + lam*I) - 0.5*phi*y'(y - yhat(lam)),    lam = psi/phi

and both lam-dependent terms follow from the thin SVD of ``A``:
with squared singular values ``s``, projections ``b2 = (U'y)**2`` and the
out-of-range residual ``rperp2 = |y - U U'y|**2``,

    logdet = sum(ln(s + lam)) + (k - rank)*ln(lam)
    y'(y - yhat) = rperp2 + sum(b2 * lam / (s + lam)).

Each kernel has a numba and a numpy implementation with identical results
(up to summation order). ``criterion_grid`` and ``grid_log_mean_exp``
dispatch to numba unless ``BAYESINV_NO_NUMBA`` is set.
"""

import math

import numpy as np
from scipy.special import logsumexp

from ._accel import HAS_NUMBA, optional_njit

__all__ = [
    "HAS_NUMBA",
    "criterion_grid",
    "criterion_grid_numpy",
    "grid_log_mean_exp",
    "grid_log_mean_exp_numpy",
    "criterion_grid_numba",
    "grid_log_mean_exp_numba",
]


def criterion_grid_numpy(s, b2, rperp2, k, phis, psis, coefs):
    """Criterion values on the outer product grid, shape ``(len(psis), len(phis))``.

    ``coefs`` is ``(c0, a_phi, a_psi, b_phi, b_psi)``.
    """
    c0, a_phi, a_psi, b_phi, b_psi = coefs
    s = np.asarray(s, dtype=float)
    b2 = np.asarray(b2, dtype=float)
    phi = np.asarray(phis, dtype=float)[None, :]
    psi = np.asarray(psis, dtype=float)[:, None]
    lam = psi / phi
    denom = s[None, None, :] + lam[..., None]
    logdet = np.log(denom).sum(axis=-1) + (k - s.size) * np.log(lam)
    quad = rperp2 + (b2[None, None, :] * lam[..., None] / denom).sum(axis=-1)
    return (
        c0
        + a_phi * np.log(phi)
        + a_psi * np.log(psi)
        - b_phi * phi
        - b_psi * psi
        - 0.5 * logdet
        - 0.5 * phi * quad
    )


def grid_log_mean_exp_numpy(s, b2, rperp2, k, phis, psis, coefs, chunk=256):
    """``log(mean(exp(criterion_grid(...))))`` without holding the full grid."""
    psis = np.asarray(psis, dtype=float)
    parts = []
    for start in range(0, psis.size, chunk):
        block = criterion_grid_numpy(s, b2, rperp2, k, phis, psis[start:start + chunk], coefs)
        parts.append(logsumexp(block))
    return float(logsumexp(parts) - math.log(psis.size) - math.log(len(phis)))


@optional_njit(cache=True)
def _criterion_value(s, b2, rperp2, k, phi, psi, c0, a_phi, a_psi, b_phi, b_psi):
    lam = psi / phi
    logdet = (k - s.shape[0]) * math.log(lam)
    quad = rperp2
    for r in range(s.shape[0]):
        d = s[r] + lam
        logdet += math.log(d)
        quad += b2[r] * lam / d
    return (
        c0
        + a_phi * math.log(phi)
        + a_psi * math.log(psi)
        - b_phi * phi
        - b_psi * psi
        - 0.5 * logdet
        - 0.5 * phi * quad
    )


@optional_njit(cache=True)
def _grid_loop(s, b2, rperp2, k, phis, psis, c0, a_phi, a_psi, b_phi, b_psi):
    out = np.empty((psis.shape[0], phis.shape[0]))
    for i in range(psis.shape[0]):
        for j in range(phis.shape[0]):
            out[i, j] = _criterion_value(
                s, b2, rperp2, k, phis[j], psis[i], c0, a_phi, a_psi, b_phi, b_psi
            )
    return out


@optional_njit(cache=True)
def _log_mean_exp_loop(s, b2, rperp2, k, phis, psis, c0, a_phi, a_psi, b_phi, b_psi):
    # streaming log-sum-exp: running max and rescaled sum
    top = -np.inf
    acc = 0.0
    for i in range(psis.shape[0]):
        for j in range(phis.shape[0]):
            v = _criterion_value(
                s, b2, rperp2, k, phis[j], psis[i], c0, a_phi, a_psi, b_phi, b_psi
            )
            if v == -np.inf:
                continue
            if v > top:
                acc = acc * math.exp(top - v) + 1.0
                top = v
            else:
                acc += math.exp(v - top)
    if top == -np.inf:
        return -np.inf
    return top + math.log(acc) - math.log(psis.shape[0]) - math.log(phis.shape[0])


def _as_args(s, b2, phis, psis):
    return (
        np.ascontiguousarray(s, dtype=np.float64),
        np.ascontiguousarray(b2, dtype=np.float64),
        np.ascontiguousarray(phis, dtype=np.float64),
        np.ascontiguousarray(psis, dtype=np.float64),
    )


def criterion_grid_loop(s, b2, rperp2, k, phis, psis, coefs):
    """Explicit-loop version of :func:`criterion_grid_numpy` (compiled when numba is present)."""
    s, b2, phis, psis = _as_args(s, b2, phis, psis)
    return _grid_loop(s, b2, float(rperp2), int(k), phis, psis, *map(float, coefs))


def grid_log_mean_exp_loop(s, b2, rperp2, k, phis, psis, coefs):
    s, b2, phis, psis = _as_args(s, b2, phis, psis)
    return float(
        _log_mean_exp_loop(s, b2, float(rperp2), int(k), phis, psis, *map(float, coefs))
    )


if HAS_NUMBA:
    criterion_grid_numba = criterion_grid_loop
    grid_log_mean_exp_numba = grid_log_mean_exp_loop
    criterion_grid = criterion_grid_loop
    grid_log_mean_exp = grid_log_mean_exp_loop
else:
    criterion_grid_numba = None
    grid_log_mean_exp_numba = None
    criterion_grid = criterion_grid_numpy
    grid_log_mean_exp = grid_log_mean_exp_numpy
