"""Gaussian linear model ``y = A x + e`` with ``e ~ N(0, I/phi)``, ``x ~ N(0, I/psi)``.

The regularization parameter is ``lam = psi/phi`` throughout. Every
m-space quantity is reduced to k-space with

    det(A A' + lam I) = lam**(m-k) det(A'A + lam I)
    (A A' + lam I)^-1 = (I - A K(lam)) / lam,   K(lam) = (A'A + lam I)^-1 A'

so no m x m matrix is ever formed here.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

LOG_2PI = math.log(2.0 * math.pi)


class RankDeficientError(np.linalg.LinAlgError):
    """``A'A`` is singular and no ridge term was supplied."""


class NumericalError(ArithmeticError):
    """A criterion or evidence evaluation produced a non-finite value."""


@dataclass(frozen=True)
class HyperState:
    """Noise precision ``phi``, coefficient precision ``psi`` and ``lam = psi/phi``."""

    phi: float
    psi: float
    lam: float = field(init=False)

    def __post_init__(self):
        if not (self.phi > 0 and self.psi > 0):
            raise ValueError(f"precisions must be positive, got phi={self.phi}, psi={self.psi}")
        object.__setattr__(self, "lam", self.psi / self.phi)

    @classmethod
    def from_lambda(cls, phi, lam):
        return cls(phi, lam * phi)


@dataclass(frozen=True)
class PosteriorSolution:
    x: np.ndarray
    yhat: np.ndarray
    residual_ss: float
    coeff_ss: float
    logdet: float
    lam: float

    @property
    def data_fit(self):
        """``y'(y - yhat) = residual_ss + lam*coeff_ss``."""
        return self.residual_ss + self.lam * self.coeff_ss


def _normal_matrix(A, lam):
    A = np.asarray(A, dtype=float)
    G = A.T @ A
    G[np.diag_indices_from(G)] += lam
    return G


def ridge_solve(A, y, lam):
    """Minimize ``|y - A x|**2 + lam*|x|**2`` through a Cholesky factor of ``A'A + lam I``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if lam < 0:
        raise ValueError(f"lam must be nonnegative, got {lam}")
    if A.shape[0] != y.size:
        raise ValueError(f"A has {A.shape[0]} rows but y has {y.size} entries")
    G = _normal_matrix(A, lam)
    try:
        cho = linalg.cho_factor(G, lower=True, check_finite=True)
        diag = np.diag(cho[0])
        # cond(A'A + lam I) above ~1e12 loses too many digits in the normal equations
        singular = diag.min() <= diag.max() * 1e-6
    except linalg.LinAlgError:
        cho, singular = None, True
    if singular and lam == 0 and np.linalg.matrix_rank(A) < A.shape[1]:
        rank = np.linalg.matrix_rank(A)
        raise RankDeficientError(f"A'A is singular: A has rank {rank} < k={A.shape[1]}")
    if singular:
        # lam > 0 but near the rounding level of A'A: factor A itself instead
        x, logdet = _svd_ridge(A, y, lam)
    else:
        x = linalg.cho_solve(cho, A.T @ y)
        logdet = float(2.0 * np.log(diag).sum())
    yhat = A @ x
    res = y - yhat
    return PosteriorSolution(
        x=x,
        yhat=yhat,
        residual_ss=float(res @ res),
        coeff_ss=float(x @ x),
        logdet=logdet,
        lam=float(lam),
    )


def _svd_ridge(A, y, lam):
    U, sv, Vt = np.linalg.svd(A, full_matrices=False)
    s = sv * sv
    x = Vt.T @ (sv * (U.T @ y) / (s + lam))
    logdet = float(np.log(s + lam).sum() + (A.shape[1] - sv.size) * math.log(lam))
    return x, logdet


def posterior_covariance(A, phi, lam):
    """``(A'A + lam I)^-1 / phi``."""
    if not (phi > 0 and lam > 0):
        raise ValueError("phi and lam must be positive")
    G = _normal_matrix(A, lam)
    cho = linalg.cho_factor(G, lower=True)
    P = linalg.cho_solve(cho, np.eye(G.shape[0])) / phi
    return 0.5 * (P + P.T)


def log_evidence(A, y, phi, psi, solution=None):
    """``ln N(y; 0, A A'/psi + I/phi)`` evaluated in k-space."""
    if not (phi > 0 and psi > 0):
        raise ValueError(f"precisions must be positive, got phi={phi}, psi={psi}")
    A = np.atleast_2d(np.asarray(A, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    m, k = A.shape
    lam = psi / phi
    sol = ridge_solve(A, y, lam) if solution is None else solution
    logdet_py = -m * math.log(phi) - k * math.log(lam) + sol.logdet
    quad = phi * sol.data_fit
    value = -0.5 * (m * LOG_2PI + logdet_py + quad)
    if not math.isfinite(value):
        raise NumericalError(f"log evidence is not finite at phi={phi}, psi={psi}")
    return value


class SpectralRidge:
    """Ridge quantities for many ``lam`` at once, from one thin SVD of ``A``.

    With ``A = U diag(sv) V'``, ``s = sv**2`` and ``b = U'y``:

        logdet(lam)   = sum ln(s + lam) + (k - rank) ln(lam)
        data_fit(lam) = rperp2 + sum b**2 lam/(s + lam)
        residual(lam) = rperp2 + sum b**2 lam**2/(s + lam)**2
        coeff(lam)    = sum b**2 s/(s + lam)**2
    """

    def __init__(self, A, y):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        y = np.asarray(y, dtype=float).ravel()
        self.m, self.k = A.shape
        U, sv, Vt = np.linalg.svd(A, full_matrices=False)
        self.U, self.sv, self.Vt = U, sv, Vt
        self.s = sv * sv
        self.b = U.T @ y
        self.b2 = self.b * self.b
        perp = y - U @ self.b
        self.rperp2 = float(perp @ perp)
        self.yty = float(y @ y)

    def _lam(self, lam):
        return np.asarray(lam, dtype=float)[..., None]

    def logdet(self, lam):
        lam_ = self._lam(lam)
        return np.log(self.s + lam_).sum(-1) + (self.k - self.s.size) * np.log(lam_[..., 0])

    def data_fit(self, lam):
        lam_ = self._lam(lam)
        return self.rperp2 + (self.b2 * lam_ / (self.s + lam_)).sum(-1)

    def residual_ss(self, lam):
        lam_ = self._lam(lam)
        return self.rperp2 + (self.b2 * (lam_ / (self.s + lam_)) ** 2).sum(-1)

    def coeff_ss(self, lam):
        lam_ = self._lam(lam)
        return (self.b2 * self.s / (self.s + lam_) ** 2).sum(-1)

    def x(self, lam):
        return self.Vt.T @ (self.sv * self.b / (self.s + lam))
