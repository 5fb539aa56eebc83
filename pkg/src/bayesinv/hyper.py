"""Gamma hyperpriors and the hyperparameter criterion J2 in its three forms.

``j2_full`` works in data space with the dense m x m covariance
``P_y = A A'/psi + I/phi``; ``j2_reduced`` and ``j2_lambda`` work in k-space
through the ridge solution at ``lam = psi/phi``. All three agree exactly
(the additive constants dropped from each form are the same), which the
tests exploit as a dual-route check.
"""

import math
import threading
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.special import gammaln, logsumexp

from .gaussian import NumericalError, ridge_solve

DEFAULT_LAMBDA_GRID = 10.0 ** np.arange(-8, 5)


class HyperError(ValueError):
    """Invalid hyperparameter or a criterion without an interior optimum."""


@dataclass(frozen=True)
class GammaPrior:
    """Gamma(shape=alpha, rate=beta) prior on a precision.

    ``GammaPrior.jeffreys()`` gives the improper ``1/phi`` limit
    (alpha = beta = 0), which can be evaluated but not sampled.
    """

    alpha: float = 2.0
    beta: float = 1.0
    improper: bool = False

    def __post_init__(self):
        if self.improper:
            if self.alpha != 0 or self.beta != 0:
                raise HyperError("an improper prior is the alpha = beta = 0 limit")
        elif not (self.alpha > 0 and self.beta > 0):
            raise HyperError(
                f"Gamma prior needs alpha > 0 and beta > 0, got ({self.alpha}, {self.beta})"
            )

    @classmethod
    def jeffreys(cls):
        return cls(0.0, 0.0, improper=True)

    @property
    def mean(self):
        if self.improper:
            return math.inf
        return self.alpha / self.beta

    def neg_log_kernel(self, x):
        """``(1 - alpha) ln x + beta x``: minus the log density without its constant."""
        x = np.asarray(x, dtype=float)
        return (1.0 - self.alpha) * np.log(x) + self.beta * x

    def logpdf(self, x):
        if self.improper:
            return -np.log(np.asarray(x, dtype=float))
        const = self.alpha * math.log(self.beta) - gammaln(self.alpha)
        return const - self.neg_log_kernel(x)

    def sample(self, rng, size):
        if self.improper:
            raise HyperError("cannot sample from an improper prior")
        return rng.gamma(shape=self.alpha, scale=1.0 / self.beta, size=size)


class HyperCriterionContext:
    """Data, design matrix and priors, with ridge solutions cached per ``lam``."""

    def __init__(self, A, y, prior_phi=None, prior_psi=None):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.y = np.asarray(y, dtype=float).ravel()
        if self.A.shape[0] != self.y.size:
            raise ValueError(f"A has {self.A.shape[0]} rows but y has {self.y.size} entries")
        self.prior_phi = prior_phi if prior_phi is not None else GammaPrior()
        self.prior_psi = prior_psi if prior_psi is not None else GammaPrior()
        self._cache = {}
        self._lock = threading.Lock()

    @property
    def m(self):
        return self.A.shape[0]

    @property
    def k(self):
        return self.A.shape[1]

    def solution(self, lam):
        lam = float(lam)
        with self._lock:
            sol = self._cache.get(lam)
        if sol is None:
            sol = ridge_solve(self.A, self.y, lam)
            with self._lock:
                self._cache[lam] = sol
        return sol


def _check_positive(**values):
    for name, v in values.items():
        if not v > 0:
            raise HyperError(f"{name} must be positive, got {v}")


def j2_full(phi, psi, ctx):
    """J2 from the dense data covariance (reference route)."""
    _check_positive(phi=phi, psi=psi)
    A, y = ctx.A, ctx.y
    P = A @ A.T / psi
    P[np.diag_indices_from(P)] += 1.0 / phi
    sign, logdet = np.linalg.slogdet(P)
    if sign <= 0:
        raise NumericalError("data covariance is not positive definite")
    quad = float(y @ np.linalg.solve(P, y))
    return float(
        ctx.prior_phi.neg_log_kernel(phi)
        + ctx.prior_psi.neg_log_kernel(psi)
        + 0.5 * logdet
        + 0.5 * quad
    )


def j2_reduced(phi, psi, ctx):
    """J2 in k-space as a function of ``(phi, psi)``."""
    _check_positive(phi=phi, psi=psi)
    a1, b1 = ctx.prior_phi.alpha, ctx.prior_phi.beta
    a2, b2 = ctx.prior_psi.alpha, ctx.prior_psi.beta
    m, k = ctx.m, ctx.k
    sol = ctx.solution(psi / phi)
    return (
        (1.0 - a1 - 0.5 * (m - k)) * math.log(phi)
        + (1.0 - a2 - 0.5 * k) * math.log(psi)
        + b1 * phi
        + b2 * psi
        + 0.5 * sol.logdet
        + 0.5 * phi * sol.data_fit
    )


def j2_lambda(phi, lam, ctx):
    """J2 in k-space as a function of ``(phi, lam)`` with ``psi = lam*phi``."""
    _check_positive(phi=phi, lam=lam)
    a1, b1 = ctx.prior_phi.alpha, ctx.prior_phi.beta
    a2, b2 = ctx.prior_psi.alpha, ctx.prior_psi.beta
    m, k = ctx.m, ctx.k
    sol = ctx.solution(lam)
    return (
        (2.0 - a1 - a2 - 0.5 * m) * math.log(phi)
        + (1.0 - a2 - 0.5 * k) * math.log(lam)
        + b1 * phi
        + b2 * phi * lam
        + 0.5 * sol.logdet
        + 0.5 * phi * sol.data_fit
    )


def _profile_shape(ctx):
    n = 0.5 * ctx.m + ctx.prior_phi.alpha + ctx.prior_psi.alpha - 2.0
    if not n > 0:
        raise HyperError(
            f"m/2 + alpha1 + alpha2 - 2 = {n} <= 0: J2 has no interior minimum in phi; "
            "increase alpha1 + alpha2 or use more data"
        )
    return n


def phi_profile(lam, ctx):
    """Closed-form minimizer of ``j2_lambda(., lam)`` over ``phi``."""
    _check_positive(lam=lam)
    n = _profile_shape(ctx)
    sol = ctx.solution(lam)
    rate = ctx.prior_phi.beta + lam * ctx.prior_psi.beta + 0.5 * sol.data_fit
    if not rate > 0:
        raise HyperError("zero rate in phi profile: improper priors with an exact fit")
    return n / rate


def profiled_j2(lam, ctx):
    return j2_lambda(phi_profile(lam, ctx), lam, ctx)


def marginal_j2(lam, ctx, n_nodes=801, width=12.0):
    """``-ln integral exp(-J2(phi, lam)) dphi`` by trapezoid quadrature in ``ln phi``.

    The nodes span ``width`` profile standard deviations either side of the
    profile optimum, measured in ``ln phi``.
    """
    n = _profile_shape(ctx)
    phi0 = phi_profile(lam, ctx)
    # in u = ln(phi) the integrand exp(-J2 + u) is log-concave with curvature n + 1
    sd = 1.0 / math.sqrt(n + 1.0)
    u = math.log(phi0) + np.linspace(-width * sd, width * sd, n_nodes)
    # for fixed lam, j2_lambda = const - n*ln(phi) + rate*phi
    sol = ctx.solution(lam)
    rate = ctx.prior_phi.beta + lam * ctx.prior_psi.beta + 0.5 * sol.data_fit
    const = j2_lambda(1.0, lam, ctx) - rate
    vals = -(const - n * u + rate * np.exp(u)) + u
    du = u[1] - u[0]
    w = np.full(n_nodes, math.log(du))
    w[0] = w[-1] = math.log(0.5 * du)
    return -float(logsumexp(vals + w))


@dataclass
class LambdaFit:
    lam: float
    phi: float
    criterion: float
    at_boundary: bool
    trace: list = field(default_factory=list)

    @property
    def psi(self):
        return self.lam * self.phi


def optimize_lambda(ctx, lam_grid=None, objective="profile", refine=True):
    """Minimize the phi-eliminated criterion over ``lam``.

    Evaluates the decade grid, then refines by golden-section search in
    ``log10(lam)`` between the grid neighbours of the grid minimizer. A
    minimizer on the grid edge is flagged and not refined.

    ``objective`` is ``"profile"`` (phi at its closed-form optimum) or
    ``"marginal"`` (phi integrated out numerically).
    """
    grid = DEFAULT_LAMBDA_GRID if lam_grid is None else np.asarray(lam_grid, dtype=float).ravel()
    if grid.size == 0 or not np.all(grid > 0):
        raise HyperError("lambda grid must be nonempty and strictly positive")
    if grid.size > 1 and not np.all(np.diff(grid) > 0):
        raise HyperError("lambda grid must be sorted strictly increasing")
    if objective == "profile":
        crit = lambda lam: profiled_j2(lam, ctx)  # noqa: E731
    elif objective == "marginal":
        crit = lambda lam: marginal_j2(lam, ctx)  # noqa: E731
    else:
        raise HyperError(f"unknown objective {objective!r}")

    trace = [(float(lam), float(crit(lam))) for lam in grid]
    values = np.array([v for _, v in trace])
    best = int(np.argmin(values))
    at_boundary = grid.size > 1 and best in (0, grid.size - 1)
    lam_hat, j_hat = float(grid[best]), float(values[best])

    if refine and grid.size > 2 and not at_boundary:
        f = lambda t: crit(10.0 ** t)  # noqa: E731
        lo, mid, hi = np.log10(grid[best - 1: best + 2])
        try:
            res = optimize.minimize_scalar(f, bracket=(lo, mid, hi), method="golden",
                                           options={"xtol": 1e-6})
        except ValueError:
            res = optimize.minimize_scalar(f, bounds=(lo, hi), method="bounded")
        if lo <= res.x <= hi and res.fun < j_hat:
            lam_hat, j_hat = float(10.0 ** res.x), float(res.fun)
            trace.append((lam_hat, j_hat))

    return LambdaFit(lam_hat, phi_profile(lam_hat, ctx), j_hat, bool(at_boundary), trace)


def marginal_j2_exact(lam, ctx):
    """Closed form of :func:`marginal_j2` (Gamma integral in ``phi``); test oracle."""
    n = _profile_shape(ctx)
    a2 = ctx.prior_psi.alpha
    sol = ctx.solution(lam)
    rate = ctx.prior_phi.beta + lam * ctx.prior_psi.beta + 0.5 * sol.data_fit
    rest = (1.0 - a2 - 0.5 * ctx.k) * math.log(lam) + 0.5 * sol.logdet
    return -(gammaln(n + 1.0) - (n + 1.0) * math.log(rate) - rest)
