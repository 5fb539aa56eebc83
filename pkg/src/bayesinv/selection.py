"""Model-order and basis-family selection.

Two routes:

* joint MAP over ``(x, phi, psi, k, l)``: alternating closed-form updates
  (:func:`joint_map_alg1`) or a profiled decade search in ``lam``
  (:func:`joint_map_alg2`), then ``argmin J(k, l)``;
* marginal MAP: evidence ``p(y | k, l)`` estimated on prior samples of
  ``(phi, psi)``, normalized into nested conditional tables
  (:func:`marginal_map_pipeline`).

``lam = psi/phi`` everywhere, including the joint updates.
All probability arithmetic is done in log space.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import kernels
from .basis import K_MAX, L_MAX, BasisError, FrequencyGrid, RadialGrid, design_matrices
from .gaussian import LOG_2PI, NumericalError, SpectralRidge, ridge_solve
from .hyper import DEFAULT_LAMBDA_GRID, GammaPrior, HyperCriterionContext, HyperError


class SelectionError(ValueError):
    """Invalid selection setup (orders, families, samples)."""


def order_prior(k, k_max=K_MAX):
    """Decreasing order prior ``2(k_max - k) / (k_max (k_max - 1))`` for ``1 <= k < k_max``."""
    if k_max < 2:
        raise SelectionError(f"k_max must be >= 2, got {k_max}")
    if k < 1:
        raise SelectionError(f"order must be >= 1, got {k}")
    if k >= k_max:
        return 0.0
    return 2.0 * (k_max - k) / (k_max * (k_max - 1))


def log_order_prior(k, k_max=K_MAX):
    p = order_prior(k, k_max)
    return math.log(p) if p > 0 else -math.inf


@dataclass(frozen=True)
class ModelPriors:
    """Hyperpriors plus the order prior and a uniform prior over ``n_families`` bases."""

    phi: GammaPrior = field(default_factory=GammaPrior)
    psi: GammaPrior = field(default_factory=GammaPrior)
    k_max: int = K_MAX
    n_families: int = L_MAX

    def __post_init__(self):
        if self.k_max < 2:
            raise SelectionError(f"k_max must be >= 2, got {self.k_max}")
        if self.n_families < 1:
            raise SelectionError("need at least one basis family")

    def log_p_k(self, k):
        return log_order_prior(k, self.k_max)

    def log_p_l(self):
        return -math.log(self.n_families)

    def context(self, A, y):
        return HyperCriterionContext(A, y, self.phi, self.psi)

    def require_proper(self):
        if self.phi.improper or self.psi.improper:
            raise HyperError("joint MAP estimation needs proper Gamma priors (beta > 0)")


# ---------------------------------------------------------------------------
# joint MAP criteria


def _model_terms(k, priors):
    lp = priors.log_p_k(k)
    if lp == -math.inf:
        return math.inf
    return -lp - priors.log_p_l()


def j3(x, phi, psi, ctx, priors):
    """Negative log joint posterior of ``(x, phi, psi, k, l)`` up to a constant.

    Returns ``+inf`` for an order with zero prior mass.
    """
    if not (phi > 0 and psi > 0):
        raise HyperError(f"phi and psi must be positive, got ({phi}, {psi})")
    x = np.asarray(x, dtype=float)
    m, k = ctx.m, ctx.k
    model = _model_terms(k, priors)
    if model == math.inf:
        return math.inf
    res = ctx.y - ctx.A @ x
    a1, b1 = priors.phi.alpha, priors.phi.beta
    a2, b2 = priors.psi.alpha, priors.psi.beta
    return (
        model
        - (0.5 * m + a1 - 1.0) * math.log(phi)
        - (0.5 * k + a2 - 1.0) * math.log(psi)
        + phi * (b1 + 0.5 * float(res @ res))
        + psi * (b2 + 0.5 * float(x @ x))
    )


def j4(phi, psi, ctx, priors):
    """:func:`j3` with ``x`` replaced by the ridge estimate at ``lam = psi/phi``."""
    sol = ctx.solution(psi / phi)
    return j3(sol.x, phi, psi, ctx, priors)


def j5(phi, lam, ctx, priors):
    """Joint criterion in ``(phi, lam)``."""
    if not (phi > 0 and lam > 0):
        raise HyperError(f"phi and lam must be positive, got ({phi}, {lam})")
    m, k = ctx.m, ctx.k
    model = _model_terms(k, priors)
    if model == math.inf:
        return math.inf
    sol = ctx.solution(lam)
    a1, b1 = priors.phi.alpha, priors.phi.beta
    a2, b2 = priors.psi.alpha, priors.psi.beta
    return (
        model
        - (0.5 * (m + k) + a1 + a2 - 2.0) * math.log(phi)
        - (0.5 * k + a2 - 1.0) * math.log(lam)
        + phi * (b1 + 0.5 * sol.residual_ss)
        + lam * phi * (b2 + 0.5 * sol.coeff_ss)
    )


def phi_from_j5(lam, ctx, priors):
    """Closed-form minimizer of :func:`j5` over ``phi`` at fixed ``lam``."""
    m, k = ctx.m, ctx.k
    n = 0.5 * (m + k) + priors.phi.alpha + priors.psi.alpha - 2.0
    if not n > 0:
        raise HyperError(
            f"(m+k)/2 + alpha1 + alpha2 - 2 = {n} <= 0: J5 has no interior minimum in phi"
        )
    sol = ctx.solution(lam)
    rate = (priors.phi.beta + 0.5 * sol.residual_ss) + lam * (priors.psi.beta + 0.5 * sol.coeff_ss)
    return n / rate


@dataclass
class JointFitResult:
    x: np.ndarray
    phi: float
    psi: float
    lam: float
    criterion: float
    iterations: int
    converged: bool
    at_boundary: bool = False
    trace: list = field(default_factory=list)
    max_increase: float = 0.0

    @property
    def monotone(self):
        return self.max_increase <= 0.0


# relative slack for the descent check; ill-conditioned fits carry ~1e-8 noise in J3
DESCENT_RTOL = 1e-6


def joint_map_alg1(ctx, priors, lam0=1.0, max_iter=200, tol=1e-8, lam_diverge=1e12,
                   strict=True):
    """Alternate the closed-form ``x``, ``phi`` and ``psi`` updates until ``lam`` settles.

    Each update exactly minimizes :func:`j3` in its block, so the criterion
    trace is non-increasing. An increase beyond rounding slack raises
    ``NumericalError`` when ``strict``; otherwise the largest relative
    increase is reported in ``max_increase``.
    """
    priors.require_proper()
    m, k = ctx.m, ctx.k
    a1, b1 = priors.phi.alpha, priors.phi.beta
    a2, b2 = priors.psi.alpha, priors.psi.beta
    n_phi, n_psi = 0.5 * m + a1 - 1.0, 0.5 * k + a2 - 1.0
    if not (n_phi > 0 and n_psi > 0):
        raise HyperError("joint MAP updates need m/2 + alpha1 > 1 and k/2 + alpha2 > 1")
    if not lam0 > 0:
        raise HyperError(f"lam0 must be positive, got {lam0}")

    lam = float(lam0)
    trace = []
    converged = False
    worst = 0.0
    it = 0
    for it in range(1, max_iter + 1):
        sol = ridge_solve(ctx.A, ctx.y, lam)
        phi = n_phi / (b1 + 0.5 * sol.residual_ss)
        psi = n_psi / (b2 + 0.5 * sol.coeff_ss)
        value = j3(sol.x, phi, psi, ctx, priors)
        if trace and math.isfinite(value):
            prev = trace[-1][1]
            if value > prev + DESCENT_RTOL * max(1.0, abs(prev)):
                if strict:
                    raise NumericalError(f"J3 increased at iteration {it}: {prev} -> {value}")
                worst = max(worst, (value - prev) / max(1.0, abs(prev)))
        lam_new = psi / phi
        trace.append((lam_new, value))
        step = abs(lam_new - lam) / lam
        lam = lam_new
        if lam > lam_diverge:
            break
        if step < tol:
            converged = True
            break
    return JointFitResult(sol.x, phi, psi, lam, value, it, converged, trace=trace,
                          max_increase=worst)


def joint_map_alg2(ctx, priors, lam_grid=None):
    """Decade search of the phi-profiled :func:`j5` followed by a refit at the minimizer."""
    priors.require_proper()
    grid = DEFAULT_LAMBDA_GRID if lam_grid is None else np.asarray(lam_grid, dtype=float).ravel()
    if grid.size == 0 or not np.all(grid > 0):
        raise HyperError("lambda grid must be nonempty and strictly positive")
    trace = []
    for lam in grid:
        phi = phi_from_j5(lam, ctx, priors)
        trace.append((float(lam), j5(phi, lam, ctx, priors)))
    values = np.array([v for _, v in trace])
    best = int(np.argmin(values)) if np.isfinite(values).any() else 0
    lam_hat = float(grid[best])
    sol = ctx.solution(lam_hat)
    phi = phi_from_j5(lam_hat, ctx, priors)
    value = j5(phi, lam_hat, ctx, priors)
    at_boundary = grid.size > 1 and best in (0, grid.size - 1)
    return JointFitResult(sol.x, phi, lam_hat * phi, lam_hat, value, int(grid.size), True,
                          bool(at_boundary), trace)


# ---------------------------------------------------------------------------
# evidence and marginal criteria


EVIDENCE_MODES = ("paper-mc", "literal-alg")


def _grid_coefs(m, k, priors, mode):
    if mode == "paper-mc":
        # ln N(y; 0, P_y): log density with the k-space determinant identity
        return (-0.5 * m * LOG_2PI, 0.5 * (m - k), 0.5 * k, 0.0, 0.0)
    if mode == "literal-alg":
        # -J2 of the reduced (phi, psi) form
        a1, b1 = priors.phi.alpha, priors.phi.beta
        a2, b2 = priors.psi.alpha, priors.psi.beta
        return (0.0, a1 - 1.0 + 0.5 * (m - k), a2 - 1.0 + 0.5 * k, b1, b2)
    raise SelectionError(f"unknown evidence mode {mode!r}; choose from {EVIDENCE_MODES}")


def _check_samples(phis, psis):
    phis = np.asarray(phis, dtype=float).ravel()
    psis = np.asarray(psis, dtype=float).ravel()
    if phis.size == 0 or psis.size == 0:
        raise SelectionError("evidence estimation needs at least one phi and one psi sample")
    if not (np.all(phis > 0) and np.all(psis > 0)):
        raise SelectionError("precision samples must be positive")
    return phis, psis


def log_weight_grid(A, y, phis, psis, priors=None, mode="paper-mc", spectral=None):
    """Log weights of all sample pairs, shape ``(len(psis), len(phis))``."""
    priors = priors or ModelPriors()
    phis, psis = _check_samples(phis, psis)
    sr = spectral or SpectralRidge(A, y)
    coefs = _grid_coefs(sr.m, sr.k, priors, mode)
    return kernels.criterion_grid(sr.s, sr.b2, sr.rperp2, sr.k, phis, psis, coefs)


def evidence_mc(A, y, phis, psis, priors=None, mode="paper-mc"):
    """Log of the sample-average evidence over all ``(phi_j, psi_i)`` pairs.

    In ``"paper-mc"`` mode each pair contributes ``p(y | phi_j, psi_i)``, an
    unbiased estimate of ``p(y | k, l)`` when the samples are prior draws.
    ``"literal-alg"`` weights pairs by ``exp(-J2)`` instead (prior densities
    counted again).
    """
    priors = priors or ModelPriors()
    phis, psis = _check_samples(phis, psis)
    sr = SpectralRidge(A, y)
    coefs = _grid_coefs(sr.m, sr.k, priors, mode)
    value = kernels.grid_log_mean_exp(sr.s, sr.b2, sr.rperp2, sr.k, phis, psis, coefs)
    if value == -math.inf:
        warnings.warn("all evidence weights underflowed to zero", RuntimeWarning, stacklevel=2)
    return value


def j6(k, log_evidence, priors):
    """``-ln p(k) - ln p(y | k, l)``."""
    lp = priors.log_p_k(k) if isinstance(priors, ModelPriors) else log_order_prior(k, priors)
    if lp == -math.inf or log_evidence == -math.inf:
        return math.inf
    return -lp - log_evidence


def j7(log_evidence_per_k, priors):
    """``-ln sum_k p(y | k, l) p(k)`` for one family; entry ``i`` is order ``k = i + 1``."""
    k_max = priors.k_max if isinstance(priors, ModelPriors) else int(priors)
    ev = np.asarray(log_evidence_per_k, dtype=float)
    lp = np.array([log_order_prior(k, k_max) for k in range(1, ev.size + 1)])
    with np.errstate(invalid="ignore"):
        terms = np.where(np.isneginf(lp) | np.isneginf(ev), -np.inf, ev + lp)
    if np.all(np.isneginf(terms)):
        return math.inf
    return -float(logsumexp(terms))


# ---------------------------------------------------------------------------
# marginal MAP pipeline


@dataclass
class ScoreTables:
    """Normalized tables of the marginal pipeline.

    Axis order is ``(family, order, phi sample j, psi sample i)``:
    ``p_psi[l, k, j, :]`` sums to one, ``p_phi[l, k, :]`` sums to one,
    ``p_k[l, :]`` sums to one and ``p_l`` sums to one.
    """

    l_set: tuple
    orders: np.ndarray
    phis: np.ndarray
    psis: np.ndarray
    p_psi: np.ndarray
    p_phi: np.ndarray
    p_k: np.ndarray
    p_l: np.ndarray
    log_evidence: np.ndarray

    def check(self, atol=1e-12):
        for name, table in (("p_psi", self.p_psi), ("p_phi", self.p_phi),
                            ("p_k", self.p_k), ("p_l", self.p_l)):
            if np.any(table < 0) or not np.all(np.isfinite(table)):
                raise NumericalError(f"{name} has negative or non-finite entries")
            if not np.allclose(table.sum(axis=-1), 1.0, rtol=0, atol=atol):
                raise NumericalError(f"{name} is not normalized over its last axis")


@dataclass
class MarginalResult:
    tables: ScoreTables
    l_hat: int
    k_hat: int
    j_hat: int
    i_hat: int
    phi: float
    psi: float
    lam: float
    x: np.ndarray
    yhat: np.ndarray
    design: object = None


def _normalize(log_table, axis):
    # shift by the maximum first: log weights can reach ~1e17, where
    # subtracting a log-sum-exp of the same magnitude loses every digit
    top = np.max(log_table, axis=axis, keepdims=True)
    finite_top = np.where(np.isfinite(top), top, 0.0)
    with np.errstate(invalid="ignore"):
        shifted = log_table - finite_top
        log_rel = logsumexp(shifted, axis=axis, keepdims=True)
        out = np.where(np.isneginf(log_rel), -np.inf, shifted - log_rel)
    return out, np.squeeze(finite_top + log_rel, axis=axis)


def family_design(grid, qgrid, l, k_max, quadrature="rectangle"):
    """Design matrices at order ``k_max``; order ``k`` uses the first ``k`` columns."""
    return design_matrices(grid, qgrid, l, k_max, quadrature=quadrature, k_max=k_max)


def sample_hyperparameters(priors, n_phi, n_psi, seed):
    if n_phi < 1 or n_psi < 1:
        raise SelectionError("n_phi and n_psi must be >= 1")
    rng = np.random.default_rng(seed)
    phis = priors.phi.sample(rng, n_phi)
    psis = priors.psi.sample(rng, n_psi)
    return phis, psis


def marginal_map_pipeline(y, grid=None, qgrid=None, l_set=None, priors=None, n_phi=64,
                          n_psi=64, seed=0, mode="paper-mc", use_order_prior=True,
                          quadrature="rectangle", samples=None):
    """Nested-normalization marginal MAP selection of ``(l, k, phi, psi)`` and the final ridge fit.

    For each family and order the log weights of all sample pairs are
    computed once; each table is normalized along its own axis after its
    marginal (sum over the inner axis) has been taken, so ``p_k`` carries
    the sample-average evidence times ``p(k)``. Selection follows the
    argmax chain ``l -> k -> j -> i``; ties go to the smaller index.
    """
    priors = priors or ModelPriors()
    grid = grid or RadialGrid()
    y = np.asarray(y, dtype=float).ravel()
    qgrid = qgrid or FrequencyGrid.default(y.size, grid.R_c)
    if qgrid.m != y.size:
        raise SelectionError(f"data has {y.size} points but the q grid has {qgrid.m}")
    l_set = tuple(range(1, L_MAX + 1)) if l_set is None else tuple(l_set)
    if not l_set:
        raise SelectionError("the basis family set is empty")
    for l in l_set:
        if l not in range(1, L_MAX + 1):
            raise BasisError(f"unknown basis family l={l!r}")
    k_max = priors.k_max
    if samples is None:
        phis, psis = sample_hyperparameters(priors, n_phi, n_psi, seed)
    else:
        phis, psis = _check_samples(*samples)
    n_l, n_j, n_i = len(l_set), phis.size, psis.size

    log_w = np.empty((n_l, k_max, n_j, n_i))
    designs = {}
    for a, l in enumerate(l_set):
        dm = family_design(grid, qgrid, l, k_max, quadrature)
        designs[l] = dm
        for k in range(1, k_max + 1):
            sr = SpectralRidge(dm.A[:, :k], y)
            coefs = _grid_coefs(sr.m, k, priors, mode)
            log_w[a, k - 1] = kernels.criterion_grid(
                sr.s, sr.b2, sr.rperp2, k, phis, psis, coefs).T
    bad = np.argwhere(np.isnan(log_w))
    if bad.size:
        a, kk, j, i = bad[0]
        raise NumericalError(
            f"NaN weight at i={i + 1}, j={j + 1}, k={kk + 1}, l={l_set[a]}")

    log_p_psi, log_m_phi = _normalize(log_w, axis=3)
    log_p_phi, log_m_k = _normalize(log_m_phi, axis=2)
    log_evidence = log_m_k - math.log(n_i * n_j)
    if use_order_prior:
        log_pk = np.array([log_order_prior(k, k_max) for k in range(1, k_max + 1)])
        log_m_k = log_m_k + log_pk[None, :]
    log_p_k, log_m_l = _normalize(log_m_k, axis=1)
    log_p_l, _ = _normalize(log_m_l, axis=0)

    tables = ScoreTables(
        l_set=l_set,
        orders=np.arange(1, k_max + 1),
        phis=phis,
        psis=psis,
        p_psi=np.exp(log_p_psi),
        p_phi=np.exp(log_p_phi),
        p_k=np.exp(log_p_k),
        p_l=np.exp(log_p_l),
        log_evidence=log_evidence,
    )
    a = int(np.argmax(log_p_l))
    kk = int(np.argmax(log_p_k[a]))
    j = int(np.argmax(log_p_phi[a, kk]))
    i = int(np.argmax(log_p_psi[a, kk, j]))
    phi, psi = float(phis[j]), float(psis[i])
    lam = psi / phi
    l_hat, k_hat = l_set[a], kk + 1
    dm = designs[l_hat]
    sol = ridge_solve(dm.A[:, :k_hat], y, lam)
    return MarginalResult(tables, l_hat, k_hat, j + 1, i + 1, phi, psi, lam, sol.x, sol.yhat,
                          dm)


def joint_map_select(y, grid=None, qgrid=None, l_set=None, priors=None, algorithm="joint1",
                     quadrature="rectangle", **options):
    """Run a joint MAP algorithm for every ``(l, k)`` and pick ``argmin J(k, l)``.

    Returns ``(table, results, (l_hat, k_hat))`` with ``table[a, k-1]`` the
    criterion of family ``l_set[a]`` at order ``k``.
    """
    priors = priors or ModelPriors()
    grid = grid or RadialGrid()
    y = np.asarray(y, dtype=float).ravel()
    qgrid = qgrid or FrequencyGrid.default(y.size, grid.R_c)
    l_set = tuple(range(1, L_MAX + 1)) if l_set is None else tuple(l_set)
    if not l_set:
        raise SelectionError("the basis family set is empty")
    if algorithm == "joint1":
        options.setdefault("strict", False)
        run = joint_map_alg1
    elif algorithm == "joint2":
        run = joint_map_alg2
    else:
        raise SelectionError(f"unknown joint algorithm {algorithm!r}")
    k_max = priors.k_max
    table = np.full((len(l_set), k_max), np.inf)
    results = {}
    for a, l in enumerate(l_set):
        dm = family_design(grid, qgrid, l, k_max, quadrature)
        for k in range(1, k_max + 1):
            ctx = priors.context(dm.A[:, :k], y)
            res = run(ctx, priors, **options)
            results[(l, k)] = res
            table[a, k - 1] = res.criterion
    # ties: smaller k first, then smaller l
    flat = int(np.argmin(np.where(np.isnan(table), np.inf, table).T))
    kk, a = divmod(flat, len(l_set))
    return table, results, (l_set[a], kk + 1)
