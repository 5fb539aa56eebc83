"""Elastic electron-scattering forward model and data generators.

Charge density (symmetric Fermi distribution) and its form factor

    rho(r) = alpha * cosh(R/d) / (cosh(R/d) + cosh(r/d))
    F(q)   = 4*pi * integral_0^inf r**2 j0(q r) rho(r) dr

with ``F(q)`` also available in closed form. ``alpha`` is always derived
from the charge ``Z`` through ``4*pi*integral r**2 rho dr = Z``.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .basis import FrequencyGrid, RadialGrid, design_matrices, spherical_j0

FERMI_Q_POINTS = np.array(
    [0.001, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0, 5.5, 6.0, 6.5, 7.0]
)
CARBON12_D = 0.626
SMALL_Q = 1e-3


def nuclear_radius(mass_number, r0=1.1):
    """Half-density radius ``r0 * A**(1/3)`` in fm."""
    return r0 * mass_number ** (1.0 / 3.0)


def _fermi_shape(r, R, d):
    # cosh(a)/(cosh(a)+cosh(b)) with every exponent scaled by exp(-max(a, b))
    a = R / d
    b = np.abs(np.asarray(r, dtype=float)) / d
    top = np.maximum(a, b)
    num = np.exp(a - top) + np.exp(-a - top)
    return num / (num + np.exp(b - top) + np.exp(-b - top))


def _rmax(R, d):
    return R + 40.0 * d


def _charge_integral(R, d):
    val, _ = integrate.quad(
        lambda r: r * r * _fermi_shape(r, R, d), 0.0, _rmax(R, d),
        epsabs=1e-13, epsrel=1e-13, limit=200, points=[R],
    )
    return 4.0 * math.pi * val


def normalize_fermi(R, d, Z):
    """Amplitude ``alpha`` (fm^-3) giving total charge ``Z``."""
    if not (R > 0 and d > 0 and Z > 0):
        raise ValueError(f"R, d and Z must be positive, got R={R}, d={d}, Z={Z}")
    return Z / _charge_integral(R, d)


@dataclass(frozen=True)
class FermiModel:
    R: float
    d: float
    Z: float
    alpha: float = field(default=None)

    def __post_init__(self):
        if not (self.R > 0 and self.d > 0 and self.Z > 0):
            raise ValueError("FermiModel needs R > 0, d > 0, Z > 0")
        if self.alpha is None:
            object.__setattr__(self, "alpha", normalize_fermi(self.R, self.d, self.Z))

    @classmethod
    def carbon12(cls):
        return cls(R=nuclear_radius(12), d=CARBON12_D, Z=6.0)


def fermi_density(r, model):
    """Symmetric Fermi density at radius ``r`` (fm)."""
    return model.alpha * _fermi_shape(r, model.R, model.d)


def form_factor_quadrature(q, model):
    """``4*pi*integral r**2 j0(q r) rho(r) dr`` by adaptive quadrature, truncated at ``R + 40 d``."""
    rmax = _rmax(model.R, model.d)
    R, d = model.R, model.d
    opts = dict(epsabs=1e-16, epsrel=1e-11, limit=500)
    with warnings.catch_warnings():
        # QUADPACK flags roundoff at this tolerance; results agree with the closed form to ~1e-12
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        vals = [_quad_one(qq, R, d, rmax, opts) for qq in np.atleast_1d(np.asarray(q, dtype=float))]
    out = 4.0 * math.pi * model.alpha * np.array(vals)
    return out if np.ndim(q) else float(out[0])


def _quad_one(qq, R, d, rmax, opts):
    if qq * rmax < 1.0:
        f = lambda r: r * r * spherical_j0(qq * r) * _fermi_shape(r, R, d)  # noqa: E731
        return integrate.quad(f, 0.0, rmax, **opts)[0]
    # r**2 j0(qr) = r sin(qr)/q: oscillatory-weight rule
    val, _ = integrate.quad(lambda r: r * _fermi_shape(r, R, d), 0.0, rmax,
                            weight="sin", wvar=qq, **opts)
    return val / qq


def _form_factor_closed(q, model):
    R, d, alpha = model.R, model.d, model.alpha
    x = math.pi * q * d
    # 1/sinh(x) and coth(x) without overflow
    e2 = np.exp(-2.0 * x)
    csch = 2.0 * np.exp(-x) / (-np.expm1(-2.0 * x))
    coth = (1.0 + e2) / (-np.expm1(-2.0 * x))
    bracket = csch * (R * np.cos(q * R) - math.pi * d * np.sin(q * R) * coth)
    return -(4.0 * math.pi ** 2 * alpha * d / q) / math.tanh(R / d) * bracket


def fermi_form_factor(q, model):
    """Form factor of the symmetric Fermi density.

    Closed form for ``q >= 1e-3`` fm^-1; below that the closed form loses
    digits to cancellation, so quadrature is used.
    """
    q_arr = np.atleast_1d(np.asarray(q, dtype=float))
    if np.any(q_arr <= 0):
        raise ValueError("form factor requires q > 0")
    out = np.empty_like(q_arr)
    small = q_arr < SMALL_Q
    out[~small] = _form_factor_closed(q_arr[~small], model)
    if small.any():
        out[small] = form_factor_quadrature(q_arr[small], model)
    return out if np.ndim(q) else float(out[0])


@dataclass(frozen=True)
class SimulatedDataset:
    q: np.ndarray
    y_clean: np.ndarray
    y_noisy: np.ndarray
    sigma: float
    seed: object = None
    l: int = None
    k: int = None
    x: np.ndarray = None
    problem: str = "synthetic"

    @property
    def m(self):
        return self.q.size


def noise_sigma(y_clean, sigma=None, snr=None):
    """Noise level: explicit ``sigma``, else ``rms(y)/snr``, else ``1e-3*max|y|``."""
    if sigma is not None:
        if sigma < 0:
            raise ValueError("sigma must be nonnegative")
        return float(sigma)
    if snr is not None:
        if not snr > 0:
            raise ValueError("snr must be positive")
        return float(np.sqrt(np.mean(np.square(y_clean))) / snr)
    return float(1e-3 * np.max(np.abs(y_clean)))


def simulate_synthetic(l, k, grid=None, qgrid=None, x_gen=None, sigma=None, snr=None,
                       seed=None, quadrature="rectangle", k_max=None):
    """Data ``y = A x + e`` from basis family ``l`` at order ``k``.

    ``x_gen`` defaults to a standard-normal draw; the same generator then
    draws the noise, so one seed fixes the whole dataset.
    """
    grid = grid or RadialGrid()
    qgrid = qgrid or FrequencyGrid.default(20, grid.R_c)
    kw = {} if k_max is None else {"k_max": k_max}
    dm = design_matrices(grid, qgrid, l, k, quadrature=quadrature, **kw)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(k) if x_gen is None else np.asarray(x_gen, dtype=float)
    if x.shape != (k,):
        raise ValueError(f"x_gen must have {k} entries")
    y_clean = dm.A @ x
    sig = noise_sigma(y_clean, sigma, snr)
    y_noisy = y_clean + sig * rng.standard_normal(y_clean.size)
    return SimulatedDataset(qgrid.q.copy(), y_clean, y_noisy, sig, seed, l, k, x.copy())


def simulate_fermi_dataset(model=None, q_list=None, sigma=0.0, seed=None):
    """Form-factor data of a Fermi model at ``q_list`` (default: the 15-point carbon list)."""
    model = model or FermiModel.carbon12()
    q = FERMI_Q_POINTS if q_list is None else np.asarray(q_list, dtype=float)
    FrequencyGrid(q)  # validates ordering and positivity
    y = fermi_form_factor(q, model)
    rng = np.random.default_rng(seed)
    noisy = y + sigma * rng.standard_normal(y.size) if sigma else y.copy()
    return SimulatedDataset(q.copy(), y, noisy, float(sigma), seed, problem="fermi")
