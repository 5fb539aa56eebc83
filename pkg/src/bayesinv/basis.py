"""Radial/frequency grids, the six basis families and the B, C, A matrices.

The forward operator of the scattering problem is

    A[i, j] = 4*pi * integral_0^Rc r**2 j0(q_i r) b_j(r) dr

with ``j0`` the spherical Bessel function of order zero (``sin(x)/x``),
discretized as ``A = C @ B`` on the left-endpoint grid ``r_n = (n-1)*dr``.
Basis family ``l = 1`` uses the *cylindrical* Bessel ``J0``; using ``j0``
there would make it identical to family ``l = 2``.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import j0 as bessel_j0

L_MAX = 6
K_MAX = 12

FAMILY_NAMES = {
    1: "bessel_j0",
    2: "sinc",
    3: "gaussian",
    4: "gaussian_bessel_j0",
    5: "sech",
    6: "lorentzian",
}

QUADRATURES = ("rectangle", "trapezoid")


class BasisError(ValueError):
    """Invalid basis family, order or grid."""


def spherical_j0(x):
    """``sin(x)/x`` with the removable singularity filled in (``j0(0) = 1``)."""
    return np.sinc(np.asarray(x, dtype=float) / np.pi)


@dataclass(frozen=True)
class RadialGrid:
    """Left-endpoint grid ``r_n = (n-1)*dr``, ``n = 1..N``, ``dr = R_c/N``."""

    N: int = 100
    R_c: float = 8.0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise BasisError(f"N must be a positive integer, got {self.N!r}")
        if not self.R_c > 0:
            raise BasisError(f"R_c must be positive, got {self.R_c!r}")

    @property
    def dr(self):
        return self.R_c / self.N

    @property
    def r(self):
        return np.arange(self.N) * self.dr

    def nodes(self, quadrature="rectangle"):
        """Quadrature nodes and weights on ``[0, R_c]``."""
        if quadrature == "rectangle":
            return self.r, np.full(self.N, self.dr)
        if quadrature == "trapezoid":
            r = np.arange(self.N + 1) * self.dr
            w = np.full(self.N + 1, self.dr)
            w[0] = w[-1] = 0.5 * self.dr
            return r, w
        raise BasisError(f"unknown quadrature {quadrature!r}; choose from {QUADRATURES}")


@dataclass(frozen=True)
class FrequencyGrid:
    """Momentum-transfer points ``q_i`` (fm^-1), strictly positive and increasing."""

    q: np.ndarray = field(repr=False)

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float).ravel()
        if q.size == 0:
            raise BasisError("frequency grid is empty")
        if not np.all(q > 0) or not np.all(np.diff(q) > 0):
            raise BasisError("q points must be strictly positive and strictly increasing")
        q.setflags(write=False)
        object.__setattr__(self, "q", q)

    @classmethod
    def default(cls, m=20, R_c=8.0):
        """The rule ``q_i = i*pi/R_c``, ``i = 1..m``."""
        if m < 1:
            raise BasisError(f"m must be >= 1, got {m}")
        return cls(np.arange(1, m + 1) * np.pi / R_c)

    @property
    def m(self):
        return self.q.size


@dataclass(frozen=True)
class BasisFamily:
    """Family ``l`` with scale points ``q_j = j*pi/R_c``, ``j = 1..k``."""

    l: int
    scales: np.ndarray = field(repr=False)

    def __post_init__(self):
        check_family(self.l)
        scales = np.asarray(self.scales, dtype=float).ravel()
        if scales.size < 1:
            raise BasisError("a basis family needs at least one scale point")
        if not np.all(scales > 0):
            raise BasisError("basis scales must be positive")
        scales.setflags(write=False)
        object.__setattr__(self, "scales", scales)

    @classmethod
    def default(cls, l, k, R_c=8.0, k_max=K_MAX):
        if not 1 <= k <= k_max:
            raise BasisError(f"order k={k} outside [1, {k_max}]")
        return cls(l, np.arange(1, k + 1) * np.pi / R_c)

    @property
    def k(self):
        return self.scales.size

    @property
    def name(self):
        return FAMILY_NAMES[self.l]


def check_family(l):
    if l not in FAMILY_NAMES:
        raise BasisError(f"unknown basis family l={l!r}; valid families are 1..{L_MAX}")


def basis_value(l, q_j, r):
    """Value of basis function ``b_j(r)`` of family ``l`` with scale ``q_j``.

    Broadcasts over ``q_j`` and ``r``. All families are finite at ``r = 0``
    and bounded by 1 in absolute value.
    """
    check_family(l)
    x = np.asarray(q_j, dtype=float) * np.asarray(r, dtype=float)
    if l == 1:
        return bessel_j0(x)
    if l == 2:
        return spherical_j0(x)
    if l == 3:
        return np.exp(-0.5 * x * x)
    if l == 4:
        return np.exp(-0.5 * x * x) * bessel_j0(x)
    if l == 5:
        # 1/cosh(x) = 2 e^-|x| / (1 + e^-2|x|), overflow-free
        ax = np.abs(x)
        return 2.0 * np.exp(-ax) / (1.0 + np.exp(-2.0 * ax))
    return 1.0 / (1.0 + x * x)


def build_B(grid, family, k=None, quadrature="rectangle"):
    """``B[n, j] = b_j(r_n)``, shape ``(N, k)`` (``N + 1`` rows for the trapezoid rule)."""
    scales = family.scales if k is None else family.scales[:k]
    if k is not None and k > family.k:
        raise BasisError(f"order k={k} exceeds the {family.k} scales of the family")
    r, _ = grid.nodes(quadrature)
    return basis_value(family.l, scales[None, :], r[:, None])


def build_C(grid, qgrid, quadrature="rectangle"):
    """``C[i, n] = 4*pi*w_n * r_n**2 * j0(q_i r_n)``; ``w_n = dr`` for the rectangle rule."""
    r, w = grid.nodes(quadrature)
    return 4.0 * np.pi * (w * r * r)[None, :] * spherical_j0(qgrid.q[:, None] * r[None, :])


def build_A(B, C):
    """Forward matrix ``A = C @ B``."""
    B = np.asarray(B, dtype=float)
    C = np.asarray(C, dtype=float)
    if B.ndim != 2 or C.ndim != 2 or C.shape[1] != B.shape[0]:
        raise BasisError(f"cannot multiply C{C.shape} by B{B.shape}")
    return C @ B


@dataclass(frozen=True)
class DesignMatrices:
    grid: RadialGrid
    qgrid: FrequencyGrid
    family: BasisFamily
    B: np.ndarray = field(repr=False)
    C: np.ndarray = field(repr=False)
    A: np.ndarray = field(repr=False)
    quadrature: str = "rectangle"

    @property
    def r(self):
        return self.grid.nodes(self.quadrature)[0]


def design_matrices(grid, qgrid, l, k, quadrature="rectangle", k_max=K_MAX):
    """Build B, C and A for family ``l`` truncated at order ``k``."""
    family = BasisFamily.default(l, k, grid.R_c, k_max=k_max)
    B = build_B(grid, family, quadrature=quadrature)
    C = build_C(grid, qgrid, quadrature=quadrature)
    for a in (B, C):
        a.setflags(write=False)
    A = build_A(B, C)
    A.setflags(write=False)
    return DesignMatrices(grid, qgrid, family, B, C, A, quadrature)
