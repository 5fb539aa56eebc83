"""Numba switch shared by the hot kernels.

Set ``BAYESINV_NO_NUMBA=1`` before import to force the pure-numpy paths.
"""

import os

_DISABLED = os.environ.get("BAYESINV_NO_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if _DISABLED:
        raise ImportError("numba disabled by BAYESINV_NO_NUMBA")
    from numba import njit

    HAS_NUMBA = True
except ImportError:
    njit = None
    HAS_NUMBA = False


def optional_njit(**options):
    """Compile with ``numba.njit(**options)`` when available, else return the function untouched."""

    def decorate(func):
        if not HAS_NUMBA:
            return func
        return njit(**options)(func)

    return decorate
