"""Numba switch.

Set ``RYDGEN_DISABLE_NUMBA=1`` before import to force the pure-numpy paths.
"""
import os

_DISABLED = os.environ.get("RYDGEN_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if _DISABLED:
        raise ImportError
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False
    _njit = None

USE_NUMBA = HAVE_NUMBA and not _DISABLED


def njit(func):
    """Compile ``func`` with numba when available, otherwise return None."""
    if _njit is None:
        return None
    return _njit(cache=True, nogil=True)(func)


def pick(numba_impl, numpy_impl):
    return numba_impl if (USE_NUMBA and numba_impl is not None) else numpy_impl
