"""Backend switch for the compiled kernels.

Set ``SIGMORT_BACKEND=numpy`` to force the pure-numpy code paths; the default
is ``numba`` when numba imports cleanly.
"""

import os

BACKEND_ENV = "SIGMORT_BACKEND"

try:
    from numba import njit as _njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False


def numba_enabled() -> bool:
    if not _HAVE_NUMBA:
        return False
    return os.environ.get(BACKEND_ENV, "numba").strip().lower() != "numpy"


def njit(func):
    """``numba.njit(cache=True)`` or the undecorated function without numba."""
    if not _HAVE_NUMBA:  # pragma: no cover
        return func
    return _njit(cache=True)(func)


def select(numba_impl, numpy_impl):
    """Pick a kernel implementation according to the active backend."""
    return numba_impl if numba_enabled() else numpy_impl
