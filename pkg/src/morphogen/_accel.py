"""Numba switch.

Kernels are compiled with numba unless ``MORPHOGEN_DISABLE_NUMBA`` is set to a
non-empty value other than ``0``, or numba cannot be imported. The flag is read
once at import time.
"""

import os

_flag = os.environ.get("MORPHOGEN_DISABLE_NUMBA", "").strip()
DISABLED_BY_ENV = _flag not in ("", "0")

try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is optional
    _numba = None

HAVE_NUMBA = _numba is not None
USE_NUMBA = HAVE_NUMBA and not DISABLED_BY_ENV


def njit(func):
    """Compile ``func`` in nopython mode when numba is available, else return it."""
    if not HAVE_NUMBA:
        return func
    return _numba.njit(cache=True, error_model="numpy")(func)
