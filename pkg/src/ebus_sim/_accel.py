"""numba switch.

Set ``EBUS_SIM_DISABLE_NUMBA=1`` to run the kernels as plain Python over
numpy arrays (slow, but easy to step through in a debugger).  The same
source is used in both modes, so results are bit-identical.
"""

from __future__ import annotations

import os

_DISABLED = os.environ.get("EBUS_SIM_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False
    _njit = None


def njit(*args, **kwargs):
    if HAVE_NUMBA:
        kwargs.setdefault("cache", True)
        kwargs.setdefault("nogil", True)
        return _njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda fn: fn


def backend() -> str:
    return "numba" if HAVE_NUMBA else "python"
