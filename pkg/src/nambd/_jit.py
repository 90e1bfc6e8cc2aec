"""Switch between numba-compiled kernels and the pure-numpy backend.

Set ``NAMBD_DISABLE_JIT=1`` (or uninstall numba) to route every hot path
through :mod:`nambd._numpy_backend`.  The flag is read once at import.
"""
import os

_flag = os.environ.get("NAMBD_DISABLE_JIT", "").strip().lower()
DISABLED = _flag not in ("", "0", "false", "no")

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

USE_NUMBA = numba is not None and not DISABLED


def njit(*args, **kwargs):
    """``numba.njit`` when available; identity otherwise."""
    if numba is not None:
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda fn: fn


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
