"""Optional numba acceleration.

Set ``GRAPHFRAUD_DISABLE_NUMBA=1`` to force the pure-numpy kernels. The flag
is read once at import time; numba being absent has the same effect.
"""
import os

_FLAG = "GRAPHFRAUD_DISABLE_NUMBA"


def _env_disabled():
    return os.environ.get(_FLAG, "").strip().lower() not in ("", "0", "false", "no")


try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

HAS_NUMBA = numba is not None
USE_NUMBA = HAS_NUMBA and not _env_disabled()


def njit(fn):
    """``numba.njit(cache=True)`` when numba is importable, else ``fn`` unchanged."""
    if numba is None:
        return fn
    return numba.njit(cache=True)(fn)
