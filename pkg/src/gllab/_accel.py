"""Backend selection for the hot kernels.

The compiled path uses numba; setting ``GLLAB_DISABLE_NUMBA=1`` (or running
without numba installed) selects the pure-numpy implementations instead.
"""
import os

_FALSY = {"", "0", "false", "no", "off"}

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


def numba_requested() -> bool:
    flag = os.environ.get("GLLAB_DISABLE_NUMBA", "").strip().lower()
    return HAVE_NUMBA and flag in _FALSY


USE_NUMBA = numba_requested()


def njit(*args, **kwargs):
    """``numba.njit`` when available, otherwise a no-op decorator."""
    if HAVE_NUMBA:
        kwargs.setdefault("cache", True)
        return numba.njit(*args, **kwargs)

    def wrap(fn):
        return fn

    if args and callable(args[0]):
        return args[0]
    return wrap
