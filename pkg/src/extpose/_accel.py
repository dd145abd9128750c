"""Numba availability and the switch between compiled and pure-numpy kernels.

Set ``EXTPOSE_DISABLE_NUMBA=1`` in the environment before import to force the
numpy path even when numba is installed.
"""
import os

_FLAG = "EXTPOSE_DISABLE_NUMBA"

try:
    import numba  # noqa: F401

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - depends on environment
    NUMBA_AVAILABLE = False

USE_NUMBA = NUMBA_AVAILABLE and os.environ.get(_FLAG, "0").lower() not in ("1", "true", "yes")


def njit(func=None, **kwargs):
    """``numba.njit`` when numba is importable, identity otherwise.

    The compiled module is only imported when numba exists, but keeping the
    decorator tolerant lets the kernels be read and unit-tested as Python.
    """
    kwargs.setdefault("cache", True)
    kwargs.setdefault("fastmath", False)

    def wrap(f):
        if not NUMBA_AVAILABLE:
            return f
        from numba import njit as _njit

        return _njit(**kwargs)(f)

    if func is not None:
        return wrap(func)
    return wrap
