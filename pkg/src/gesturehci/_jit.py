"""Numba dispatch.

Hot kernels come in two flavours: an ``@njit`` loop version and a vectorised
numpy version. ``USE_NUMBA`` picks which one the public functions call. Set
``GESTUREHCI_DISABLE_NUMBA=1`` to force the numpy path (numba is also skipped
automatically when it is not importable).
"""
import logging
import os

_DISABLED = os.environ.get("GESTUREHCI_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    import numba

    logging.getLogger("numba").setLevel(logging.WARNING)
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _DISABLED


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, otherwise a no-op decorator.

    The decorated function stays callable either way, so the loop kernels can
    be tested against the numpy kernels even without numba.
    """
    kwargs.setdefault("cache", True)
    if HAVE_NUMBA:
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]):
        return args[0]

    def wrapper(f):
        return f

    return wrapper


def pick(numba_impl, numpy_impl):
    return numba_impl if USE_NUMBA else numpy_impl
