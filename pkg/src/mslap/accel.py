"""Numba acceleration switch.

Hot kernels in this package come in two flavours: a numba ``@njit`` loop and a
vectorised numpy equivalent.  Which one runs is decided at call time by
:func:`enabled`.  Set ``MSLAP_DISABLE_NUMBA=1`` in the environment to force the
numpy path (useful when numba is unavailable or when debugging), or use the
:func:`use_numba` context manager to toggle it in-process.
"""
from __future__ import annotations

import os
from contextlib import contextmanager

try:
    import numba

    HAVE_NUMBA = True
    if "NUMBA_THREADING_LAYER" not in os.environ:
        # skip probing an old system TBB, which only emits a warning
        numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

_FALSY = ("", "0", "false", "no", "off")
_disabled = os.environ.get("MSLAP_DISABLE_NUMBA", "0").strip().lower() not in _FALSY


def enabled() -> bool:
    """Return True when numba kernels should be used."""
    return HAVE_NUMBA and not _disabled


@contextmanager
def use_numba(flag: bool):
    global _disabled
    old = _disabled
    _disabled = not flag
    try:
        yield
    finally:
        _disabled = old


def njit(*args, **kwargs):
    """``numba.njit`` with on-disk caching, or a no-op without numba."""
    kwargs.setdefault("cache", True)

    def wrap(fn):
        if not HAVE_NUMBA:
            return fn
        return numba.njit(**kwargs)(fn)

    if args and callable(args[0]):
        return wrap(args[0])
    return wrap


if HAVE_NUMBA:
    prange = numba.prange
else:  # pragma: no cover
    prange = range


def set_threads(n: int) -> None:
    if HAVE_NUMBA and n and n > 0:
        numba.set_num_threads(min(int(n), numba.config.NUMBA_NUM_THREADS))
