"""Optional numba acceleration.

Kernels decorated with :func:`optional_njit` are compiled with numba when it is
importable and ``VQ_DISABLE_NUMBA`` is unset (or ``0``). Each kernel in
:mod:`vqemit._kernels` also has a pure-numpy twin; :func:`use_numba` picks the
path at call time so tests and the benchmark can flip it.
"""

from __future__ import annotations

import os

try:
    from numba import njit

    NUMBA_INSTALLED = True
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    NUMBA_INSTALLED = False


def numba_disabled() -> bool:
    return os.environ.get("VQ_DISABLE_NUMBA", "0") not in ("", "0", "false", "False")


def use_numba() -> bool:
    return NUMBA_INSTALLED and not numba_disabled()


def optional_njit(*args, **kwargs):
    def decorator(func):
        if NUMBA_INSTALLED:
            return njit(*args, **kwargs)(func)
        return func

    return decorator
