"""Numeric backend selection.

The hot kernels in :mod:`perceptiq.kernels` ship in two variants: numba
compiled loops and a pure-numpy fallback.  The active variant is picked once
at import time from the ``PERCEPTIQ_NUMBA`` environment variable and can be
switched at runtime with :func:`set_backend`, which the benchmark script and
the cross-backend tests use to compare both paths in a single process.

Set ``PERCEPTIQ_NUMBA`` to ``0``, ``false``, ``no``, ``off`` or ``numpy`` to
force the fallback.  Anything else (including leaving it unset) selects the
numba path when numba is importable.
"""

from __future__ import annotations

import os

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        """Stand-in decorator so kernels still import without numba."""
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap


_OFF_VALUES = ("0", "false", "no", "off", "numpy")
_VALID = ("numba", "numpy")


def _from_env() -> str:
    raw = os.environ.get("PERCEPTIQ_NUMBA", "").strip().lower()
    if raw in _OFF_VALUES:
        return "numpy"
    return "numba" if HAVE_NUMBA else "numpy"


_active = _from_env()


def active_backend() -> str:
    """Name of the backend currently in use, ``"numba"`` or ``"numpy"``."""
    return _active


def use_numba() -> bool:
    return _active == "numba"


def set_backend(name: str) -> None:
    """Override the backend chosen at import time.

    Mainly for benchmarks and tests; library code never calls this.
    """
    global _active
    if name not in _VALID:
        raise ValueError(f"unknown backend {name!r}, expected one of {_VALID}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not importable")
    _active = name
