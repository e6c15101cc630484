"""Kernel backend selection.

The hot loops in :mod:`decusum.kernels` exist twice: as scalar loops compiled
with numba, and as pure-numpy code vectorized across trials.  The environment
variable ``DECUSUM_BACKEND`` picks one of them (``numba`` or ``numpy``).  When
unset, numba is used if it imports.
"""

from __future__ import annotations

import os

try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def decorator(func):
            return func

        return decorator


ENV_VAR = "DECUSUM_BACKEND"
BACKENDS = ("numba", "numpy")


def active_backend() -> str:
    """Return the backend name selected by the environment."""
    requested = os.environ.get(ENV_VAR, "").strip().lower()
    if not requested:
        return "numba" if NUMBA_AVAILABLE else "numpy"
    if requested not in BACKENDS:
        raise ValueError(f"{ENV_VAR} must be one of {BACKENDS}, got {requested!r}")
    if requested == "numba" and not NUMBA_AVAILABLE:
        raise RuntimeError(f"{ENV_VAR}=numba but numba is not importable")
    return requested
