"""Kernel dispatch: numba-jitted fast paths with a pure-numpy fallback.

The fallback is selected automatically when numba is not importable, or
explicitly by setting the environment variable ``PROUD_NO_NUMBA=1``.  The
flag is read at call time so tests can flip it per-case.
"""

import os

ENV_FLAG = "PROUD_NO_NUMBA"

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba installed
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        """Stand-in decorator so kernel modules import cleanly without numba."""

        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


def numba_enabled() -> bool:
    """True when jitted kernels should be used for this call."""
    if os.environ.get(ENV_FLAG, "").strip() not in ("", "0"):
        return False
    return HAS_NUMBA
