"""Backend selection for the hot kernels.

Every hot loop exists twice: a numba ``@njit`` kernel and a pure-numpy
fallback. ``BBM_NUMBA=0`` (or ``false``/``no``/``off``) selects the numpy path;
it is read at call time so tests can flip it per case. When numba cannot be
imported the numpy path is used unconditionally.
"""

import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in CI
    numba = None
    HAVE_NUMBA = False

ENV_FLAG = "BBM_NUMBA"
_FALSE = {"0", "false", "no", "off"}


def use_numba():
    """True when the numba kernels should be used for the next call."""
    if not HAVE_NUMBA:
        return False
    return os.environ.get(ENV_FLAG, "1").strip().lower() not in _FALSE


def backend_name():
    return "numba" if use_numba() else "numpy"


def njit(*args, **kwargs):
    """``numba.njit`` with caching on, or an identity decorator without numba."""
    kwargs.setdefault("cache", True)
    if HAVE_NUMBA:
        return numba.njit(*args, **kwargs)
    if args and callable(args[0]):
        return args[0]
    return lambda f: f
