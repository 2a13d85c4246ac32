"""Backend selection for the numeric kernels.

Set ``HYBRIDFILT_NUMBA=0`` to force the pure-numpy implementations; numba is
used by default when it imports cleanly.
"""
import os

_FLAG = os.environ.get("HYBRIDFILT_NUMBA", "1").strip().lower()

try:
    import numba
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _FLAG not in ("0", "false", "no", "off")


def njit(fn):
    """Compile ``fn`` with numba when available, else return it unchanged."""
    if HAVE_NUMBA:
        return numba.njit(cache=True, nogil=True)(fn)
    return fn
