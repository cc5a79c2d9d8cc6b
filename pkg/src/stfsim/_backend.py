"""Backend selection for the hot kernels.

Set ``STFSIM_PURE_NUMPY=1`` to force the vectorised numpy path even when
numba is importable. The choice is made once, at import time.
"""
import os

# the default TBB layer warns on some installs; omp is always available
os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

_FLAG = os.environ.get("STFSIM_PURE_NUMPY", "").strip().lower()
FORCE_NUMPY = _FLAG not in ("", "0", "false", "no")

try:
    import numba  # noqa: F401

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not FORCE_NUMPY


def backend_name():
    return "numba" if USE_NUMBA else "numpy"


def set_threads(n):
    """Limit numba worker threads; a no-op on the numpy path."""
    if n is None or not HAVE_NUMBA:
        return
    import numba

    n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)
