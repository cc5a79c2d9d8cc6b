"""Hot-loop kernels, dispatched to numba or numpy by ``_backend``."""
from .. import _backend
from . import _np

if _backend.USE_NUMBA:
    from . import _nb as active
else:
    active = _np

neighbor_csr = active.neighbor_csr
viscosity_delta = active.viscosity_delta
ddr_delta = active.ddr_delta
history_sums = active.history_sums
spring_delta = active.spring_delta
spring_gather = active.spring_gather
jitter_dirs = _np.jitter_dirs


def numba_kernels():
    """The numba module, or None when numba is unavailable."""
    if not _backend.HAVE_NUMBA:
        return None
    from . import _nb

    return _nb
