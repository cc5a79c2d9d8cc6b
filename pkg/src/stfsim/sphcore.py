"""Particle storage, neighbour search and the SPH fluid phases.

Positions and velocities are ``(N, dim)`` float arrays with ``dim`` 2 or 3.
Axis 1 is vertical in both cases.
"""
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from . import kernels
from .frackernel import HistoryBank


@dataclass(frozen=True)
class FluidParams:
    h: float = 0.22
    rho0: float = 1.7
    k_pressure: float = 200.0
    k_near: float = 200.0
    sigma: float = 5.0
    beta: float = 1.0
    dt: float = 0.01
    g: tuple = (0.0, -9.8)
    particle_mass: float = 1.0

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError(f"interaction radius h must be positive, got {self.h}")
        if not self.dt > 0:
            raise ValueError(f"timestep must be positive, got {self.dt}")
        if not self.rho0 > 0:
            raise ValueError(f"rest density must be positive, got {self.rho0}")
        if self.sigma < 0 or self.beta < 0:
            raise ValueError("viscosity coefficients must be non-negative")
        if not self.particle_mass > 0:
            raise ValueError("particle mass must be positive")


class Particles:
    """Structure-of-arrays particle set with a shared velocity history."""

    def __init__(self, x, v=None, d=0):
        self.x = np.array(x, dtype=np.float64, order="C")
        n, dim = self.x.shape
        if dim not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {dim}")
        self.v = np.zeros_like(self.x) if v is None else np.array(v, dtype=np.float64)
        self.x_prev = self.x.copy()
        self.boundary = np.zeros(n, dtype=bool)
        self.avg_hist_stiffness = np.zeros(n)
        self.history = HistoryBank(d, n, dim)

    def __len__(self):
        return self.x.shape[0]

    @property
    def dim(self):
        return self.x.shape[1]


class SpatialHash:
    """Uniform grid of cell size ``h`` plus the resolved neighbour lists.

    ``offsets``/``nbrs`` hold, for every particle ``i``, the sorted indices
    ``j != i`` with ``|x_i - x_j| < h`` (CSR layout).
    """

    def __init__(self, x, h, offsets, nbrs):
        self.h = float(h)
        self.x = x
        self.offsets = offsets
        self.nbrs = nbrs
        self._cells = None

    def __len__(self):
        return self.offsets.shape[0] - 1

    @property
    def cells(self):
        """Mapping from integer cell coordinates to particle index lists."""
        if self._cells is None:
            table = defaultdict(list)
            if len(self):
                keys = np.floor(self.x / self.h).astype(np.int64)
                for i, k in enumerate(map(tuple, keys)):
                    table[k].append(i)
            self._cells = dict(table)
        return self._cells

    def neighbors(self, i):
        return self.nbrs[self.offsets[i]:self.offsets[i + 1]]

    def pairs(self):
        """Unordered neighbour pairs ``(i, j)`` with ``i < j``, sorted."""
        i = np.repeat(np.arange(len(self), dtype=np.int64), np.diff(self.offsets))
        keep = self.nbrs > i
        return i[keep], self.nbrs[keep]

    def query(self, point, radius=None):
        """Indices of stored particles strictly within ``radius`` of ``point``."""
        radius = self.h if radius is None else float(radius)
        p = np.asarray(point, dtype=np.float64)
        reach = int(np.ceil(radius / self.h))
        base = np.floor(p / self.h).astype(np.int64)
        found = []
        span = range(-reach, reach + 1)
        for off in np.array(np.meshgrid(*([span] * p.shape[0]), indexing="ij")).reshape(p.shape[0], -1).T:
            found.extend(self.cells.get(tuple(base + off), ()))
        if not found:
            return np.zeros(0, dtype=np.int64)
        idx = np.sort(np.asarray(found, dtype=np.int64))
        d = self.x[idx] - p
        return idx[np.einsum("ij,ij->i", d, d) < radius * radius]


def rebuild_index(x, h):
    x = np.ascontiguousarray(x, dtype=np.float64)
    offsets, nbrs = kernels.neighbor_csr(x, float(h))
    return SpatialHash(x.copy(), h, offsets, nbrs)


def apply_viscosity(x, v, index, params, seed=0, diag=None):
    """Pairwise radial impulses between approaching neighbours.

    Impulses are evaluated from the velocities at entry (Jacobi form) and
    returned as a new velocity array.
    """
    dv, ncoinc = kernels.viscosity_delta(
        x, v, index.offsets, index.nbrs, params.h, params.dt, params.sigma, params.beta, seed
    )
    if diag is not None:
        diag["coincident"] = diag.get("coincident", 0) + int(ncoinc)
    return v + dv


def double_density_relaxation(x, index, params, seed=0, diag=None):
    """Density/near-density pressure displacements at the current positions.

    Returns ``(dx, rho, rho_near)``; ``dx`` is accumulated over all pairs
    before anything is moved.
    """
    dx, rho, rho_near, ncoinc = kernels.ddr_delta(
        x, index.offsets, index.nbrs, params.h, params.dt, params.rho0,
        params.k_pressure, params.k_near, seed,
    )
    if diag is not None:
        diag["coincident"] = diag.get("coincident", 0) + int(ncoinc)
    return dx, rho, rho_near
