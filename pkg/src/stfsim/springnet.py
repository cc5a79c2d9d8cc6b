"""Dynamic spring network with plastic rest lengths and history stiffness.

Each spring's stiffness is ``k_min`` plus a history term proportional to
the fractional derivative of the relative motion of its endpoints. The
weighted velocity sums are linear, so they are accumulated once per
particle and differenced per spring.
"""
from dataclasses import dataclass

import numpy as np

from . import kernels


@dataclass(frozen=True)
class SpringParams:
    k_min: float = 30.0
    k_hist: float = 300.0
    q: float = 0.5
    d: int = 100
    alpha: float = 0.3
    gamma: float = 0.1

    def __post_init__(self):
        if self.k_min < 0 or self.k_hist < 0:
            raise ValueError("spring stiffness constants must be non-negative")
        if not (0.0 < self.q < 1.0):
            raise ValueError(f"fractional order q must lie in (0, 1), got {self.q}")
        if int(self.d) != self.d or self.d < 0:
            raise ValueError(f"history window d must be a non-negative integer, got {self.d}")
        if self.alpha < 0:
            raise ValueError("plasticity constant alpha must be non-negative")
        if not (0.0 <= self.gamma < 1.0):
            raise ValueError(f"yield ratio gamma must lie in [0, 1), got {self.gamma}")


class SpringSet:
    """Springs as parallel arrays sorted by ``(i, j)`` with ``i < j``."""

    def __init__(self, n_particles, i=None, j=None, rest=None, hist_stiffness=None):
        self.n_particles = int(n_particles)
        self.i = np.zeros(0, dtype=np.int64) if i is None else np.asarray(i, dtype=np.int64)
        self.j = np.zeros(0, dtype=np.int64) if j is None else np.asarray(j, dtype=np.int64)
        self.rest = np.zeros(0) if rest is None else np.asarray(rest, dtype=np.float64)
        if hist_stiffness is None:
            hist_stiffness = np.zeros(len(self.i))
        self.hist_stiffness = np.asarray(hist_stiffness, dtype=np.float64)
        self._owner = None

    def __len__(self):
        return self.i.shape[0]

    def keys(self):
        return self.i * self.n_particles + self.j

    def owner_index(self):
        """Per-particle CSR over springs, each row ordered by partner index.

        Returns ``(offsets, spring, sign)``; ``sign`` is +1 where the row
        particle is the spring's ``i`` end and -1 where it is ``j``.
        """
        if self._owner is None:
            ns = len(self)
            owner = np.concatenate([self.i, self.j])
            other = np.concatenate([self.j, self.i])
            spring = np.concatenate([np.arange(ns), np.arange(ns)]).astype(np.int64)
            sign = np.concatenate([np.ones(ns), -np.ones(ns)])
            srt = np.lexsort((other, owner))
            offsets = np.zeros(self.n_particles + 1, dtype=np.int64)
            np.cumsum(np.bincount(owner, minlength=self.n_particles), out=offsets[1:])
            self._owner = (offsets, spring[srt], sign[srt])
        return self._owner


def _lengths(x, i, j):
    d = x[i] - x[j]
    r2 = d[:, 0] * d[:, 0]
    for a in range(1, d.shape[1]):
        r2 = r2 + d[:, a] * d[:, a]
    return np.sqrt(r2)


def adjust_springs(x, index, springs, params, h, dt):
    """Create springs for new neighbour pairs, apply plasticity, prune.

    New springs start at rest length ``h``. Returns a new ``SpringSet``.
    """
    n = springs.n_particles
    pi, pj = index.pairs()
    new_keys = pi * n + pj
    fresh = ~np.isin(new_keys, springs.keys(), assume_unique=True)
    i = np.concatenate([springs.i, pi[fresh]])
    j = np.concatenate([springs.j, pj[fresh]])
    rest = np.concatenate([springs.rest, np.full(int(fresh.sum()), float(h))])
    hist = np.concatenate([springs.hist_stiffness, np.zeros(int(fresh.sum()))])
    srt = np.argsort(i * n + j, kind="stable")
    i, j, rest, hist = i[srt], j[srt], rest[srt], hist[srt]

    r = _lengths(x, i, j)
    g = params.gamma
    rate = dt * params.alpha
    stretch = r > rest * (1.0 + g)
    squash = r < rest * (1.0 - g)
    rest = np.where(stretch, rest + rate * (r - rest * (1.0 + g)), rest)
    rest = np.where(squash, rest - rate * (rest * (1.0 - g) - r), rest)

    keep = rest <= h
    return SpringSet(n, i[keep], j[keep], rest[keep], hist[keep])


def accumulate_history_sums(history, weights):
    """Per-particle weighted velocity sums over the current window.

    ``history`` is a ``HistoryBank``; the result excludes the prefactor.
    """
    n, dim = history.buf.shape[1:]
    if history.count == 0:
        return np.zeros((n, dim))
    w = weights.window(history.step)
    slots = history.slots()
    if len(w) != len(slots):
        raise ValueError(f"history holds {len(slots)} samples, window needs {len(w)}")
    return kernels.history_sums(history.buf, slots, np.ascontiguousarray(w))


def spring_displacements(x, s_hist, springs, weights, params, dt, seed=0, diag=None):
    """Position corrections from all springs, plus per-particle mean stiffness.

    ``s_hist`` are the per-particle sums from ``accumulate_history_sums``
    (or ``None`` to run without history). Updates
    ``springs.hist_stiffness`` in place.
    """
    n, dim = x.shape
    if len(springs) == 0:
        return np.zeros((n, dim)), np.zeros(n)
    if s_hist is None:
        s_hist = np.zeros((n, dim))
        khp = 0.0
    else:
        khp = params.k_hist * weights.prefactor
    delta, hist, ncoinc = kernels.spring_delta(
        x, s_hist, springs.i, springs.j, springs.rest, float(params.k_min), float(khp), float(dt), seed
    )
    springs.hist_stiffness = hist
    if diag is not None:
        diag["coincident"] = diag.get("coincident", 0) + int(ncoinc)
    offsets, spring, sign = springs.owner_index()
    return kernels.spring_gather(offsets, spring, sign, delta, hist, n)
