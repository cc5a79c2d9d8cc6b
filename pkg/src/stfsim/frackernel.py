"""Fractional-derivative weights and truncated-history evaluation.

The derivative of order ``q`` of a position is evaluated from the stream of
past velocities ``v_0 .. v_n``::

    D^q x_n = dt^(1-q) / Gamma(3-q) * sum_p a[p, n] * v_p

with ``a[n, n] = 1``, interior weights that depend only on the lag
``k = n - p`` and a dedicated weight for ``p = 0``. When the history is
truncated to the last ``d`` steps only lag weights are used, so they are
precomputed once.
"""
import math
from dataclasses import dataclass, field

import numpy as np

# Lanczos approximation, g = 7, n = 9.
_LANCZOS_G = 7.0
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)


def gamma(x):
    """Gamma function for real ``x`` (Lanczos, reflection for x < 0.5)."""
    x = float(x)
    if x < 0.5:
        return math.pi / (math.sin(math.pi * x) * gamma(1.0 - x))
    x -= 1.0
    acc = _LANCZOS_COEF[0]
    for i in range(1, len(_LANCZOS_COEF)):
        acc += _LANCZOS_COEF[i] / (x + i)
    t = x + _LANCZOS_G + 0.5
    return math.sqrt(2.0 * math.pi) * t ** (x + 0.5) * math.exp(-t) * acc


def _check_order(q):
    if not (0.0 < q < 1.0):
        raise ValueError(f"fractional order q must lie in (0, 1), got {q!r}")


def lag_weights(q, kmax):
    """Interior weights ``(k-1)^a - 2k^a + (k+1)^a`` for ``k = 0..kmax``.

    ``a = 2 - q``; entry 0 is fixed to 1. Evaluated through ``expm1/log1p``
    so large lags do not lose digits to cancellation.
    """
    _check_order(q)
    a = 2.0 - q
    w = np.empty(int(kmax) + 1)
    w[0] = 1.0
    if kmax >= 1:
        k = np.arange(1, int(kmax) + 1, dtype=np.float64)
        with np.errstate(divide="ignore"):
            fwd = np.expm1(a * np.log1p(1.0 / k))
            back = np.expm1(a * np.log1p(-1.0 / k))
        w[1:] = k**a * (fwd + back)
    return w


def weight_p0(q, n):
    """Weight of the oldest sample ``p = 0`` when the window reaches it.

    Equals ``(n-1)^(2-q) - n^(1-q) (n+q-2)`` for ``n >= 1``.
    """
    _check_order(q)
    n = int(n)
    if n < 1:
        raise ValueError(f"step index must be >= 1, got {n}")
    a = 2.0 - q
    head = math.expm1(a * math.log1p(-1.0 / n)) if n > 1 else -1.0
    return n**a * (head + a / n)


def full_history_weight_sum(q, n):
    """Closed form of ``sum_p a[p, n]`` over a full history."""
    return (2.0 - q) * n ** (1.0 - q)


def steady_window_sum(q, d):
    """Closed form of the lag-weight sum over a saturated window of ``d``."""
    a = 2.0 - q
    return (d + 1.0) ** a - float(d) ** a


@dataclass(frozen=True)
class FracWeights:
    q: float
    d: int
    dt: float
    interior: np.ndarray = field(repr=False)
    prefactor: float

    def window(self, n):
        """Weights for samples ``max(0, n-d) .. n``, oldest first."""
        n = int(n)
        if n < 0:
            raise ValueError("step index must be non-negative")
        if n > self.d:
            return self.interior[::-1].copy()
        w = self.interior[n::-1].copy()
        if n >= 1:
            w[0] = weight_p0(self.q, n)
        return w

    def window_sum(self, n):
        return float(self.window(n).sum())


def make_weights(q, d, dt):
    _check_order(q)
    if d < 0:
        raise ValueError(f"history window must be >= 0, got {d}")
    if not dt > 0:
        raise ValueError(f"timestep must be positive, got {dt!r}")
    interior = lag_weights(q, int(d))
    interior.setflags(write=False)
    prefactor = dt ** (1.0 - q) / gamma(3.0 - q)
    return FracWeights(q=float(q), d=int(d), dt=float(dt), interior=interior, prefactor=prefactor)


class VelocityHistory:
    """Ring buffer of one particle's velocities, oldest first on read.

    ``step`` is the absolute index of the newest sample, -1 when empty.
    """

    def __init__(self, capacity, dim=3):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = int(capacity)
        self.dim = int(dim)
        self._buf = np.zeros((self.capacity, self.dim))
        self._total = 0

    @property
    def count(self):
        return min(self._total, self.capacity)

    @property
    def step(self):
        return self._total - 1

    def __len__(self):
        return self.count

    def push(self, v):
        self._buf[self._total % self.capacity] = v
        self._total += 1

    def entries(self):
        if self._total <= self.capacity:
            return self._buf[: self._total].copy()
        start = self._total % self.capacity
        return np.concatenate([self._buf[start:], self._buf[:start]])


def frac_deriv(history, weights, n=None):
    """Truncated fractional derivative from a velocity history.

    ``n`` defaults to the history's newest step. Returns a vector of the
    history's dimension; the zero vector for an empty history.
    """
    if history.count == 0:
        return np.zeros(history.dim)
    if n is None:
        n = history.step
    w = weights.window(n)
    vals = history.entries()
    if len(vals) < len(w):
        raise ValueError(f"history holds {len(vals)} samples, step {n} needs {len(w)}")
    vals = vals[len(vals) - len(w):]
    acc = np.zeros(history.dim)
    for wk, vk in zip(w, vals):
        acc = acc + wk * vk
    return weights.prefactor * acc


class HistoryBank:
    """Velocity ring buffers for a whole particle set, shape ``(cap, N, dim)``.

    One sample is pushed per particle per step; all particles share the
    step counter.
    """

    def __init__(self, d, n_particles, dim):
        self.capacity = int(d) + 1
        self.buf = np.zeros((self.capacity, int(n_particles), int(dim)))
        self.total = 0

    @property
    def step(self):
        return self.total - 1

    @property
    def count(self):
        return min(self.total, self.capacity)

    def push(self, v):
        self.buf[self.total % self.capacity] = v
        self.total += 1

    def slots(self):
        """Ring slots of the stored samples, oldest first."""
        lo = self.total - self.count
        return np.arange(lo, self.total, dtype=np.int64) % self.capacity

    def particle(self, i):
        return self.buf[self.slots(), i]
