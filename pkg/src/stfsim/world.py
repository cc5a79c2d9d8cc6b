"""Container, drivers and the per-step orchestration.

One call to :meth:`World.step` runs the phases in this order: gravity,
viscosity, prediction, spring topology update, spring displacements (with
the history term), double density relaxation, velocity recovery, wall
handling, drivers, and finally the push of the end-of-step velocity into
every particle's history.
"""
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .frackernel import make_weights
from .sphcore import Particles, apply_viscosity, double_density_relaxation, rebuild_index
from .springnet import SpringSet, accumulate_history_sums, adjust_springs, spring_displacements

VERTICAL = 1


class NumericalAbort(RuntimeError):
    """Raised when a particle state stops being finite."""

    def __init__(self, step, particle, what):
        self.step = step
        self.particle = particle
        super().__init__(f"non-finite {what} at step {step}, particle {particle}")


@dataclass(frozen=True)
class Container:
    lo: tuple
    hi: tuple
    eps: float = 0.01

    def __post_init__(self):
        if len(self.lo) != len(self.hi):
            raise ValueError("container corners must have the same dimension")
        if any(a >= b for a, b in zip(self.lo, self.hi)):
            raise ValueError(f"container min {self.lo} must be below max {self.hi} on every axis")
        if not self.eps > 0:
            raise ValueError("wall band eps must be positive")

    @property
    def dim(self):
        return len(self.lo)


@dataclass
class RigidSphere:
    center: tuple
    radius: float
    velocity: tuple
    mass: float
    active: bool = True
    release_time: float = 0.0

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("sphere radius must be positive")
        if not self.mass > 0:
            raise ValueError("sphere mass must be positive")
        self.center = np.array(self.center, dtype=np.float64)
        self.velocity = np.array(self.velocity, dtype=np.float64)


@dataclass
class VibrationSource:
    band: float
    amplitude: float
    frequency: float
    freq_step: float = 0.0
    sources: int = 4
    seed: int = 0
    _freq: np.ndarray = field(default=None, init=False, repr=False)
    _phase: np.ndarray = field(default=None, init=False, repr=False)
    _rng: object = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError("vibration amplitude must be non-negative")
        if not self.frequency > 0:
            raise ValueError("vibration frequency must be positive")
        if self.sources < 1:
            raise ValueError("need at least one vibration source")
        self.reset()

    def reset(self):
        self._rng = np.random.default_rng(self.seed)
        self._freq = np.full(self.sources, float(self.frequency))
        self._phase = np.zeros(self.sources)

    def advance(self, dt):
        """Random-walk every source frequency and integrate its phase."""
        if self.freq_step > 0:
            f = self._freq + self.freq_step * self._rng.standard_normal(self.sources)
            lo, hi = 0.5 * self.frequency, 1.5 * self.frequency
            f = np.where(f < lo, 2 * lo - f, f)
            f = np.where(f > hi, 2 * hi - f, f)
            self._freq = f
        self._phase = self._phase + 2.0 * math.pi * self._freq * dt

    @property
    def frequencies(self):
        return self._freq.copy()

    def signal(self):
        return self.amplitude * np.sin(self._phase)


def process_boundaries(x, v, avg_hist_stiffness, container, k_min):
    """Sticky walls: clamp inside, cancel wall-normal velocity, damp tangential.

    Tangential damping factor is ``k_min / (k_min + s)`` with ``s`` the
    particle's mean history stiffness. Modifies ``x`` and ``v`` in place and
    returns the boolean boundary mask.
    """
    lo = np.asarray(container.lo, dtype=np.float64)
    hi = np.asarray(container.hi, dtype=np.float64)
    np.clip(x, lo, hi, out=x)
    near = (x <= lo + container.eps) | (x >= hi - container.eps)
    bnd = near.any(axis=1)
    s = np.asarray(avg_hist_stiffness, dtype=np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(s > 0, k_min / (k_min + s), 1.0)
    tang = bnd[:, None] & ~near
    v[near] = 0.0
    v[tang] = (v * scale[:, None])[tang]
    return bnd


def couple_sphere(x, v, sphere, particle_mass, dt, g, container=None):
    """Advance the sphere under gravity and resolve penetrating particles.

    Each penetrating particle is projected to the surface; an inelastic
    normal impulse removes the approaching relative velocity and is applied
    with opposite sign to the sphere. Contacts are resolved sequentially in
    index order. Returns the number of contacts.
    """
    if not sphere.active:
        return 0
    g = np.asarray(g, dtype=np.float64)
    sphere.velocity = sphere.velocity + dt * g
    sphere.center = sphere.center + dt * sphere.velocity
    if container is not None:
        _clamp_sphere(sphere, container)
    rad = sphere.radius
    d = x - sphere.center
    dist2 = np.einsum("ij,ij->i", d, d)
    hits = np.flatnonzero(dist2 < rad * rad)
    inv_m = 1.0 / particle_mass
    inv_big = 1.0 / sphere.mass
    vel = sphere.velocity.copy()
    up = np.zeros(x.shape[1])
    up[VERTICAL] = 1.0
    for p in hits:
        dist = math.sqrt(dist2[p])
        nrm = d[p] / dist if dist > 0 else up
        x[p] = sphere.center + rad * nrm
        vn = float(np.dot(v[p] - vel, nrm))
        if vn < 0.0:
            jn = -vn / (inv_m + inv_big)
            v[p] = v[p] + (jn * inv_m) * nrm
            vel = vel - (jn * inv_big) * nrm
    sphere.velocity = vel
    if container is not None:
        np.clip(x, container.lo, container.hi, out=x)
    return len(hits)


def _clamp_sphere(sphere, container):
    for a in range(len(container.lo)):
        lo = container.lo[a] + sphere.radius
        hi = container.hi[a] - sphere.radius
        if sphere.center[a] < lo:
            sphere.center[a] = lo
            sphere.velocity[a] = 0.0
        elif sphere.center[a] > hi:
            sphere.center[a] = hi
            sphere.velocity[a] = 0.0


def apply_vibration(x, v, source, container, dt):
    """Advance the sources one step and kick the vertical velocity of the
    particles in the bottom band by each nearest source's signal."""
    source.advance(dt)
    if source.amplitude == 0:
        return v
    lo = np.asarray(container.lo, dtype=np.float64)
    hi = np.asarray(container.hi, dtype=np.float64)
    band = x[:, VERTICAL] < lo[VERTICAL] + source.band
    if not band.any():
        return v
    m = source.sources
    frac = (x[band, 0] - lo[0]) / (hi[0] - lo[0])
    k = np.clip(np.floor(frac * m).astype(np.int64), 0, m - 1)
    v[band, VERTICAL] += source.signal()[k]
    return v


class World:
    """Complete simulation state plus the step function."""

    def __init__(self, particles, fluid, spring, container, sphere=None, vibration=None,
                 seed=0, history_enabled=True):
        self.particles = particles
        self.fluid = fluid
        self.spring = spring
        self.container = container
        self.sphere = sphere
        self.vibration = vibration
        self.seed = int(seed)
        self.history_enabled = history_enabled
        self.weights = make_weights(spring.q, spring.d, fluid.dt)
        self.springs = SpringSet(len(particles))
        self.step_index = 0
        self.diag = {"coincident": 0}
        self.first_contact_step = None
        self.ms_step = 0.0
        self.ms_history = 0.0
        self.gravity = np.zeros(particles.dim)
        self.gravity[: len(fluid.g)] = fluid.g
        if particles.history.total == 0:
            particles.history.push(particles.v)

    @property
    def time(self):
        return self.step_index * self.fluid.dt

    def step(self):
        t_start = time.perf_counter()
        p = self.particles
        fl = self.fluid
        dt = fl.dt
        p.v += dt * self.gravity
        idx = rebuild_index(p.x, fl.h)
        p.v = apply_viscosity(p.x, p.v, idx, fl, self.seed, self.diag)
        p.x_prev = p.x.copy()
        p.x = p.x + dt * p.v
        idx = rebuild_index(p.x, fl.h)
        self.springs = adjust_springs(p.x, idx, self.springs, self.spring, fl.h, dt)
        t_hist = time.perf_counter()
        s_hist = accumulate_history_sums(p.history, self.weights) if self.history_enabled else None
        self.ms_history = (time.perf_counter() - t_hist) * 1e3 if self.history_enabled else 0.0
        dx, p.avg_hist_stiffness = spring_displacements(
            p.x, s_hist, self.springs, self.weights, self.spring, dt, self.seed, self.diag
        )
        p.x = p.x + dx
        dx, _, _ = double_density_relaxation(p.x, idx, fl, self.seed, self.diag)
        p.x = p.x + dx
        p.v = (p.x - p.x_prev) / dt
        p.boundary = process_boundaries(p.x, p.v, p.avg_hist_stiffness, self.container, self.spring.k_min)
        self._drive(dt)
        p.history.push(p.v)
        self.step_index += 1
        self._check_finite()
        self.ms_step = (time.perf_counter() - t_start) * 1e3

    def _drive(self, dt):
        p = self.particles
        sph = self.sphere
        if sph is not None:
            if not sph.active and self.time + dt >= sph.release_time - 1e-12:
                sph.active = True
            hits = couple_sphere(p.x, p.v, sph, self.fluid.particle_mass, dt, self.gravity, self.container)
            if hits and self.first_contact_step is None:
                self.first_contact_step = self.step_index + 1
        if self.vibration is not None:
            apply_vibration(p.x, p.v, self.vibration, self.container, dt)

    def _check_finite(self):
        p = self.particles
        for name, arr in (("position", p.x), ("velocity", p.v)):
            bad = ~np.isfinite(arr).all(axis=1)
            if bad.any():
                raise NumericalAbort(self.step_index, int(np.flatnonzero(bad)[0]), name)
        if self.sphere is not None and not np.isfinite(self.sphere.center).all():
            raise NumericalAbort(self.step_index, -1, "sphere position")

    def kinetic_energy(self):
        p = self.particles
        ke = 0.5 * self.fluid.particle_mass * float(np.einsum("ij,ij->", p.v, p.v))
        if self.sphere is not None and self.sphere.active:
            ke += 0.5 * self.sphere.mass * float(self.sphere.velocity @ self.sphere.velocity)
        return ke


def block_positions(lo, hi, spacing, jitter=0.0, seed=0):
    """Regular lattice filling the box ``[lo, hi)`` with optional seeded jitter."""
    axes = [np.arange(a + 0.5 * spacing, b, spacing) for a, b in zip(lo, hi)]
    grid = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in grid], axis=1)
    # order by height first so particle ids run bottom-up, row-major
    order = np.lexsort([pts[:, a] for a in range(pts.shape[1]) if a != VERTICAL][::-1] + [pts[:, VERTICAL]])
    pts = pts[order]
    if jitter > 0:
        rng = np.random.default_rng(seed)
        pts = pts + rng.uniform(-jitter, jitter, size=pts.shape) * spacing
    return np.ascontiguousarray(pts)


def make_world(particles_x, fluid, spring, container, sphere=None, vibration=None, seed=0,
               history_enabled=True):
    p = Particles(particles_x, d=spring.d)
    return World(p, fluid, spring, container, sphere, vibration, seed, history_enabled)


def column_tops(x, container, width, h, min_neighbors=3):
    """Highest particle per horizontal column of the given width.

    Particles with fewer than ``min_neighbors`` neighbours inside ``h`` are
    treated as spray and ignored. Empty columns report the container floor.
    """
    lo = np.asarray(container.lo, dtype=np.float64)
    hi = np.asarray(container.hi, dtype=np.float64)
    idx = rebuild_index(x, h)
    body = x[np.diff(idx.offsets) >= min_neighbors]
    axes = [a for a in range(x.shape[1]) if a != VERTICAL]
    nb = [max(1, int((hi[a] - lo[a]) / width)) for a in axes]
    flat = np.zeros(len(body), dtype=np.int64)
    for a, m in zip(axes, nb):
        b = np.clip(((body[:, a] - lo[a]) / (hi[a] - lo[a]) * m).astype(np.int64), 0, m - 1)
        flat = flat * m + b
    tops = np.full(int(np.prod(nb)), lo[VERTICAL])
    np.maximum.at(tops, flat, body[:, VERTICAL])
    return tops
