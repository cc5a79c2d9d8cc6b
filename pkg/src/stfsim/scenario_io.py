"""Scenario files, simulation runs with CSV output, the stiffness probe and
the history-size benchmark.

Scenario files are flat UTF-8 text, one ``key = value`` per line, ``#``
starts a comment and dotted keys address a section (``spring.k_hist``).
Vectors are comma separated. Every key is optional; see ``KEYS`` for the
full list with defaults.
"""
import dataclasses
import math
import os
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .frackernel import VelocityHistory, frac_deriv, make_weights
from .sphcore import FluidParams
from .springnet import SpringParams
from .world import VERTICAL, Container, RigidSphere, VibrationSource, block_positions, make_world

FRAME_HEADER = "step,id,x,y,z,vx,vy,vz,stiff"
METRICS_HEADER = "step,time,stiff_mean,stiff_max,ke,surface_max,sphere_y,ms_step,ms_history"


class ScenarioError(ValueError):
    """Malformed or invalid scenario text."""

    def __init__(self, msg, line=None):
        self.line = line
        super().__init__(msg if line is None else f"line {line}: {msg}")


@dataclass(frozen=True)
class Block:
    lo: tuple
    hi: tuple
    spacing: float
    jitter: float = 0.0


@dataclass(frozen=True)
class SphereConfig:
    center: tuple
    radius: float
    velocity: tuple
    mass: float
    release_time: float = 0.0


@dataclass(frozen=True)
class VibrationConfig:
    band: float
    amplitude: float
    frequency: float
    freq_step: float = 0.0
    sources: int = 4


@dataclass(frozen=True)
class Scenario:
    name: str
    dimension: int
    dt: float
    steps: int
    seed: int
    output_stride: int
    fluid: FluidParams
    spring: SpringParams
    container: Container
    block: Block
    sphere: SphereConfig = None
    vibration: VibrationConfig = None

    def with_seed(self, seed):
        return dataclasses.replace(self, seed=int(seed))


# value kinds
_STR, _INT, _FLOAT, _BOOL, _VEC = "str", "int", "float", "bool", "vec"


def _positive(v):
    return None if v > 0 else "must be positive"


def _non_negative(v):
    return None if v >= 0 else "must be non-negative"


def _open_unit(v):
    return None if 0.0 < v < 1.0 else "must lie in the open interval (0, 1)"


def _half_open_unit(v):
    return None if 0.0 <= v < 1.0 else "must lie in [0, 1)"


def _dimension(v):
    return None if v in (2, 3) else "must be 2 or 3"


def _at_least_one(v):
    return None if v >= 1 else "must be at least 1"


# key -> (kind, default, check). Vector defaults are 3D and cut to the
# scenario dimension; a default of None is filled in from other keys.
KEYS = {
    "name": (_STR, "block_drop", None),
    "dimension": (_INT, 2, _dimension),
    "dt": (_FLOAT, 0.01, _positive),
    "steps": (_INT, 300, _at_least_one),
    "seed": (_INT, 0, _non_negative),
    "output_stride": (_INT, 10, _at_least_one),
    "fluid.h": (_FLOAT, 0.22, _positive),
    "fluid.rho0": (_FLOAT, 1.7, _positive),
    "fluid.k_pressure": (_FLOAT, 200.0, _non_negative),
    "fluid.k_near": (_FLOAT, 200.0, _non_negative),
    "fluid.sigma": (_FLOAT, 5.0, _non_negative),
    "fluid.beta": (_FLOAT, 1.0, _non_negative),
    "fluid.gravity": (_FLOAT, -9.8, None),
    "fluid.mass": (_FLOAT, 1.0, _positive),
    "spring.k_min": (_FLOAT, 30.0, _non_negative),
    "spring.k_hist": (_FLOAT, 300.0, _non_negative),
    "spring.q": (_FLOAT, 0.5, _open_unit),
    "spring.d": (_INT, None, _non_negative),
    "spring.alpha": (_FLOAT, 0.3, _non_negative),
    "spring.gamma": (_FLOAT, 0.1, _half_open_unit),
    "container.min": (_VEC, (0.0, 0.0, 0.0), None),
    "container.max": (_VEC, (4.0, 3.0, 1.0), None),
    "container.eps": (_FLOAT, 0.01, _positive),
    "block.min": (_VEC, (0.5, 0.5, 0.25), None),
    "block.max": (_VEC, (1.7, 1.7, 0.75), None),
    "block.spacing": (_FLOAT, 0.1, _positive),
    "block.jitter": (_FLOAT, 0.01, _non_negative),
    "sphere.enabled": (_BOOL, False, None),
    "sphere.center": (_VEC, None, None),
    "sphere.radius": (_FLOAT, 0.5, _positive),
    "sphere.velocity": (_VEC, (0.0, 0.0, 0.0), None),
    "sphere.mass": (_FLOAT, 100.0, _positive),
    "sphere.release_time": (_FLOAT, 0.0, _non_negative),
    "vibration.enabled": (_BOOL, False, None),
    "vibration.band": (_FLOAT, 0.2, _positive),
    "vibration.amplitude": (_FLOAT, 0.5, _non_negative),
    "vibration.frequency": (_FLOAT, 2.0, _positive),
    "vibration.freq_step": (_FLOAT, 0.0, _non_negative),
    "vibration.sources": (_INT, 4, _at_least_one),
}

_TRUE = ("true", "yes", "on", "1")
_FALSE = ("false", "no", "off", "0")


def _convert(kind, raw):
    if kind == _STR:
        if not raw:
            raise ValueError("empty value")
        return raw
    if kind == _INT:
        return int(raw)
    if kind == _FLOAT:
        v = float(raw)
        if not math.isfinite(v):
            raise ValueError("not a finite number")
        return v
    if kind == _BOOL:
        low = raw.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    parts = [p.strip() for p in raw.split(",")]
    vec = tuple(float(p) for p in parts)
    if not all(math.isfinite(c) for c in vec):
        raise ValueError("vector components must be finite")
    return vec


def parse_scenario(text):
    """Parse and validate scenario text. Raises ``ScenarioError``."""
    values = {}
    where = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ScenarioError(f"expected 'key = value', got {body!r}", lineno)
        key, raw = (s.strip() for s in body.split("=", 1))
        if key not in KEYS:
            raise ScenarioError(f"unknown key {key!r}", lineno)
        if key in values:
            raise ScenarioError(f"duplicate key {key!r} (first set on line {where[key]})", lineno)
        kind, _, check = KEYS[key]
        try:
            v = _convert(kind, raw)
        except ValueError as exc:
            raise ScenarioError(f"bad value for {key}: {exc}", lineno) from None
        if check is not None:
            msg = check(v)
            if msg:
                raise ScenarioError(f"{key} = {raw} {msg}", lineno)
        values[key] = v
        where[key] = lineno
    return _build(values, where)


def _build(values, where):
    def get(key):
        return values[key] if key in values else KEYS[key][1]

    def fail(msg, key=None):
        raise ScenarioError(msg, where.get(key))

    dim = get("dimension")

    def vec(key, default=None):
        v = values.get(key)
        if v is None:
            v = KEYS[key][1] if default is None else default
            return tuple(float(c) for c in v[:dim])
        if len(v) != dim:
            fail(f"{key} needs {dim} components, got {len(v)}", key)
        return v

    dt = get("dt")
    d = get("spring.d")
    if d is None:
        d = max(1, int(round(1.0 / dt)))
    g = [0.0] * dim
    g[VERTICAL] = get("fluid.gravity")
    try:
        fluid = FluidParams(
            h=get("fluid.h"), rho0=get("fluid.rho0"), k_pressure=get("fluid.k_pressure"),
            k_near=get("fluid.k_near"), sigma=get("fluid.sigma"), beta=get("fluid.beta"),
            dt=dt, g=tuple(g), particle_mass=get("fluid.mass"),
        )
        spring = SpringParams(
            k_min=get("spring.k_min"), k_hist=get("spring.k_hist"), q=get("spring.q"), d=d,
            alpha=get("spring.alpha"), gamma=get("spring.gamma"),
        )
    except ValueError as exc:
        fail(str(exc))
    cmin, cmax = vec("container.min"), vec("container.max")
    if any(a >= b for a, b in zip(cmin, cmax)):
        fail(f"container.min {cmin} must be below container.max {cmax} on every axis", "container.max")
    container = Container(cmin, cmax, get("container.eps"))
    bmin, bmax = vec("block.min"), vec("block.max")
    if any(a >= b for a, b in zip(bmin, bmax)):
        fail(f"block.min {bmin} must be below block.max {bmax} on every axis", "block.max")
    if any(a < lo or b > hi for a, b, lo, hi in zip(bmin, bmax, cmin, cmax)):
        fail("the particle block must lie inside the container", "block.max")
    block = Block(bmin, bmax, get("block.spacing"), get("block.jitter"))
    if not block_positions(bmin, bmax, block.spacing).shape[0]:
        fail("the particle block holds no particles at this spacing", "block.spacing")

    sphere = None
    if get("sphere.enabled"):
        rad = get("sphere.radius")
        if any(2 * rad > hi - lo for lo, hi in zip(cmin, cmax)):
            fail(f"sphere of radius {rad} does not fit in the container", "sphere.radius")
        above = [0.5 * (lo + hi) for lo, hi in zip(cmin, cmax)]
        above[VERTICAL] = min(bmax[VERTICAL] + rad + 0.2, cmax[VERTICAL] - rad)
        sphere = SphereConfig(
            center=vec("sphere.center", above), radius=rad, velocity=vec("sphere.velocity"),
            mass=get("sphere.mass"), release_time=get("sphere.release_time"),
        )
    vibration = None
    if get("vibration.enabled"):
        vibration = VibrationConfig(
            band=get("vibration.band"), amplitude=get("vibration.amplitude"),
            frequency=get("vibration.frequency"), freq_step=get("vibration.freq_step"),
            sources=get("vibration.sources"),
        )
    return Scenario(
        name=get("name"), dimension=dim, dt=dt, steps=get("steps"), seed=get("seed"),
        output_stride=get("output_stride"), fluid=fluid, spring=spring, container=container,
        block=block, sphere=sphere, vibration=vibration,
    )


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (tuple, list)):
        return ", ".join(repr(float(c)) for c in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def serialize(sc):
    """Scenario text that parses back to an equal scenario."""
    f, s = sc.fluid, sc.spring
    items = [
        ("name", sc.name), ("dimension", sc.dimension), ("dt", sc.dt), ("steps", sc.steps),
        ("seed", sc.seed), ("output_stride", sc.output_stride),
        ("fluid.h", f.h), ("fluid.rho0", f.rho0), ("fluid.k_pressure", f.k_pressure),
        ("fluid.k_near", f.k_near), ("fluid.sigma", f.sigma), ("fluid.beta", f.beta),
        ("fluid.gravity", f.g[VERTICAL]), ("fluid.mass", f.particle_mass),
        ("spring.k_min", s.k_min), ("spring.k_hist", s.k_hist), ("spring.q", s.q),
        ("spring.d", s.d), ("spring.alpha", s.alpha), ("spring.gamma", s.gamma),
        ("container.min", sc.container.lo), ("container.max", sc.container.hi),
        ("container.eps", sc.container.eps),
        ("block.min", sc.block.lo), ("block.max", sc.block.hi),
        ("block.spacing", sc.block.spacing), ("block.jitter", sc.block.jitter),
        ("sphere.enabled", sc.sphere is not None),
    ]
    if sc.sphere is not None:
        sp = sc.sphere
        items += [
            ("sphere.center", sp.center), ("sphere.radius", sp.radius),
            ("sphere.velocity", sp.velocity), ("sphere.mass", sp.mass),
            ("sphere.release_time", sp.release_time),
        ]
    items.append(("vibration.enabled", sc.vibration is not None))
    if sc.vibration is not None:
        vb = sc.vibration
        items += [
            ("vibration.band", vb.band), ("vibration.amplitude", vb.amplitude),
            ("vibration.frequency", vb.frequency), ("vibration.freq_step", vb.freq_step),
            ("vibration.sources", vb.sources),
        ]
    return "".join(f"{k} = {_fmt(v)}\n" for k, v in items)


PRESETS = ("block_drop", "bowling_ball", "vibration", "long_memory")


def preset_text(name):
    if name not in PRESETS:
        raise ScenarioError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return resources.files("stfsim.presets").joinpath(f"{name}.cfg").read_text(encoding="utf-8")


def load_preset(name):
    return parse_scenario(preset_text(name))


def load_scenario(path_or_preset):
    """Read a scenario file, or a shipped preset when given a bare preset name."""
    if path_or_preset in PRESETS and not os.path.exists(path_or_preset):
        return load_preset(path_or_preset)
    with open(path_or_preset, encoding="utf-8") as fh:
        return parse_scenario(fh.read())


def build_world(sc, history_enabled=True):
    x = block_positions(sc.block.lo, sc.block.hi, sc.block.spacing, sc.block.jitter, sc.seed)
    sphere = None
    if sc.sphere is not None:
        sp = sc.sphere
        sphere = RigidSphere(sp.center, sp.radius, sp.velocity, sp.mass,
                             active=sp.release_time <= 0.0, release_time=sp.release_time)
    vib = None
    if sc.vibration is not None:
        vb = sc.vibration
        vib = VibrationSource(vb.band, vb.amplitude, vb.frequency, vb.freq_step, vb.sources, sc.seed)
    return make_world(x, sc.fluid, sc.spring, sc.container, sphere, vib, sc.seed, history_enabled)


def _frame_text(world):
    p = world.particles
    n, dim = p.x.shape
    pos = np.zeros((n, 3))
    vel = np.zeros((n, 3))
    pos[:, :dim] = p.x
    vel[:, :dim] = p.v
    step = world.step_index
    lines = [FRAME_HEADER]
    for i in range(n):
        row = (*pos[i], *vel[i], p.avg_hist_stiffness[i])
        lines.append(f"{step},{i}," + ",".join(repr(float(c)) for c in row))
    sph = world.sphere
    if sph is not None:
        c = np.zeros(3)
        u = np.zeros(3)
        c[:dim] = sph.center
        u[:dim] = sph.velocity
        lines.append(f"{step},-1," + ",".join(repr(float(a)) for a in (*c, *u, 0.0)))
    return "\n".join(lines) + "\n"


def _metrics_line(world, timing):
    p = world.particles
    st = p.avg_hist_stiffness
    sph = "" if world.sphere is None else repr(float(world.sphere.center[VERTICAL]))
    ms_step, ms_hist = (world.ms_step, world.ms_history) if timing else (0.0, 0.0)
    cols = [
        str(world.step_index), repr(world.time),
        repr(float(st.mean()) if len(st) else 0.0), repr(float(st.max()) if len(st) else 0.0),
        repr(world.kinetic_energy()), repr(float(p.x[:, VERTICAL].max())), sph,
        f"{ms_step:.4f}", f"{ms_hist:.4f}",
    ]
    return ",".join(cols) + "\n"


def run(sc, out_dir, timing=True, history_enabled=True, on_step=None):
    """Simulate ``sc`` and write frames plus metrics into ``out_dir``.

    Frames are written at step 0 and every ``output_stride`` steps after it;
    one metrics row per step (including step 0). With ``timing=False`` the
    two wall-clock columns are written as zero so repeated runs produce
    byte-identical files. Returns the finished world. ``NumericalAbort``
    propagates after the metrics written so far are flushed.
    """
    os.makedirs(out_dir, exist_ok=True)
    world = build_world(sc, history_enabled)

    def dump_frame():
        path = os.path.join(out_dir, f"frame_{world.step_index:06d}.csv")
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(_frame_text(world))

    with open(os.path.join(out_dir, "metrics.csv"), "w", encoding="utf-8", newline="") as mf:
        mf.write(METRICS_HEADER + "\n")
        mf.write(_metrics_line(world, timing))
        dump_frame()
        for _ in range(sc.steps):
            world.step()
            mf.write(_metrics_line(world, timing))
            if world.step_index % sc.output_stride == 0:
                dump_frame()
            if on_step is not None:
                on_step(world)
    return world


def parse_program(text):
    """Velocity program for the probe.

    ``zero``, ``impulse:MAG,AT`` or ``step:MAG,START,STOP`` (STOP exclusive;
    omit it for a drive that never ends). Returns a function of the step index.
    """
    kind, _, args = text.partition(":")
    kind = kind.strip().lower()
    try:
        nums = [float(a) for a in args.split(",")] if args.strip() else []
    except ValueError:
        raise ValueError(f"bad program arguments in {text!r}") from None
    if kind == "zero" and not nums:
        return lambda n: 0.0
    if kind == "impulse" and len(nums) == 2:
        mag, at = nums[0], int(nums[1])
        if at < 0:
            raise ValueError("impulse step must be non-negative")
        return lambda n: mag if n == at else 0.0
    if kind == "step" and len(nums) in (2, 3):
        mag, start = nums[0], int(nums[1])
        stop = int(nums[2]) if len(nums) == 3 else None
        if start < 0 or (stop is not None and stop < start):
            raise ValueError("step program needs 0 <= START <= STOP")
        return lambda n: mag if n >= start and (stop is None or n < stop) else 0.0
    raise ValueError(f"unrecognised velocity program {text!r}")


def probe(q, d_list, dt, k_min, k_hist, program, steps):
    """History stiffness of one spring whose ends separate at the programmed speed.

    Returns ``(header, rows)``: columns are step, time and ``kappa - k_min``
    for each window length in ``d_list``.
    """
    if isinstance(program, str):
        program = parse_program(program)
    params = [SpringParams(k_min=k_min, k_hist=k_hist, q=q, d=int(d)) for d in d_list]
    weights = [make_weights(q, p.d, dt) for p in params]
    hists = [VelocityHistory(p.d + 1, dim=1) for p in params]
    header = ["step", "time"] + [f"d{int(d)}" for d in d_list]
    rows = []
    for n in range(int(steps) + 1):
        u = program(n)
        row = [n, n * dt]
        for p, w, h in zip(params, weights, hists):
            h.push([u])
            row.append(p.k_hist * float(np.abs(frac_deriv(h, w))[0]))
        rows.append(row)
    return header, rows


def probe_csv(header, rows):
    out = [",".join(header)]
    for r in rows:
        out.append(",".join([str(r[0])] + [repr(float(c)) for c in r[1:]]))
    return "\n".join(out) + "\n"


def bench(sc, d_list, steps=50):
    """Time ``steps`` steps of ``sc`` for every history window in ``d_list``.

    ``d = 0`` runs with the history phase switched off. Histories are
    pre-filled so every timed step sees a full window. Each entry reports
    mean wall-clock per step and per history phase plus operation counts.
    """
    results = []
    for d in d_list:
        d = int(d)
        s = dataclasses.replace(sc, spring=dataclasses.replace(sc.spring, d=d))
        world = build_world(s, history_enabled=d > 0)
        bank = world.particles.history
        while bank.count < bank.capacity:
            bank.push(world.particles.v)
        step_ms = []
        hist_ms = []
        springs = 0
        for _ in range(int(steps)):
            world.step()
            step_ms.append(world.ms_step)
            hist_ms.append(world.ms_history)
            springs += len(world.springs)
        n, dim = world.particles.x.shape
        window = d + 1 if d > 0 else 0
        results.append({
            "d": d,
            "particles": n,
            "steps": int(steps),
            "ms_step": float(np.mean(step_ms)),
            "ms_history": float(np.mean(hist_ms)),
            "history_madds": int(steps) * n * dim * window,
            "spring_steps": springs,
        })
    return results


def bench_table(results):
    lines = ["d,particles,steps,ms_step,ms_history,history_madds,spring_steps"]
    for r in results:
        lines.append(
            f"{r['d']},{r['particles']},{r['steps']},{r['ms_step']:.4f},{r['ms_history']:.4f},"
            f"{r['history_madds']},{r['spring_steps']}"
        )
    return "\n".join(lines) + "\n"

