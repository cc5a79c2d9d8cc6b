"""Acceptance suite, one test per criterion.

Run on its own with ``pytest tests/test_acceptance.py``; a PASS/FAIL line
per criterion is printed at the end of the session.
"""
import dataclasses
import math

import mpmath
import numpy as np
import pytest

import oracles
from stfsim.frackernel import VelocityHistory, frac_deriv, full_history_weight_sum, make_weights, weight_p0
from stfsim.scenario_io import bench, build_world, load_preset, probe, run
from stfsim.sphcore import FluidParams, apply_viscosity, double_density_relaxation, rebuild_index
from stfsim.springnet import SpringParams
from stfsim.world import Container, block_positions, column_tops, make_world

mpmath.mp.dps = 40
ORDERS = (0.2, 0.5, 0.8)


def _direct_interior(q, k):
    # plain extended-precision evaluation of the three-term formula
    a = np.longdouble(2) - np.longdouble(q)
    k = k.astype(np.longdouble)
    return (k - 1) ** a - 2 * k**a + (k + 1) ** a


def _direct_p0(q, n):
    q = np.longdouble(q)
    n = n.astype(np.longdouble)
    return (n - 1) ** (2 - q) - n ** (1 - q) * (n + q - 2)


def test_c01_weight_correctness(record_property):
    assert np.finfo(np.longdouble).eps < 1e-18, "needs 80-bit long double for the direct evaluation"
    worst = 0.0
    k = np.arange(1, 10_001)
    for q in ORDERS:
        w = make_weights(q, 10_000, 0.01)
        assert w.interior[0] == 1.0
        ref = _direct_interior(q, k)
        worst = max(worst, float(np.max(np.abs((w.interior[1:] - ref) / ref))))
        p0 = np.array([weight_p0(q, n) for n in k])
        ref = _direct_p0(q, k)
        worst = max(worst, float(np.max(np.abs((p0 - ref) / ref))))
        for n in (1, 2, 17, 10_000):
            exact = (n - 1) ** (2 - mpmath.mpf(q)) - mpmath.mpf(n) ** (1 - mpmath.mpf(q)) * (n + mpmath.mpf(q) - 2)
            assert weight_p0(q, n) == pytest.approx(float(exact), rel=1e-12)
    w = make_weights(0.5, 10, 0.01)
    spot1 = abs(w.interior[1] - 0.8284271247461901)
    spot2 = abs(weight_p0(0.5, 2) - 0.2928932188134524)
    record_property("detail", f"max rel err {worst:.1e}, spot errs {spot1:.0e}/{spot2:.0e}")
    assert worst < 1e-9
    assert spot1 < 1e-9 and spot2 < 1e-9


def test_c02_analytic_fractional_derivative(record_property):
    dt = 0.01
    worst = 0.0
    for q in ORDERS:
        w = make_weights(q, 10_000, dt)
        h = VelocityHistory(10_001, dim=1)
        marks = {1, 2, 10, 100, 1000, 5000, 10_000}
        for n in range(10_001):
            h.push([1.0])
            if n in marks:
                got = frac_deriv(h, w)[0]
                want = float(mpmath.mpf(n * dt) ** (1 - mpmath.mpf(q)) / mpmath.gamma(2 - mpmath.mpf(q)))
                worst = max(worst, abs(got - want) / want)
        sums = np.array([math.fsum(w.window(n)) for n in range(1, 10_001, 7)])
        ref = np.array([full_history_weight_sum(q, n) for n in range(1, 10_001, 7)])
        worst = max(worst, float(np.max(np.abs(sums - ref) / ref)))
    record_property("detail", f"max rel err {worst:.1e}")
    assert worst < 1e-9


def test_c03_truncation_ceiling(record_property):
    q, dt, k_hist = 0.5, 0.01, 300.0
    worst = 0.0
    for d, u in ((100, 1.0), (100, 2.5), (50, 1.0), (500, 0.7)):
        _, rows = probe(q, [d], dt, 30.0, k_hist, f"step:{u},0", d + 200)
        qq = mpmath.mpf(q)
        ceiling = float(k_hist * u * mpmath.mpf(dt) ** (1 - qq)
                        * ((d + 1) ** (2 - qq) - mpmath.mpf(d) ** (2 - qq)) / mpmath.gamma(3 - qq))
        plateau = np.array([r[2] for r in rows[d + 1:]])
        worst = max(worst, float(np.max(np.abs(plateau - ceiling) / ceiling)))
        assert max(r[2] for r in rows) <= ceiling * (1 + 1e-6)
    per_unit = float(mpmath.sqrt(mpmath.mpf(dt)) * (101 ** mpmath.mpf(1.5) - 100 ** mpmath.mpf(1.5)) / mpmath.gamma(2.5))
    record_property("detail", f"max rel err {worst:.1e}; plateau per unit gain and speed {per_unit:.6f}")
    assert worst < 1e-6


def test_c04_stiffness_curve_shapes(record_property):
    dt, k_hist, at = 0.01, 300.0, 10
    ds = [50, 100, 500]
    _, imp = probe(0.5, ds, dt, 30.0, k_hist, f"impulse:1,{at}", 800)
    imp = np.array([r[2:] for r in imp])
    for c, d in enumerate(ds):
        tail = imp[at:, c]
        assert tail[0] > 0
        assert np.all(np.diff(tail[: d + 1]) <= 0)
        assert np.all(imp[at + d + 1:, c] == 0.0)
        assert np.all(imp[:at, c] == 0.0)
    _, stp = probe(0.5, ds, dt, 30.0, k_hist, "step:1,0", 800)
    stp = np.array([r[2:] for r in stp])
    for c, d in enumerate(ds):
        assert np.all(np.diff(stp[: d + 1, c]) >= 0)
        assert np.all(stp[d + 1:, c] == stp[d + 1, c])
    assert np.all(imp[:, 0] <= imp[:, 1]) and np.all(imp[:, 1] <= imp[:, 2])
    assert np.all(stp[:, 0] <= stp[:, 1]) and np.all(stp[:, 1] <= stp[:, 2])
    # order comparison under constant drive with the full run in memory
    curves = {}
    for q in ORDERS:
        _, rows = probe(q, [1000], dt, 30.0, k_hist, "step:1,0", 1000)
        curves[q] = np.array([r[2] for r in rows])
    late = slice(200, 1001)
    ordered = bool(np.all(curves[0.2][late] >= curves[0.5][late]) and np.all(curves[0.5][late] >= curves[0.8][late]))
    record_property("detail", f"q-ordering from t=2 s: {ordered}")
    assert ordered


def _hooke_world(history_enabled):
    x = block_positions((0.5, 0.3), (3.0, 2.3), 0.1, 0.02, 3)
    sp = SpringParams(k_min=30.0, k_hist=0.0, d=100)
    return make_world(x, FluidParams(), sp, Container((0.0, 0.0), (4.0, 3.0)), seed=3,
                      history_enabled=history_enabled)


def test_c05_hooke_reduction(record_property):
    a, b = _hooke_world(True), _hooke_world(False)
    assert len(a.particles) == 500
    same = True
    for n in range(500):
        a.step()
        b.step()
        if n % 50 == 49:
            same &= a.particles.x.tobytes() == b.particles.x.tobytes()
            same &= a.particles.v.tobytes() == b.particles.v.tobytes()
    same &= a.particles.avg_hist_stiffness.tobytes() == b.particles.avg_hist_stiffness.tobytes()
    record_property("detail", f"bitwise identical: {same}")
    assert same


def test_c06_sph_oracle_equivalence(record_property):
    fl = FluidParams(h=0.1, rho0=1.7, k_pressure=300.0, k_near=300.0, sigma=5.0, beta=1.0, dt=0.01)
    worst_drift = 0.0
    for n, dim, seed in ((100, 2, 1), (700, 3, 2), (2000, 2, 3)):
        rng = np.random.default_rng(seed)
        x = rng.uniform(0.0, 1.0 if dim == 2 else 0.5, (n, dim))
        v = rng.normal(0.0, 1.0, (n, dim))
        idx = rebuild_index(x, fl.h)
        want = oracles.all_pairs(x, fl.h)
        for i in range(n):
            assert idx.neighbors(i).tolist() == want[i].tolist()
        got_v = apply_viscosity(x, v, idx, fl)
        assert np.array_equal(got_v, oracles.viscosity(x, v, fl.h, fl.dt, fl.sigma, fl.beta))
        dx, rho, rn = double_density_relaxation(x, idx, fl)
        wdx, wrho, wrn = oracles.ddr(x, fl.h, fl.dt, fl.rho0, fl.k_pressure, fl.k_near)
        assert np.array_equal(dx, wdx) and np.array_equal(rho, wrho) and np.array_equal(rn, wrn)
        drift = np.abs(got_v.sum(axis=0) - v.sum(axis=0)).max() / np.abs(v).sum()
        worst_drift = max(worst_drift, float(drift))
    record_property("detail", f"bitwise match; momentum drift {worst_drift:.1e}")
    assert worst_drift < 1e-10


def _sphere_track(sc):
    w = build_world(sc)
    ys = []
    surface = None
    while w.step_index < sc.steps:
        w.step()
        if surface is None and w.time >= sc.sphere.release_time - 1e-12:
            surface = float(np.percentile(w.particles.x[:, 1], 99))
        ys.append(float(w.sphere.center[1]))
    return np.array(ys), w.first_contact_step, surface


def test_c07_bowling_ball_hysteresis(record_property):
    sc = load_preset("bowling_ball")
    assert len(block_positions(sc.block.lo, sc.block.hi, sc.block.spacing)) >= 2000
    assert sc.spring.d == round(1 / sc.dt) and sc.spring.k_hist == 10 * sc.spring.k_min
    liquid = dataclasses.replace(sc, spring=dataclasses.replace(sc.spring, k_hist=0.0))
    y_h, c_h, surf = _sphere_track(sc)
    y_0, _, _ = _sphere_track(liquid)
    rad = sc.sphere.radius
    depth = surf - sc.container.lo[1]
    win = int(round(1.0 / sc.dt))
    # ys[k] is the height after step k + 1
    window = y_h[c_h - 1: c_h - 1 + win + 1]
    assert len(window) == win + 1, "run too short for the one-second window"
    floor_ok = bool(window.min() > surf - rad)
    gap = window.min() - y_0[c_h - 1 + win]
    sinks = bool(y_0[-1] < 0.5 * depth)
    record_property("detail", f"min {window.min():.3f} vs limit {surf - rad:.3f}; gap {gap:.3f} vs "
                              f"{0.25 * depth:.3f}; liquid ends {y_0[-1]:.3f} vs {0.5 * depth:.3f}")
    assert floor_ok
    assert gap >= 0.25 * depth
    assert sinks


def _vibration_profile(sc):
    w = build_world(sc)
    rest = sc.block.hi[1]
    heights = []
    variances = []
    last = sc.steps - int(round(1.0 / sc.dt))
    while w.step_index < sc.steps:
        w.step()
        if w.step_index > last and w.step_index % 10 == 0:
            tops = column_tops(w.particles.x, sc.container, 2 * sc.block.spacing, sc.fluid.h)
            heights.append(tops.max() - rest)
            variances.append(tops.var())
    return float(np.mean(heights)), float(np.mean(variances))


def test_c08_vibration_finger_proxy(record_property):
    sc = load_preset("vibration")
    assert abs(sc.steps * sc.dt - 10.0) < 1e-9
    liquid = dataclasses.replace(sc, spring=dataclasses.replace(sc.spring, k_hist=0.0))
    h_hist, var_hist = _vibration_profile(sc)
    h_liq, var_liq = _vibration_profile(liquid)
    ratio = h_hist / h_liq if h_liq > 0 else math.inf
    record_property("detail", f"column height {h_hist:.3f} vs {h_liq:.3f} (x{ratio:.2f}); "
                              f"variance {var_hist:.4f} vs {var_liq:.4f}")
    assert ratio >= 2.0
    assert var_hist > var_liq


def test_c09_history_cost_scaling(record_property):
    sc = load_preset("bowling_ball")
    bench(sc, [0, 50], steps=2)  # compile and warm caches
    res = {r["d"]: r["ms_history"] for r in bench(sc, [0, 50, 500], steps=30)}
    ratio = (res[500] - res[0]) / (res[50] - res[0])
    record_property("detail", f"t_hist ms d=0/50/500: {res[0]:.3f}/{res[50]:.3f}/{res[500]:.3f}, ratio {ratio:.1f}")
    assert 5.0 <= ratio <= 15.0


def test_c10_stability_and_determinism(tmp_path, record_property):
    sc = dataclasses.replace(load_preset("vibration"), steps=10_000, output_stride=500)
    lo = np.asarray(sc.container.lo)
    hi = np.asarray(sc.container.hi)
    escapes = []

    def inside(world):
        x = world.particles.x
        if not ((x >= lo) & (x <= hi)).all():
            escapes.append(world.step_index)

    run(sc, str(tmp_path / "a"), timing=False, on_step=inside)
    run(sc, str(tmp_path / "b"), timing=False)
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    same = all((tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes() for n in names)
    record_property("detail", f"{len(names) - 1} frames, identical: {same}, escapes: {len(escapes)}")
    assert not escapes
    assert same
