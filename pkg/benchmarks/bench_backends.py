"""Time whole steps and the history pass under both kernel backends.

Each backend runs in its own interpreter because the choice is fixed at
import time.  Usage: ``python3 benchmarks/bench_backends.py [preset] [steps]``.
"""
import json
import os
import subprocess
import sys

CHILD = r"""
import json, sys, time
import numpy as np
from stfsim import _backend
from stfsim.scenario_io import bench, build_world, load_preset

sc = load_preset(sys.argv[1])
steps = int(sys.argv[2])
w = build_world(sc)
w.step()  # compile on the numba path
t0 = time.perf_counter()
for _ in range(steps):
    w.step()
step_ms = 1e3 * (time.perf_counter() - t0) / steps
hist = {r["d"]: r["ms_history"] for r in bench(sc, [0, sc.spring.d], steps=steps)}
print(json.dumps({"backend": _backend.backend_name(), "particles": len(w.particles),
                  "ms_step": step_ms, "ms_history": hist[sc.spring.d]}))
"""


def measure(preset, steps, pure_numpy):
    env = dict(os.environ, STFSIM_PURE_NUMPY="1" if pure_numpy else "0")
    out = subprocess.run([sys.executable, "-c", CHILD, preset, str(steps)],
                         env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main():
    preset = sys.argv[1] if len(sys.argv) > 1 else "bowling_ball"
    steps = int(sys.argv[2]) if len(sys.argv) > 2 else 20
    rows = [measure(preset, steps, flag) for flag in (False, True)]
    print(f"{preset}: {rows[0]['particles']} particles, {steps} steps")
    print(f"{'backend':8s} {'ms/step':>10s} {'ms history':>11s}")
    for r in rows:
        print(f"{r['backend']:8s} {r['ms_step']:10.2f} {r['ms_history']:11.3f}")
    print(f"speed-up per step: {rows[1]['ms_step'] / rows[0]['ms_step']:.1f}x")


if __name__ == "__main__":
    main()
