"""Time the compiled kernels against the numpy / plain-Python fallback.

Each mode runs in its own interpreter because the switch is read at import:

    python3 benchmarks/compare_accel.py [--sizes 25,50,100] [--rays 200000]

Prints one row per (workload, mode) with the median of five runs and the
speedup of numba over the fallback.
"""
import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, statistics, sys, time
import numpy as np
from boxvis import accel_name
from boxvis.bench import SceneGenConfig, generate_scene
from boxvis.oracle import OracleConfig, estimate_visibility
from boxvis.visibility import NAIVE, PRUNED, visibility_all

sizes, rays, reps = json.loads(sys.argv[1])

def median_s(fn):
    fn()
    ts = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        ts.append(time.perf_counter() - t0)
    return statistics.median(ts)

out = {"mode": accel_name(), "rows": []}
for n in sizes:
    scene = generate_scene(SceneGenConfig(n_boxes=n, seed=1))
    for b in (NAIVE, PRUNED):
        out["rows"].append([f"{b.label} n={n}", median_s(lambda: visibility_all(scene, b))])
scene = generate_scene(SceneGenConfig(n_boxes=20, seed=1))
far = int(np.argmax(scene.depths()))
cfg = OracleConfig(rays, seed=0)
out["rows"].append([f"oracle rays={rays}", median_s(lambda: estimate_visibility(scene, far, cfg))])
print(json.dumps(out))
"""


def run_mode(disable, sizes, rays, reps):
    env = dict(os.environ, BOXVIS_DISABLE_NUMBA="1" if disable else "0")
    proc = subprocess.run([sys.executable, "-c", WORKER, json.dumps([sizes, rays, reps])],
                          env=env, capture_output=True, text=True, check=True)
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", default="25,50,100")
    p.add_argument("--rays", type=int, default=200_000)
    p.add_argument("--reps", type=int, default=5)
    args = p.parse_args(argv)
    sizes = [int(s) for s in args.sizes.split(",")]
    fast = run_mode(False, sizes, args.rays, args.reps)
    slow = run_mode(True, sizes, args.rays, args.reps)
    print(f"{'workload':<24}{fast['mode']:>12}{slow['mode']:>12}{'speedup':>10}")
    for (name, tf), (_, ts) in zip(fast["rows"], slow["rows"]):
        print(f"{name:<24}{tf * 1e3:>10.2f}ms{ts * 1e3:>10.2f}ms{ts / tf:>9.1f}x")


if __name__ == "__main__":
    main()
