"""Compiled vs numpy inner loop for segment-wise power integrals.

    python3 benchmarks/bench_core.py [--sizes 1000 100000 ...] [--repeat 5]

Also times one full approximant evaluation under each backend.
"""

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from subfbm import _fallback

try:
    from subfbm import _core
except ImportError:
    _core = None


def bench_kernel(sizes, repeat):
    rng = np.random.default_rng(0)
    rows = []
    for m in sizes:
        b = np.sort(rng.uniform(-8.0, 0.0, m + 1))
        lo, hi = b[:-1].copy(), b[1:].copy()
        w = rng.standard_normal(m)
        row = {"segments": m}
        impls = {"python": _fallback.weighted_power_sum}
        if _core is not None:
            impls["cython"] = _core.weighted_power_sum
        vals = {}
        for name, fn in impls.items():
            number = max(1, 200_000 // m)
            t = min(timeit.repeat(lambda: fn(lo, hi, w, 0.5, -0.2), number=number, repeat=repeat))
            row[f"{name}_us"] = 1e6 * t / number
            vals[name] = fn(lo, hi, w, 0.5, -0.2)
        if "cython" in vals:
            row["speedup"] = row["python_us"] / row["cython_us"]
            row["rel_diff"] = abs(vals["cython"] - vals["python"]) / max(abs(vals["python"]), 1e-300)
        rows.append(row)
    return rows


_EVAL = """
import time
from subfbm import ModelParams, ApproximantEvaluator, make_drivers, BACKEND
p = ModelParams(H=0.3, beta=0.3, n=2000, a=-8.0)
t0 = time.perf_counter()
for r in range(20):
    ev = ApproximantEvaluator(p, make_drivers(p.n, p.T, p.a, "grid_bm", 0, r))
    for t in (0.25, 0.5, 0.75, 1.0):
        ev.eval_S(t)
print(BACKEND, (time.perf_counter() - t0) / 20)
"""


def bench_replica():
    out = {}
    for flag in ("0", "1"):
        env = dict(os.environ, SUBFBM_PURE_PYTHON=flag)
        res = subprocess.run([sys.executable, "-c", _EVAL], env=env, capture_output=True, text=True, check=True)
        backend, sec = res.stdout.split()
        out[backend] = float(sec)
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[100, 1_000, 10_000, 100_000, 1_000_000])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", action="store_true")
    args = ap.parse_args()
    rows = bench_kernel(args.sizes, args.repeat)
    replica = bench_replica()
    if args.json:
        print(json.dumps({"kernel": rows, "grid_bm_replica_seconds": replica}, indent=2))
        return
    print(f"{'segments':>10} {'python us':>12} {'cython us':>12} {'speedup':>8}")
    for r in rows:
        print(f"{r['segments']:>10} {r['python_us']:>12.1f} {r.get('cython_us', float('nan')):>12.1f} "
              f"{r.get('speedup', float('nan')):>8.2f}")
    print("grid_bm replica (4 times, n=2000, a=-8):",
          ", ".join(f"{k} {v * 1e3:.1f} ms" for k, v in replica.items()))


if __name__ == "__main__":
    main()
