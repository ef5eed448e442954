"""Time the compiled exit-time kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--n 200000] [--repeat 3] [--simulate]

``--simulate`` also times a full ``fwgraph simulate`` run in a subprocess
with and without ``FWGRAPH_DISABLE_NUMBA``.
"""
import argparse
import os
import subprocess
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from fwgraph.kernels import _numba, _numpy


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_kernels(n, repeat):
    rng = np.random.default_rng(0)
    x = rng.uniform(0.05, 0.95, n)
    R = np.ones(n)
    us, ut = rng.random(n), rng.random(n)
    y = rng.uniform(0.01, 0.99, n)
    m = min(n, 20_000)
    _numba.warmup()
    rows = []
    for name, mod in (("numba", _numba), ("numpy", _numpy)):
        rows.append((name, "interval_exit_many", n, best_of(lambda: mod.interval_exit_many(x, R, us, ut), repeat)))
        rows.append((name, "conditional_time_many", n, best_of(lambda: mod.conditional_time_many(y, ut), repeat)))
        rows.append((name, "conditional_time (scalar)", m,
                     best_of(lambda: [mod.conditional_time(a, b) for a, b in zip(y[:m], ut[:m])], repeat)))
    return rows


def bench_simulate(repeat):
    config = Path(__file__).resolve().parent.parent / "configs" / "fig1.json"
    rows = []
    for label, flag in (("numba", "0"), ("numpy", "1")):
        env = dict(os.environ, FWGRAPH_DISABLE_NUMBA=flag)

        def run():
            with tempfile.TemporaryDirectory() as out:
                subprocess.run([sys.executable, "-m", "fwgraph.cli", "simulate", "--config", str(config),
                                "--backend", "direct", "--paths", "200", "--horizon", "2", "--out", out],
                               env=env, check=True, stdout=subprocess.DEVNULL)
        rows.append((label, "simulate fig1 (200 paths, subprocess)", 200, best_of(run, repeat)))
    return rows


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--simulate", action="store_true")
    args = ap.parse_args()
    rows = bench_kernels(args.n, args.repeat)
    if args.simulate:
        rows += bench_simulate(args.repeat)
    base = {task: t for backend, task, _, t in rows if backend == "numba"}
    print(f"{'backend':8} {'task':40} {'n':>8} {'seconds':>10} {'vs numba':>9}")
    for backend, task, n, t in rows:
        print(f"{backend:8} {task:40} {n:8d} {t:10.4f} {t / base[task]:8.1f}x")


if __name__ == "__main__":
    main()
