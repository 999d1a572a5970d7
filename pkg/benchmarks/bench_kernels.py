"""Time the numba kernels against their numpy twins.

    python3 benchmarks/bench_kernels.py [--repeat 5]

A full isvta run is timed under each backend as well, in a subprocess, since
the backend is fixed at import time.
"""
import argparse
import os
import subprocess
import sys
import time

import numpy as np

from fracrank import _kernels

SOLVE_SNIPPET = """
import time
from fracrank.harness import ExperimentSpec, SweepOptions, run_sweep
spec = ExperimentSpec(100, 100, 11, 0.4, seed=0)
run_sweep([ExperimentSpec(20, 20, 2, 0.5)], SweepOptions(max_iter=5))  # jit warmup
t0 = time.perf_counter()
(row,) = run_sweep([spec], SweepOptions())
print(time.perf_counter() - t0, row.iterations)
"""


def bench(fn, args, warmup=1, repeat=5):
    for _ in range(warmup):
        fn(*args)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def cases(rng):
    x = rng.standard_normal(200_000) * 3
    flat = np.sort(rng.choice(1_000_000, 400_000, replace=False))
    return {
        "prox_array": (x, 0.8, 2.0, 0.8),
        "grid_argmin": (1.3, 0.5, 3.0, -3.6, 1e-4, 72_001),
        "gradient_step": (rng.standard_normal(1_000_000), flat, rng.standard_normal(flat.size), 0.99),
        "fisher_yates": (1_000_000, 400_000, rng.uniform(size=400_000)),
    }


def solve_time(backend):
    env = dict(os.environ, FRACRANK_BACKEND=backend)
    out = subprocess.run([sys.executable, "-c", SOLVE_SNIPPET], env=env, check=True,
                         capture_output=True, text=True).stdout.split()
    return float(out[0]), int(out[1])


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--skip-solve", action="store_true")
    args = p.parse_args()

    if _kernels.NUMBA_KERNELS is None:
        sys.exit("numba is not installed; pip install numba to compare backends")

    rng = np.random.default_rng(0)
    print(f"{'kernel':<15}{'numpy (s)':>12}{'numba (s)':>12}{'speedup':>10}")
    for name, args_ in cases(rng).items():
        t_np = bench(_kernels.NUMPY_KERNELS[name], args_, repeat=args.repeat)
        t_nb = bench(_kernels.NUMBA_KERNELS[name], args_, repeat=args.repeat)
        print(f"{name:<15}{t_np:>12.5f}{t_nb:>12.5f}{t_np / t_nb:>9.1f}x")

    if not args.skip_solve:
        for backend in ("numpy", "numba"):
            secs, iters = solve_time(backend)
            print(f"isvta 100x100 rank 11 [{backend}]: {secs:.2f} s, {iters} iterations")


if __name__ == "__main__":
    main()
