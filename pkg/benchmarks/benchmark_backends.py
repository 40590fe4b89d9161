"""Time the compiled and pure-numpy trajectory kernels on the same workload.

Both backends execute the identical floating-point program, so the ensemble
statistics agree bitwise; this script only measures throughput. Run with

    python3 benchmarks/benchmark_backends.py [--trajectories N] [--dt X]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from undephase.backend import available_backends
from undephase.ensemble import run_homodyne_ensemble
from undephase.fields import SystemParams


def time_backend(name: str, p: SystemParams, n: int, dt: float) -> tuple[float, object]:
    t0 = time.perf_counter()
    res = run_homodyne_ensemble(p, n, seed=0, t_offs=[0.0, p.t_off], dt=dt, backend=name)
    return time.perf_counter() - t0, res


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--trajectories", type=int, default=2000)
    parser.add_argument("--dt", type=float, default=1e-3)
    args = parser.parse_args()

    p = SystemParams()
    n_steps = int(round(p.t_total / args.dt))
    print(f"workload: {args.trajectories} trajectories x {n_steps} steps (dt = {args.dt})")

    names = available_backends()
    if "compiled" not in names:
        print("compiled extension not built; timing the numpy backend only")

    timings = {}
    reference = None
    for name in names:
        elapsed, res = time_backend(name, p, args.trajectories, args.dt)
        timings[name] = elapsed
        rate = args.trajectories * n_steps / elapsed
        print(f"{name:>8}: {elapsed:8.3f} s  ({rate:.3g} steps/s)")
        stats = np.stack([res.purity_state_full, res.purity_state_nofb])
        if reference is None:
            reference = stats
        elif np.array_equal(stats, reference):
            print("          statistics agree bitwise with the first backend")
        else:
            print("          WARNING: statistics differ between backends")
            return 1

    if len(timings) == 2:
        print(f"speedup: {timings['python'] / timings['compiled']:.1f}x compiled over numpy")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
