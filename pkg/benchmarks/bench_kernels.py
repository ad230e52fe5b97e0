"""Benchmark the compiled detection kernels against the pure-Python fallback.

Run:  python benchmarks/bench_kernels.py [n_clicks]

Times the two hot kernels (non-paralyzable dead-time filtering and fixed-bin
time-tag histogramming) on a synthetic click stream, then times an
end-to-end Monte Carlo click sampling through whichever backend is active.
"""

import sys
import time

import numpy as np

from qbuffer import kernels
from qbuffer.detection import DetectorModel, sample_clicks


def timeit(fn, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    n = int(sys.argv[1]) if len(sys.argv) > 1 else 2_000_000
    rng = np.random.default_rng(42)
    times = np.sort(rng.random(n) * 10.0)
    dead = 5.0 / n  # suppresses a few percent of clicks

    backends = kernels.available_backends()
    print(f"active backend: {kernels.BACKEND}")
    print(f"synthetic stream: {n} sorted clicks over 10 s\n")
    print(f"{'kernel':24s} " + " ".join(f"{name:>12s}" for name in backends)
          + f" {'speedup':>9s}")

    results = {}
    for label, call in (
        ("dead_time_filter",
         lambda impl: impl.dead_time_filter(times, dead)),
        ("bin_counts (1e5 bins)",
         lambda impl: impl.bin_counts(times, 0.0, 1e-4, 100_000)),
    ):
        row = {name: timeit(lambda impl=impl: call(impl))
               for name, impl in backends.items()}
        results[label] = row
        speed = (f"{row['python'] / row['compiled']:8.1f}x"
                 if "compiled" in row else "      n/a")
        print(f"{label:24s} " + " ".join(f"{row[name] * 1e3:10.2f}ms"
                                         for name in backends) + f" {speed}")

    # Parity check while we are here.
    for name, impl in backends.items():
        m = impl.dead_time_filter(times, dead)
        c, o = impl.bin_counts(times, 0.0, 1e-4, 100_000)
        results.setdefault("_parity", {})[name] = (m.sum(), c.sum(), o)
    if len({v for v in results["_parity"].values()}) != 1:
        raise SystemExit("backend results differ!")
    print("\nbackend parity: identical results")

    det = DetectorModel()
    pulses = (np.sort(rng.random(500_000) * 500.0),
              np.full(500_000, 0.05))
    dt = timeit(lambda: sample_clicks(pulses, det, 500.0, 1), repeats=3)
    print(f"sample_clicks end-to-end (500k pulses, {kernels.BACKEND} "
          f"backend): {dt * 1e3:.1f} ms")


if __name__ == "__main__":
    main()
