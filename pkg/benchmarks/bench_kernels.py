"""Benchmark the window kernel: compiled extension vs pure numpy.

Times one full forward+backward training iteration at a few problem sizes
and prints the median per-iteration wall time for each available backend.

Usage: python3 benchmarks/bench_kernels.py [--reps 30]
"""

import argparse
import statistics
import time

import numpy as np

from rnne import kernels


def make_problem(n_slots, d=32, n=3, b=32, seed=0):
    rng = np.random.default_rng(seed)
    widths = [n_slots + d, d]
    ew = [rng.standard_normal((a, c)) * 0.1 for a, c in zip(widths[:-1], widths[1:])]
    eb = [np.zeros(c) for c in widths[1:]]
    rw = widths[::-1]
    dw = [rng.standard_normal((a, c)) * 0.1 for a, c in zip(rw[:-1], rw[1:])]
    db = [np.zeros(c) for c in rw[1:]]
    x = rng.random((n, b, n_slots))
    a_rows = (rng.random((n, b, n_slots)) < 0.05).astype(float)
    a_pair = (rng.random((n, b, b)) < 0.05).astype(float)
    h0 = rng.random((b, d))
    return (ew, eb, dw, db, x, a_rows, a_pair, h0, 0.1, 5.0, 1.0)


def time_backend(name, args, reps):
    kernels.set_backend(name)
    kernels.window_forward_backward(*args)  # warmup
    samples = []
    for _ in range(reps):
        t0 = time.perf_counter()
        kernels.window_forward_backward(*args)
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--reps", type=int, default=30)
    opts = parser.parse_args()

    sizes = (200, 400, 800)
    backends = kernels.available_backends()
    print(f"backends: {', '.join(backends)}  (reps={opts.reps})")
    header = "N".rjust(6) + "".join(f"{b:>14}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for n_slots in sizes:
        args = make_problem(n_slots)
        times = [time_backend(b, args, opts.reps) for b in backends]
        row = f"{n_slots:6d}" + "".join(f"{t * 1e3:11.3f} ms" for t in times)
        if len(times) == 2:
            slow, fast = times[backends.index("python")], times[backends.index("compiled")]
            row += f"{slow / fast:9.2f}x"
        print(row)
    kernels.set_backend("auto")


if __name__ == "__main__":
    main()
