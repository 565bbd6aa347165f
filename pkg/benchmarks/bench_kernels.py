#!/usr/bin/env python3
"""Benchmark the compiled aggregation kernels against the numpy fallback.

Two views:
  * per-call kernel timings over a (B, d) grid, covering both the desk-scale
    regime (small d, where Python/numpy call overhead dominates) and the
    large-d regime (where the per-coordinate sorting loop dominates);
  * one end-to-end simulation timed under each backend.

Run:  python benchmarks/bench_kernels.py [--json]
"""

import argparse
import json
import time
import timeit

import numpy as np

from bufsgd import RunConfig, run
from bufsgd import _kernels as kernels

GRID = [(5, 20), (10, 20), (10, 1000), (10, 100_000), (30, 100_000)]


def bench_kernel(fn, *args, repeat=5):
    calls = max(1, int(0.05 / max(timeit.timeit(lambda: fn(*args), number=3) / 3, 1e-7)))
    best = min(timeit.repeat(lambda: fn(*args), number=calls, repeat=repeat))
    return best / calls


def kernel_table():
    rows = []
    for b, d in GRID:
        stack = np.random.default_rng(b * d).normal(size=(b, d))
        q = (b - 1) // 2
        for name, call in [
            ("mean", lambda: kernels.mean_axis0(stack)),
            ("median", lambda: kernels.median_axis0(stack)),
            ("trmean", lambda: kernels.trimmed_mean_axis0(stack, q)),
        ]:
            times = {}
            for backend in kernels.available_backends():
                kernels.set_backend(backend)
                times[backend] = bench_kernel(call)
            rows.append({
                "kernel": name, "B": b, "d": d,
                "numpy_us": times["numpy"] * 1e6,
                "compiled_us": times.get("compiled", float("nan")) * 1e6,
                "speedup": times["numpy"] / times["compiled"] if "compiled" in times else float("nan"),
            })
    return rows


def end_to_end():
    cfg = RunConfig(task="quadratic", n=500, d=50, workers=12, buffers=6,
                    aggregator="median", eta=0.1, steps=3000, seed=0,
                    attack="neggrad", r=2).validated()
    out = {}
    results = {}
    for backend in kernels.available_backends():
        kernels.set_backend(backend)
        t0 = time.perf_counter()
        results[backend] = run(cfg)
        out[backend] = time.perf_counter() - t0
    if len(results) == 2:
        same = np.array_equal(results["numpy"].final_w, results["compiled"].final_w)
        out["bitwise_identical_final_w"] = bool(same)
    return out


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--json", action="store_true")
    args = parser.parse_args()

    rows = kernel_table()
    e2e = end_to_end()
    if args.json:
        print(json.dumps({"kernels": rows, "end_to_end": e2e}, indent=2))
        return

    print(f"available backends: {kernels.available_backends()}")
    print(f"{'kernel':8s} {'B':>4s} {'d':>8s} {'numpy':>12s} {'compiled':>12s} {'speedup':>8s}")
    for r in rows:
        print(f"{r['kernel']:8s} {r['B']:4d} {r['d']:8d} "
              f"{r['numpy_us']:10.2f}us {r['compiled_us']:10.2f}us {r['speedup']:7.2f}x")
    print()
    print("end-to-end simulation (12 workers, 6 buffers, median, 3000 steps):")
    for key, value in e2e.items():
        if isinstance(value, float):
            print(f"  {key}: {value:.3f}s")
        else:
            print(f"  {key}: {value}")


if __name__ == "__main__":
    main()
