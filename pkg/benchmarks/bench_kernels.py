#!/usr/bin/env python3
"""Benchmark the numba kernels against their pure-numpy fallbacks.

Run as `python benchmarks/bench_kernels.py`. Set MVUQ_NO_NUMBA=1 to confirm
the package itself falls back cleanly (this script always times both paths
explicitly when numba is importable).
"""

import time

import numpy as np

from mvuq import _kernels


def timeit(fn, *args, repeats=5):
    fn(*args)  # warmup (includes JIT compilation for the numba path)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_conv_features():
    print("=" * 64)
    print("random-conv patch features: 3x256x256 image, 512 filters, patch 3")
    print("=" * 64)
    rng = np.random.default_rng(0)
    channels = rng.uniform(0, 255, (3, 256, 256))
    filters = rng.standard_normal((512, 27)) / np.sqrt(27)
    biases = np.zeros(512)

    t_np = timeit(_kernels.conv_features_numpy, channels, filters, biases, 3, 3)
    print(f"numpy   : {t_np * 1000:8.2f} ms")
    if _kernels._HAS_NUMBA:
        t_nb = timeit(_kernels.conv_features_numba, channels, filters, biases, 3, 3)
        print(f"numba   : {t_nb * 1000:8.2f} ms   ({t_np / t_nb:.2f}x vs numpy)")
        a = _kernels.conv_features_numpy(channels, filters, biases, 3, 3)
        b = _kernels.conv_features_numba(channels, filters, biases, 3, 3)
        print(f"paths agree to {np.max(np.abs(a - b)):.2e}")
    else:
        print("numba   : unavailable (or disabled via MVUQ_NO_NUMBA)")


def bench_kriging():
    print("=" * 64)
    print("ordinary-kriging node solves: 500 points, 40x40 grid, k=32")
    print("=" * 64)
    rng = np.random.default_rng(1)
    pts = np.radians(np.column_stack([rng.uniform(30, 31, 500),
                                      rng.uniform(-2, -1, 500)]))
    values = rng.standard_normal(500)
    glon, glat = np.meshgrid(np.linspace(30, 31, 40), np.linspace(-2, -1, 40))
    nodes = np.radians(np.column_stack([glon.ravel(), glat.ravel()]))
    neighbor_idx = np.argsort(
        (pts[None, :, 0] - nodes[:, None, 0]) ** 2
        + (pts[None, :, 1] - nodes[:, None, 1]) ** 2, axis=1)[:, :32]

    args = (pts, values, nodes, neighbor_idx.astype(np.int64), 0.01, 1.0, 25.0, 1e-10)
    t_np = timeit(_kernels.ok_solve_numpy, *args, repeats=3)
    print(f"numpy   : {t_np * 1000:8.2f} ms")
    if _kernels._HAS_NUMBA:
        t_nb = timeit(_kernels.ok_solve_numba, *args, repeats=3)
        print(f"numba   : {t_nb * 1000:8.2f} ms   ({t_np / t_nb:.2f}x vs numpy)")
        est_np, var_np, _, _ = _kernels.ok_solve_numpy(*args)
        est_nb, var_nb, _, _ = _kernels.ok_solve_numba(*args)
        print(f"paths agree to {np.max(np.abs(est_np - est_nb)):.2e} (estimate), "
              f"{np.max(np.abs(var_np - var_nb)):.2e} (variance)")
    else:
        print("numba   : unavailable (or disabled via MVUQ_NO_NUMBA)")


if __name__ == "__main__":
    print(f"active package backend: {_kernels.backend()}")
    bench_conv_features()
    bench_kriging()
