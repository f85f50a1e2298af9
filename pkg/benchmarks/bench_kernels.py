"""Benchmark the numba kernels against the pure-numpy fallbacks.

Imports both implementation modules directly, so the FEATMIMIC_BACKEND
environment flag does not matter here.  Workload shapes mirror the bundled
network (40x40 grayscale input, two 3x3 conv blocks, 2x2 pooling, a
1024 -> 64 dense layer) plus the alignment kernels on a 40x40 image.

Run with::

    python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import time

import numpy as np

from featmimic.kernels import numba_impl, numpy_impl

RNG = np.random.default_rng(7)


def _f32(*shape):
    return RNG.standard_normal(shape).astype(np.float32)


def _cases():
    x1 = _f32(1, 40, 40)
    k1 = _f32(8, 1, 3, 3)
    b1 = _f32(8)
    y1 = _f32(8, 40, 40)
    x2 = _f32(8, 20, 20)
    k2 = _f32(16, 8, 3, 3)
    b2 = _f32(16)
    y2 = _f32(16, 20, 20)
    w = _f32(64, 1024)
    bw = _f32(64)
    v = _f32(1024)
    dyv = _f32(64)
    pool_in = _f32(16, 20, 20)
    _, pool_idx = numpy_impl.maxpool2d_forward(pool_in, 2, 2, 2, 2)
    pool_dy = _f32(16, 10, 10)
    img = RNG.uniform(0.0, 255.0, (40, 40))
    warp = np.array([[1.0, 0.01, 0.4], [-0.01, 1.0, -0.3], [0.0, 0.0, 1.0]])
    gauss = np.exp(-0.5 * (np.arange(11) - 5.0) ** 2 / 1.5**2)
    gauss /= gauss.sum()
    return [
        ("conv2d_forward 8x1x3x3 @40x40", "conv2d_forward", (x1, k1, b1, 1, 1, 1, 1)),
        ("conv2d_forward 16x8x3x3 @20x20", "conv2d_forward", (x2, k2, b2, 1, 1, 1, 1)),
        ("conv2d_input_grad 8f @40x40", "conv2d_input_grad", (y1, k1, 1, 40, 40, 1, 1, 1, 1)),
        ("conv2d_input_grad 16f @20x20", "conv2d_input_grad", (y2, k2, 8, 20, 20, 1, 1, 1, 1)),
        ("dense_forward 64x1024", "dense_forward", (w, bw, v)),
        ("dense_input_grad 64x1024", "dense_input_grad", (w, dyv)),
        ("maxpool2d_forward 16c 20x20", "maxpool2d_forward", (pool_in, 2, 2, 2, 2)),
        ("maxpool2d_input_grad 16c", "maxpool2d_input_grad", (pool_dy, pool_idx, 16, 20, 20)),
        ("warp_bilinear 40x40", "warp_bilinear", (img, warp, 40, 40)),
        ("sepfilter2d_valid 40x40 k11", "sepfilter2d_valid", (img, gauss)),
    ]


def _time(fn, args, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=200)
    args = parser.parse_args()

    cases = _cases()
    # first call per numba kernel pays JIT compilation; do it off the clock
    for _, name, call_args in cases:
        getattr(numba_impl, name)(*call_args)

    header = f"{'kernel':<34} {'numpy':>12} {'numba':>12} {'speedup':>9}"
    print(header)
    print("-" * len(header))
    for label, name, call_args in cases:
        t_np = _time(getattr(numpy_impl, name), call_args, args.repeat)
        t_nb = _time(getattr(numba_impl, name), call_args, args.repeat)
        print(f"{label:<34} {t_np * 1e6:>10.1f}us {t_nb * 1e6:>10.1f}us {t_np / t_nb:>8.2f}x")


if __name__ == "__main__":
    main()
