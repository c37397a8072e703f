"""Compare the compiled kernel backend against the pure-NumPy fallback.

Times the convolution and pooling primitives on shapes representative of
the two classifiers (stem-sized batches down to late-stage feature maps),
checks that both backends agree numerically, and prints a speedup table.

Timing runs in float32, the dtype training uses.  Agreement is checked on
float64 copies of the same inputs: the backends sum reductions in
different orders, which in float32 produces harmless last-bit scatter on
large kernels, while in float64 any real defect still stands out against
a tight tolerance.

Run:  python3 benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from wwdet import kernels

# (label, N, C_in, H, W, C_out, k, stride, padding)
CONV_SHAPES = [
    ("stem 200x64", 8, 1, 200, 64, 16, 3, 1, 1),
    ("early stage", 8, 16, 50, 16, 16, 3, 1, 1),
    ("strided mid", 8, 32, 50, 16, 32, 3, 2, 1),
    ("late stage ", 8, 64, 13, 4, 64, 3, 1, 1),
]

POOL_SHAPES = [
    ("stem pool  ", 8, 16, 100, 32, 3, 2, 1),
]


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def run_op(name, fn, check_fn, repeats):
    """Time `fn` per backend and verify both agree on `check_fn`'s output."""
    timings, checks = {}, {}
    for backend in ("cython", "numpy"):
        kernels.set_backend(backend)
        timings[backend] = best_of(fn, repeats)
        checks[backend] = check_fn()
    agree = np.allclose(checks["cython"], checks["numpy"], rtol=1e-9, atol=1e-12)
    return name, timings, agree


def bench_conv(label, n, c_in, h, w, c_out, k, stride, padding, repeats):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((n, c_in, h, w)).astype(np.float32)
    wt = rng.standard_normal((c_out, c_in, k, k)).astype(np.float32)
    y = kernels.conv2d_forward(x, wt, stride, padding)
    gy = rng.standard_normal(y.shape).astype(np.float32)
    x64, wt64, gy64 = (a.astype(np.float64) for a in (x, wt, gy))

    ops = [
        ("conv fwd",
         lambda: kernels.conv2d_forward(x, wt, stride, padding),
         lambda: kernels.conv2d_forward(x64, wt64, stride, padding)),
        ("conv dx ",
         lambda: kernels.conv2d_backward_input(gy, wt, stride, padding, (h, w)),
         lambda: kernels.conv2d_backward_input(gy64, wt64, stride, padding, (h, w))),
        ("conv dw ",
         lambda: kernels.conv2d_backward_weight(x, gy, stride, padding, (k, k)),
         lambda: kernels.conv2d_backward_weight(x64, gy64, stride, padding, (k, k))),
    ]
    return [run_op(f"{name} {label}", fn, check_fn, repeats)
            for name, fn, check_fn in ops]


def bench_pool(label, n, c, h, w, size, stride, padding, repeats):
    rng = np.random.default_rng(1)
    x = rng.standard_normal((n, c, h, w)).astype(np.float32)
    y, idx = kernels.max_pool_forward(x, size, stride, padding)
    gy = rng.standard_normal(y.shape).astype(np.float32)
    x64, gy64 = x.astype(np.float64), gy.astype(np.float64)

    ops = [
        ("pool fwd",
         lambda: kernels.max_pool_forward(x, size, stride, padding)[0],
         lambda: kernels.max_pool_forward(x64, size, stride, padding)[0]),
        ("pool bwd",
         lambda: kernels.max_pool_backward(gy, idx, (h, w), padding),
         lambda: kernels.max_pool_backward(gy64, idx, (h, w), padding)),
    ]
    return [run_op(f"{name} {label}", fn, check_fn, repeats)
            for name, fn, check_fn in ops]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5,
                        help="timing repetitions per op (best is kept)")
    args = parser.parse_args()

    try:
        kernels.set_backend("cython")
    except Exception as e:
        raise SystemExit(f"compiled backend unavailable: {e}")
    original = kernels.backend()

    rows = []
    for shape in CONV_SHAPES:
        rows.extend(bench_conv(*shape, repeats=args.repeats))
    for shape in POOL_SHAPES:
        rows.extend(bench_pool(*shape, repeats=args.repeats))
    kernels.set_backend(original)

    width = max(len(r[0]) for r in rows)
    print(f"{'op / shape':<{width}}  {'cython':>9}  {'numpy':>9}  "
          f"{'speedup':>7}  match")
    for name, timings, agree in rows:
        speedup = timings["numpy"] / timings["cython"]
        print(f"{name:<{width}}  {timings['cython'] * 1e3:>7.2f}ms  "
              f"{timings['numpy'] * 1e3:>7.2f}ms  {speedup:>6.1f}x  "
              f"{'yes' if agree else 'NO'}")


if __name__ == "__main__":
    main()
