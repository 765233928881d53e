"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5] [--dtype float32]

Each row is one kernel call on a ResNet-sized activation; the last column
is the speedup of the compiled backend over numpy.  A second table times a
full forward/backward pass of a small ResNet18 on each backend.
"""
import argparse
import timeit

import numpy as np

from afdetect.autodiff import backward, kernels
from afdetect.models import ResNet18, init_parameters, mb_loss

CASES = {
    # name: (input shape N,C,H,W, kernel, stride)
    "stem 7x7/2 on 64x64": ((16, 1, 70, 70), 7, 2),
    "3x3/1 on 16x16x64": ((16, 64, 18, 18), 3, 1),
    "3x3/2 on 8x8x128": ((16, 128, 10, 10), 3, 2),
}


def kernel_calls(shape, k, s, dtype, rng):
    n, c, hp, wp = shape
    xp = rng.standard_normal(shape).astype(dtype)
    cols = kernels.im2col(xp, k, k, s, s)
    pooled, arg = kernels.maxpool_forward(xp, 3, 3, 2, 2)
    g = np.ones_like(pooled)
    return {
        "im2col": lambda: kernels.im2col(xp, k, k, s, s),
        "col2im": lambda: kernels.col2im(cols, n, c, hp, wp, k, k, s, s),
        "maxpool fwd": lambda: kernels.maxpool_forward(xp, 3, 3, 2, 2),
        "maxpool bwd": lambda: kernels.maxpool_backward(g, arg, hp, wp, 3, 3, 2, 2),
    }


def best_of(fn, repeat):
    number = max(1, int(0.05 / max(timeit.timeit(fn, number=1), 1e-6)))
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def bench_kernels(backends, dtype, repeat):
    print(f"{'case':28s} {'kernel':12s}" + "".join(f"{b:>12s}" for b in backends) + "  speedup")
    for name, (shape, k, s) in CASES.items():
        times = {}
        for b in backends:
            kernels.use_backend(b)
            for kname, fn in kernel_calls(shape, k, s, dtype, np.random.default_rng(0)).items():
                times.setdefault(kname, {})[b] = best_of(fn, repeat)
        for kname, row in times.items():
            line = f"{name:28s} {kname:12s}" + "".join(f"{row[b] * 1e3:10.3f}ms" for b in backends)
            if len(backends) == 2:
                line += f"  {row['python'] / row['cython']:6.2f}x"
            print(line)


def bench_network(backends, dtype, repeat):
    rng = np.random.default_rng(0)
    net = init_parameters(ResNet18(1, (16, 32, 64, 128), 7, (64, 64)), 0).astype(dtype).train()
    x = rng.standard_normal((16, 1, 64, 64)).astype(dtype)
    y = rng.integers(0, 2, 16).astype(dtype)
    mask = np.zeros((16, 7), bool)
    mask[:, 0] = True

    def step():
        for p in net.parameters().values():
            p.grad = None
        backward(mb_loss(net(x), y, mask, reduction="mean"))

    print("\nResNet18 (widths 16-128) forward+backward, batch 16 at 64x64")
    times = {}
    for b in backends:
        kernels.use_backend(b)
        times[b] = best_of(step, repeat)
        print(f"  {b:8s} {times[b] * 1e3:9.1f} ms")
    if len(backends) == 2:
        print(f"  speedup  {times['python'] / times['cython']:9.2f}x")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--dtype", default="float64", choices=("float64", "float32"))
    args = parser.parse_args()
    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled kernels not built; timing the numpy fallback only")
    dtype = np.dtype(args.dtype)
    prev = kernels.BACKEND
    try:
        bench_kernels(backends, dtype, args.repeat)
        bench_network(backends, dtype, args.repeat)
    finally:
        kernels.use_backend(prev)


if __name__ == "__main__":
    main()
