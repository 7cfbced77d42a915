"""Time the compiled and numpy conv1d kernels on training-sized shapes.

    python3 bench/bench_kernels.py [--repeat 5] [--dtype float32]
"""

import argparse
import timeit

import numpy as np

from s2pnilm import kernels

# (label, batch, length, in_channels, out_channels, kernel)
SHAPES = [
    ("small conv1", 256, 99, 1, 16, 9),
    ("small conv2", 256, 99, 16, 16, 7),
    ("default conv1", 64, 599, 1, 30, 10),
    ("default conv3", 64, 599, 30, 40, 6),
    ("default conv5", 64, 599, 50, 50, 5),
]


def bench(shape, impl, dtype, repeat):
    _, n, length, cin, cout, k = shape
    rng = np.random.default_rng(0)
    x = rng.normal(size=(n, length, cin)).astype(dtype)
    w = rng.normal(size=(k, cin, cout)).astype(dtype)
    b = np.zeros(cout, dtype=dtype)
    dout = rng.normal(size=(n, length, cout)).astype(dtype)
    pad = (k - 1) // 2

    def fwd():
        kernels.conv1d_forward(x, w, b, pad, length, impl=impl)

    def bwd():
        kernels.conv1d_backward(x, w, dout, pad, need_dx=cin > 1, impl=impl)

    fwd(), bwd()
    return (min(timeit.repeat(fwd, number=1, repeat=repeat)),
            min(timeit.repeat(bwd, number=1, repeat=repeat)))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--dtype", choices=("float32", "float64"), default="float32")
    args = ap.parse_args()
    impls = [name for name in ("compiled", "python") if name in kernels.BACKENDS]
    print(f"backends: {', '.join(impls)}; dtype {args.dtype}; best of {args.repeat}")
    header = f"{'shape':<15}" + "".join(f"{i + ' fwd':>14}{i + ' bwd':>14}" for i in impls)
    if len(impls) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for shape in SHAPES:
        times = {i: bench(shape, i, np.dtype(args.dtype), args.repeat) for i in impls}
        line = f"{shape[0]:<15}" + "".join(f"{t[0] * 1e3:>12.2f}ms{t[1] * 1e3:>12.2f}ms"
                                           for t in times.values())
        if len(impls) == 2:
            c, p = times["compiled"], times["python"]
            line += f"{(p[0] + p[1]) / (c[0] + c[1]):>9.2f}x"
        print(line)


if __name__ == "__main__":
    main()
