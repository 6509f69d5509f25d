"""Compare the compiled and pure-numpy kernel lanes on training shapes.

Both lanes share the same GEMM and accumulation order, so their outputs
are bitwise identical; this script measures what the compiled data
movement is worth. Run from the repository root:

    python benchmarks/bench_kernels.py
    python benchmarks/bench_kernels.py --batch 32 --repeats 5
"""

import argparse
import importlib
import os
import sys
import time

import numpy as np


# the encoder's convolution stack plus one pooling stage
CASES = [
    ("conv 3->16 64x64", dict(cin=3, cout=16, size=64)),
    ("conv 16->32 32x32", dict(cin=16, cout=32, size=32)),
    ("conv 32->64 16x16", dict(cin=32, cout=64, size=16)),
    ("conv 64->64 8x8", dict(cin=64, cout=64, size=8)),
    ("pool 16 64x64", dict(cin=16, size=64, pool=True)),
]


def load_lane(name):
    os.environ["VQALITE_KERNELS"] = name
    import vqalite.kernels as kernels

    return importlib.reload(kernels)


def run_case(kernels, spec, batch, repeats):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((batch, spec["cin"], spec["size"], spec["size"])).astype(np.float32)
    if spec.get("pool"):
        def once():
            y = kernels.avg_pool2d_forward(x, 2)
            kernels.avg_pool2d_backward(np.ascontiguousarray(y), 2)
    else:
        w = rng.standard_normal((spec["cout"], spec["cin"], 3, 3)).astype(np.float32)

        def once():
            y, cols = kernels.conv2d_forward(x, w, 1, 1)
            kernels.conv2d_backward(w, cols, y, x.shape, 1, 1)

    once()  # warm caches before timing
    best = min(timed(once) for _ in range(repeats))
    return best


def timed(fn):
    t0 = time.perf_counter()
    fn()
    return time.perf_counter() - t0


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--batch", type=int, default=64)
    parser.add_argument("--repeats", type=int, default=7, help="best-of timing repeats")
    args = parser.parse_args(argv)

    lanes = {}
    for name in ("py", "cy"):
        try:
            kernels = load_lane(name)
        except ImportError:
            print(f"lane {name!r} unavailable, skipping")
            continue
        lanes[kernels.lane()] = {
            label: run_case(kernels, spec, args.batch, args.repeats) for label, spec in CASES
        }

    names = list(lanes)
    width = max(len(label) for label, _ in CASES) + 2
    header = "".ljust(width) + "".join(n.rjust(12) for n in names)
    if len(names) == 2:
        header += "speedup".rjust(10)
    print(f"batch {args.batch}, forward+backward, best of {args.repeats}")
    print(header)
    for label, _ in CASES:
        row = label.ljust(width)
        for n in names:
            row += f"{1e3 * lanes[n][label]:9.2f} ms"
        if len(names) == 2:
            row += f"{lanes[names[0]][label] / lanes[names[1]][label]:9.2f}x"
        print(row)
    return 0


if __name__ == "__main__":
    sys.exit(main())
