"""Time the compiled and numpy kernel backends side by side.

    python benchmarks/bench_kernels.py [--sizes 120,512,2048] [--repeat 7]

Reports the best-of-N wall time per call and checks that both backends
produce identical bytes on the benchmark inputs.
"""

import argparse
import timeit

import numpy as np

from msprompt import kernels

NDVI_POINTS = ((1.0, 0.0, 0.0), (1.0, 1.0, 0.0), (0.0, 1.0, 0.0))


def cases(side, rng):
    a = rng.integers(0, 10_000, (side, side)).astype(np.float32)
    b = rng.integers(0, 10_000, (side, side)).astype(np.float32)
    unit = rng.random((side, side), dtype=np.float32)
    nd = kernels.load("python").normalized_difference(a, b)
    return {
        "rescale_clip": lambda k: k.rescale_clip(a, np.float32(500), np.float32(9000)),
        "to_byte": lambda k: k.to_byte(unit),
        "normalized_difference": lambda k: k.normalized_difference(a, b),
        "colormap": lambda k: k.colormap(nd, NDVI_POINTS, -1.0, 1.0),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", default="120,512,2048")
    parser.add_argument("--repeat", type=int, default=7)
    args = parser.parse_args()

    names = kernels.available()
    impls = {name: kernels.load(name) for name in names}
    if len(impls) < 2:
        print(f"only {names} available; build the extension with `pip install -e . --no-build-isolation`")
    rng = np.random.default_rng(0)

    header = f"{'kernel':<22}{'side':>6}" + "".join(f"{n + ' ms':>12}" for n in names)
    if len(impls) == 2:
        header += f"{'speedup':>10}{'same bytes':>12}"
    print(header)
    for side in (int(s) for s in args.sizes.split(",")):
        for kernel, fn in cases(side, rng).items():
            loops = max(1, 2_000_000 // (side * side))
            times = {}
            for name, impl in impls.items():
                best = min(timeit.repeat(lambda: fn(impl), number=loops, repeat=args.repeat))
                times[name] = best / loops * 1000
            row = f"{kernel:<22}{side:>6}" + "".join(f"{times[n]:>12.3f}" for n in names)
            if len(impls) == 2:
                same = fn(impls["cython"]).tobytes() == fn(impls["python"]).tobytes()
                row += f"{times['python'] / times['cython']:>9.2f}x{str(same):>12}"
            print(row)


if __name__ == "__main__":
    main()
