"""Compiled vs numpy kernel timings.

    python3 benchmarks/bench_kernels.py [--repeat N]

Each kernel runs on the same inputs under both backends; results are
checked for agreement before timing.
"""
import argparse
import timeit

import numpy as np

from explagree import _kernels
from explagree.maskpipe import OTSU_CANDIDATES


def workloads(rng):
    masks = [(rng.random((64, 64)) < 0.4).astype(np.uint8) for _ in range(200)]
    flags = [m.astype(bool) for m in masks]
    others = [rng.random((64, 64)) < 0.3 for _ in range(200)]
    grids = [rng.beta(0.6, 0.6, size=1024) for _ in range(200)]
    tables = [rng.normal(size=1 << 10) for _ in range(20)]
    return {
        "dilate+erode 64x64 k=3 (x200)": lambda b: [b.erode(b.dilate(m, 3), 3) for m in masks],
        "pair_counts 64x64 (x200)": lambda b: [b.pair_counts(m, o) for m, o in zip(flags, others)],
        "otsu_index 1024 px (x200)": lambda b: [b.otsu_index(g, OTSU_CANDIDATES) for g in grids],
        "shapley_table S=10 (x20)": lambda b: [b.shapley_table(t, 10) for t in tables],
    }


def same(a, b) -> bool:
    return all(np.allclose(x, y, rtol=0, atol=1e-12) for x, y in zip(a, b))


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    compiled = _kernels.compiled_backend
    if compiled is None:
        raise SystemExit("compiled kernels are not built; run `pip install -e . --no-build-isolation`")
    python = _kernels.python_backend
    rng = np.random.default_rng(0)
    print(f"{'kernel':34s} {'compiled ms':>12s} {'numpy ms':>10s} {'speedup':>8s}")
    for name, fn in workloads(rng).items():
        if not same(fn(compiled), fn(python)):
            raise SystemExit(f"{name}: backends disagree")
        tc = min(timeit.repeat(lambda: fn(compiled), number=1, repeat=args.repeat)) * 1e3
        tp = min(timeit.repeat(lambda: fn(python), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:34s} {tc:12.2f} {tp:10.2f} {tp / tc:7.1f}x")


if __name__ == "__main__":
    main()
