"""Compare the compiled and numpy kernels on XNOR-popcount GEMM and COO scatter.

    python benchmarks/bench_gemm.py [--repeat 5] [--sizes 64,256,1024]

Numbers are informational only; both backends give identical results.
"""

import argparse
import timeit

import numpy as np

from tribranch import sign_quantize
from tribranch._backend import BACKENDS


def _best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def bench_gemm(size, repeat):
    rng = np.random.default_rng(size)
    x = sign_quantize(rng.standard_normal((size, size)))
    w = sign_quantize(rng.standard_normal((size, size)))
    xs = np.where(x.to_bits() == 1, 1.0, -1.0)
    ws = np.where(w.to_bits() == 1, 1.0, -1.0)
    rows = {"dense float64 matmul": _best(lambda: xs @ ws.T, repeat)}
    ref = None
    for name, mod in sorted(BACKENDS.items()):
        out = mod.xnor_popcount_gemm(x.words, w.words, x.cols)
        assert ref is None or np.array_equal(out, ref)
        ref = out
        rows[f"xnor-popcount [{name}]"] = _best(lambda mod=mod: mod.xnor_popcount_gemm(x.words, w.words, x.cols), repeat)
    return rows


def bench_scatter(size, repeat):
    rng = np.random.default_rng(size + 1)
    k = 2 * size
    flat = np.sort(rng.choice(size * size, size=k, replace=False))
    rows, cols, values = flat // size, flat % size, rng.standard_normal(k)
    x = rng.standard_normal((size, size))
    return {
        f"coo scatter k={k} [{name}]": _best(lambda mod=mod: mod.coo_scatter(x, rows, cols, values, size), repeat)
        for name, mod in sorted(BACKENDS.items())
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="64,256,1024", help="comma-separated square sizes N=m=n")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    print(f"backends: {sorted(BACKENDS)}")
    for size in (int(s) for s in args.sizes.split(",")):
        print(f"\nN = m = n = {size}")
        for label, secs in {**bench_gemm(size, args.repeat), **bench_scatter(size, args.repeat)}.items():
            print(f"  {label:<34} {secs * 1e3:10.3f} ms")


if __name__ == "__main__":
    main()
