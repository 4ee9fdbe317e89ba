"""Time the compiled right-hand side against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from hypext import _kernels_py

try:
    from hypext import _kernels
except ImportError:
    _kernels = None


def bench(mod, u, amats, inv_h, order, repeat):
    out = np.empty_like(u)
    zeros = np.zeros(u.shape[0])
    call = lambda: mod.rhs(u, amats, inv_h, order, zeros, zeros, out)
    call()
    return min(timeit.repeat(call, number=5, repeat=repeat)) / 5


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    rng = np.random.default_rng(0)
    cases = [(8, 1, 128), (8, 1, 1024), (8, 2, 64), (8, 2, 128), (8, 2, 256), (4, 2, 256)]
    print(f"{'vars':>4} {'dims':>4} {'points':>6} {'order':>5} {'python ms':>10} "
          f"{'compiled ms':>11} {'speedup':>7}")
    for nv, dims, n in cases:
        shape = (nv, n, n if dims == 2 else 1)
        u = rng.standard_normal(shape)
        amats = np.ascontiguousarray(rng.standard_normal((dims, nv, nv)))
        inv_h = np.full(dims, n / (2 * np.pi))
        for order in (2, 4):
            t_py = bench(_kernels_py, u, amats, inv_h, order, args.repeat)
            if _kernels is None:
                print(f"{nv:4d} {dims:4d} {n:6d} {order:5d} {1e3 * t_py:10.3f} {'n/a':>11} {'':>7}")
                continue
            t_c = bench(_kernels, u, amats, inv_h, order, args.repeat)
            print(f"{nv:4d} {dims:4d} {n:6d} {order:5d} {1e3 * t_py:10.3f} {1e3 * t_c:11.3f} "
                  f"{t_py / t_c:7.2f}")


if __name__ == "__main__":
    main()
