"""Compare the compiled convection kernel with the NumPy fallback.

    python benchmarks/bench_kernels.py --n 68 132 --repeat 5
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from dpm3d import kernels
from dpm3d.mesh import Region, Sphere, build_grid, classify_points


def fields(n: int, seed: int = 0):
    grid = build_grid(0.5, n)
    cls = classify_points(grid, Region((Sphere((0.0, 0.0, 0.0), 0.5),)))
    x, y, z = grid.axes()
    r2 = x ** 2 + y ** 2 + z ** 2
    rng = np.random.default_rng(seed)
    rho = np.where(cls.nplus, 1000 * np.exp(-100 * r2) + rng.random(grid.shape), 0.0)
    c = np.where(cls.nplus, 500 * np.exp(-50 * r2), 0.0)
    return rho, c, cls.mplus, cls.nplus, grid.h


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, nargs="+", default=[36, 68, 132])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    if kernels.compiled_backend is None:
        print("compiled kernel not built; only the NumPy backend is available")
    print(f"{'N':>5} {'numpy [s]':>11} {'compiled [s]':>13} {'speed-up':>9} {'identical':>10}")
    for n in args.n:
        rho, c, mplus, nplus, h = fields(n)
        run_py = lambda: kernels.python_backend.convection(rho, c, mplus, nplus, h, 1.0)  # noqa: E731
        t_py = min(timeit.repeat(run_py, number=1, repeat=args.repeat))
        if kernels.compiled_backend is None:
            print(f"{n:5d} {t_py:11.4f} {'-':>13} {'-':>9} {'-':>10}")
            continue
        run_cy = lambda: kernels.compiled_backend.convection(rho, c, mplus, nplus, h, 1.0)  # noqa: E731
        t_cy = min(timeit.repeat(run_cy, number=1, repeat=args.repeat))
        same = np.array_equal(run_py()[0], run_cy()[0])
        print(f"{n:5d} {t_py:11.4f} {t_cy:13.4f} {t_py / t_cy:9.2f} {str(same):>10}")


if __name__ == "__main__":
    main()
