"""Compare the compiled lattice kernels with the numpy fallback.

    python benchmarks/bench_kernels.py --grid 8 4 --repeat 5

Prints the best wall time per call for each operation and backend, and
checks that both backends return bit-identical results.
"""

import argparse
import timeit

import numpy as np

from qcheat import kernels
from qcheat.lattice import Lattice7


def _ops(lat, u, v):
    return {
        "frame_derivatives": lambda: lat.frame_derivatives(u),
        "divergence": lambda: lat.divergence(v),
        "vertical_derivatives": lambda: lat.vertical_derivatives(u),
        "sublaplacian": lambda: lat.sublaplacian(u),
        "integrate": lambda: lat.integrate(u),
    }


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--grid", nargs=2, type=int, default=(8, 4), metavar=("NX", "NW"))
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)

    backends = ["python"] + (["cython"] if kernels.BACKEND_NAME == "cython" else [])
    lats = {name: Lattice7(*args.grid, backend=name) for name in backends}
    size = lats["python"].size
    rng = np.random.default_rng(0)
    u, v = rng.normal(size=size), rng.normal(size=(4, size))
    print(f"grid N_x={args.grid[0]} N_omega={args.grid[1]} ({size} sites), threads={kernels.thread_count()}")
    if len(backends) == 1:
        print("compiled kernels not built; timing the numpy fallback only")

    times, results = {}, {}
    for name, lat in lats.items():
        for op, fn in _ops(lat, u, v).items():
            times[name, op] = min(timeit.repeat(fn, number=1, repeat=args.repeat))
            results[name, op] = fn()

    print(f"{'operation':<22}" + "".join(f"{b:>12}" for b in backends) + ("     speedup  identical" if len(backends) == 2 else ""))
    for op in _ops(lats["python"], u, v):
        line = f"{op:<22}" + "".join(f"{times[b, op] * 1e3:>10.2f}ms" for b in backends)
        if len(backends) == 2:
            same = np.array_equal(results["python", op], results["cython", op])
            line += f"{times['python', op] / times['cython', op]:>11.1f}x  {same}"
        print(line)


if __name__ == "__main__":
    main()
