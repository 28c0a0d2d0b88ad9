"""Compare the numba and numpy kernel paths.

Kernel timings call the ``*_nb`` and ``*_np`` variants directly in one
process. The end-to-end timing runs a short default scenario twice in
subprocesses, once with ``MORPHOGEN_DISABLE_NUMBA=1``.

    python benchmarks/bench_kernels.py [--sizes 1000 100000] [--repeat 20]
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from morphogen import _accel, kernels

END_TO_END = """
import time, numpy as np
from morphogen import ModelParams, build_grid, iter_integrate, picard_steady
from morphogen.lyapunov import lyapunov_series
g = build_grid(1, 1.0, 256, {"left": "neumann", "right": "dirichlet"})
p = ModelParams(1.0, 1.0, 1.0, 1.0)
st = picard_steady(g, 1.0, 1.0, 1.0, 1.0)
def run(t_end):
    z = np.zeros(g.ndof)
    snaps = iter_integrate(g, p, z, z, t_end, 1e-3, every_step=True)
    lyapunov_series(g, st, p, snaps, 1.05)
run(0.01)
t0 = time.perf_counter()
run(5.0)
print(time.perf_counter() - t0)
"""


def make_args(name, n, rng):
    u = rng.uniform(0, 2, n)
    v = rng.uniform(0, 0.9, n)
    return {
        "receptor_update": (v, u, 2.0, 1e-3),
        "morphogen_reaction": (u, v, 1.0, 1e-3),
        "bregman": (v, rng.uniform(0, 0.9, n)),
        "dissipation_density": (u, v, rng.uniform(0, 2, n), rng.uniform(0, 0.9, n), 1.0, 1.0),
    }[name]


def bench_kernels(sizes, repeat):
    rng = np.random.default_rng(0)
    names = ("receptor_update", "morphogen_reaction", "bregman", "dissipation_density")
    print(f"{'kernel':<22}{'n':>9}{'numpy [us]':>13}{'numba [us]':>13}{'speedup':>9}")
    for name in names:
        for n in sizes:
            args = make_args(name, n, rng)
            f_np = getattr(kernels, name + "_np")
            f_nb = getattr(kernels, name + "_nb")
            f_nb(*args)             # compile outside the timing
            t_np = min(timeit.repeat(lambda: f_np(*args), number=10, repeat=repeat)) / 10
            t_nb = min(timeit.repeat(lambda: f_nb(*args), number=10, repeat=repeat)) / 10
            print(f"{name:<22}{n:>9}{t_np * 1e6:>13.1f}{t_nb * 1e6:>13.1f}{t_np / t_nb:>9.2f}")


def bench_end_to_end():
    times = {}
    for label, flag in (("numba", "0"), ("numpy", "1")):
        env = dict(os.environ, MORPHOGEN_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", END_TO_END], env=env, check=True,
                             capture_output=True, text=True)
        times[label] = float(out.stdout.strip())
    print(f"\nend to end, N=256, 5000 steps with diagnostics: "
          f"numba {times['numba']:.2f}s, numpy {times['numpy']:.2f}s, "
          f"speedup {times['numpy'] / times['numba']:.2f}")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+", default=[256, 16384, 1000000])
    parser.add_argument("--repeat", type=int, default=20)
    parser.add_argument("--skip-end-to-end", action="store_true")
    args = parser.parse_args()
    if not _accel.HAVE_NUMBA:
        sys.exit("numba is not installed; install the 'accel' extra to benchmark it")
    bench_kernels(args.sizes, args.repeat)
    if not args.skip_end_to_end:
        bench_end_to_end()


if __name__ == "__main__":
    main()
