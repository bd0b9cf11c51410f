"""Timing comparison of the jitted kernels against the pure-numpy fallback.

Run:  python benchmarks/bench_kernels.py
The same comparison with the jit disabled entirely:
      S2M_NO_NUMBA=1 python benchmarks/bench_kernels.py  (fallback only)
"""

import math
import time

import numpy as np

from s2m.kernels import (
    NUMBA_AVAILABLE,
    certificate_sweep,
    phase_sweep,
    propagate_value,
    rk4_trace,
    rk4_value,
)
from s2m.sl_engine import (
    DirichletProblem,
    TrigSumPotential,
    clear_spectrum_cache,
    dirichlet_eigenvalues,
)

PROBLEM = DirichletProblem(0.0, 1.0, TrigSumPotential(((5.0, 2.0 * math.pi, 0.0),)))
N = 4096
H = PROBLEM.length / N


def timeit(fn, repeat=5):
    best = math.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_pair(name, fn):
    if NUMBA_AVAILABLE:
        fn(False)  # warm-up: trigger compilation outside the timed region
        jit = timeit(lambda: fn(False))
    else:
        jit = math.nan
    plain = timeit(lambda: fn(True))
    ratio = plain / jit if NUMBA_AVAILABLE else math.nan
    print(f"{name:<22} numba {jit * 1e3:9.3f} ms   numpy {plain * 1e3:9.3f} ms   speedup {ratio:6.1f}x")


def main():
    print(f"numba active: {NUMBA_AVAILABLE}")
    v2 = PROBLEM.staggered_samples(N)
    vavg = PROBLEM.cell_averages(N)
    zs = np.linspace(-10.0, 4.0e6, 64)
    psi = np.empty(N + 1)
    dpsi = np.empty(N + 1)
    v3 = np.zeros(3)

    bench_pair("rk4_trace", lambda f: rk4_trace(v2, H, 37.0, 0.0, 1.0, psi, dpsi, force_numpy=f))
    bench_pair("rk4_value", lambda f: rk4_value(v2, H, 37.0, N, v3, 0.0, force_numpy=f))
    bench_pair("phase_sweep", lambda f: phase_sweep(vavg, H, zs, force_numpy=f))
    bench_pair("certificate_sweep", lambda f: certificate_sweep(vavg, H, zs, force_numpy=f))
    bench_pair("propagate_value", lambda f: propagate_value(vavg, H, -880.0, N, 0.0, 0.0, force_numpy=f))

    def solve(force):
        clear_spectrum_cache()
        dirichlet_eigenvalues(PROBLEM, 60, N, force_numpy=force)

    bench_pair("eigenvalues K=60", solve)


if __name__ == "__main__":
    main()
