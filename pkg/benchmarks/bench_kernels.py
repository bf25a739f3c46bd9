"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--paths 20000] [--steps 500]

Prints one line per (kernel, backend) with the best wall time and the speedup
of each backend over the Python one.
"""
import argparse
import math
import timeit

import numpy as np

from insidertc.fbode import TimeGrid, gamma_parts, solve_equilibrium
from insidertc.kernels import available_backends
from insidertc.params import MarketParams

PARAMS = MarketParams(A=1.0, c=0.2, sigma=1.0, Sigma0v=0.5, T=1.0)


def cases(paths, steps):
    grid = TimeGrid(PARAMS.T, steps)
    prof = solve_equilibrium(PARAMS, grid)
    beta, lam = np.ascontiguousarray(prof.beta), np.ascontiguousarray(prof.lam)
    gamma, gm1 = gamma_parts(PARAMS)
    ktil = prof.shooting.k_scaled
    u = (np.arange(1, 1_000_001) - 0.5) / 1_000_000

    def rk4(impl):
        return lambda: impl.rk4_x1(PARAMS.Sigma0v, PARAMS.A, PARAMS.sigma, gamma, gm1, ktil,
                                   grid.dt, 20 * steps)

    def ppf(impl):
        return lambda: impl.norm_ppf(u)

    def sim(impl):
        def go():
            m = beta.size
            impl.simulate_chunk(beta, lam, PARAMS.v0, PARAMS.Sigma0v, PARAMS.sigma, PARAMS.c,
                                PARAMS.A, grid.dt, 1, 0, paths, math.nan, np.zeros((2, m)),
                                np.zeros((4, m)), np.zeros(2), np.zeros(2), None)
        return go

    return {f"rk4_x1 ({20 * steps} steps)": rk4, "norm_ppf (1e6 draws)": ppf,
            f"simulate_chunk ({paths} x {steps})": sim}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--paths", type=int, default=20_000)
    ap.add_argument("--steps", type=int, default=500)
    args = ap.parse_args()
    backends = available_backends()
    for name, make in cases(args.paths, args.steps).items():
        times = {b: min(timeit.repeat(make(impl), number=1, repeat=args.repeat))
                 for b, impl in backends.items()}
        for b, t in times.items():
            print(f"{name:32s} {b:7s} {t * 1e3:10.2f} ms  x{times['python'] / t:6.1f}")


if __name__ == "__main__":
    main()
