"""Time the evidence kernels: numba loops against the pure-numpy versions.

    python3 benchmarks/bench_kernels.py [--n 64 256 1024] [--repeat 5]
"""

import argparse
import time

import numpy as np

from bayesinv import kernels


def inputs(n, m=20, k=8, seed=0):
    rng = np.random.default_rng(seed)
    A = rng.uniform(-1, 1, (m, k))
    y = rng.standard_normal(m)
    U, sv, _ = np.linalg.svd(A, full_matrices=False)
    b = U.T @ y
    rperp2 = max(float(y @ y - b @ b), 0.0)
    phis = rng.gamma(2.0, 1.0, n)
    psis = rng.gamma(2.0, 1.0, n)
    coefs = (-0.5 * m * np.log(2 * np.pi), m / 2, k / 2, 0.0, 0.0)
    return sv ** 2, b ** 2, rperp2, k, phis, psis, coefs


def best_time(fn, args, repeat):
    fn(*args)  # warm-up, includes JIT compilation
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, nargs="+", default=[64, 256, 1024, 4096])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)

    if not kernels.HAS_NUMBA:
        print("numba unavailable (or BAYESINV_NO_NUMBA set): only the numpy path is timed")
    rows = []
    for n in args.n:
        a = inputs(n)
        pairs = [("criterion_grid", kernels.criterion_grid_numpy, kernels.criterion_grid_numba),
                 ("grid_log_mean_exp", kernels.grid_log_mean_exp_numpy,
                  kernels.grid_log_mean_exp_numba)]
        for name, np_fn, nb_fn in pairs:
            t_np = best_time(np_fn, a, args.repeat)
            t_nb = best_time(nb_fn, a, args.repeat) if nb_fn is not None else float("nan")
            if nb_fn is not None:
                ref, got = np_fn(*a), nb_fn(*a)
                assert np.allclose(ref, got, rtol=1e-10), f"{name} paths disagree at n={n}"
            rows.append((name, n, t_np, t_nb))

    print(f"{'kernel':<18} {'n':>6} {'pairs':>10} {'numpy [ms]':>12} {'numba [ms]':>12} {'speedup':>8}")
    for name, n, t_np, t_nb in rows:
        print(f"{name:<18} {n:>6} {n * n:>10} {1e3 * t_np:>12.3f} {1e3 * t_nb:>12.3f} "
              f"{t_np / t_nb:>8.2f}")


if __name__ == "__main__":
    main()
