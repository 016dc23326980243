"""Benchmark the numba kernels against their pure-numpy fallbacks.

Run:  python benchmarks/bench_kernels.py [--repeat 30]

The active backend follows DIVEKIT_NUMBA; both implementations are timed
here regardless, after a warm-up call so numba compilation is excluded.
Also times an end-to-end LP resolve loop, where the kernels sit on the hot
path of the simplex.
"""

import argparse
import time

import numpy as np

from divekit import kernels
from divekit.instances import GeneratorConfig, generate, to_standard_form
from divekit.simplex import solve_lp


def timeit(fn, repeat):
    fn()  # warm-up (and numba compile)
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - t0) / repeat


def bench_kernels(repeat):
    rng = np.random.default_rng(0)
    m, n, e, h = 400, 800, 6000, 64
    rows = rng.integers(0, m, size=e)
    cols = rng.integers(0, n, size=e)
    vals = rng.normal(size=e)
    x = rng.normal(size=n)
    rate = rng.normal(size=m)
    xb = rng.uniform(0, 1, size=m)
    lob = np.zeros(m)
    upb = np.ones(m)
    vidx = np.arange(m, dtype=np.int64)
    k_eta = 40
    eta_rows = rng.integers(0, m, size=k_eta)
    etas = rng.normal(size=(k_eta, m)) + np.sign(rng.normal(size=(k_eta, m))) * 0.5
    for i, r in enumerate(eta_rows):
        etas[i, r] = 2.0 + rng.random()
    z = rng.normal(size=m)
    hmat = rng.normal(size=(n, h))
    out = np.zeros((m, h))

    cases = {
        "row_activities": lambda f: f(rows, cols, vals, x, m),
        "ratio_test": lambda f: f(rate, xb, lob, upb, vidx, 1e-9),
        "apply_etas": lambda f: f(z.copy(), eta_rows, etas, k_eta),
        "apply_etas_t": lambda f: f(z.copy(), eta_rows, etas, k_eta),
        "scatter_messages": lambda f: f(rows, cols, vals, hmat, out * 0.0),
    }
    print(f"{'kernel':<18s} {'numpy':>12s} {'numba':>12s} {'speedup':>9s}")
    for name, call in cases.items():
        t_np = timeit(lambda: call(kernels.NUMPY_IMPLS[name]), repeat)
        if kernels.USING_NUMBA:
            t_nb = timeit(lambda: call(kernels.ACTIVE_IMPLS[name]), repeat)
            print(f"{name:<18s} {t_np * 1e6:>10.1f}us {t_nb * 1e6:>10.1f}us "
                  f"{t_np / t_nb:>8.1f}x")
        else:
            print(f"{name:<18s} {t_np * 1e6:>10.1f}us {'-':>12s} {'-':>9s}")


def bench_lp(repeat):
    inst = generate(GeneratorConfig("set-cover", seed=7))
    lp = to_standard_form(inst)
    root = solve_lp(lp)

    def resolve_loop():
        lo = lp.lb.copy()
        hi = lp.ub.copy()
        basis = root.basis
        for j in range(0, 40, 2):
            hi[j] = 0.0
            sol = solve_lp(lp, warm=basis, lower=lo, upper=hi)
            if sol.status != "optimal":
                break
            basis = sol.basis

    t = timeit(resolve_loop, max(repeat // 10, 3))
    print(f"\nset-cover 100x200: cold root {root.iterations} iters; "
          f"20 warm resolves in {t * 1000:.1f} ms "
          f"(backend: {kernels.backend()})")


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=30)
    args = ap.parse_args()
    print(f"active backend: {kernels.backend()}")
    bench_kernels(args.repeat)
    bench_lp(args.repeat)
