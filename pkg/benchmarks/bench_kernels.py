#!/usr/bin/env python3
"""Time the compiled kernels against their pure-numpy fallbacks.

The fallback path is the same source uncompiled, so this measures the jit
speedup on the two hot loops: the penalized-least-squares deviance and the
full simplex fit. Run directly:

    python benchmarks/bench_kernels.py

Set LMEBN_NO_NUMBA=1 to confirm the fallback path alone also works.
"""

import time

import numpy as np

from lmebn import kernels
from lmebn.lme import LmeProblem, _identity_theta, _suff_stats


def make_problem(n_groups=10, per_group=20, q=3, seed=0):
    rng = np.random.default_rng(seed)
    n = n_groups * per_group
    groups = np.repeat(np.arange(n_groups), per_group)
    x = np.column_stack([np.ones(n), rng.normal(size=(n, q - 1))])
    slopes = rng.normal(2.0, 1.0, size=(n_groups, q))
    y = np.einsum("ij,ij->i", x, slopes[groups]) + 0.5 * rng.normal(size=n)
    return LmeProblem(y, x, groups, n_groups)


def bench(fn, args, repeat=200):
    fn(*args)  # warm up / compile
    start = time.perf_counter()
    for _ in range(repeat):
        fn(*args)
    return (time.perf_counter() - start) / repeat


def main():
    print(f"numba enabled: {kernels.NUMBA_ENABLED}")
    prob = make_problem()
    cmat, dvec, yty = _suff_stats(prob)
    theta = _identity_theta(prob.q)
    dev_args = (cmat, dvec, yty, prob.n, theta, 1e-12)
    fit_args = (cmat, dvec, yty, prob.n, theta, 200 * prob.q * prob.q, 1e-8, 1e-12)

    rows = []
    for name, compiled in (
        ("pls_deviance", kernels.pls_deviance),
        ("nm_minimize_deviance", kernels.nm_minimize_deviance),
    ):
        args = dev_args if name == "pls_deviance" else fit_args
        repeat = 2000 if name == "pls_deviance" else 50
        t_compiled = bench(compiled, args, repeat)
        if kernels.NUMBA_ENABLED:
            t_plain = bench(compiled.py_func, args, max(5, repeat // 40))
        else:
            t_plain = t_compiled
        rows.append((name, t_compiled, t_plain))

    print(f"{'kernel':<24}{'compiled':>12}{'numpy':>12}{'speedup':>10}")
    for name, tc, tp in rows:
        print(f"{name:<24}{tc * 1e6:>10.1f}us{tp * 1e6:>10.1f}us{tp / tc:>9.1f}x")


if __name__ == "__main__":
    main()
