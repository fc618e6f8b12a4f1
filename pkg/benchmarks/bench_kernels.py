"""Time the compiled kernels against the pure-Python fallback.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints one line per kernel with the best-of-``repeat`` time for each
backend and the speedup. Both backends get identical inputs; the script
also checks that their outputs agree.
"""
import argparse
import time

import numpy as np

from msmetr.kernels import available_backends


def _best(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def cases():
    r = np.random.default_rng(0)
    T, K = 2000, 3
    logE = r.normal(size=(T, K)) * 2
    P = r.dirichlet(np.ones(K) + 10 * np.eye(K)[0], size=K)
    init = np.full(K, 1 / K)
    u = r.random(T)
    p = np.concatenate([np.full(500, -800.0), r.uniform(-3, 3, 500)])
    a = r.uniform(0.1, 5, 1000)
    b = r.uniform(0.1, 50, 1000)
    table = r.gamma(2.0, size=(3, 3, 3))
    table /= table.sum()
    U = r.random((20_000, 4))
    X = r.standard_normal((100, 144))
    y = X[:, :5].sum(axis=1) + r.standard_normal(100)
    cs = (X ** 2).sum(axis=0)
    lam = 0.05 * np.abs(X.T @ y).max()

    def filt(mod):
        return mod.forward_filter(logE, P, init)[0]

    def smooth(mod):
        f, pr, _ = mod.forward_filter(logE, P, init)
        return mod.backward_smooth(f, pr, P)

    def sample(mod):
        f, _, _ = mod.forward_filter(logE, P, init)
        return mod.backward_sample(f, P, u)

    def gig(mod):
        return mod.gig(p, a, b, np.random.default_rng(1))

    def rpsg(mod):
        counts = np.zeros(table.shape, dtype=np.int64)
        mod.discrete_rpsg(table, np.zeros(3, dtype=np.int64), 2, U, counts)
        return counts

    def lasso(mod):
        return mod.lasso_cd(X, y, lam, np.zeros(X.shape[1]), cs, 1e-8, 10_000)[0]

    return {
        "forward_filter (T=2000, K=3)": filt,
        "backward_smooth (T=2000, K=3)": smooth,
        "backward_sample (T=2000, K=3)": sample,
        "gig (1000 draws, half at p=-800)": gig,
        "discrete_rpsg (20000 sweeps)": rpsg,
        "lasso_cd (100 x 144)": lasso,
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    backends = available_backends()
    if "cython" not in backends:
        print("compiled extension not built; only the pure-Python backend is available")
    print(f"{'kernel':40s} {'python':>10s} {'cython':>10s} {'speedup':>8s}  agree")
    for name, fn in cases().items():
        tp, op = _best(lambda: fn(backends["python"]), args.repeat)
        if "cython" in backends:
            tc, oc = _best(lambda: fn(backends["cython"]), args.repeat)
            agree = np.allclose(op, oc, rtol=1e-9, atol=1e-9)
            print(f"{name:40s} {tp * 1e3:9.2f}ms {tc * 1e3:9.2f}ms {tp / tc:7.1f}x  {agree}")
        else:
            print(f"{name:40s} {tp * 1e3:9.2f}ms {'-':>10s} {'-':>8s}  -")


if __name__ == "__main__":
    main()
