"""Compare the numba and numpy variants of every hot kernel.

    python benchmarks/bench_kernels.py [--n 12] [--chains 20000] [--repeat 5]

Each kernel is run on identical inputs in both variants; outputs are checked
for agreement before timings are reported.  The numba column excludes the
first (compiling) call.
"""
import argparse
import sys
import time

import numpy as np

from rydgen import kernels
from rydgen._accel import HAVE_NUMBA


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    a, b = np.asarray(a), np.asarray(b)
    if a.dtype.kind in "fc":
        return np.allclose(a, b, rtol=1e-12, atol=1e-12)
    return np.array_equal(a, b)


def cases(n, chains, depth, seed):
    rng = np.random.default_rng(seed)
    dim = 1 << n
    linear = rng.normal(size=n)
    pair = np.abs(rng.normal(size=(n, n)))
    pair = pair + pair.T
    np.fill_diagonal(pair, 0.0)
    diag = kernels.diag_energies_numpy(n, linear, pair)
    up = 0.5 * np.exp(-0.3j)
    block = (rng.normal(size=(dim, 4)) + 1j * rng.normal(size=(dim, 4)))
    prev = (rng.normal(size=(dim, 4)) + 1j * rng.normal(size=(dim, 4)))
    k = rng.random((dim, dim))
    cdf = np.ascontiguousarray(np.cumsum(k / k.sum(axis=0), axis=0).T)
    z0 = rng.integers(0, dim, size=chains).astype(np.int64)
    u_prop, bits, u_acc = rng.random((chains, depth)), rng.integers(0, dim, (chains, depth)).astype(np.int64), rng.random((chains, depth))
    steps = chains * depth
    t_prop, t_bits, t_acc = rng.random(steps), rng.integers(0, dim, steps).astype(np.int64), rng.random(steps)
    return {
        "diag_energies": ((n, linear, pair), {}),
        "apply_h": ((diag, up, n, block), {}),
        "cheb_step": ((diag, up, n, block, prev, 10.0, 0.5), {}),
        "mh_trajectory[bitflip]": ((diag, kernels.BITFLIP, cdf, n, 0, 1.0, t_prop, t_bits, t_acc), {"name": "mh_trajectory"}),
        "mh_final[bitflip]": ((diag, kernels.BITFLIP, cdf, n, z0, 1.0, u_prop, bits, u_acc), {"name": "mh_final"}),
        "mh_final[quantum]": ((diag, kernels.QUANTUM, cdf, n, z0, 1.0, u_prop, bits, u_acc), {"name": "mh_final"}),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=12)
    ap.add_argument("--chains", type=int, default=20000)
    ap.add_argument("--depth", type=int, default=3)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if not HAVE_NUMBA:
        print("numba is unavailable (or disabled); only the numpy column is meaningful", file=sys.stderr)

    print(f"n={args.n} chains={args.chains} depth={args.depth} repeat={args.repeat}")
    print(f"{'kernel':24s} {'numpy [ms]':>12s} {'numba [ms]':>12s} {'speedup':>8s}  agree")
    mismatches = 0
    for label, (call, opts) in cases(args.n, args.chains, args.depth, args.seed).items():
        name = opts.get("name", label)
        py = getattr(kernels, f"{name}_numpy")
        nb = getattr(kernels, f"{name}_numba")
        t_py, out_py = best_of(lambda: py(*call), args.repeat)
        if nb is None:
            print(f"{label:24s} {1e3 * t_py:12.3f} {'-':>12s} {'-':>8s}  -")
            continue
        nb(*call)  # compile
        t_nb, out_nb = best_of(lambda: nb(*call), args.repeat)
        ok = same(out_py, out_nb)
        mismatches += not ok
        print(f"{label:24s} {1e3 * t_py:12.3f} {1e3 * t_nb:12.3f} {t_py / t_nb:8.1f}  {'yes' if ok else 'NO'}")
    return 1 if mismatches else 0


if __name__ == "__main__":
    sys.exit(main())
