"""Time the O(n^2) oracle kernels on the numba and numpy backends.

    python benchmarks/bench_kernels.py [--sizes 1024 4096] [--repeat 3]

The first numba call compiles; that time is reported separately.
"""

import argparse
import os
import time

import numpy as np

from evofrac import _accel
from evofrac.fraccalc import rl_integral_weights
from evofrac.solver import cq_weights


def _timed(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def _with_backend(flag, fn):
    old = os.environ.get("EVOFRAC_NUMBA")
    os.environ["EVOFRAC_NUMBA"] = flag
    try:
        return fn()
    finally:
        if old is None:
            del os.environ["EVOFRAC_NUMBA"]
        else:
            os.environ["EVOFRAC_NUMBA"] = old


def cases(n, d, rng):
    u = rng.standard_normal((n, d)) + 1j * rng.standard_normal((n, d))
    w = rl_integral_weights(0.5, n, 1e-3)
    conv = lambda: _accel.causal_convolve(w, u)

    step = np.eye(d) * 3.0 + 0.1 * rng.standard_normal((d, d))
    step_inv = np.linalg.inv(step)
    prev = -np.eye(d)
    wq = np.stack([cq_weights(0.5, n), cq_weights(0.8, n)])
    mats = np.stack([np.eye(d), 0.5 * np.eye(d)])
    march = lambda: _accel.cq_march(step_inv, prev, wq, mats, u)
    return {"causal_convolve": conv, "cq_march": march}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[1024, 4096])
    ap.add_argument("--dim", type=int, default=2)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    rng = np.random.default_rng(0)

    if not _accel.numba_available():
        print("numba not installed; only the numpy backend is timed")
    print(f"{'kernel':<16} {'n':>6} {'numpy [s]':>10} {'numba [s]':>10} {'speedup':>8} {'max diff':>10}")
    for n in args.sizes:
        for name, fn in cases(n, args.dim, rng).items():
            t_np, ref = _with_backend("0", lambda: _timed(fn, args.repeat))
            if _accel.numba_available():
                t0 = time.perf_counter()
                _with_backend("1", fn)
                compile_s = time.perf_counter() - t0
                t_nb, got = _with_backend("1", lambda: _timed(fn, args.repeat))
                diff = np.abs(got - ref).max() / max(np.abs(ref).max(), 1e-300)
                print(f"{name:<16} {n:>6} {t_np:>10.4f} {t_nb:>10.4f} {t_np / t_nb:>8.1f} {diff:>10.1e}"
                      f"   (first call {compile_s:.2f} s)")
            else:
                print(f"{name:<16} {n:>6} {t_np:>10.4f} {'-':>10} {'-':>8} {'-':>10}")


if __name__ == "__main__":
    main()
