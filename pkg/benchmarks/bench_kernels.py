"""Compiled kernels against the pure-Python fallback.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints the best-of-``repeat`` wall time per kernel for both backends, the
speed-up, and the largest relative disagreement between their outputs.
"""

import argparse
import time

import numpy as np

from newton_soliton import _fallback

try:
    from newton_soliton import _kernels
except ImportError:  # extension not built
    _kernels = None


def best_time(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def cases(rng):
    # radial shooting at the step used by the oracle
    yield "radial_shoot ds=1e-3 s_max=16", lambda m: m.radial_shoot(1.4, 1e-3, 16.0)[1]

    pa = rng.normal(size=(2000, 3))
    pb = rng.normal(size=(2000, 3)) + 0.5
    wa, wb = rng.random(2000), rng.random(2000)
    yield "pair_interaction 2000x2000", lambda m: m.pair_interaction(pa, wa, pb, wb)

    shape = (96, 96, 96)
    w0 = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    theta = rng.normal(size=shape)

    def phase(m):
        w = w0.copy()
        m.apply_phase(w, theta, 0.01)
        return w

    yield "apply_phase 96^3", phase


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _kernels is None:
        print("compiled extension not available; build with `pip install -e . --no-build-isolation`")
        return 1
    rng = np.random.default_rng(0)
    print(f"{'kernel':34s} {'cython [s]':>12s} {'python [s]':>12s} {'speed-up':>9s} {'max rel diff':>13s}")
    for name, fn in cases(rng):
        tc, a = best_time(lambda: fn(_kernels), args.repeat)
        tp, b = best_time(lambda: fn(_fallback), args.repeat)
        a, b = np.asarray(a), np.asarray(b)
        n = min(a.shape[0], b.shape[0]) if a.ndim else None
        diff = np.abs(a[:n] - b[:n]).max() / np.abs(b[:n]).max() if n is not None else abs(a - b) / abs(b)
        print(f"{name:34s} {tc:12.4e} {tp:12.4e} {tp / tc:9.1f} {float(diff):13.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
