"""Time the numba kernels against their numpy fallbacks.

Usage: python3 benchmarks/bench_kernels.py [--n 400] [--repeat 5]

Each kernel is called once per backend before timing so JIT compilation is
excluded; results are also checked for agreement.
"""
import argparse
import time

import numpy as np

from nhep import _kernels as K
from nhep.ep import model_coeffs


def best_of(fn, repeat):
    ts = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        ts.append(time.perf_counter() - t0)
    return min(ts)


def cases(n):
    gs = np.linspace(-2, 2, n)
    hs = np.linspace(-2, 2, n)
    G, Hh = np.meshgrid(gs, hs, indexing="ij")
    f1, f0 = model_coeffs(G, Hh, 0.2, 0.05)
    E = K.cardano_batch(f1, f0, backend="numpy")
    h = np.linspace(-1.9, 1.9, 4 * n)
    g = np.sqrt(1 + h * h)
    return {
        "cardano_batch": lambda be: K.cardano_batch(f1, f0, backend=be),
        "sort_sheets": lambda be: K.sort_sheets(E, backend=be)[0],
        "bisect_re_r1": lambda be: K.bisect_re_r1(g - 0.01, h, g + 0.01, h, 0.0, 0.0, backend=be)[0],
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=400, help="grid side")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not K.HAVE_NUMBA:
        print("numba not installed; only the numpy backend is available")
        return
    print(f"grid {args.n}x{args.n}, best of {args.repeat}")
    print(f"{'kernel':<16}{'numpy [s]':>12}{'numba [s]':>12}{'speedup':>10}{'max diff':>12}")
    for name, fn in cases(args.n).items():
        a, b = fn("numpy"), fn("numba")  # warm-up and parity
        diff = float(np.abs(np.asarray(a) - np.asarray(b)).max())
        t_np = best_of(lambda: fn("numpy"), args.repeat)
        t_nb = best_of(lambda: fn("numba"), args.repeat)
        print(f"{name:<16}{t_np:>12.4f}{t_nb:>12.4f}{t_np / t_nb:>10.1f}{diff:>12.1e}")


if __name__ == "__main__":
    main()
