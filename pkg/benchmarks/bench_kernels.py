"""Compare the compiled and the numpy implementation of the clipped worst-case kernel.

Usage: python benchmarks/bench_kernels.py [--N 1000] [--repeat 200]

Both backends are imported directly, so the comparison does not depend on
which one ``wdrro.kernels`` selected at import time.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from wdrro import _kernels_py

try:
    from wdrro import _kernels as _kernels_c
except ImportError:  # extension not built
    _kernels_c = None


def _cases(N: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    xs = np.sort(np.maximum(rng.normal(100.0, 10.0, N), 0.0))
    out = []
    for p in (1.0, 2.0, 3.0):
        for delta in (0.5, 5.0):
            lo = float(rng.uniform(90, 110))
            out.append((xs, lo, lo + float(rng.uniform(1, 30)), delta, p))
    return out


def _time(fn, cases, repeat: int) -> float:
    start = time.perf_counter()
    for _ in range(repeat):
        for args in cases:
            fn(*args)
    return (time.perf_counter() - start) / (repeat * len(cases))


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--N", type=int, default=1000)
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()
    cases = _cases(args.N)

    worst = 0.0
    if _kernels_c is not None:
        for c in cases:
            a = _kernels_py.clip_worst_case(*c)[0]
            b = _kernels_c.clip_worst_case(*c)[0]
            worst = max(worst, abs(a - b))

    t_py = _time(_kernels_py.clip_worst_case, cases, max(args.repeat // 10, 1))
    print(f"N={args.N}  cases={len(cases)}")
    print(f"numpy   : {t_py * 1e3:8.3f} ms/call")
    if _kernels_c is None:
        print("cython  : not built")
        return
    t_c = _time(_kernels_c.clip_worst_case, cases, args.repeat)
    print(f"cython  : {t_c * 1e3:8.3f} ms/call")
    print(f"speedup : {t_py / t_c:8.1f}x")
    print(f"max |value difference| between backends: {worst:.2e}")


if __name__ == "__main__":
    main()
