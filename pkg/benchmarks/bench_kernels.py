"""Compare the compiled kernels with the numpy fallback.

Usage::

    python benchmarks/bench_kernels.py [--repeat 5]

Each kernel runs on the same inputs under both backends; the script checks
that the outputs agree and prints the best wall time of each.
"""

from __future__ import annotations

import argparse
import time

import numpy as np
from scipy.ndimage import gaussian_filter

from dyncog import _pykernels

try:
    from dyncog import _ckernels
except ImportError:
    _ckernels = None


def best_time(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def block_match_case(rng: np.random.Generator, h: int = 240, w: int = 320):
    tex = gaussian_filter(rng.normal(size=(h + 8, w + 8)), 2.0)
    tex = np.clip(128 + 400 * tex, 0, 255).astype(np.uint8)
    return tex[4:4 + h, 4:4 + w], tex[1:1 + h, 6:6 + w]


def best_split_case(rng: np.random.Generator, n: int = 20_000):
    x = np.sort(rng.normal(size=n))
    y = np.where(x > 0.3, 4.0, 1.0) + rng.normal(0, 0.5, n)
    w = rng.integers(0, 3, n).astype(float)
    return x, y, w


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5, help="timed runs per kernel; the best is kept")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    rng = np.random.default_rng(args.seed)

    cases = {
        "block_match (320x240, 16 px blocks, radius 8)": ("block_match", block_match_case(rng)),
        "best_split (20k sorted rows)": ("best_split", best_split_case(rng)),
    }
    if _ckernels is None:
        print("compiled kernels not built; timing the numpy fallback only")
    print(f"{'kernel':<48}{'numpy (ms)':>12}{'cython (ms)':>13}{'speed-up':>10}")
    for label, (name, inputs) in cases.items():
        py_fn = getattr(_pykernels, name)
        t_py = best_time(lambda: py_fn(*inputs), args.repeat)
        if _ckernels is None:
            print(f"{label:<48}{1e3 * t_py:>12.2f}{'-':>13}{'-':>10}")
            continue
        c_fn = getattr(_ckernels, name)
        a, b = py_fn(*inputs), c_fn(*inputs)
        same = np.array_equal(a, b) if isinstance(a, np.ndarray) else a == b
        if not same:
            raise SystemExit(f"{name}: backends disagree ({a!r} vs {b!r})")
        t_c = best_time(lambda: c_fn(*inputs), args.repeat)
        print(f"{label:<48}{1e3 * t_py:>12.2f}{1e3 * t_c:>13.2f}{t_py / t_c:>9.1f}x")


if __name__ == "__main__":
    main()
