"""Compare the compiled kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--size BYTES] [--repeat N]

Prints one line per kernel with the best time of each backend and the speedup.
"""
import argparse
import timeit

import numpy as np

from pdkit import _kernels_py

try:
    from pdkit import _kernels as compiled
except ImportError:
    compiled = None


def cases(size: int, rng: np.random.Generator):
    buf = rng.integers(0, 256, size, dtype=np.uint8).tobytes()
    symbols = rng.integers(0, 4, size, dtype=np.uint8)
    gen1 = _kernels_py.wom_encode(symbols, 1)
    new = rng.integers(0, 4, size, dtype=np.uint8)
    gen2 = _kernels_py.wom_convert(gen1, new)
    cells = rng.integers(0, 2, size, dtype=np.uint8)
    return {
        "popcount": lambda k: k.popcount(buf),
        "byte_histogram": lambda k: k.byte_histogram(buf),
        "pattern_counts(m=3)": lambda k: k.pattern_counts(buf, 3),
        "wom_encode": lambda k: k.wom_encode(symbols, 1),
        "wom_decode(gen2)": lambda k: k.wom_decode(gen2, 2),
        "wom_convert": lambda k: k.wom_convert(gen1, new),
        "first_clear_violation": lambda k: k.first_clear_violation(cells, cells),
    }


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=1 << 16)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    if compiled is None:
        print("compiled extension not built; timing the fallback only")
    print(f"{'kernel':24s} {'python ms':>10s} {'compiled ms':>12s} {'speedup':>8s}")
    for name, fn in cases(args.size, rng).items():
        py = min(timeit.repeat(lambda: fn(_kernels_py), number=3, repeat=args.repeat)) / 3 * 1e3
        if compiled is None:
            print(f"{name:24s} {py:10.3f} {'-':>12s} {'-':>8s}")
            continue
        if not np.array_equal(np.asarray(fn(_kernels_py)), np.asarray(fn(compiled))):
            raise SystemExit(f"{name}: backends disagree")
        c = min(timeit.repeat(lambda: fn(compiled), number=3, repeat=args.repeat)) / 3 * 1e3
        print(f"{name:24s} {py:10.3f} {c:12.3f} {py / c:8.1f}x")


if __name__ == "__main__":
    main()
