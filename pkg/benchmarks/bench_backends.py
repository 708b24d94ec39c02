"""Time the compiled kernel core against the numpy fallback.

    python3 benchmarks/bench_backends.py [--sizes 500,2000,8000] [--repeat 5] [--threads 1]

Prints one line per (operation, size) with the best wall time of each
backend, the speedup and the largest absolute difference between them.
"""
import argparse
import sys
import timeit

import numpy as np

from covshift import _fallback

try:
    from covshift import _core
except ImportError:
    _core = None


def _cases(n, rng):
    X = np.ascontiguousarray(rng.uniform(-1, 1, (n, 1)))
    Y = np.ascontiguousarray(rng.uniform(-1, 1, (n // 2, 1)))
    w = rng.standard_normal(n // 2)
    return {
        "gram": lambda mod, t: mod.gaussian_gram(X, Y, 0.5, t),
        "gram_sym": lambda mod, t: mod.gaussian_gram_sym(X, 0.5, t),
        "expand": lambda mod, t: mod.gaussian_expand(X, Y, w, 0.5, t),
    }


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", default="500,2000,8000")
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--threads", type=int, default=1)
    args = p.parse_args(argv)
    if _core is None:
        print("compiled core not built; only the fallback is available", file=sys.stderr)
        return 1
    rng = np.random.default_rng(0)
    print(f"{'op':<10}{'n':>7}{'cython [s]':>13}{'python [s]':>13}{'speedup':>9}{'max |diff|':>12}")
    for n in (int(s) for s in args.sizes.split(",")):
        for name, call in _cases(n, rng).items():
            times = {}
            for label, mod in (("cython", _core), ("python", _fallback)):
                call(mod, args.threads)
                times[label] = min(timeit.repeat(lambda: call(mod, args.threads), number=1, repeat=args.repeat))
            diff = float(np.max(np.abs(call(_core, args.threads) - call(_fallback, args.threads))))
            print(f"{name:<10}{n:>7}{times['cython']:>13.5f}{times['python']:>13.5f}"
                  f"{times['python'] / times['cython']:>9.2f}{diff:>12.2e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
