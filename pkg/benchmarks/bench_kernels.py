"""Compiled versus pure-Python kernels.

Usage::

    python benchmarks/bench_kernels.py [--repeat 5] [--sizes 1000 10000 50000]

Prints median wall time per call for each backend and the speed-up, and
checks that both backends agree on every output.
"""

import argparse
import statistics
import timeit

import numpy as np

from rhl import _core_py

try:
    from rhl import _core
except ImportError:
    _core = None


def make_rows(n, p, seed=0):
    """Random counting-process rows: units of ~10 rows tiling [0, 1]."""
    rng = np.random.default_rng(seed)
    n_units = max(1, n // 10)
    start, stop, status = [], [], []
    for _ in range(n_units):
        cuts = np.sort(rng.uniform(size=9))
        b = np.concatenate([[0.0], cuts, [1.0]])
        start += list(b[:-1])
        stop += list(b[1:])
        status += [1] * 9 + [0]
    start, stop = np.array(start), np.array(stop)
    X = rng.standard_normal((start.size, p))
    eta = X @ rng.normal(scale=0.2, size=p)
    return start, stop, np.array(status, dtype=np.int64), X, eta


def median_time(fn, repeat):
    return statistics.median(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--sizes", type=int, nargs="+", default=[1000, 10000, 50000])
    ap.add_argument("--covariates", type=int, default=3)
    args = ap.parse_args(argv)
    if _core is None:
        print("compiled extension not built; only the Python backend is available")
    print(f"{'kernel':<16}{'n':>8}{'python [ms]':>14}{'compiled [ms]':>15}{'speed-up':>10}")
    for n in args.sizes:
        rows = make_rows(n, args.covariates)
        x = np.sort(np.random.default_rng(1).uniform(size=n))
        y = np.cumsum(np.random.default_rng(2).exponential(size=n))
        for name, call in (
            ("risk_set_sweep", lambda m: m.risk_set_sweep(*rows)),
            ("fc_slopes", lambda m: m.fc_slopes(x, y)),
        ):
            t_py = median_time(lambda: call(_core_py), args.repeat)
            line = f"{name:<16}{n:>8}{1e3 * t_py:>14.3f}"
            if _core is not None:
                a, b = call(_core_py), call(_core)
                a, b = (a, b) if isinstance(a, tuple) else ((a,), (b,))
                for u, v in zip(a, b):
                    np.testing.assert_allclose(np.asarray(u), np.asarray(v), rtol=1e-9, atol=1e-9)
                t_c = median_time(lambda: call(_core), args.repeat)
                line += f"{1e3 * t_c:>15.3f}{t_py / t_c:>10.1f}"
            print(line)


if __name__ == "__main__":
    main()
