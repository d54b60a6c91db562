"""Compare the numba and pure-numpy kernels.

Usage::

    python benchmarks/bench_kernels.py [--repeat 5]

Prints one line per (kernel, size) with the best wall time of each path and
the speed-up. Results are also checked for agreement.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from targeted_neyman import _kernels


def _best(fn, repeat):
    fn()  # warm-up (JIT compile on first call)
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def bench_knn(repeat):
    rng = np.random.default_rng(0)
    for nq, nr, k, m in [(500, 500, 2, 1), (2000, 2000, 3, 1), (5000, 3000, 5, 4)]:
        q, r = rng.normal(size=(nq, k)), rng.normal(size=(nr, k))
        a = _kernels.knn_numpy(q, r, m)
        b = _kernels.knn_numba(q, r, m)
        assert np.array_equal(a[0], b[0])
        t_np = _best(lambda: _kernels.knn_numpy(q, r, m), repeat)
        t_nb = _best(lambda: _kernels.knn_numba(q, r, m), repeat)
        print(f"knn            nq={nq:5d} nr={nr:5d} k={k} m={m}  "
              f"numpy {t_np * 1e3:8.2f} ms  numba {t_nb * 1e3:8.2f} ms  x{t_np / t_nb:5.1f}")


def bench_tailored(repeat):
    rng = np.random.default_rng(1)
    for n, p in [(1_000, 3), (20_000, 6), (200_000, 10)]:
        phi = rng.normal(size=(n, p))
        eta = rng.normal(size=n)
        d = (rng.uniform(size=n) < 0.5).astype(np.int64)
        w = np.ones(n)
        np.testing.assert_allclose(_kernels.tailored_terms_numpy(phi, eta, d, w)[2],
                                   _kernels.tailored_terms_numba(phi, eta, d, w)[2], rtol=1e-10)
        t_np = _best(lambda: _kernels.tailored_terms_numpy(phi, eta, d, w), repeat)
        t_nb = _best(lambda: _kernels.tailored_terms_numba(phi, eta, d, w), repeat)
        print(f"tailored_terms n={n:7d} p={p:2d}              "
              f"numpy {t_np * 1e3:8.2f} ms  numba {t_nb * 1e3:8.2f} ms  x{t_np / t_nb:5.1f}")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    if not _kernels.HAS_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    bench_knn(args.repeat)
    bench_tailored(args.repeat)


if __name__ == "__main__":
    main()
