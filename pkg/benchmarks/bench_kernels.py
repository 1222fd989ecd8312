"""Compare the numba and numpy lattice-enumeration kernels.

    python3 benchmarks/bench_kernels.py [--repeat 3]

Each case counts L_h modes below λ on the Kronecker torus (n = 2) and on a
3-torus foliation; results of both back ends must agree exactly.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from adialab import _kernels, build_flat_model
from adialab.spectra import box_bound

CASES = [
    # (label, n, spans, h, lambda grid)
    ("T2 h=0.02", 2, [[1, "sqrt(2)"]], 0.02, np.linspace(10, 400, 40)),
    ("T2 h=0.005", 2, [[1, "sqrt(2)"]], 0.005, np.linspace(10, 400, 40)),
    ("T3 h=0.1", 3, [[1, 0, 0], [0, 1, 0]], 0.1, np.linspace(10, 200, 20)),
    ("T3 h=0.05", 3, [[1, "sqrt(2)", 0], [0, 1, "sqrt(3)"]], 0.05, np.linspace(10, 200, 20)),
]


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if not _kernels.HAVE_NUMBA:
        print("numba not importable; only the numpy path can run")
    print(f"{'case':<12} {'candidates':>12} {'numpy [s]':>10} {'numba [s]':>10} {'speedup':>8}")
    for label, n, spans, h, lams in CASES:
        model = build_flat_model(n, len(spans), spans, name=label)
        bound = box_bound(lams[-1], h)
        cand = (2 * bound + 1) ** n
        t_np, c_np = best_of(lambda: _kernels.box_count_grid(model.U, model.W, h, bound, lams,
                                                             use_numba=False), args.repeat)
        if _kernels.HAVE_NUMBA:
            # first call compiles (or loads the on-disk cache)
            _kernels.box_count_grid(model.U, model.W, h, bound, lams[:1], use_numba=True)
            t_nb, c_nb = best_of(lambda: _kernels.box_count_grid(model.U, model.W, h, bound,
                                                                 lams, use_numba=True),
                                 args.repeat)
            assert np.array_equal(c_np, c_nb), f"{label}: back ends disagree"
            print(f"{label:<12} {cand:>12,d} {t_np:>10.4f} {t_nb:>10.4f} {t_np / t_nb:>7.1f}x")
        else:
            print(f"{label:<12} {cand:>12,d} {t_np:>10.4f} {'-':>10} {'-':>8}")


if __name__ == "__main__":
    import warnings

    warnings.simplefilter("ignore")
    main()
