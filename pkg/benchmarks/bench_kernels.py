"""Compare the numba and pure-numpy kernel backends.

Times Monte Carlo path advancement and series propagation on the variance
walk, checks that both backends agree, and prints one row per case.

    python benchmarks/bench_kernels.py [--M 30] [--paths 20000] [--repeat 3]
"""

import argparse
import time

import numpy as np

from eqstop import _kernels
from eqstop.evaluation import simulate
from eqstop.payoff import make_variance
from eqstop.problems import variance_walk_model


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--M", type=int, default=30)
    ap.add_argument("--paths", type=int, default=20_000)
    ap.add_argument("--steps", type=int, default=2_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if _kernels.advance_numba is None:
        raise SystemExit("numba is unavailable (or disabled by EQSTOP_DISABLE_NUMBA)")

    M = args.M
    model = variance_walk_model(M)
    pay = make_variance(model)
    p = np.zeros(M + 1)
    p[0] = 1.0
    p[M] = 1.0 / (M + 1)
    start = M // 2

    # warm the JIT so compilation is not timed
    simulate(model, pay, p, start, 100, seed=0, backend="numba")
    series_args = (np.ascontiguousarray(model.transition), p, model.absorbing_mask.copy(),
                   pay.f.copy(), pay.h.copy(), args.steps)
    _kernels.series_numba(*series_args)

    rows = []
    t_nb, r_nb = best_of(lambda: simulate(model, pay, p, start, args.paths, 1, backend="numba"), args.repeat)
    t_np, r_np = best_of(lambda: simulate(model, pay, p, start, args.paths, 1, backend="numpy"), args.repeat)
    rows.append(("simulate", t_nb, t_np, "identical" if r_nb == r_np else "DIFFERENT"))

    t_nb, s_nb = best_of(lambda: _kernels.series_numba(*series_args), args.repeat)
    t_np, s_np = best_of(lambda: _kernels.series_numpy(*series_args), args.repeat)
    diff = max(float(np.max(np.abs(a - b))) for a, b in zip(s_nb, s_np))
    rows.append(("series", t_nb, t_np, f"max diff {diff:.2e}"))

    print(f"variance walk M={M}, start x{start}, {args.paths} paths, {args.steps} series steps")
    print(f"{'kernel':<10}{'numba s':>10}{'numpy s':>10}{'speedup':>9}  agreement")
    for name, a, b, note in rows:
        print(f"{name:<10}{a:>10.3f}{b:>10.3f}{b / a:>9.1f}  {note}")


if __name__ == "__main__":
    main()
