"""Time the compiled kernels against the pure-Python fallback.

Usage: python3 benchmarks/bench_kernels.py [--n 256 1024] [--repeat 5]

Both implementations run on the same inputs: the saddle-point matrix F of a
synthetic problem (factorization and triangular solves) and its constraint
block (products).
"""

import argparse
import timeit

import numpy as np

from sfipm import _fallback
from sfipm.factor import _upper_csc
from sfipm.ipm import build_f
from sfipm.problems import SyQpSpec, gen_syqp

try:
    from sfipm import _kernels
except ImportError:  # extension not built
    _kernels = None


def cases(n):
    p = gen_syqp(SyQpSpec(n=n, m1=n // 2, seed=0))
    F = build_f(p)
    Ap, Ai, Ax = _upper_csc(F)
    dim = F.nrows
    parent, lnz = _fallback.etree_upper(dim, Ap, Ai)
    Lp, Li, Lx, _, _ = _fallback.ldl_numeric(dim, Ap, Ai, Ax, parent, lnz, 0.0)
    A = p.A
    x = np.random.default_rng(0).standard_normal(dim)
    xa = np.random.default_rng(1).standard_normal(A.ncols)
    return {
        "spmv_csc(A)": lambda k: k.spmv_csc(A.col_ptr, A.row_idx, A.values, xa, A.nrows, False),
        "spmv_sym_lower(F)": lambda k: k.spmv_sym_lower(F.col_ptr, F.row_idx, F.values, x),
        "etree_upper(F)": lambda k: k.etree_upper(dim, Ap, Ai),
        "ldl_numeric(F)": lambda k: k.ldl_numeric(dim, Ap, Ai, Ax, parent, lnz, 0.0),
        "lsolve+ltsolve(L_F)": lambda k: k.ltsolve_unit(Lp, Li, Lx, k.lsolve_unit(Lp, Li, Lx, x.copy())),
    }


def best_time(fn, repeat):
    timer = timeit.Timer(fn)
    number, _ = timer.autorange()
    return min(timer.repeat(repeat=repeat, number=number)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, nargs="+", default=[256, 1024])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _kernels is None:
        print("compiled kernels are not built; only the fallback is available")
    print(f"{'n':>6}  {'kernel':<22}{'python (s)':>12}{'compiled (s)':>14}{'speedup':>10}")
    for n in args.n:
        for name, fn in cases(n).items():
            t_py = best_time(lambda: fn(_fallback), args.repeat)
            if _kernels is None:
                print(f"{n:>6}  {name:<22}{t_py:>12.3e}{'-':>14}{'-':>10}")
                continue
            t_c = best_time(lambda: fn(_kernels), args.repeat)
            print(f"{n:>6}  {name:<22}{t_py:>12.3e}{t_c:>14.3e}{t_py / t_c:>9.1f}x")


if __name__ == "__main__":
    main()
