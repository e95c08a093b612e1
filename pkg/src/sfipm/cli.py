"""Command-line front end: ``sfipm {solve,bench,verify,symbolic}``.

Exit codes: 0 success, 1 solver or suite failure, 2 usage or input error.
Output files go to ``--output-dir`` (or ``$SFIPM_OUTPUT_DIR``) and carry no
timestamps, so identical runs give byte-identical files.
"""

import argparse
import csv
import json
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import costmodel, factor, spectral
from .ipm import VARIANTS, IpmConfig, solve_qp
from .problems import GenerationError, ParseError, SyQpSpec, gen_syqp, load_qps
from .sparse import read_mm

OUTPUT_ENV = "SFIPM_OUTPUT_DIR"
DEFAULT_M1 = (1, 8, 16, 24, 32, 40, 48, 56, 64)
KF_FAST = ("pl-kf", "ph-kf")
KC_PRECOND = ("cp-kc", "rg-kc")


class UsageError(Exception):
    pass


@dataclass
class BenchConfig:
    problems: list
    variants: list
    krylov_tol: float = 1e-3
    ipm_tol: float = 1e-8
    consistent_iterates: bool = True
    seed: int = 0
    output_dir: str = "."

    def __post_init__(self):
        if not self.problems:
            raise UsageError("empty problem set")
        if not self.variants:
            raise UsageError("empty variant list")


def _variants(text):
    out = [v.strip() for v in text.split(",") if v.strip()]
    bad = [v for v in out if v not in VARIANTS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown variant(s) {', '.join(bad)}; choose from {', '.join(VARIANTS)}")
    return out


def _int_list(text):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _output_dir(args):
    path = os.environ.get(OUTPUT_ENV) or args.output_dir
    os.makedirs(path, exist_ok=True)
    return path


def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    return x


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _config(args, strategy):
    return IpmConfig(
        strategy=strategy,
        krylov_tol=args.krylov_tol,
        ipm_tol=args.ipm_tol,
        max_iters=args.max_iters,
        consistent_iterates=args.consistent,
        backend=getattr(args, "backend", "sparse"),
        ph_mode=getattr(args, "ph_mode", "diag-h"),
    )


def _load_problem(args):
    if args.qps:
        if not os.path.exists(args.qps):
            raise FileNotFoundError(args.qps)
        return load_qps(args.qps)
    return gen_syqp(SyQpSpec.parse(args.syqp))


def cmd_solve(args):
    p = _load_problem(args)
    res = solve_qp(p, _config(args, args.variant))
    report = {"problem": p.manifest(), "variant": args.variant, **res.to_dict()}
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if args.output:
        path = args.output if os.path.isabs(args.output) else os.path.join(_output_dir(args), args.output)
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0 if res.status == "optimal" else 1


def _quartiles(k):
    if not k:
        return [0, 0.0, 0.0, 0.0, 0]
    q1, med, q3 = np.percentile(k, [25, 50, 75])
    return [int(min(k)), float(q1), float(med), float(q3), int(max(k))]


def run_bench(cfg):
    """Run every (problem, variant) cell; returns (cells, cg_rows, summary)."""
    cells, cg_rows = [], []
    measured = {}
    for p in cfg.problems:
        ref = solve_qp(p, IpmConfig("d-kc", ipm_tol=cfg.ipm_tol))
        kc = costmodel.kernel_costs(p)
        for v in cfg.variants:
            ic = IpmConfig(v, krylov_tol=cfg.krylov_tol, ipm_tol=cfg.ipm_tol, consistent_iterates=cfg.consistent_iterates)
            try:
                res = solve_qp(p, ic)
            except Exception as exc:  # a failing cell is data, not a crash
                cells.append([p.name, v, "error:" + type(exc).__name__] + [""] * 12)
                continue
            pred, _ = costmodel.reconcile_result(p, res, v, kc=None if res.regularization else kc)
            meas = res.ledger.total
            measured[(p.name, v)] = meas
            gap = abs(res.objective - ref.objective) / max(1.0, abs(ref.objective))
            cells.append(
                [p.name, v, res.status, res.n_ipm_iters, *_quartiles(res.per_iter_krylov), pred.total, meas,
                 (meas - pred.total) / max(pred.total, 1), res.objective, gap]
            )
            cg_rows += [[p.name, v, k, n] for k, n in enumerate(res.per_iter_krylov)]
    summary = []
    for fast in KF_FAST:
        for slow in KC_PRECOND:
            ratios = [measured[(p.name, slow)] / measured[(p.name, fast)] for p in cfg.problems
                      if (p.name, slow) in measured and (p.name, fast) in measured and measured[(p.name, fast)] > 0]
            if ratios:
                summary.append([fast, slow, len(ratios), float(np.exp(np.mean(np.log(ratios)))),
                                "desk-scale, not comparable to paper's full benchmark"])
    return cells, cg_rows, summary


CELL_HEADER = ["problem", "variant", "status", "N_I", "nkr_min", "nkr_q1", "nkr_median", "nkr_q3", "nkr_max",
               "predicted_cost", "measured_cost", "cost_deviation", "objective", "objective_gap_vs_dkc"]


def cmd_bench(args):
    if not args.variants:
        raise UsageError("empty variant list")
    problems = [load_qps(f) for f in args.qps] if args.qps else []
    if args.n:
        problems += [gen_syqp(SyQpSpec(args.n, m1, seed=args.seed)) for m1 in args.m1 if m1 <= args.n]
    cfg = BenchConfig(problems, args.variants, args.krylov_tol, args.ipm_tol, not args.inexact, args.seed, _output_dir(args))
    cells, cg_rows, summary = run_bench(cfg)
    out = cfg.output_dir
    _write_csv(os.path.join(out, "bench_cells.csv"), CELL_HEADER, cells)
    _write_csv(os.path.join(out, "bench_cg_counts.csv"), ["problem", "variant", "ipm_iter", "n_kr"], cg_rows)
    _write_csv(os.path.join(out, "bench_summary.csv"), ["kf_variant", "kc_variant", "problems", "geomean_cost_ratio", "note"], summary)
    for row in summary:
        print(f"{row[1]}/{row[0]} geometric-mean cost ratio over {row[2]} problems: {row[3]:.3f} ({row[4]})")
    return 0


def verify_lemmas(seed, count):
    fails = []
    rng = np.random.Generator(np.random.Philox(seed))
    for i in range(count):
        n = int(rng.integers(2, 25))
        m1 = int(rng.integers(1, n + 1))
        H, A, _, _ = spectral.random_instance(seed * 100003 + i, n, m1, 1)
        r = spectral.check_rank_lemmas(H, A)
        if not r.passed:
            fails.append({"instance": i, "n": n, "m1": m1, "ranks": [r.rank_projection, r.rank_remainder], "nullspace": r.nullspace_residual})
    return fails


THEOREM_GRID = ((12, 3, 12), (16, 8, 16), (20, 4, 10))


def verify_theorems(seed, count):
    fails = []
    for n, m1, m2 in THEOREM_GRID:
        for i in range(count):
            inst = spectral.random_instance(seed * 100003 + i, n, m1, m2)
            for kind in ("high-dof", "low-dof"):
                c = spectral.theorem_check(*inst, kind)
                if not c.passed:
                    fails.append({"kind": kind, "n": n, "m1": m1, "m2": m2, "instance": i, "unit": c.unit_count,
                                  "unit_bound": c.unit_bound, "clusters": c.n_clusters, "cluster_bound": c.cluster_bound})
    return fails


def verify_costs(seed, _count):
    fails = []
    for n, m1 in ((8, 4), (64, 32)):
        p = gen_syqp(SyQpSpec(n, m1, seed=seed))
        kc = costmodel.kernel_costs(p)
        for v in VARIANTS:
            res = solve_qp(p, IpmConfig(v, consistent_iterates=True))
            _, rep = costmodel.reconcile_result(p, res, v, kc=kc)
            fails += [{"problem": p.name, "variant": v, "kernel": r.kernel, "predicted": r.predicted, "measured": r.measured}
                      for r in rep.failures()]
    return fails


def verify_factorize_once(seed, _count):
    fails = []
    for m1 in (1, 16, 32, 64):
        p = gen_syqp(SyQpSpec(64, m1, seed=seed))
        for v in ("pl-kf", "ph-kf"):
            res = solve_qp(p, IpmConfig(v, consistent_iterates=True))
            if res.ledger.fact_events["F"] != 1:
                fails.append({"problem": p.name, "variant": v, "F_factorizations": res.ledger.fact_events["F"]})
    return fails


SUITES = {
    "lemmas": verify_lemmas,
    "theorems": verify_theorems,
    "costs": verify_costs,
    "factorize-once": verify_factorize_once,
}


def cmd_verify(args):
    fails = SUITES[args.suite](args.seed, args.instances)
    print(json.dumps({"suite": args.suite, "seed": args.seed, "passed": not fails, "failures": fails}, indent=2, sort_keys=True))
    return 0 if not fails else 1


def cmd_symbolic(args):
    if not os.path.exists(args.matrix):
        raise FileNotFoundError(args.matrix)
    info = factor.symbolic_cholesky(read_mm(args.matrix))
    print(json.dumps({k: v for k, v in info.to_dict().items() if k in ("nnz_L", "c_fact", "c_trsv", "col_counts_L")}))
    return 0


def _solver_flags(sp):
    sp.add_argument("--krylov-tol", type=float, default=1e-3)
    sp.add_argument("--ipm-tol", type=float, default=1e-8)
    sp.add_argument("--max-iters", type=int, default=100)
    sp.add_argument("--output-dir", default=".")


def build_parser():
    ap = argparse.ArgumentParser(prog="sfipm", description="Single-factorization inexact IPM for convex QP.")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve one problem")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--syqp", metavar="SPEC", help='synthetic problem, e.g. "n=8,m1=4,seed=1"')
    src.add_argument("--qps", metavar="FILE")
    s.add_argument("--variant", choices=VARIANTS, default="pl-kf")
    s.add_argument("--consistent", action="store_true", help="advance with the direct direction")
    s.add_argument("--backend", choices=("sparse", "dense-bk"), default="sparse")
    s.add_argument("--ph-mode", choices=("diag-h", "exact-h"), default="diag-h")
    s.add_argument("--output", help="write the JSON report here instead of stdout")
    _solver_flags(s)
    s.set_defaults(func=cmd_solve)

    b = sub.add_parser("bench", help="variant x problem grid")
    b.add_argument("--n", type=int, default=64, help="SyQP size (0 to skip the synthetic grid)")
    b.add_argument("--m1", type=_int_list, default=list(DEFAULT_M1))
    b.add_argument("--qps", nargs="*", default=[])
    b.add_argument("--variants", type=_variants, default=list(VARIANTS))
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--inexact", action="store_true", help="turn consistent-iterates mode off")
    _solver_flags(b)
    b.set_defaults(func=cmd_bench, consistent=True)

    v = sub.add_parser("verify", help="property suites")
    v.add_argument("suite", choices=sorted(SUITES))
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--instances", type=int, default=50)
    v.set_defaults(func=cmd_verify)

    y = sub.add_parser("symbolic", help="symbolic Cholesky of a Matrix Market pattern")
    y.add_argument("matrix")
    y.set_defaults(func=cmd_symbolic)
    return ap


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"sfipm: file not found: {exc.filename or exc}", file=sys.stderr)
        return 2
    except (UsageError, ParseError, ValueError, GenerationError) as exc:
        print(f"sfipm: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
